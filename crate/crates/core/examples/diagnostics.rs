//! Low-rank checks on a simulated panel with and without shared factors.

use multiscm::diagnostics::{condition_ratio, holdout_fit, spectrum, HOLDOUT_NU};
use multiscm::panel::MatrixView;
use multiscm::simlab::{generate, DgpConfig};
use multiscm::weights::FitOptions;

fn main() -> multiscm::Result<()> {
    for rho in [1.0, 0.0] {
        let config = DgpConfig {
            rho,
            seed: 21,
            ..DgpConfig::default()
        };
        let (panel, _) = generate(&config, 0)?;
        let transformed = spectrum(&panel, MatrixView::Transformed)?;
        let raw = spectrum(&panel, MatrixView::Raw)?;
        let cond = condition_ratio(&panel, MatrixView::Raw)?;
        let holdout = holdout_fit(&panel, HOLDOUT_NU, &FitOptions::default())?;

        println!("rho = {rho}");
        println!(
            "  top-3 share {:.3} (standardized), top share {:.3} (raw)",
            transformed.share(3),
            raw.top_share()
        );
        println!("  condition number increase {:.1}%", cond.increase_pct);
        println!("  held-out MSPE ratio, median {:.3}", holdout.median_ratio());
    }
    Ok(())
}

//! Fit separate, concatenated, averaged and combined weights on one simulated panel.

use multiscm::simlab::{generate, DgpConfig};
use multiscm::weights::{fit, fit_gaps, heuristic_nu, FitOptions, ObjectiveSpec};

fn main() -> multiscm::Result<()> {
    let config = DgpConfig {
        n_units: 20,
        t0: 12,
        k: 4,
        rho: 0.7,
        seed: 3,
        ..DgpConfig::default()
    };
    let (panel, _) = generate(&config, 0)?;
    let options = FitOptions::default();

    let nu = heuristic_nu(&panel, &options)?;
    println!("heuristic nu = {:.3}", nu.nu);

    for spec in [
        ObjectiveSpec::separate(0),
        ObjectiveSpec::concatenated(),
        ObjectiveSpec::averaged(),
        ObjectiveSpec::combined(nu.nu),
    ] {
        let f = fit(&panel, &spec, &options)?;
        let top: Vec<String> = f
            .donor_weights()
            .into_iter()
            .take(3)
            .map(|(u, w)| format!("{u}={w:.3}"))
            .collect();
        println!(
            "{:<22} q_cat={:.4} q_avg={:.4}  {}",
            spec.label(),
            f.imbalance.concatenated,
            f.imbalance.averaged,
            top.join(" ")
        );
    }

    // gap series in original units for the combined fit
    let f = fit(&panel, &ObjectiveSpec::combined(nu.nu), &options)?;
    let gaps = fit_gaps(&panel, &f);
    for row in gaps.rows.iter().filter(|r| r.is_post) {
        println!(
            "{} period {}: gap {:+.3}",
            gaps.outcomes[row.outcome],
            gaps.periods[row.period],
            row.gap.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

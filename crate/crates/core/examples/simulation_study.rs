//! Bias of separate, concatenated and averaged weights under a factor model.
//!
//!     cargo run --release --example simulation_study -- appendix-c-rho1 200

use multiscm::simlab::{preset, probe_study, run_study, Estimator};

fn main() -> multiscm::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "appendix-c-rho1".into());
    let reps: u64 = args.next().and_then(|r| r.parse().ok()).unwrap_or(200);
    let Some(config) = preset(&name) else {
        eprintln!("unknown preset {name}");
        std::process::exit(2);
    };

    let study = run_study(&config, reps, 0)?;
    println!("{name}: {} reps, {} failed", study.records.len(), study.failures.len());
    println!("{:>4} {:>12} {:>12} {:>12}", "est", "mean|bias|", "median bias", "mean imbal");
    for est in Estimator::ALL {
        let s = study.summary(est);
        println!(
            "{:>4} {:>12.4} {:>12.4} {:>12.4}",
            est.name(),
            s.mean_abs_bias,
            s.bias.q50,
            s.mean_imbalance
        );
    }

    let probes = probe_study(&config, reps, 0)?;
    println!(
        "top share: separate {:.3}, concatenated {:.3}; condition increase {:.1}%",
        probes.separate_top_share, probes.concatenated_top_share, probes.condition_increase_pct
    );
    Ok(())
}

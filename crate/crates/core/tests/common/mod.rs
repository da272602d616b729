#![allow(dead_code)]

use std::path::Path;

use multiscm::panel::{treatment_config, write_panel, PanelData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Weighted least-squares objective `Σ_r w_r (b_r − Σ_j A_rj γ_j)²` by direct summation.
pub fn direct_objective(design: &[Vec<f64>], target: &[f64], weights: &[f64], gamma: &[f64]) -> f64 {
    design
        .iter()
        .zip(target)
        .zip(weights)
        .map(|((row, b), w)| {
            let fit: f64 = row.iter().zip(gamma).map(|(a, g)| a * g).sum();
            w * (b - fit).powi(2)
        })
        .sum()
}

/// Minimum over a simplex grid of step `1/steps` for all but the last two
/// coordinates, with the remaining mass split optimally between the last two.
/// Never larger than the plain grid minimum.
pub fn grid_oracle(design: &[Vec<f64>], target: &[f64], weights: &[f64], n0: usize, steps: usize) -> f64 {
    assert!((2..=4).contains(&n0));
    let h = 1.0 / steps as f64;
    let mut best = f64::INFINITY;
    let mut prefix = vec![0usize; n0 - 2];
    loop {
        let used: usize = prefix.iter().sum();
        if used <= steps {
            let rest = 1.0 - used as f64 * h;
            // f(s) along γ_{n0-2} = s, γ_{n0-1} = rest − s is quadratic in s
            let at = |s: f64| {
                let mut g: Vec<f64> = prefix.iter().map(|&p| p as f64 * h).collect();
                g.push(s);
                g.push(rest - s);
                direct_objective(design, target, weights, &g)
            };
            let (f0, fm, f1) = (at(0.0), at(rest / 2.0), at(rest));
            let mut cand = f0.min(f1);
            let a = 4.0 * (f0 - 2.0 * fm + f1) / (rest * rest).max(f64::MIN_POSITIVE);
            if a > 0.0 {
                let b = (f1 - f0) / rest.max(f64::MIN_POSITIVE) - a * rest / 2.0;
                let s = (-b / a).clamp(0.0, rest);
                cand = cand.min(at(s));
            }
            best = best.min(cand);
        }
        // odometer over the prefix
        let mut j = 0;
        loop {
            if j == prefix.len() {
                return best;
            }
            prefix[j] += 1;
            if prefix.iter().sum::<usize>() <= steps {
                break;
            }
            prefix[j] = 0;
            j += 1;
        }
    }
}

pub fn random_panel(seed: u64, n: usize, t: usize, k: usize, t0: usize) -> PanelData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PanelData::from_fn(n, t, k, 0, t0, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Writes `panel` as CSV plus a matching TOML treatment config.
pub fn write_fixture(panel: &PanelData, dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let csv = dir.join("panel.csv");
    let toml = dir.join("treatment.toml");
    write_panel(panel, std::fs::File::create(&csv).unwrap()).unwrap();
    let cfg = treatment_config(panel);
    let mut text = format!("treated_unit = \"{}\"\nt0 = \"{}\"\n", cfg.treated_unit, cfg.t0);
    if !cfg.signs.is_empty() {
        text.push_str("[signs]\n");
        for (o, s) in &cfg.signs {
            text.push_str(&format!("{o} = {s}\n"));
        }
    }
    std::fs::write(&toml, text).unwrap();
    (csv, toml)
}

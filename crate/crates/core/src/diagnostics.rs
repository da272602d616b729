//! Low-rank checks and sensitivity tooling: spectrum, held-out outcome fit,
//! imbalance frontier and condition-number ratio.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{low_rank_matrix, prepare, MatrixView, PanelData};
use crate::weights::{fit, fit_transformed, imbalance, FitOptions, ObjectiveSpec};

/// Default ν for held-out fits.
pub const HOLDOUT_NU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub singular_values: Vec<f64>,
    /// Cumulative variance share of the leading `i + 1` components.
    pub cumulative_shares: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl SpectrumReport {
    pub fn top_share(&self) -> f64 {
        self.cumulative_shares.first().copied().unwrap_or(f64::NAN)
    }

    /// Share of variance captured by the leading `r` components.
    pub fn share(&self, r: usize) -> f64 {
        match r {
            0 => 0.0,
            r => self.cumulative_shares[r.min(self.cumulative_shares.len()) - 1],
        }
    }
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Spectrum of an arbitrary matrix.
pub fn spectrum_of(m: &DMatrix<f64>) -> Result<SpectrumReport> {
    if m.is_empty() || m.iter().all(|v| *v == 0.0) {
        return Err(Error::Numerical("spectrum of an all-zero or empty matrix".into()));
    }
    let singular_values = sorted_singular_values(m);
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let mut cumulative_shares: Vec<f64> = singular_values
        .iter()
        .map(|s| {
            acc += s * s;
            acc / total
        })
        .collect();
    if let Some(last) = cumulative_shares.last_mut() {
        *last = 1.0;
    }
    Ok(SpectrumReport {
        singular_values,
        cumulative_shares,
        rows: m.nrows(),
        cols: m.ncols(),
    })
}

/// Spectrum of the `N x (T0·K)` pre-treatment matrix.
pub fn spectrum(panel: &PanelData, view: MatrixView) -> Result<SpectrumReport> {
    spectrum_of(&low_rank_matrix(panel, view)?.matrix)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutRow {
    pub outcome: usize,
    pub mspe: f64,
    pub uniform_mspe: f64,
    pub ratio: f64,
    /// Weights fitted without the focal outcome.
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutReport {
    pub nu: f64,
    pub rows: Vec<HoldoutRow>,
}

impl HoldoutReport {
    pub fn median_ratio(&self) -> f64 {
        let mut r: Vec<f64> = self.rows.iter().map(|row| row.ratio).collect();
        r.sort_by(f64::total_cmp);
        let n = r.len();
        if n % 2 == 1 {
            r[n / 2]
        } else {
            0.5 * (r[n / 2 - 1] + r[n / 2])
        }
    }
}

/// Pre-treatment MSPE of `gamma` on one outcome of a de-meaned panel.
pub fn pre_mspe(demeaned: &PanelData, outcome: usize, gamma: &[f64]) -> f64 {
    let single = imbalance(demeaned, gamma);
    single.separate[outcome].powi(2)
}

/// `(mspe, uniform mspe, ratio)` for `gamma` on `outcome`.
pub fn relative_mspe(panel: &PanelData, outcome: usize, gamma: &[f64]) -> Result<(f64, f64, f64)> {
    let (demeaned, _) = prepare(panel, false)?;
    let n0 = panel.n_donors();
    let uniform = vec![1.0 / n0 as f64; n0];
    let mspe = pre_mspe(&demeaned, outcome, gamma);
    let base = pre_mspe(&demeaned, outcome, &uniform);
    let ratio = if base > 0.0 {
        mspe / base
    } else if mspe > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok((mspe, base, ratio))
}

/// For each outcome, fits combined(ν) weights on the remaining outcomes and
/// scores them on the held-out one relative to uniform weights.
pub fn holdout_fit(panel: &PanelData, nu: f64, options: &FitOptions) -> Result<HoldoutReport> {
    let k = panel.n_outcomes();
    if k < 2 {
        return Err(Error::Validation(
            "holdout diagnostic requires K ≥ 2 outcomes".into(),
        ));
    }
    let rows = (0..k)
        .into_par_iter()
        .map(|focal| {
            let keep: Vec<usize> = (0..k).filter(|&j| j != focal).collect();
            let rest = panel.select_outcomes(&keep)?;
            let spec = ObjectiveSpec::combined(nu);
            let f = fit(&rest, &spec, options)?;
            let gamma = f.solution.gamma;
            let (mspe, uniform_mspe, ratio) = relative_mspe(panel, focal, &gamma)?;
            Ok(HoldoutRow {
                outcome: focal,
                mspe,
                uniform_mspe,
                ratio,
                gamma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HoldoutReport { nu, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub nu: f64,
    pub q_avg: f64,
    pub q_cat: f64,
    pub gamma: Vec<f64>,
    pub converged: bool,
}

/// `0, 0.05, ..., 1`.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Combined-weight fits along a ν grid, on the standardized panel.
pub fn frontier(panel: &PanelData, grid: &[f64], options: &FitOptions) -> Result<Vec<FrontierPoint>> {
    if let Some(nu) = grid.iter().find(|nu| !(0.0..=1.0).contains(*nu)) {
        return Err(Error::Validation(format!("frontier grid value {nu} outside [0, 1]")));
    }
    let standardize = options.standardize.unwrap_or(true);
    let (transformed, state) = prepare(panel, standardize)?;
    grid.par_iter()
        .map(|&nu| {
            let f = fit_transformed(
                transformed.clone(),
                state.clone(),
                &ObjectiveSpec::combined(nu),
                &options.solver,
            )?;
            Ok(FrontierPoint {
                nu,
                q_avg: f.imbalance.averaged,
                q_cat: f.imbalance.concatenated,
                converged: f.solution.converged,
                gamma: f.solution.gamma,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub averaged: f64,
    pub separate: f64,
    /// `100 · (averaged / separate − 1)`.
    pub increase_pct: f64,
    /// Set when either matrix is numerically singular.
    pub infinite: bool,
}

/// Largest over smallest singular value; infinite when the smallest is
/// zero relative to the largest.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = sorted_singular_values(m);
    let (Some(&max), Some(&min)) = (sv.first(), sv.last()) else {
        return f64::INFINITY;
    };
    if !(max > 0.0) || min <= max * f64::EPSILON * m.nrows().max(m.ncols()) as f64 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn outcome_block(panel: &PanelData, outcomes: &[usize]) -> DMatrix<f64> {
    let n = panel.n_units();
    let periods: Vec<usize> = (0..panel.t0())
        .filter(|&t| outcomes.iter().any(|&k| (0..n).all(|i| panel.value(i, t, k).is_some())))
        .collect();
    DMatrix::from_fn(n, periods.len(), |i, c| {
        let t = periods[c];
        let present: Vec<f64> = outcomes
            .iter()
            .filter(|&&k| (0..n).all(|j| panel.value(j, t, k).is_some()))
            .map(|&k| panel.value(i, t, k).unwrap_or(0.0))
            .collect();
        present.iter().sum::<f64>() / present.len() as f64
    })
}

/// Condition number of the `N x T0` averaged-outcome matrix relative to the
/// first outcome's.
pub fn condition_ratio(panel: &PanelData, view: MatrixView) -> Result<ConditionReport> {
    let source = match view {
        MatrixView::Raw => panel.clone(),
        MatrixView::Transformed => prepare(panel, true)?.0,
    };
    let all: Vec<usize> = (0..source.n_outcomes()).collect();
    let averaged_m = outcome_block(&source, &all);
    let separate_m = outcome_block(&source, &[0]);
    if averaged_m.ncols() == 0 || separate_m.ncols() == 0 {
        return Err(Error::Validation("no fully observed pre-treatment periods".into()));
    }
    let averaged = condition_number(&averaged_m);
    let separate = condition_number(&separate_m);
    let infinite = averaged.is_infinite() || separate.is_infinite();
    let increase_pct = if infinite {
        f64::INFINITY
    } else {
        100.0 * (averaged / separate - 1.0)
    };
    Ok(ConditionReport {
        averaged,
        separate,
        increase_pct,
        infinite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::SolverSettings;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(seed: u64, n: usize, t: usize, k: usize, t0: usize) -> PanelData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PanelData::from_fn(n, t, k, 0, t0, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn rank_one_top_share() {
        let p = PanelData::from_fn(6, 8, 2, 0, 6, |i, t, k| {
            (1.0 + i as f64) * (0.5 + t as f64 + 3.0 * k as f64)
        })
        .unwrap();
        let s = spectrum(&p, MatrixView::Raw).unwrap();
        assert!((s.top_share() - 1.0).abs() < 1e-10);
        assert_eq!((s.rows, s.cols), (6, 12));
    }

    #[test]
    fn spectrum_shares_and_frobenius() {
        let p = random_panel(1, 7, 9, 3, 7);
        let m = low_rank_matrix(&p, MatrixView::Transformed).unwrap().matrix;
        let s = spectrum_of(&m).unwrap();
        assert!(s.cumulative_shares.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert_eq!(*s.cumulative_shares.last().unwrap(), 1.0);
        let fro: f64 = m.iter().map(|v| v * v).sum();
        let sv2: f64 = s.singular_values.iter().map(|v| v * v).sum();
        assert!((fro - sv2).abs() <= 1e-8 * fro);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn zero_matrix_is_error() {
        assert!(spectrum_of(&DMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn uniform_weights_ratio_one() {
        let p = random_panel(2, 6, 8, 2, 6);
        let (_, _, r) = relative_mspe(&p, 1, &[0.2; 5]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn holdout_requires_two_outcomes() {
        let p = random_panel(3, 6, 8, 1, 6);
        let err = holdout_fit(&p, 0.5, &FitOptions::default()).unwrap_err();
        assert!(err.to_string().contains("requires K ≥ 2"));
    }

    #[test]
    fn holdout_copies_match_direct_fit() {
        let base = random_panel(4, 8, 10, 1, 8);
        let p = PanelData::from_fn(8, 10, 3, 0, 8, |i, t, _| base.value(i, t, 0).unwrap()).unwrap();
        let opts = FitOptions {
            solver: SolverSettings::with_tol(1e-14),
            ..FitOptions::default()
        };
        let report = holdout_fit(&p, 0.5, &opts).unwrap();
        let direct = fit(&base, &ObjectiveSpec::separate(0), &opts).unwrap();
        let (_, _, expected) = relative_mspe(&base, 0, direct.gamma()).unwrap();
        for row in &report.rows {
            assert!((row.ratio - expected).abs() < 1e-6, "{} vs {expected}", row.ratio);
        }
    }

    #[test]
    fn holdout_ignores_focal_outcome() {
        let p = random_panel(5, 8, 10, 3, 8);
        let mut poisoned = p.clone();
        for i in 0..8 {
            for t in 0..10 {
                poisoned.set_value(i, t, 1, Some(1e6 * ((i * 31 + t * 7) % 13) as f64));
            }
        }
        let a = holdout_fit(&p, 0.5, &FitOptions::default()).unwrap();
        let b = holdout_fit(&poisoned, 0.5, &FitOptions::default()).unwrap();
        assert_eq!(a.rows[1].gamma, b.rows[1].gamma);
    }

    #[test]
    fn frontier_endpoints_match_standalone() {
        let p = random_panel(6, 8, 12, 3, 10);
        let opts = FitOptions::default();
        let pts = frontier(&p, &[0.0, 1.0], &opts).unwrap();
        let cat = fit(&p, &ObjectiveSpec::concatenated(), &opts).unwrap();
        let avg = fit(&p, &ObjectiveSpec::averaged(), &opts).unwrap();
        assert!((pts[0].q_cat - cat.imbalance.concatenated).abs() < 1e-10);
        assert!((pts[1].q_avg - avg.imbalance.averaged).abs() < 1e-10);
    }

    #[test]
    fn frontier_monotone() {
        let p = random_panel(7, 8, 14, 3, 12);
        let opts = FitOptions {
            solver: SolverSettings::with_tol(1e-14),
            ..FitOptions::default()
        };
        let pts = frontier(&p, &default_grid(), &opts).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].q_avg <= w[0].q_avg + 1e-8);
            assert!(w[1].q_cat >= w[0].q_cat - 1e-8);
        }
    }

    #[test]
    fn frontier_rejects_bad_grid() {
        let p = random_panel(8, 5, 6, 2, 4);
        assert!(frontier(&p, &[0.5, 1.2], &FitOptions::default()).is_err());
    }

    #[test]
    fn identical_copies_condition_unchanged() {
        let base = random_panel(9, 10, 8, 1, 6);
        let p = PanelData::from_fn(10, 8, 4, 0, 6, |i, t, _| base.value(i, t, 0).unwrap()).unwrap();
        let c = condition_ratio(&p, MatrixView::Raw).unwrap();
        assert!(c.increase_pct.abs() < 1e-8);
    }

    #[test]
    fn singular_matrix_flags_infinite() {
        let p = PanelData::from_fn(5, 6, 2, 0, 4, |i, t, k| (i + 1) as f64 * (t + k) as f64).unwrap();
        let c = condition_ratio(&p, MatrixView::Raw).unwrap();
        assert!(c.infinite);
    }
}

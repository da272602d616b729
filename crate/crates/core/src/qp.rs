//! Least squares over the probability simplex.
//!
//! Minimizes `f(γ) = Σ_r w_r (b_r − A_r·γ)²` subject to `γ ≥ 0, Σγ = 1` with
//! away-step Frank–Wolfe. The problem is reduced once to its Gram form
//! `γ'Qγ − 2c'γ + b'Wb`, after which each iteration costs `O(N0)`.
//!
//! The Frank–Wolfe gap `∇f(γ)·(γ − s)` upper-bounds `f(γ) − f*`, so a converged
//! solution carries a certificate on the squared objective.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QpProblem {
    design: DMatrix<f64>,
    target: DVector<f64>,
    row_weights: Option<DVector<f64>>,
}

impl QpProblem {
    /// `design` is rows × donors, `target` has one entry per row.
    pub fn new(
        design: DMatrix<f64>,
        target: DVector<f64>,
        row_weights: Option<DVector<f64>>,
    ) -> Result<Self> {
        if design.nrows() != target.len() {
            return Err(Error::Validation(format!(
                "design has {} rows but target has {}",
                design.nrows(),
                target.len()
            )));
        }
        if design.ncols() < 2 {
            return Err(Error::Validation(format!(
                "fewer than 2 donors ({})",
                design.ncols()
            )));
        }
        if let Some(w) = &row_weights {
            if w.len() != target.len() {
                return Err(Error::Validation("row weight count mismatch".into()));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Validation("row weights must be finite and non-negative".into()));
            }
        }
        if design.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite entry in QP data".into()));
        }
        Ok(Self {
            design,
            target,
            row_weights,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_donors(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    fn weight(&self, row: usize) -> f64 {
        self.row_weights.as_ref().map_or(1.0, |w| w[row])
    }

    /// Squared objective evaluated by direct summation over rows.
    pub fn objective_sq(&self, gamma: &[f64]) -> f64 {
        (0..self.n_rows())
            .map(|r| {
                let fit: f64 = self.design.row(r).iter().zip(gamma).map(|(a, g)| a * g).sum();
                let resid = self.target[r] - fit;
                self.weight(r) * resid * resid
            })
            .sum()
    }

    fn gram(&self) -> Gram {
        let n = self.n_donors();
        let mut weighted = self.design.clone();
        let mut wb = self.target.clone();
        for r in 0..self.n_rows() {
            let w = self.weight(r);
            weighted.row_mut(r).scale_mut(w);
            wb[r] *= w;
        }
        let q = self.design.transpose() * &weighted;
        let c = self.design.transpose() * &wb;
        let bb = self.target.dot(&wb);
        debug_assert_eq!(q.nrows(), n);
        Gram { q, c, bb }
    }
}

struct Gram {
    q: DMatrix<f64>,
    c: DVector<f64>,
    bb: f64,
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Stopping tolerance on the Frank–Wolfe gap of the squared objective.
    pub tol: f64,
    pub max_iter: usize,
    /// Optional starting point; projected onto the simplex before use.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            warm_start: None,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub gamma: Vec<f64>,
    /// Root of the achieved squared objective.
    pub objective: f64,
    /// Certified bound on `f(γ) − f*` for the squared objective.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl WeightSolution {
    pub fn objective_sq(&self) -> f64 {
        self.objective * self.objective
    }
}

pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<WeightSolution> {
    solve_observed(problem, settings, |_, _| {})
}

/// Like [`solve`], calling `observer(iteration, f(γ))` after every iterate.
pub fn solve_observed(
    problem: &QpProblem,
    settings: &SolverSettings,
    mut observer: impl FnMut(usize, f64),
) -> Result<WeightSolution> {
    if !(settings.tol > 0.0) {
        return Err(Error::Validation("solver tolerance must be positive".into()));
    }
    let n = problem.n_donors();

    if problem.design.iter().all(|v| *v == 0.0) {
        let gamma = vec![1.0 / n as f64; n];
        let objective = problem.objective_sq(&gamma).sqrt();
        observer(0, objective * objective);
        return Ok(WeightSolution {
            gamma,
            objective,
            gap: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let Gram { q, c, bb } = problem.gram();
    let eval = |gamma: &[f64], qg: &[f64]| -> f64 {
        let quad: f64 = gamma.iter().zip(qg).map(|(g, v)| g * v).sum();
        let lin: f64 = gamma.iter().zip(c.iter()).map(|(g, v)| g * v).sum();
        quad - 2.0 * lin + bb
    };

    let mut gamma = match &settings.warm_start {
        Some(start) if start.len() == n && start.iter().all(|v| v.is_finite()) => {
            project_simplex(start)
        }
        Some(_) => return Err(Error::Validation("warm start has wrong length or non-finite entries".into())),
        None => {
            // best vertex, lowest index on ties
            let mut best = 0;
            for j in 1..n {
                if q[(j, j)] - 2.0 * c[j] < q[(best, best)] - 2.0 * c[best] {
                    best = j;
                }
            }
            let mut g = vec![0.0; n];
            g[best] = 1.0;
            g
        }
    };
    let mut qg: Vec<f64> = mat_vec(&q, &gamma);
    let mut f = eval(&gamma, &qg);
    observer(0, f);

    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_iter {
        let grad: Vec<f64> = qg.iter().zip(c.iter()).map(|(a, b)| 2.0 * (a - b)).collect();
        let g_dot: f64 = grad.iter().zip(&gamma).map(|(a, b)| a * b).sum();

        let mut s = 0;
        for j in 1..n {
            if grad[j] < grad[s] {
                s = j;
            }
        }
        gap = (g_dot - grad[s]).max(0.0);
        if gap <= settings.tol {
            converged = true;
            break;
        }

        let mut away: Option<usize> = None;
        for j in 0..n {
            if gamma[j] > 0.0 && away.is_none_or(|v| grad[j] > grad[v]) {
                away = Some(j);
            }
        }
        let away_gap = away.map_or(0.0, |v| grad[v] - g_dot);
        let gamma_qg: f64 = gamma.iter().zip(&qg).map(|(a, b)| a * b).sum();

        iterations += 1;
        if gap >= away_gap || away.is_none_or(|v| gamma[v] >= 1.0) {
            // toward vertex s
            let curvature = q[(s, s)] - 2.0 * qg[s] + gamma_qg;
            let step = line_step(gap, curvature, 1.0);
            for (j, (gj, qgj)) in gamma.iter_mut().zip(qg.iter_mut()).enumerate() {
                *gj *= 1.0 - step;
                *qgj = (1.0 - step) * *qgj + step * q[(j, s)];
            }
            gamma[s] += step;
            if step >= 1.0 {
                gamma.iter_mut().for_each(|v| *v = 0.0);
                gamma[s] = 1.0;
            }
        } else {
            let v = away.expect("away vertex exists");
            let max_step = gamma[v] / (1.0 - gamma[v]);
            let curvature = gamma_qg - 2.0 * qg[v] + q[(v, v)];
            let step = line_step(away_gap, curvature, max_step);
            for (j, (gj, qgj)) in gamma.iter_mut().zip(qg.iter_mut()).enumerate() {
                *gj *= 1.0 + step;
                *qgj = (1.0 + step) * *qgj - step * q[(j, v)];
            }
            gamma[v] -= step;
            if step >= max_step {
                gamma[v] = 0.0;
            }
        }
        for v in gamma.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if iterations % 64 == 0 {
            qg = mat_vec(&q, &gamma);
        }
        f = eval(&gamma, &qg);
        observer(iterations, f);
    }

    let total: f64 = gamma.iter().sum();
    gamma.iter_mut().for_each(|v| *v /= total);
    let objective = problem.objective_sq(&gamma).max(0.0).sqrt();
    Ok(WeightSolution {
        gamma,
        objective,
        gap,
        iterations,
        converged,
    })
}

/// Exact line search for a quadratic with slope `-decrease` and curvature `curvature`.
fn line_step(decrease: f64, curvature: f64, max_step: f64) -> f64 {
    if curvature <= 0.0 {
        return max_step;
    }
    (decrease / (2.0 * curvature)).clamp(0.0, max_step)
}

fn mat_vec(q: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| q[(i, j)] * x[j]).sum())
        .collect()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

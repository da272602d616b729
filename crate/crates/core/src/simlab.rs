//! Factor-model simulations comparing separate, concatenated and averaged weights.
//!
//! Control outcomes follow `Y_itk = ρ φ_i μ_t + (1 − ρ) φ_ik μ_tk + ε_itk`.
//! The first outcome uses the common component only. The treated unit's
//! loadings are the oracle combination of donor loadings, so an exact
//! balancing weight vector exists for every outcome.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{avg_effect_interval, test_null, NullSpec, PostPeriods, TestOptions};
use crate::diagnostics::{condition_ratio, spectrum_of};
use crate::error::{Error, Result};
use crate::panel::{pooled_pre_std, pre_treatment_matrix, prepare, MatrixView, PanelData};
use crate::qp::{solve, QpProblem, SolverSettings};
use crate::weights::{fit_transformed, FitOptions, ObjectiveSpec};

/// AR(1) coefficient of the idiosyncratic factors.
pub const AR_COEF: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n_units: usize,
    pub t0: usize,
    pub k: usize,
    pub rho: f64,
    pub noise_sigma: f64,
    pub loading_range: (f64, f64),
    pub factor_range: (f64, f64),
    pub post_periods: usize,
    /// Effect added to every treated post value.
    pub effect: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_units: 50,
            t0: 10,
            k: 10,
            rho: 1.0,
            noise_sigma: 1.0,
            loading_range: (1.0, 5.0),
            factor_range: (0.5, 1.0),
            post_periods: 1,
            effect: 0.0,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(format!("simulation config: {msg}")));
        if self.n_units < 3 {
            return bad("n_units must be at least 3");
        }
        if self.t0 < 2 || self.k == 0 || self.post_periods == 0 {
            return bad("need t0 >= 2, k >= 1 and at least one post period");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(self.noise_sigma >= 0.0) || !self.effect.is_finite() {
            return bad("noise_sigma must be non-negative and effect finite");
        }
        if !(self.loading_range.0 < self.loading_range.1) || !(self.factor_range.0 < self.factor_range.1) {
            return bad("ranges must be ordered");
        }
        Ok(())
    }

    pub fn n_periods(&self) -> usize {
        self.t0 + self.post_periods
    }

    /// Index of the treated unit: the one with the second-largest common loading.
    pub fn treated(&self) -> usize {
        self.n_units - 2
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Input(format!("simulation config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Names accepted by [`preset`].
pub fn preset_names() -> Vec<String> {
    let mut names = vec![
        "appendix-c-rho1".to_string(),
        "appendix-c-rho05".to_string(),
        "appendix-c-rho0".to_string(),
    ];
    for rho in ["1", "05", "0"] {
        for t0 in [10, 40] {
            for k in [4, 10] {
                names.push(format!("rho{rho}-t0{t0}-k{k}"));
            }
        }
    }
    names
}

/// Named simulation settings; the `appendix-c-*` names use `T0 = 10, K = 10`.
pub fn preset(name: &str) -> Option<DgpConfig> {
    let rho_of = |s: &str| match s {
        "1" => Some(1.0),
        "05" => Some(0.5),
        "0" => Some(0.0),
        _ => None,
    };
    if let Some(r) = name.strip_prefix("appendix-c-rho") {
        return Some(DgpConfig {
            rho: rho_of(r)?,
            ..DgpConfig::default()
        });
    }
    let rest = name.strip_prefix("rho")?;
    let (r, rest) = rest.split_once("-t0")?;
    let (t0, k) = rest.split_once("-k")?;
    let t0: usize = t0.parse().ok()?;
    let k: usize = k.parse().ok()?;
    if ![10, 40].contains(&t0) || ![4, 10].contains(&k) {
        return None;
    }
    Some(DgpConfig {
        rho: rho_of(r)?,
        t0,
        k,
        ..DgpConfig::default()
    })
}

/// Latent quantities behind a generated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `φ_ik`, indexed `unit * K + outcome`.
    pub loadings: Vec<f64>,
    /// `μ_tk`, indexed `period * K + outcome`.
    pub factors: Vec<f64>,
    /// Oracle weights over donors, in panel donor order.
    pub oracle: Vec<f64>,
    /// Noiseless untreated outcomes, indexed `(unit * T + period) * K + outcome`.
    pub signal: Vec<f64>,
    pub effect: f64,
    n_periods: usize,
    n_outcomes: usize,
}

impl GroundTruth {
    pub fn signal_at(&self, unit: usize, period: usize, outcome: usize) -> f64 {
        self.signal[(unit * self.n_periods + period) * self.n_outcomes + outcome]
    }

    /// `Σ γ_i Ṡ_iTk − Ṡ_1Tk` where `Ṡ` is the signal minus its own pre-period mean.
    pub fn bias(&self, panel: &PanelData, gamma: &[f64], period: usize, outcome: usize) -> f64 {
        let t0 = panel.t0();
        let centred = |i: usize| {
            let mean = (0..t0).map(|t| self.signal_at(i, t, outcome)).sum::<f64>() / t0 as f64;
            self.signal_at(i, period, outcome) - mean
        };
        let synth: f64 = panel.donors().iter().zip(gamma).map(|(&i, g)| g * centred(i)).sum();
        synth - centred(panel.treated())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Affine map sending the sample min and max onto `range`.
fn rescale(values: &mut [f64], range: (f64, f64)) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 {
            range.0 + (*v - lo) / span * (range.1 - range.0)
        } else {
            0.5 * (range.0 + range.1)
        };
    }
}

/// Simplex weights with `Σ γ_i φ_i = φ_1`, where donor loadings are the
/// rows of `donors`.
pub fn oracle_weights(donors: &DMatrix<f64>, treated: &[f64]) -> Result<Vec<f64>> {
    if donors.ncols() != treated.len() {
        return Err(Error::Validation("loading dimensions disagree".into()));
    }
    let problem = QpProblem::new(
        donors.transpose(),
        DVector::from_column_slice(treated),
        None,
    )?;
    let settings = SolverSettings {
        tol: 1e-24,
        max_iter: 20_000,
        warm_start: None,
    };
    let sol = solve(&problem, &settings)?;
    let distance = (0..treated.len())
        .map(|d| {
            let fit: f64 = sol.gamma.iter().enumerate().map(|(i, g)| g * donors[(i, d)]).sum();
            (fit - treated[d]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    if distance > 1e-10 {
        return Err(Error::Infeasible { distance });
    }
    Ok(sol.gamma)
}

/// Draws replication `rep` of `config`. Each replication has its own RNG stream.
pub fn generate(config: &DgpConfig, rep: u64) -> Result<(PanelData, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(rep);
    let (n, k, t) = (config.n_units, config.k, config.n_periods());
    let treated = config.treated();
    let donors: Vec<usize> = (0..n).filter(|&i| i != treated).collect();

    let common_phi = linspace(config.loading_range.0, config.loading_range.1, n);
    let common_mu = linspace(config.factor_range.0, config.factor_range.1, t);
    let donor_phi = DMatrix::from_fn(donors.len(), 1, |r, _| common_phi[donors[r]]);
    let oracle = oracle_weights(&donor_phi, &[common_phi[treated]])?;

    let mut loadings = vec![0.0; n * k];
    let mut factors = vec![0.0; t * k];
    for i in 0..n {
        loadings[i * k] = common_phi[i];
    }
    for (tt, mu) in common_mu.iter().enumerate() {
        factors[tt * k] = *mu;
    }
    let innovation = Normal::new(0.0, 1.0).expect("unit normal");
    for kk in 1..k {
        let mut phi: Vec<f64> = donors.iter().map(|_| rng.sample(StandardNormal)).collect();
        rescale(&mut phi, config.loading_range);
        for (&i, v) in donors.iter().zip(&phi) {
            loadings[i * k + kk] = *v;
        }
        loadings[treated * k + kk] = oracle.iter().zip(&phi).map(|(g, v)| g * v).sum();

        let mut mu = Vec::with_capacity(t);
        let mut prev: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - AR_COEF * AR_COEF).sqrt();
        mu.push(prev);
        for _ in 1..t {
            prev = AR_COEF * prev + rng.sample(innovation);
            mu.push(prev);
        }
        rescale(&mut mu, config.factor_range);
        for (tt, v) in mu.iter().enumerate() {
            factors[tt * k + kk] = *v;
        }
    }

    let mut signal = vec![0.0; n * t * k];
    for i in 0..n {
        for tt in 0..t {
            for kk in 0..k {
                let common = common_phi[i] * common_mu[tt];
                let own = loadings[i * k + kk] * factors[tt * k + kk];
                signal[(i * t + tt) * k + kk] = if kk == 0 {
                    common
                } else {
                    config.rho * common + (1.0 - config.rho) * own
                };
            }
        }
    }

    let mut values = Vec::with_capacity(n * t * k);
    for i in 0..n {
        for tt in 0..t {
            for kk in 0..k {
                let noise: f64 = if config.noise_sigma > 0.0 {
                    config.noise_sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                let effect = if i == treated && tt >= config.t0 { config.effect } else { 0.0 };
                values.push(Some(signal[(i * t + tt) * k + kk] + noise + effect));
            }
        }
    }
    let panel = PanelData::new(
        (0..n).map(|i| format!("unit{:03}", i + 1)).collect(),
        (1..=t).map(|p| p.to_string()).collect(),
        (1..=k).map(|kk| format!("y{kk}")).collect(),
        values,
        treated,
        config.t0,
    )?;
    Ok((
        panel,
        GroundTruth {
            loadings,
            factors,
            oracle,
            signal,
            effect: config.effect,
            n_periods: t,
            n_outcomes: k,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Sep,
    Cat,
    Avg,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Sep, Estimator::Cat, Estimator::Avg];

    pub fn spec(self) -> ObjectiveSpec {
        match self {
            Estimator::Sep => ObjectiveSpec::separate(0),
            Estimator::Cat => ObjectiveSpec::concatenated(),
            Estimator::Avg => ObjectiveSpec::averaged(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Sep => "sep",
            Estimator::Cat => "cat",
            Estimator::Avg => "avg",
        }
    }
}

/// One replication: per estimator, bias on outcome 1 at the first post
/// period and the estimator's own objective at its fitted weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: u64,
    pub bias: [f64; 3],
    pub imbalance: [f64; 3],
    pub converged: bool,
}

/// Fits all three estimators on one generated panel. Outcomes are de-meaned
/// but not standardized, since the simulated outcomes share a scale.
pub fn replicate(config: &DgpConfig, rep: u64) -> Result<RepRecord> {
    let (panel, truth) = generate(config, rep)?;
    let (demeaned, state) = prepare(&panel, false)?;
    let mut bias = [0.0; 3];
    let mut imbalance = [0.0; 3];
    let mut converged = true;
    for (j, est) in Estimator::ALL.iter().enumerate() {
        let f = fit_transformed(demeaned.clone(), state.clone(), &est.spec(), &SolverSettings::default())?;
        converged &= f.solution.converged;
        bias[j] = truth.bias(&panel, f.gamma(), config.t0, 0);
        imbalance[j] = match est {
            Estimator::Sep => f.imbalance.separate[0],
            Estimator::Cat => f.imbalance.concatenated,
            Estimator::Avg => f.imbalance.averaged,
        };
    }
    Ok(RepRecord {
        rep,
        bias,
        imbalance,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Quantiles {
    pub fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.collect();
        v.sort_by(f64::total_cmp);
        Self {
            q05: quantile(&v, 0.05),
            q25: quantile(&v, 0.25),
            q50: quantile(&v, 0.5),
            q75: quantile(&v, 0.75),
            q95: quantile(&v, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub mean_bias: f64,
    pub mean_abs_bias: f64,
    pub bias: Quantiles,
    pub mean_imbalance: f64,
    pub imbalance: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub config: DgpConfig,
    pub reps: u64,
    pub records: Vec<RepRecord>,
    /// `(rep, message)` for replications that failed and were excluded.
    pub failures: Vec<(u64, String)>,
    pub summaries: Vec<EstimatorSummary>,
}

impl StudyResult {
    pub fn summary(&self, est: Estimator) -> &EstimatorSummary {
        &self.summaries[Estimator::ALL.iter().position(|e| *e == est).expect("estimator")]
    }

    pub fn mean_abs_bias(&self, est: Estimator) -> f64 {
        self.summary(est).mean_abs_bias
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if c == 0 { f64::NAN } else { s / c as f64 }
}

/// Runs `f` on replications `0..reps` with `jobs` threads (0 = rayon default),
/// returning results in replication order.
pub fn par_reps<T: Send>(reps: u64, jobs: usize, f: impl Fn(u64) -> T + Sync + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..reps).into_par_iter().map(&f).collect()))
}

pub fn run_study(config: &DgpConfig, reps: u64, jobs: usize) -> Result<StudyResult> {
    config.validate()?;
    if reps == 0 {
        return Err(Error::Validation("reps must be at least 1".into()));
    }
    let outcomes = par_reps(reps, jobs, |rep| replicate(config, rep))?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failures.push((rep as u64, e.to_string())),
        }
    }
    let summaries = (0..3)
        .map(|j| EstimatorSummary {
            estimator: Estimator::ALL[j],
            mean_bias: mean(records.iter().map(|r| r.bias[j])),
            mean_abs_bias: mean(records.iter().map(|r| r.bias[j].abs())),
            bias: Quantiles::of(records.iter().map(|r| r.bias[j])),
            mean_imbalance: mean(records.iter().map(|r| r.imbalance[j])),
            imbalance: Quantiles::of(records.iter().map(|r| r.imbalance[j])),
        })
        .collect();
    Ok(StudyResult {
        config: config.clone(),
        reps,
        records,
        failures,
        summaries,
    })
}

/// Spectral and conditioning probes averaged over replications, on raw
/// pre-treatment matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSummary {
    /// Top singular-value share of the first outcome's `N x T0` matrix.
    pub separate_top_share: f64,
    /// Top share of the concatenated `N x (T0·K)` matrix.
    pub concatenated_top_share: f64,
    /// Mean percent increase of the averaged-outcome condition number.
    pub condition_increase_pct: f64,
    /// Replications with a singular matrix, excluded from the condition mean.
    pub singular: usize,
}

pub fn probe_study(config: &DgpConfig, reps: u64, jobs: usize) -> Result<ProbeSummary> {
    let rows = par_reps(reps, jobs, |rep| -> Result<(f64, f64, f64, bool)> {
        let (panel, _) = generate(config, rep)?;
        let sep = spectrum_of(&pre_treatment_matrix(&panel.select_outcomes(&[0])?).matrix)?;
        let cat = spectrum_of(&pre_treatment_matrix(&panel).matrix)?;
        let cond = condition_ratio(&panel, MatrixView::Raw)?;
        Ok((sep.top_share(), cat.top_share(), cond.increase_pct, cond.infinite))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ProbeSummary {
        separate_top_share: mean(rows.iter().map(|r| r.0)),
        concatenated_top_share: mean(rows.iter().map(|r| r.1)),
        condition_increase_pct: mean(rows.iter().filter(|r| !r.3).map(|r| r.2)),
        singular: rows.iter().filter(|r| r.3).count(),
    })
}

/// Rejection rate of the per-period conformal test under the true null.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeResult {
    pub alpha: f64,
    pub p_values: Vec<f64>,
    pub rejection_rate: f64,
    /// Every p-value lies on `{1/T, ..., 1}`.
    pub on_lattice: bool,
}

/// Tests `H0: τ = effect` at the first post period of each replication,
/// with weights fitted on de-meaned, unstandardized outcomes.
pub fn size_study(
    config: &DgpConfig,
    reps: u64,
    jobs: usize,
    spec: &ObjectiveSpec,
    alpha: f64,
    options: &TestOptions,
) -> Result<SizeResult> {
    let opts = TestOptions {
        fit: FitOptions {
            standardize: Some(false),
            ..options.fit.clone()
        },
        ..options.clone()
    };
    let p_values = par_reps(reps, jobs, |rep| -> Result<f64> {
        let (panel, _) = generate(config, rep)?;
        let null = NullSpec {
            tau0: vec![config.effect; config.k],
            periods: PostPeriods::Single(config.t0),
        };
        Ok(test_null(&panel, spec, &null, &opts)?.p_value)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let t = (config.t0 + 1) as f64;
    let on_lattice = p_values.iter().all(|p| {
        let m = p * t;
        (m - m.round()).abs() < 1e-9 && (1.0..=t).contains(&m.round())
    });
    let rejection_rate = p_values.iter().filter(|p| **p <= alpha).count() as f64 / p_values.len() as f64;
    Ok(SizeResult {
        alpha,
        p_values,
        rejection_rate,
        on_lattice,
    })
}

/// Coverage of the average-effect interval at the first post period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub alpha: f64,
    pub covered: usize,
    pub empty: usize,
    pub reps: usize,
    pub coverage: f64,
}

/// The standardized truth for each replication is the effect divided by each
/// outcome's pooled pre-treatment standard deviation, averaged over outcomes.
/// `grid_offsets` are added to that truth to form the replication's grid.
pub fn coverage_study(
    config: &DgpConfig,
    reps: u64,
    jobs: usize,
    grid_offsets: &[f64],
    alpha: f64,
    options: &TestOptions,
) -> Result<CoverageResult> {
    let rows = par_reps(reps, jobs, |rep| -> Result<(bool, bool)> {
        let (panel, _) = generate(config, rep)?;
        let scales = pooled_pre_std(&panel)?;
        let truth = scales.iter().map(|s| config.effect / s).sum::<f64>() / scales.len() as f64;
        let grid: Vec<f64> = grid_offsets.iter().map(|d| truth + d).collect();
        let iv = avg_effect_interval(&panel, config.t0, &grid, alpha, options)?;
        Ok((iv.contains(truth), iv.is_empty()))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let covered = rows.iter().filter(|r| r.0).count();
    Ok(CoverageResult {
        alpha,
        covered,
        empty: rows.iter().filter(|r| r.1).count(),
        reps: rows.len(),
        coverage: covered as f64 / rows.len() as f64,
    })
}

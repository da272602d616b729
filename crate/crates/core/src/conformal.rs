//! Conformal tests of sharp nulls on the treated unit's effects.
//!
//! Each test adjusts the treated unit's post values by the hypothesized
//! effects, refits the weights on the augmented data, and compares the
//! post-period residual statistic with the pre-period ones.
//!
//! The augmented panel is de-meaned over every period that enters the
//! refit, so the procedure treats all those periods alike. Effects are
//! expressed in the units of the fitted panel: standardized units when the
//! objective standardizes, original units otherwise.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::{pooled_pre_std, PanelData};
use crate::qp::{solve, WeightSolution};
use crate::weights::{build_objective, residual, FitOptions, ObjectiveSpec};

/// Statistics within this relative distance of the observed one count as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Subsets enumerated exactly up to this count; above it the i.i.d. scheme samples.
pub const MAX_ENUMERATED: u64 = 200_000;

const SAMPLED_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QOrder {
    Finite(f64),
    Infinity,
}

impl QOrder {
    pub fn validate(self) -> Result<Self> {
        match self {
            QOrder::Finite(q) if !(q >= 1.0) || !q.is_finite() => {
                Err(Error::Validation(format!("q = {q} must be at least 1")))
            }
            other => Ok(other),
        }
    }
}

impl Default for QOrder {
    fn default() -> Self {
        QOrder::Finite(1.0)
    }
}

impl std::fmt::Display for QOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QOrder::Finite(q) => write!(f, "{q}"),
            QOrder::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for QOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let q = match s.trim() {
            "inf" | "infinity" | "Inf" => QOrder::Infinity,
            v => QOrder::Finite(
                v.parse()
                    .map_err(|_| Error::Validation(format!("invalid q order `{s}`")))?,
            ),
        };
        q.validate()
    }
}

/// `S_q(u) = ((1/√K) Σ |u_k|^q)^(1/q)`, or `max |u_k|` for `q = ∞`.
pub fn test_stat(u: &[f64], q: QOrder) -> Result<f64> {
    q.validate()?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite residual".into()));
    }
    if u.is_empty() {
        return Err(Error::Validation("test statistic of an empty residual vector".into()));
    }
    Ok(match q {
        QOrder::Infinity => u.iter().fold(0.0, |m, v| m.max(v.abs())),
        QOrder::Finite(q) => {
            let s: f64 = u.iter().map(|v| v.abs().powf(q)).sum();
            (s / (u.len() as f64).sqrt()).powf(1.0 / q)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Iid,
    MovingBlock,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Iid => "iid",
            Scheme::MovingBlock => "moving-block",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(Scheme::Iid),
            "moving-block" => Ok(Scheme::MovingBlock),
            other => Err(Error::Validation(format!("unknown permutation scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PostPeriods {
    Single(usize),
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullSpec {
    /// Hypothesized effect per outcome.
    pub tau0: Vec<f64>,
    pub periods: PostPeriods,
}

impl NullSpec {
    pub fn zero(k: usize, periods: PostPeriods) -> Self {
        Self {
            tau0: vec![0.0; k],
            periods,
        }
    }

    fn targets(&self, panel: &PanelData) -> Result<Vec<usize>> {
        if self.tau0.len() != panel.n_outcomes() {
            return Err(Error::Validation(format!(
                "null has {} effects for {} outcomes",
                self.tau0.len(),
                panel.n_outcomes()
            )));
        }
        if self.tau0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("null effects must be finite".into()));
        }
        match self.periods {
            PostPeriods::Single(t) if t < panel.t0() || t >= panel.n_periods() => Err(
                Error::Validation(format!("period {t} is not a post-treatment period")),
            ),
            PostPeriods::Single(t) => Ok(vec![t]),
            PostPeriods::All => Ok((panel.t0()..panel.n_periods()).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestResult {
    pub p_value: f64,
    /// `(period index in the input panel, S_q)` for every period with residuals.
    pub statistics: Vec<(usize, f64)>,
    /// Observed post statistic (block mean for joint tests).
    pub observed: f64,
    pub q_order: QOrder,
    pub scheme: Scheme,
    /// Number of reference statistics or permutations the p-value is taken over.
    pub n_reference: usize,
    pub fit: WeightSolution,
    /// The post block is longer than half the periods.
    pub long_block: bool,
    /// The i.i.d. permutation distribution was sampled rather than enumerated.
    pub sampled: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TestOptions {
    pub fit: FitOptions,
    pub q: QOrder,
    pub scheme: Scheme,
    /// Seed for sampled permutation distributions.
    pub seed: u64,
}

fn ties_or_exceeds(observed: f64, reference: f64) -> bool {
    observed <= reference + TIE_TOLERANCE * observed.abs().max(reference.abs()).max(1.0)
}

struct Refit {
    /// Input-panel period index of each augmented period.
    periods: Vec<usize>,
    stats: Vec<Option<f64>>,
    solution: WeightSolution,
    n_pre: usize,
}

fn augmented_refit(
    panel: &PanelData,
    spec: &ObjectiveSpec,
    null: &NullSpec,
    targets: &[usize],
    options: &TestOptions,
) -> Result<Refit> {
    options.q.validate()?;
    let t0 = panel.t0();
    let keep: Vec<usize> = (0..t0).chain(targets.iter().copied()).collect();
    let aug = panel.select_periods(&keep, t0)?;
    let (n, t_aug, k) = (aug.n_units(), aug.n_periods(), aug.n_outcomes());

    let standardize = options.fit.standardize_for(spec);
    let scales = if standardize {
        pooled_pre_std(&aug)?
    } else {
        vec![1.0; k]
    };
    let signs: Vec<f64> = if standardize {
        aug.signs().to_vec()
    } else {
        vec![1.0; k]
    };

    let mut adjusted = aug.clone();
    for t in t0..t_aug {
        for kk in 0..k {
            let shift = null.tau0[kk] * scales[kk] * signs[kk];
            let v = adjusted.value(aug.treated(), t, kk).map(|v| v - shift);
            adjusted.set_value(aug.treated(), t, kk, v);
        }
    }
    let mut transformed = adjusted.clone();
    for i in 0..n {
        for kk in 0..k {
            let (sum, count) = (0..t_aug)
                .filter_map(|t| adjusted.value(i, t, kk))
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            let mean = sum / count as f64;
            for t in 0..t_aug {
                let v = adjusted.value(i, t, kk).map(|v| signs[kk] * (v - mean) / scales[kk]);
                transformed.set_value(i, t, kk, v);
            }
        }
    }

    let spec = spec.clone().with_extra_periods((t0..t_aug).collect());
    let problem = build_objective(&transformed, &spec)?;
    let solution = solve(&problem, &options.fit.solver)?;

    let stats = (0..t_aug)
        .map(|t| {
            let u: Vec<f64> = (0..k)
                .filter_map(|kk| residual(&transformed, &solution.gamma, t, kk))
                .collect();
            if u.is_empty() {
                Ok(None)
            } else {
                test_stat(&u, options.q).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Refit {
        periods: keep,
        stats,
        solution,
        n_pre: t0,
    })
}

fn collected(refit: &Refit) -> Vec<(usize, f64)> {
    refit
        .periods
        .iter()
        .zip(&refit.stats)
        .filter_map(|(&p, s)| s.map(|s| (p, s)))
        .collect()
}

/// Per-period test of `H0: τ = τ0` at one post period.
pub fn test_null(
    panel: &PanelData,
    spec: &ObjectiveSpec,
    null: &NullSpec,
    options: &TestOptions,
) -> Result<TestResult> {
    let targets = null.targets(panel)?;
    if targets.len() != 1 {
        return Err(Error::Validation(
            "per-period test needs a single post period".into(),
        ));
    }
    let refit = augmented_refit(panel, spec, null, &targets, options)?;
    let observed = refit.stats[refit.n_pre].ok_or_else(|| {
        Error::Validation("treated unit or weighted donors missing in the tested period".into())
    })?;
    let pre: Vec<f64> = refit.stats[..refit.n_pre].iter().flatten().copied().collect();
    let count = pre.iter().filter(|s| ties_or_exceeds(observed, **s)).count();
    let total = pre.len() + 1;
    Ok(TestResult {
        p_value: (count + 1) as f64 / total as f64,
        statistics: collected(&refit),
        observed,
        q_order: options.q,
        scheme: Scheme::Iid,
        n_reference: total,
        fit: refit.solution,
        long_block: false,
        sampled: false,
    })
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Calls `visit` with every `p`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, p: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        visit(&idx);
        let Some(pos) = (0..p).rev().find(|&j| idx[j] < n - p + j) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..p {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Joint test of `H0: τ = τ0` in every post period after one augmented refit.
///
/// The statistic is the mean of the per-period statistics over the post
/// block. `MovingBlock` compares it with all cyclic shifts of the block;
/// `Iid` with every subset of the same size (sampled when too many).
pub fn test_null_joint(
    panel: &PanelData,
    spec: &ObjectiveSpec,
    null: &NullSpec,
    options: &TestOptions,
) -> Result<TestResult> {
    let targets = null.targets(panel)?;
    let refit = augmented_refit(panel, spec, null, &targets, options)?;
    if refit.stats.iter().any(Option::is_none) {
        return Err(Error::Validation(
            "joint test needs residuals in every period".into(),
        ));
    }
    let stats: Vec<f64> = refit.stats.iter().flatten().copied().collect();
    let t = stats.len();
    let p = targets.len();
    let block_mean = |idx: &mut dyn Iterator<Item = usize>| idx.map(|j| stats[j]).sum::<f64>() / p as f64;
    let observed = block_mean(&mut (refit.n_pre..t));

    let (count, total, sampled) = match options.scheme {
        Scheme::MovingBlock => {
            let count = (0..t)
                .filter(|shift| {
                    let b = block_mean(&mut (0..p).map(|m| (refit.n_pre + shift + m) % t));
                    ties_or_exceeds(observed, b)
                })
                .count();
            (count, t, false)
        }
        Scheme::Iid if binomial(t as u64, p as u64) <= MAX_ENUMERATED => {
            let (mut count, mut total) = (0, 0);
            for_each_subset(t, p, |s| {
                total += 1;
                if ties_or_exceeds(observed, block_mean(&mut s.iter().copied())) {
                    count += 1;
                }
            });
            (count, total, false)
        }
        Scheme::Iid => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let mut count = 1;
            for _ in 0..SAMPLED_PERMUTATIONS {
                let s = sample(&mut rng, t, p);
                if ties_or_exceeds(observed, block_mean(&mut s.iter())) {
                    count += 1;
                }
            }
            (count, SAMPLED_PERMUTATIONS + 1, true)
        }
    };
    Ok(TestResult {
        p_value: count as f64 / total as f64,
        statistics: collected(&refit),
        observed,
        q_order: options.q,
        scheme: options.scheme,
        n_reference: total,
        fit: refit.solution,
        long_block: 2 * p > t,
        sampled,
    })
}

/// Confidence set for the average standardized effect.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectInterval {
    pub alpha: f64,
    /// `(τ̄0, p)` for every grid value.
    pub p_values: Vec<(f64, f64)>,
    /// `(min, max)` of the accepted grid values; `None` when nothing is accepted.
    pub bounds: Option<(f64, f64)>,
}

impl EffectInterval {
    pub fn is_empty(&self) -> bool {
        self.bounds.is_none()
    }

    pub fn contains(&self, tau: f64) -> bool {
        self.bounds.is_some_and(|(lo, hi)| lo <= tau && tau <= hi)
    }
}

/// Single-outcome panel of `(1/K) Σ_k s_k (Y_itk − Ȳ_i·k) / σ_k`.
pub fn averaged_panel(panel: &PanelData) -> Result<PanelData> {
    let (transformed, _) = crate::panel::prepare(panel, true)?;
    let (n, t, k) = (panel.n_units(), panel.n_periods(), panel.n_outcomes());
    let mut values = Vec::with_capacity(n * t);
    for i in 0..n {
        for tt in 0..t {
            let present: Vec<f64> = (0..k).filter_map(|kk| transformed.value(i, tt, kk)).collect();
            values.push((!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64));
        }
    }
    PanelData::new(
        panel.units().to_vec(),
        panel.periods().to_vec(),
        vec!["average".to_string()],
        values,
        panel.treated(),
        panel.t0(),
    )
}

/// Inverts the per-period test on the averaged outcome over a grid of
/// average effects; values with `p > α` are accepted.
pub fn avg_effect_interval(
    panel: &PanelData,
    period: usize,
    grid: &[f64],
    alpha: f64,
    options: &TestOptions,
) -> Result<EffectInterval> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::Validation(format!("alpha = {alpha} outside (0, 1)")));
    }
    let averaged = averaged_panel(panel)?;
    let opts = TestOptions {
        fit: FitOptions {
            standardize: Some(false),
            ..options.fit.clone()
        },
        ..options.clone()
    };
    let spec = ObjectiveSpec::averaged();
    let p_values = grid
        .par_iter()
        .map(|&tau| {
            let null = NullSpec {
                tau0: vec![tau],
                periods: PostPeriods::Single(period),
            };
            test_null(&averaged, &spec, &null, &opts).map(|r| (tau, r.p_value))
        })
        .collect::<Result<Vec<_>>>()?;
    let accepted: Vec<f64> = p_values.iter().filter(|(_, p)| *p > alpha).map(|(t, _)| *t).collect();
    let bounds = accepted.iter().copied().fold(None, |acc: Option<(f64, f64)>, v| {
        Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
    });
    Ok(EffectInterval {
        alpha,
        p_values,
        bounds,
    })
}

/// `n` evenly spaced values from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Treated unit is an exact convex combination of donors 1 and 2 in every
    /// period; `effect[k]` is added to its post values.
    fn noiseless(seed: u64, t0: usize, post: usize, k: usize, effect: &[f64]) -> PanelData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let t = t0 + post;
        let base: Vec<f64> = (0..n * t * k).map(|_| rng.sample(StandardNormal)).collect();
        let at = |i: usize, tt: usize, kk: usize| base[(i * t + tt) * k + kk];
        PanelData::from_fn(n, t, k, 0, t0, |i, tt, kk| {
            if i == 0 {
                let v = 0.3 * at(1, tt, kk) + 0.7 * at(2, tt, kk);
                if tt >= t0 { v + effect[kk] } else { v }
            } else {
                at(i, tt, kk)
            }
        })
        .unwrap()
    }

    fn noisy(seed: u64, t0: usize, k: usize) -> PanelData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PanelData::from_fn(8, t0 + 1, k, 0, t0, |_, _, _| rng.sample(StandardNormal)).unwrap()
    }

    #[test]
    fn stat_examples() {
        assert_eq!(test_stat(&[0.0, 0.0], QOrder::Finite(1.0)).unwrap(), 0.0);
        assert_eq!(test_stat(&[-2.5], QOrder::Finite(1.0)).unwrap(), 2.5);
        let s = test_stat(&[3.0, 4.0], QOrder::Finite(2.0)).unwrap();
        assert!((s - (25.0 / 2f64.sqrt()).sqrt()).abs() < 1e-12);
        assert!((s - 4.2045).abs() < 1e-4);
        assert_eq!(test_stat(&[3.0, -4.0], QOrder::Infinity).unwrap(), 4.0);
        assert!(test_stat(&[1.0], QOrder::Finite(0.5)).is_err());
    }

    #[test]
    fn q_order_parsing() {
        assert_eq!("inf".parse::<QOrder>().unwrap(), QOrder::Infinity);
        assert_eq!("2".parse::<QOrder>().unwrap(), QOrder::Finite(2.0));
        assert!("0.5".parse::<QOrder>().is_err());
    }

    proptest! {
        #[test]
        fn stat_is_homogeneous(u in prop::collection::vec(-10.0f64..10.0, 1..6), c in 0.0f64..5.0, q in 1.0f64..4.0) {
            for order in [QOrder::Finite(q), QOrder::Infinity] {
                let a = test_stat(&u.iter().map(|v| c * v).collect::<Vec<_>>(), order).unwrap();
                let b = c * test_stat(&u, order).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b));
                prop_assert!(a >= 0.0);
            }
        }
    }

    #[test]
    fn exact_null_gives_p_one() {
        let tau = [0.4, -0.2, 1.0];
        let p = noiseless(1, 12, 1, 3, &tau);
        let opts = TestOptions {
            fit: FitOptions {
                standardize: Some(false),
                ..FitOptions::default()
            },
            ..TestOptions::default()
        };
        let null = NullSpec {
            tau0: tau.to_vec(),
            periods: PostPeriods::Single(12),
        };
        let r = test_null(&p, &ObjectiveSpec::concatenated(), &null, &opts).unwrap();
        assert!(r.observed < 1e-6);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn dominant_post_statistic_gives_min_p() {
        let p = noiseless(2, 12, 1, 2, &[50.0, 50.0]);
        let null = NullSpec::zero(2, PostPeriods::Single(12));
        let r = test_null(&p, &ObjectiveSpec::concatenated(), &null, &TestOptions::default()).unwrap();
        assert_eq!(r.p_value, 1.0 / 13.0);
    }

    #[test]
    fn p_values_on_lattice() {
        for seed in 0..10 {
            let p = noisy(seed, 15, 3);
            let null = NullSpec::zero(3, PostPeriods::Single(15));
            let r = test_null(&p, &ObjectiveSpec::averaged(), &null, &TestOptions::default()).unwrap();
            let scaled = r.p_value * 16.0;
            assert!((scaled - scaled.round()).abs() < 1e-12);
            assert!(r.p_value >= 1.0 / 16.0 && r.p_value <= 1.0);
        }
    }

    #[test]
    fn joint_single_period_matches_per_period() {
        for seed in 0..5 {
            let p = noisy(seed, 14, 2);
            let null = NullSpec::zero(2, PostPeriods::All);
            let single = NullSpec::zero(2, PostPeriods::Single(14));
            let spec = ObjectiveSpec::combined(0.5);
            let a = test_null(&p, &spec, &single, &TestOptions::default()).unwrap();
            for scheme in [Scheme::Iid, Scheme::MovingBlock] {
                let opts = TestOptions {
                    scheme,
                    ..TestOptions::default()
                };
                let b = test_null_joint(&p, &spec, &null, &opts).unwrap();
                assert_eq!(a.p_value, b.p_value);
            }
        }
    }

    #[test]
    fn joint_noiseless_null_gives_p_one() {
        let p = noiseless(3, 10, 4, 2, &[0.0, 0.0]);
        let null = NullSpec::zero(2, PostPeriods::All);
        for scheme in [Scheme::Iid, Scheme::MovingBlock] {
            let opts = TestOptions {
                scheme,
                ..TestOptions::default()
            };
            let r = test_null_joint(&p, &ObjectiveSpec::concatenated(), &null, &opts).unwrap();
            assert_eq!(r.p_value, 1.0);
            assert!(!r.long_block);
        }
    }

    #[test]
    fn joint_long_block_flagged() {
        let p = noiseless(4, 4, 5, 1, &[0.0]);
        let r = test_null_joint(
            &p,
            &ObjectiveSpec::separate(0),
            &NullSpec::zero(1, PostPeriods::All),
            &TestOptions::default(),
        )
        .unwrap();
        assert!(r.long_block);
    }

    #[test]
    fn subset_enumeration() {
        let mut seen = Vec::new();
        for_each_subset(5, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(seen[0], vec![0, 1]);
        assert_eq!(seen[9], vec![3, 4]);
    }

    #[test]
    fn shifting_null_away_lowers_p() {
        let p = noiseless(5, 15, 1, 2, &[0.0, 0.0]);
        let opts = TestOptions::default();
        let mut last = 1.0 + 1e-12;
        for step in 0..8 {
            let d = step as f64 * 0.5;
            let null = NullSpec {
                tau0: vec![d, d],
                periods: PostPeriods::Single(15),
            };
            let r = test_null(&p, &ObjectiveSpec::concatenated(), &null, &opts).unwrap();
            assert!(r.p_value <= last + 1e-12, "step {step}: {} > {last}", r.p_value);
            last = r.p_value;
        }
    }

    #[test]
    fn interval_contains_implanted_average() {
        // unit-variance outcomes make the standardized effect close to the raw one
        let p = noiseless(6, 20, 1, 3, &[0.5, 0.5, 0.5]);
        let scales = pooled_pre_std(&p).unwrap();
        let truth: f64 = scales.iter().map(|s| 0.5 / s).sum::<f64>() / 3.0;
        let grid = linspace(truth - 3.0, truth + 3.0, 61);
        let grid: Vec<f64> = grid.into_iter().chain([truth]).collect();
        let iv = avg_effect_interval(&p, 20, &grid, 0.1, &TestOptions::default()).unwrap();
        assert!(iv.contains(truth), "{:?}", iv.bounds);
    }

    #[test]
    fn interval_empty_when_grid_excludes_truth() {
        let p = noiseless(7, 20, 1, 2, &[30.0, 30.0]);
        let grid = linspace(-1.0, 1.0, 11);
        let iv = avg_effect_interval(&p, 20, &grid, 0.1, &TestOptions::default()).unwrap();
        assert!(iv.is_empty());
    }

    #[test]
    fn bad_null_rejected() {
        let p = noisy(8, 10, 2);
        let opts = TestOptions::default();
        let spec = ObjectiveSpec::concatenated();
        assert!(test_null(&p, &spec, &NullSpec::zero(3, PostPeriods::Single(10)), &opts).is_err());
        assert!(test_null(&p, &spec, &NullSpec::zero(2, PostPeriods::Single(3)), &opts).is_err());
    }
}

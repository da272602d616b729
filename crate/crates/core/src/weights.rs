//! Imbalance objectives, weight fitting and gap series.
//!
//! All objectives act on a de-meaned (and, for multi-outcome kinds,
//! standardized) panel. With residual `r_tk(γ) = Ẏ_1tk − Σ_i γ_i Ẏ_itk`:
//!
//! * separate(k): `q_k² = mean_t r_tk²`
//! * concatenated: `q_cat² = mean_{t,k} r_tk²`
//! * averaged: `q_avg² = mean_t (mean_k r_tk)²`
//! * combined(ν): `ν·q_avg² + (1 − ν)·q_cat²`
//!
//! The combined program blends the squared objectives so that it stays a
//! single simplex least-squares problem; at `ν = 0` and `ν = 1` it coincides
//! with the concatenated and averaged programs.
//!
//! A (period, outcome) term enters an objective only when the treated unit
//! and every donor are observed there; reported imbalances only require the
//! donors with positive weight to be observed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::{prepare, PanelData, TransformState};
use crate::qp::{solve, QpProblem, SolverSettings, WeightSolution};

/// Weights at or below this value are treated as zero when deciding which
/// donors must be observed.
pub const POSITIVE_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    Separate(usize),
    Concatenated,
    Averaged,
    /// Weight `ν` on the averaged objective and `1 − ν` on the concatenated one.
    Combined(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Post-treatment period indices added to the fit (conformal refits).
    pub extra_periods: Vec<usize>,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            extra_periods: Vec::new(),
        }
    }

    pub fn separate(outcome: usize) -> Self {
        Self::new(ObjectiveKind::Separate(outcome))
    }

    pub fn concatenated() -> Self {
        Self::new(ObjectiveKind::Concatenated)
    }

    pub fn averaged() -> Self {
        Self::new(ObjectiveKind::Averaged)
    }

    pub fn combined(nu: f64) -> Self {
        Self::new(ObjectiveKind::Combined(nu))
    }

    pub fn with_extra_periods(mut self, periods: Vec<usize>) -> Self {
        self.extra_periods = periods;
        self
    }

    pub fn include_post_period(&self) -> bool {
        !self.extra_periods.is_empty()
    }

    pub fn is_multi_outcome(&self) -> bool {
        !matches!(self.kind, ObjectiveKind::Separate(_))
    }

    pub fn validate(&self, panel: &PanelData) -> Result<()> {
        match self.kind {
            ObjectiveKind::Separate(k) if k >= panel.n_outcomes() => Err(Error::Validation(
                format!("outcome index {k} out of range (K = {})", panel.n_outcomes()),
            )),
            ObjectiveKind::Combined(nu) if !(0.0..=1.0).contains(&nu) => {
                Err(Error::Validation(format!("nu = {nu} outside [0, 1]")))
            }
            _ => {
                for &t in &self.extra_periods {
                    if t < panel.t0() || t >= panel.n_periods() {
                        return Err(Error::Validation(format!(
                            "extra period {t} is not a post-treatment period"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            ObjectiveKind::Separate(k) => format!("separate[{k}]"),
            ObjectiveKind::Concatenated => "concatenated".into(),
            ObjectiveKind::Averaged => "averaged".into(),
            ObjectiveKind::Combined(nu) => format!("combined[nu={nu}]"),
        }
    }
}

fn fit_periods(panel: &PanelData, spec: &ObjectiveSpec) -> Vec<usize> {
    let mut periods: Vec<usize> = (0..panel.t0()).collect();
    for &t in &spec.extra_periods {
        if !periods.contains(&t) {
            periods.push(t);
        }
    }
    periods
}

fn observed_everywhere(panel: &PanelData, t: usize, k: usize) -> bool {
    (0..panel.n_units()).all(|i| panel.value(i, t, k).is_some())
}

struct Rows {
    targets: Vec<f64>,
    designs: Vec<Vec<f64>>,
}

impl Rows {
    fn new() -> Self {
        Self {
            targets: Vec::new(),
            designs: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.targets.len()
    }
}

fn outcome_rows(panel: &PanelData, periods: &[usize], outcomes: &[usize], donors: &[usize]) -> Rows {
    let treated = panel.treated();
    let mut rows = Rows::new();
    for &k in outcomes {
        for &t in periods {
            if !observed_everywhere(panel, t, k) {
                continue;
            }
            rows.targets.push(panel.value(treated, t, k).unwrap_or(0.0));
            rows.designs
                .push(donors.iter().map(|&i| panel.value(i, t, k).unwrap_or(0.0)).collect());
        }
    }
    rows
}

fn averaged_rows(panel: &PanelData, periods: &[usize], donors: &[usize]) -> Rows {
    let treated = panel.treated();
    let mut rows = Rows::new();
    for &t in periods {
        let present: Vec<usize> =
            (0..panel.n_outcomes()).filter(|&k| observed_everywhere(panel, t, k)).collect();
        if present.is_empty() {
            continue;
        }
        let m = present.len() as f64;
        let mean = |i: usize| present.iter().map(|&k| panel.value(i, t, k).unwrap_or(0.0)).sum::<f64>() / m;
        rows.targets.push(mean(treated));
        rows.designs.push(donors.iter().map(|&i| mean(i)).collect());
    }
    rows
}

/// Assembles the simplex least-squares problem for `spec` on a transformed panel.
pub fn build_objective(panel: &PanelData, spec: &ObjectiveSpec) -> Result<QpProblem> {
    spec.validate(panel)?;
    let periods = fit_periods(panel, spec);
    let donors = panel.donors();
    let all: Vec<usize> = (0..panel.n_outcomes()).collect();

    let blocks: Vec<(Rows, f64)> = match spec.kind {
        ObjectiveKind::Separate(k) => vec![(outcome_rows(panel, &periods, &[k], &donors), 1.0)],
        ObjectiveKind::Concatenated => vec![(outcome_rows(panel, &periods, &all, &donors), 1.0)],
        ObjectiveKind::Averaged => vec![(averaged_rows(panel, &periods, &donors), 1.0)],
        ObjectiveKind::Combined(nu) => vec![
            (averaged_rows(panel, &periods, &donors), nu),
            (outcome_rows(panel, &periods, &all, &donors), 1.0 - nu),
        ],
    };

    let mut targets = Vec::new();
    let mut designs = Vec::new();
    let mut weights = Vec::new();
    for (rows, share) in blocks {
        if share <= 0.0 {
            continue;
        }
        if rows.len() == 0 {
            return Err(Error::Validation(format!(
                "objective {} has no fully observed rows",
                spec.label()
            )));
        }
        let w = share / rows.len() as f64;
        weights.extend(std::iter::repeat_n(w, rows.len()));
        targets.extend(rows.targets);
        designs.extend(rows.designs);
    }
    let n0 = donors.len();
    let design = DMatrix::from_fn(designs.len(), n0, |r, j| designs[r][j]);
    QpProblem::new(design, DVector::from_vec(targets), Some(DVector::from_vec(weights)))
}

/// Residual `Ẏ_1tk − Σ γ_i Ẏ_itk`, or `None` if the treated unit or a
/// positively weighted donor is missing.
pub fn residual(panel: &PanelData, gamma: &[f64], t: usize, k: usize) -> Option<f64> {
    let mut fit = 0.0;
    for (&i, &g) in panel.donors().iter().zip(gamma) {
        if g > POSITIVE_WEIGHT {
            fit += g * panel.value(i, t, k)?;
        }
    }
    Some(panel.value(panel.treated(), t, k)? - fit)
}

/// Imbalance measures evaluated at a fixed set of weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Imbalance {
    pub separate: Vec<f64>,
    pub concatenated: f64,
    pub averaged: f64,
}

/// Direct-summation imbalances over the pre-treatment periods.
pub fn imbalance(panel: &PanelData, gamma: &[f64]) -> Imbalance {
    let (t0, k) = (panel.t0(), panel.n_outcomes());
    let resid: Vec<Vec<Option<f64>>> = (0..t0)
        .map(|t| (0..k).map(|kk| residual(panel, gamma, t, kk)).collect())
        .collect();
    let rms = |values: &mut dyn Iterator<Item = f64>| {
        let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
        if count == 0 {
            f64::NAN
        } else {
            (sum / count as f64).sqrt()
        }
    };
    let separate = (0..k)
        .map(|kk| rms(&mut resid.iter().filter_map(|row| row[kk])))
        .collect();
    let concatenated = rms(&mut resid.iter().flat_map(|row| row.iter().flatten().copied()));
    let averaged = rms(&mut resid.iter().filter_map(|row| {
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }));
    Imbalance {
        separate,
        concatenated,
        averaged,
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub solver: SolverSettings,
    /// Override the default of standardizing exactly the multi-outcome kinds.
    pub standardize: Option<bool>,
}

impl FitOptions {
    pub fn standardize_for(&self, spec: &ObjectiveSpec) -> bool {
        self.standardize.unwrap_or_else(|| spec.is_multi_outcome())
    }
}

/// Weights fitted on one panel, with the transformed data they were fitted on.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ObjectiveSpec,
    pub solution: WeightSolution,
    pub imbalance: Imbalance,
    pub transformed: PanelData,
    pub state: TransformState,
}

impl FitResult {
    pub fn gamma(&self) -> &[f64] {
        &self.solution.gamma
    }

    /// `(donor label, weight)` sorted by descending weight.
    pub fn donor_weights(&self) -> Vec<(String, f64)> {
        donor_weights(&self.transformed, &self.solution.gamma)
    }
}

pub fn donor_weights(panel: &PanelData, gamma: &[f64]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = panel
        .donors()
        .into_iter()
        .zip(gamma)
        .map(|(i, g)| (panel.units()[i].clone(), *g))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

/// De-means (and standardizes for multi-outcome kinds), then fits `spec`.
pub fn fit(panel: &PanelData, spec: &ObjectiveSpec, options: &FitOptions) -> Result<FitResult> {
    spec.validate(panel)?;
    let (transformed, state) = prepare(panel, options.standardize_for(spec))?;
    fit_transformed(transformed, state, spec, &options.solver)
}

/// Fits `spec` on an already transformed panel.
pub fn fit_transformed(
    transformed: PanelData,
    state: TransformState,
    spec: &ObjectiveSpec,
    solver: &SolverSettings,
) -> Result<FitResult> {
    let problem = build_objective(&transformed, spec)?;
    let solution = solve(&problem, solver)?;
    let imbalance = imbalance(&transformed, &solution.gamma);
    Ok(FitResult {
        spec: spec.clone(),
        solution,
        imbalance,
        transformed,
        state,
    })
}

/// Outcome of the concatenated-fit heuristic for the combined objective weight.
#[derive(Debug, Clone)]
pub struct NuChoice {
    pub nu: f64,
    /// Set when the concatenated fit is perfect and `ν = 1` was returned.
    pub degenerate: bool,
    pub concatenated: FitResult,
}

/// `ν = √q_avg(γ̂_cat) / √q_cat(γ̂_cat)`.
pub fn heuristic_nu(panel: &PanelData, options: &FitOptions) -> Result<NuChoice> {
    let concatenated = fit(panel, &ObjectiveSpec::concatenated(), options)?;
    let Imbalance {
        concatenated: q_cat,
        averaged: q_avg,
        ..
    } = concatenated.imbalance;
    if panel.n_outcomes() == 1 {
        return Ok(NuChoice {
            nu: 1.0,
            degenerate: false,
            concatenated,
        });
    }
    if !(q_cat > 1e-12) {
        return Ok(NuChoice {
            nu: 1.0,
            degenerate: true,
            concatenated,
        });
    }
    let nu = (q_avg.sqrt() / q_cat.sqrt()).clamp(0.0, 1.0);
    Ok(NuChoice {
        nu,
        degenerate: false,
        concatenated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub outcome: usize,
    pub period: usize,
    pub observed: Option<f64>,
    pub counterfactual: Option<f64>,
    pub gap: Option<f64>,
    pub is_post: bool,
}

/// Treated-minus-synthetic series in original units, for every outcome and period.
#[derive(Debug, Clone)]
pub struct GapSeries {
    pub outcomes: Vec<String>,
    pub periods: Vec<String>,
    pub rows: Vec<GapRow>,
}

impl GapSeries {
    pub fn get(&self, outcome: usize, period: usize) -> &GapRow {
        &self.rows[outcome * self.periods.len() + period]
    }
}

/// Applies `Ŷ_1tk(0) = Ȳ_1·k + Σ γ_i Ẏ_itk` to every period and restores original units.
pub fn gaps(panel: &PanelData, gamma: &[f64], state: &TransformState, transformed: &PanelData) -> GapSeries {
    let treated = panel.treated();
    let mut rows = Vec::with_capacity(panel.n_outcomes() * panel.n_periods());
    for k in 0..panel.n_outcomes() {
        for t in 0..panel.n_periods() {
            let observed = panel.value(treated, t, k);
            let synthetic = panel
                .donors()
                .iter()
                .zip(gamma)
                .filter(|(_, g)| **g > POSITIVE_WEIGHT)
                .try_fold(0.0, |acc, (&i, g)| Some(acc + g * transformed.value(i, t, k)?));
            let counterfactual = synthetic.map(|s| state.restore(treated, k, s));
            let gap = observed.zip(counterfactual).map(|(o, c)| o - c);
            rows.push(GapRow {
                outcome: k,
                period: t,
                observed,
                counterfactual,
                gap,
                is_post: t >= panel.t0(),
            });
        }
    }
    GapSeries {
        outcomes: panel.outcomes().to_vec(),
        periods: panel.periods().to_vec(),
        rows,
    }
}

/// Gap series for a fit produced by [`fit`] on `panel`.
pub fn fit_gaps(panel: &PanelData, fit: &FitResult) -> GapSeries {
    gaps(panel, fit.gamma(), &fit.state, &fit.transformed)
}

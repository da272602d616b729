//! Balanced multi-outcome panels.
//!
//! A [`PanelData`] holds `Y[unit, period, outcome]` for `N` units, `T` ordered
//! periods and `K` outcomes, with an explicit missing marker per cell. Exactly
//! one unit is treated; the first `t0` periods are pre-treatment.
//!
//! Transformations ([`demean`], [`standardize`], [`prepare`]) return a new panel
//! together with a [`TransformState`] that records what was applied so gap
//! series can be mapped back to original units.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Treatment settings supplied alongside a long-format panel file.
#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct TreatmentConfig {
    pub treated_unit: String,
    /// Label of the last pre-treatment period.
    pub t0: String,
    /// Per-outcome sign multipliers (`+1` or `-1`); absent outcomes default to `+1`.
    #[serde(default)]
    pub signs: BTreeMap<String, f64>,
}

impl TreatmentConfig {
    pub fn new(treated_unit: impl Into<String>, t0: impl Into<String>) -> Self {
        Self {
            treated_unit: treated_unit.into(),
            t0: t0.into(),
            signs: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    units: Vec<String>,
    periods: Vec<String>,
    outcomes: Vec<String>,
    values: Vec<Option<f64>>,
    treated: usize,
    t0: usize,
    signs: Vec<f64>,
}

impl PanelData {
    /// Builds a panel from a dense `(unit, period, outcome)` row-major cell vector.
    pub fn new(
        units: Vec<String>,
        periods: Vec<String>,
        outcomes: Vec<String>,
        values: Vec<Option<f64>>,
        treated: usize,
        t0: usize,
    ) -> Result<Self> {
        let k = outcomes.len();
        let panel = Self {
            signs: vec![1.0; k],
            units,
            periods,
            outcomes,
            values,
            treated,
            t0,
        };
        panel.validate()?;
        Ok(panel)
    }

    /// Convenience constructor for complete panels; `value(i, t, k)` fills every cell.
    pub fn from_fn(
        n_units: usize,
        n_periods: usize,
        n_outcomes: usize,
        treated: usize,
        t0: usize,
        mut value: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_units * n_periods * n_outcomes);
        for i in 0..n_units {
            for t in 0..n_periods {
                for k in 0..n_outcomes {
                    values.push(Some(value(i, t, k)));
                }
            }
        }
        Self::new(
            (0..n_units).map(|i| format!("u{:02}", i + 1)).collect(),
            (0..n_periods).map(|t| (t + 1).to_string()).collect(),
            (0..n_outcomes).map(|k| format!("y{}", k + 1)).collect(),
            values,
            treated,
            t0,
        )
    }

    fn validate(&self) -> Result<()> {
        let (n, t, k) = (self.units.len(), self.periods.len(), self.outcomes.len());
        if n < 2 {
            return Err(Error::Validation(
                "panel needs a treated unit and at least one donor".into(),
            ));
        }
        if k == 0 || t == 0 {
            return Err(Error::Validation("panel has no outcomes or periods".into()));
        }
        if self.values.len() != n * t * k {
            return Err(Error::Validation(format!(
                "expected {} cells, got {}",
                n * t * k,
                self.values.len()
            )));
        }
        if self.treated >= n {
            return Err(Error::Validation("treated index out of range".into()));
        }
        if self.t0 == 0 || self.t0 >= t {
            return Err(Error::Validation(format!(
                "t0 must satisfy 1 <= t0 < T (t0 = {}, T = {t})",
                self.t0
            )));
        }
        if self.signs.len() != k || self.signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(Error::Validation("sign multipliers must be +1 or -1".into()));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite value in panel".into()));
        }
        for i in 0..n {
            for kk in 0..k {
                let observed = (0..self.t0).filter(|&tt| self.value(i, tt, kk).is_some()).count();
                if observed < 2 {
                    return Err(Error::Validation(format!(
                        "unit `{}`, outcome `{}` has {observed} non-missing pre-treatment values (need 2)",
                        self.units[i], self.outcomes[kk]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_signs(mut self, signs: Vec<f64>) -> Result<Self> {
        self.signs = signs;
        self.validate()?;
        Ok(self)
    }

    #[inline]
    fn index(&self, unit: usize, period: usize, outcome: usize) -> usize {
        (unit * self.periods.len() + period) * self.outcomes.len() + outcome
    }

    #[inline]
    pub fn value(&self, unit: usize, period: usize, outcome: usize) -> Option<f64> {
        self.values[self.index(unit, period, outcome)]
    }

    pub fn set_value(&mut self, unit: usize, period: usize, outcome: usize, value: Option<f64>) {
        let idx = self.index(unit, period, outcome);
        self.values[idx] = value;
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn periods(&self) -> &[String] {
        &self.periods
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    /// Number of pre-treatment periods.
    pub fn t0(&self) -> usize {
        self.t0
    }

    pub fn treated(&self) -> usize {
        self.treated
    }

    pub fn treated_unit(&self) -> &str {
        &self.units[self.treated]
    }

    /// Donor unit indices in panel order.
    pub fn donors(&self) -> Vec<usize> {
        (0..self.units.len()).filter(|&i| i != self.treated).collect()
    }

    pub fn n_donors(&self) -> usize {
        self.units.len() - 1
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn outcome_index(&self, label: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == label)
    }

    pub fn period_index(&self, label: &str) -> Option<usize> {
        self.periods.iter().position(|p| p == label)
    }

    /// Panel restricted to the given outcomes, in the given order.
    pub fn select_outcomes(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::Validation("no outcomes selected".into()));
        }
        let mut values = Vec::with_capacity(self.n_units() * self.n_periods() * keep.len());
        for i in 0..self.n_units() {
            for t in 0..self.n_periods() {
                for &k in keep {
                    values.push(self.value(i, t, k));
                }
            }
        }
        let out = Self {
            units: self.units.clone(),
            periods: self.periods.clone(),
            outcomes: keep.iter().map(|&k| self.outcomes[k].clone()).collect(),
            values,
            treated: self.treated,
            t0: self.t0,
            signs: keep.iter().map(|&k| self.signs[k]).collect(),
        };
        out.validate()?;
        Ok(out)
    }

    /// Panel restricted to the first `n` periods.
    pub fn truncate_periods(&self, n: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n_units() * n * self.n_outcomes());
        for i in 0..self.n_units() {
            for t in 0..n {
                for k in 0..self.n_outcomes() {
                    values.push(self.value(i, t, k));
                }
            }
        }
        let out = Self {
            units: self.units.clone(),
            periods: self.periods[..n].to_vec(),
            outcomes: self.outcomes.clone(),
            values,
            treated: self.treated,
            t0: self.t0,
            signs: self.signs.clone(),
        };
        out.validate()?;
        Ok(out)
    }

    /// Panel restricted to the listed periods (in order), with a new `t0`.
    pub fn select_periods(&self, keep: &[usize], t0: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n_units() * keep.len() * self.n_outcomes());
        for i in 0..self.n_units() {
            for &t in keep {
                for k in 0..self.n_outcomes() {
                    values.push(self.value(i, t, k));
                }
            }
        }
        let out = Self {
            units: self.units.clone(),
            periods: keep.iter().map(|&t| self.periods[t].clone()).collect(),
            outcomes: self.outcomes.clone(),
            values,
            treated: self.treated,
            t0,
            signs: self.signs.clone(),
        };
        out.validate()?;
        Ok(out)
    }

    /// Multiplies every cell of one outcome by `factor`.
    pub fn scale_outcome(&self, outcome: usize, factor: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_units() {
            for t in 0..self.n_periods() {
                let idx = out.index(i, t, outcome);
                out.values[idx] = out.values[idx].map(|v| v * factor);
            }
        }
        out
    }

    /// Pre-treatment mean of each (unit, outcome) over non-missing periods.
    fn pre_means(&self) -> Result<Vec<f64>> {
        let (n, k) = (self.n_units(), self.n_outcomes());
        let mut means = vec![0.0; n * k];
        for i in 0..n {
            for kk in 0..k {
                let (sum, count) = (0..self.t0)
                    .filter_map(|t| self.value(i, t, kk))
                    .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                if count == 0 {
                    return Err(Error::EmptyPreTreatment {
                        unit: self.units[i].clone(),
                        outcome: self.outcomes[kk].clone(),
                    });
                }
                means[i * k + kk] = sum / count as f64;
            }
        }
        Ok(means)
    }
}

/// Record of the transforms applied to a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformState {
    /// Pre-treatment means indexed `unit * K + outcome`, in original units.
    pub pre_means: Vec<f64>,
    /// Per-outcome standardization divisors (1 when not standardized).
    pub scales: Vec<f64>,
    /// Per-outcome sign multipliers applied during standardization.
    pub signs: Vec<f64>,
    pub demeaned: bool,
    pub standardized: bool,
}

impl TransformState {
    fn identity(n_units: usize, n_outcomes: usize) -> Self {
        Self {
            pre_means: vec![0.0; n_units * n_outcomes],
            scales: vec![1.0; n_outcomes],
            signs: vec![1.0; n_outcomes],
            demeaned: false,
            standardized: false,
        }
    }

    pub fn pre_mean(&self, unit: usize, outcome: usize) -> f64 {
        self.pre_means[unit * self.scales.len() + outcome]
    }

    /// Factor mapping a transformed difference back to original units.
    pub fn unit_factor(&self, outcome: usize) -> f64 {
        self.scales[outcome] * self.signs[outcome]
    }

    /// Maps a transformed cell value back to the original scale for `unit`.
    pub fn restore(&self, unit: usize, outcome: usize, transformed: f64) -> f64 {
        self.pre_mean(unit, outcome) + self.unit_factor(outcome) * transformed
    }
}

/// Subtracts each (unit, outcome) pre-treatment mean from every period.
pub fn demean(panel: &PanelData) -> Result<(PanelData, TransformState)> {
    let means = panel.pre_means()?;
    let k = panel.n_outcomes();
    let mut out = panel.clone();
    for i in 0..panel.n_units() {
        for t in 0..panel.n_periods() {
            for kk in 0..k {
                let idx = out.index(i, t, kk);
                out.values[idx] = out.values[idx].map(|v| v - means[i * k + kk]);
            }
        }
    }
    let mut state = TransformState::identity(panel.n_units(), k);
    state.pre_means = means;
    state.demeaned = true;
    Ok((out, state))
}

/// Per-outcome pooled sample standard deviation (denominator `n - 1`) of
/// pre-treatment deviations from each unit's own pre-treatment mean.
pub fn pooled_pre_std(panel: &PanelData) -> Result<Vec<f64>> {
    let means = panel.pre_means()?;
    let k = panel.n_outcomes();
    (0..k)
        .map(|kk| {
            let mut sum_sq = 0.0;
            let mut count = 0usize;
            for i in 0..panel.n_units() {
                for t in 0..panel.t0() {
                    if let Some(v) = panel.value(i, t, kk) {
                        let d = v - means[i * k + kk];
                        sum_sq += d * d;
                        count += 1;
                    }
                }
            }
            if count < 2 {
                return Err(Error::ZeroVariance(panel.outcomes[kk].clone()));
            }
            let sd = (sum_sq / (count - 1) as f64).sqrt();
            // relative to the magnitude of the data, anything this small is a constant series
            let magnitude = panel
                .values
                .iter()
                .skip(kk)
                .step_by(k)
                .flatten()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            if !(sd > 1e-13 * magnitude.max(f64::MIN_POSITIVE)) {
                return Err(Error::ZeroVariance(panel.outcomes[kk].clone()));
            }
            Ok(sd)
        })
        .collect()
}

/// Divides each outcome by its pooled pre-treatment standard deviation and
/// applies the panel's sign multipliers.
pub fn standardize(panel: &PanelData) -> Result<(PanelData, TransformState)> {
    let scales = pooled_pre_std(panel)?;
    let k = panel.n_outcomes();
    let mut out = panel.clone();
    for i in 0..panel.n_units() {
        for t in 0..panel.n_periods() {
            for kk in 0..k {
                let idx = out.index(i, t, kk);
                out.values[idx] = out.values[idx].map(|v| panel.signs[kk] * v / scales[kk]);
            }
        }
    }
    let mut state = TransformState::identity(panel.n_units(), k);
    state.scales = scales;
    state.signs = panel.signs.clone();
    state.standardized = true;
    Ok((out, state))
}

/// De-means, then optionally standardizes; the combined state restores original units.
pub fn prepare(panel: &PanelData, standardized: bool) -> Result<(PanelData, TransformState)> {
    let (demeaned, mut state) = demean(panel)?;
    if !standardized {
        return Ok((demeaned, state));
    }
    let (scaled, scale_state) = standardize(&demeaned)?;
    state.scales = scale_state.scales;
    state.signs = scale_state.signs;
    state.standardized = true;
    Ok((scaled, state))
}

/// Which values feed a pre-treatment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixView {
    /// De-meaned and standardized outcomes.
    Transformed,
    /// Outcomes as loaded.
    Raw,
}

/// `N x (T0 * K)` matrix of pre-treatment outcomes, outcome-major.
#[derive(Debug, Clone)]
pub struct DiagnosticsMatrix {
    pub matrix: DMatrix<f64>,
    /// `(outcome, period)` index of each retained column.
    pub columns: Vec<(usize, usize)>,
}

/// Concatenates pre-treatment blocks of the given panel as stored. Columns
/// containing any missing cell are dropped.
pub fn pre_treatment_matrix(panel: &PanelData) -> DiagnosticsMatrix {
    let mut columns = Vec::new();
    for k in 0..panel.n_outcomes() {
        for t in 0..panel.t0() {
            if (0..panel.n_units()).all(|i| panel.value(i, t, k).is_some()) {
                columns.push((k, t));
            }
        }
    }
    let matrix = DMatrix::from_fn(panel.n_units(), columns.len(), |i, c| {
        let (k, t) = columns[c];
        panel.value(i, t, k).unwrap_or(0.0)
    });
    DiagnosticsMatrix { matrix, columns }
}

/// The de-meaned, standardized `N x (T0 * K)` matrix used by the low-rank checks.
pub fn validate_low_rank_inputs(panel: &PanelData) -> Result<DiagnosticsMatrix> {
    let (transformed, _) = prepare(panel, true)?;
    Ok(pre_treatment_matrix(&transformed))
}

pub fn low_rank_matrix(panel: &PanelData, view: MatrixView) -> Result<DiagnosticsMatrix> {
    match view {
        MatrixView::Transformed => validate_low_rank_inputs(panel),
        MatrixView::Raw => Ok(pre_treatment_matrix(panel)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum PeriodKey {
    Int(i64),
    Date(NaiveDate),
}

fn parse_period(label: &str) -> Option<PeriodKey> {
    if let Ok(v) = label.parse::<i64>() {
        return Some(PeriodKey::Int(v));
    }
    NaiveDate::parse_from_str(label, "%Y-%m-%d").ok().map(PeriodKey::Date)
}

/// Reads a long-format `unit,period,outcome,value` stream into a balanced panel.
///
/// Units and outcomes keep their order of first appearance; periods are sorted
/// by integer value or ISO date. Empty `value` fields and absent rows are missing.
pub fn load_panel<R: Read>(source: R, config: &TreatmentConfig) -> Result<PanelData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_lowercase).collect();
    if header != ["unit", "period", "outcome", "value"] {
        return Err(Error::Input(format!(
            "expected header `unit,period,outcome,value`, found `{}`",
            header.join(",")
        )));
    }

    let mut units: Vec<String> = Vec::new();
    let mut outcomes: Vec<String> = Vec::new();
    let mut unit_ix: HashMap<String, usize> = HashMap::new();
    let mut outcome_ix: HashMap<String, usize> = HashMap::new();
    let mut period_keys: BTreeMap<PeriodKey, String> = BTreeMap::new();
    let mut rows: Vec<(usize, PeriodKey, usize, Option<f64>)> = Vec::new();
    let mut kind: Option<bool> = None;

    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |j: usize| record.get(j).unwrap_or("");
        let (unit, period, outcome, raw) = (field(0), field(1), field(2), field(3));
        let key = parse_period(period).ok_or_else(|| {
            Error::Input(format!("row {}: unparseable period `{period}`", line + 2))
        })?;
        let is_int = matches!(key, PeriodKey::Int(_));
        if *kind.get_or_insert(is_int) != is_int {
            return Err(Error::Input("periods mix integers and dates".into()));
        }
        match period_keys.get(&key) {
            Some(existing) if existing != period => {
                return Err(Error::Input(format!(
                    "periods `{existing}` and `{period}` denote the same time"
                )));
            }
            Some(_) => {}
            None => {
                period_keys.insert(key, period.to_string());
            }
        }
        let value = if raw.is_empty() {
            None
        } else {
            let v: f64 = raw.parse().map_err(|_| {
                Error::Input(format!("row {}: unparseable value `{raw}`", line + 2))
            })?;
            if !v.is_finite() {
                return Err(Error::Input(format!("row {}: non-finite value", line + 2)));
            }
            Some(v)
        };
        let u = *unit_ix.entry(unit.to_string()).or_insert_with(|| {
            units.push(unit.to_string());
            units.len() - 1
        });
        let o = *outcome_ix.entry(outcome.to_string()).or_insert_with(|| {
            outcomes.push(outcome.to_string());
            outcomes.len() - 1
        });
        rows.push((u, key, o, value));
    }

    if units.is_empty() {
        return Err(Error::Input("panel stream has no rows".into()));
    }
    let period_rank: HashMap<PeriodKey, usize> =
        period_keys.keys().enumerate().map(|(r, k)| (*k, r)).collect();
    let periods: Vec<String> = period_keys.into_values().collect();

    let (n, t, k) = (units.len(), periods.len(), outcomes.len());
    let mut values = vec![None; n * t * k];
    let mut seen = vec![false; n * t * k];
    for (u, key, o, value) in rows {
        let p = period_rank[&key];
        let idx = (u * t + p) * k + o;
        if seen[idx] {
            return Err(Error::DuplicateRow {
                unit: units[u].clone(),
                period: periods[p].clone(),
                outcome: outcomes[o].clone(),
            });
        }
        seen[idx] = true;
        values[idx] = value;
    }

    let treated = *unit_ix
        .get(&config.treated_unit)
        .ok_or_else(|| Error::UnknownUnit(config.treated_unit.clone()))?;
    let last_pre = periods
        .iter()
        .position(|p| *p == config.t0)
        .or_else(|| {
            // accept an equivalent spelling, e.g. `2014` vs `02014`
            let key = parse_period(&config.t0)?;
            period_rank.get(&key).copied()
        })
        .ok_or_else(|| Error::Input(format!("t0 period `{}` not in panel", config.t0)))?;
    let t0 = last_pre + 1;
    if t0 >= t {
        return Err(Error::Validation(format!(
            "t0 = {t0} leaves no post-treatment period (T = {t})"
        )));
    }
    for name in config.signs.keys() {
        if !outcome_ix.contains_key(name) {
            return Err(Error::Input(format!("sign given for unknown outcome `{name}`")));
        }
    }
    let signs = outcomes
        .iter()
        .map(|o| config.signs.get(o).copied().unwrap_or(1.0))
        .collect();
    PanelData::new(units, periods, outcomes, values, treated, t0)?.with_signs(signs)
}

/// Writes the panel in the long format read by [`load_panel`].
pub fn write_panel<W: Write>(panel: &PanelData, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["unit", "period", "outcome", "value"])?;
    for (i, unit) in panel.units.iter().enumerate() {
        for (t, period) in panel.periods.iter().enumerate() {
            for (k, outcome) in panel.outcomes.iter().enumerate() {
                let value = panel.value(i, t, k).map(|v| v.to_string()).unwrap_or_default();
                writer.write_record([unit.as_str(), period.as_str(), outcome.as_str(), &value])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// The treatment settings that reproduce this panel when reloading its output.
pub fn treatment_config(panel: &PanelData) -> TreatmentConfig {
    TreatmentConfig {
        treated_unit: panel.treated_unit().to_string(),
        t0: panel.periods[panel.t0 - 1].clone(),
        signs: panel
            .outcomes
            .iter()
            .zip(&panel.signs)
            .filter(|(_, s)| **s != 1.0)
            .map(|(o, s)| (o.clone(), *s))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_panel(body: &str, treated: &str, t0: &str) -> Result<PanelData> {
        let text = format!("unit,period,outcome,value\n{body}");
        load_panel(text.as_bytes(), &TreatmentConfig::new(treated, t0))
    }

    #[test]
    fn loads_small_complete_panel() {
        let p = csv_panel(
            "a,1,y,1\na,2,y,2\na,3,y,3\nb,1,y,2\nb,2,y,3\nb,3,y,5\n",
            "a",
            "2",
        )
        .unwrap();
        assert_eq!((p.n_units(), p.n_periods(), p.n_outcomes()), (2, 3, 1));
        assert_eq!(p.t0(), 2);
        assert_eq!(p.treated_unit(), "a");
        assert_eq!(p.value(1, 2, 0), Some(5.0));
    }

    #[test]
    fn absent_cell_is_missing() {
        let p = csv_panel(
            "a,1,y,1\na,2,y,2\na,3,y,3\nb,1,y,2\nb,2,y,3\nc,1,y,1\nc,2,y,1\nc,3,y,1\n",
            "a",
            "2",
        )
        .unwrap();
        assert_eq!(p.value(1, 2, 0), None);
        assert!(!p.is_complete());
    }

    #[test]
    fn empty_value_field_is_missing() {
        let p = csv_panel("a,1,y,1\na,2,y,2\na,3,y,\nb,1,y,2\nb,2,y,3\nb,3,y,4\n", "a", "2")
            .unwrap();
        assert_eq!(p.value(0, 2, 0), None);
    }

    #[test]
    fn duplicate_rows_rejected() {
        let err = csv_panel("a,1,y,1\na,1,y,2\na,2,y,2\nb,1,y,2\nb,2,y,3\n", "a", "1")
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateRow { .. }), "{err}");
    }

    #[test]
    fn unknown_treated_rejected() {
        let err = csv_panel("a,1,y,1\na,2,y,2\nb,1,y,2\nb,2,y,3\n", "zz", "1").unwrap_err();
        assert!(matches!(err, Error::UnknownUnit(_)));
    }

    #[test]
    fn t0_at_last_period_rejected() {
        let err = csv_panel("a,1,y,1\na,2,y,2\nb,1,y,2\nb,2,y,3\n", "a", "2").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn single_unit_rejected() {
        let err = csv_panel("a,1,y,1\na,2,y,2\na,3,y,2\n", "a", "2").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn date_periods_sorted_by_time() {
        let p = csv_panel(
            "a,2020-03-01,y,3\na,2020-01-01,y,1\na,2020-02-01,y,2\n\
             b,2020-01-01,y,1\nb,2020-02-01,y,1\nb,2020-03-01,y,1\n",
            "a",
            "2020-02-01",
        )
        .unwrap();
        assert_eq!(p.periods(), ["2020-01-01", "2020-02-01", "2020-03-01"]);
        assert_eq!(p.value(0, 0, 0), Some(1.0));
        assert_eq!(p.t0(), 2);
    }

    #[test]
    fn bad_header_rejected() {
        let err = load_panel("u,p,o,v\n".as_bytes(), &TreatmentConfig::new("a", "1")).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn config_from_toml() {
        let cfg = TreatmentConfig::from_toml_str(
            "treated_unit = \"Flint\"\nt0 = \"2014\"\n[signs]\nspecial_needs = -1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.treated_unit, "Flint");
        assert_eq!(cfg.signs["special_needs"], -1.0);
    }

    #[test]
    fn demean_arithmetic() {
        let p = PanelData::from_fn(2, 4, 1, 0, 3, |i, t, _| (t + 1) as f64 + i as f64).unwrap();
        let (d, state) = demean(&p).unwrap();
        let series: Vec<f64> = (0..4).map(|t| d.value(0, t, 0).unwrap()).collect();
        assert_eq!(series, vec![-1.0, 0.0, 1.0, 2.0]);
        assert_eq!(state.pre_mean(0, 0), 2.0);
    }

    #[test]
    fn demean_constant_series_is_zero() {
        let p = PanelData::from_fn(3, 5, 2, 1, 3, |i, _, k| 4.5 * (i + k + 1) as f64).unwrap();
        let (d, _) = demean(&p).unwrap();
        assert!((0..3).all(|i| (0..5).all(|t| (0..2).all(|k| d.value(i, t, k) == Some(0.0)))));
    }

    #[test]
    fn demean_ignores_missing_pre_periods() {
        let mut p = PanelData::from_fn(2, 4, 1, 0, 3, |_, t, _| t as f64).unwrap();
        p.set_value(1, 0, 0, None);
        let (d, state) = demean(&p).unwrap();
        assert_eq!(state.pre_mean(1, 0), 1.5);
        assert_eq!(d.value(1, 0, 0), None);
        assert_eq!(d.value(1, 3, 0), Some(1.5));
    }

    #[test]
    fn standardize_zero_variance_rejected() {
        let p = PanelData::from_fn(3, 4, 2, 0, 3, |i, t, k| if k == 0 { i as f64 } else { t as f64 })
            .unwrap();
        let err = standardize(&p).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(ref o) if o == "y1"), "{err}");
    }

    #[test]
    fn standardize_unit_variance_unchanged() {
        // deviations {-1, 1} for each unit give pooled sample variance n/(n-1); rescale to 1
        let n = 4;
        let pooled = (2 * n) as f64;
        let c = ((pooled - 1.0) / pooled).sqrt();
        let p = PanelData::from_fn(n, 3, 1, 0, 2, |i, t, _| {
            i as f64 + if t == 0 { -c } else { c }
        })
        .unwrap();
        let (s, state) = standardize(&p).unwrap();
        assert!((state.scales[0] - 1.0).abs() < 1e-12);
        for i in 0..n {
            for t in 0..3 {
                assert!((s.value(i, t, 0).unwrap() - p.value(i, t, 0).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sign_multiplier_flips_standardized_outcome() {
        let p = PanelData::from_fn(3, 4, 2, 0, 3, |i, t, k| (i * t + k) as f64 + t as f64)
            .unwrap()
            .with_signs(vec![1.0, -1.0])
            .unwrap();
        let (s, state) = prepare(&p, true).unwrap();
        let (u, _) = prepare(&p.clone().with_signs(vec![1.0, 1.0]).unwrap(), true).unwrap();
        assert_eq!(s.value(2, 3, 1), u.value(2, 3, 1).map(|v| -v));
        let restored = state.restore(2, 1, s.value(2, 3, 1).unwrap());
        assert!((restored - p.value(2, 3, 1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn low_rank_matrix_is_outcome_major() {
        let p = PanelData::from_fn(3, 3, 2, 0, 2, |i, t, k| {
            (i * 7 + t * 3 + k * 11) as f64 + ((i * t) as f64).sin()
        })
        .unwrap();
        let m = validate_low_rank_inputs(&p).unwrap();
        assert_eq!(m.matrix.shape(), (3, 4));
        assert_eq!(m.columns, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let (tp, _) = prepare(&p, true).unwrap();
        assert_eq!(m.matrix[(2, 3)], tp.value(2, 1, 1).unwrap());
    }

    #[test]
    fn low_rank_matrix_drops_missing_columns() {
        let mut p = PanelData::from_fn(3, 4, 1, 0, 3, |i, t, _| (i * t) as f64 + t as f64).unwrap();
        p.set_value(2, 1, 0, None);
        let m = pre_treatment_matrix(&p);
        assert_eq!(m.columns, vec![(0, 0), (0, 2)]);
    }

    #[test]
    fn all_missing_pre_outcome_surfaces_error() {
        let mut p = PanelData::from_fn(3, 4, 2, 0, 2, |i, t, k| (i + t * k) as f64).unwrap();
        // bypass validation to exercise the transform-stage error
        p.set_value(1, 0, 1, None);
        p.set_value(1, 1, 1, None);
        let err = validate_low_rank_inputs(&p).unwrap_err();
        assert!(matches!(err, Error::EmptyPreTreatment { .. }), "{err}");
    }
}

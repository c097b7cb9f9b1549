//! Benchmark metrics for continuous expression editing.
//!
//! Covers structural confusion (directed rate, bidirectional rate, and their
//! mean over the confusing-pair registry), categorical accuracy, identity
//! similarity aggregation, the harmonic editing score and control linearity.
//! All functions are pure; corpus-level state lives in [`ConfusionMatrix`],
//! which is additive so partitions can be tallied independently and merged.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{ConfusingPairRegistry, ExpressionId, NUM_EXPRESSIONS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("no samples edited toward `{0}`")]
    NoSamplesForClass(ExpressionId),
    #[error("confusing-pair registry is empty")]
    EmptyRegistry,
    #[error("record target `{0}` lies outside the evaluated category subset")]
    TargetOutsideSubset(ExpressionId),
    #[error("value {value} out of range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("intensity coefficients of series `{0}` are not uniformly spaced")]
    NonUniformGrid(String),
    #[error("no series with non-zero variance ({skipped} skipped)")]
    NoValidSeries { skipped: usize },
    #[error("neutral is not an evaluable target")]
    NeutralTarget,
}

/// One edited image as scored by an external judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub target: ExpressionId,
    /// Commanded intensity.
    pub alpha: f64,
    /// Dominant expression predicted for the edited image.
    pub predicted: ExpressionId,
    /// Judge score for the target expression.
    pub s_e: f64,
    /// Per-recognizer cosine similarities between source and edit.
    pub id_sims: Vec<f64>,
}

/// 12×12 tally; row = edited-toward class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_EXPRESSIONS]; NUM_EXPRESSIONS],
}

fn index_of(e: ExpressionId) -> Result<usize, MetricError> {
    e.affect_index().ok_or(MetricError::NeutralTarget)
}

impl ConfusionMatrix {
    pub fn count(&self, target: ExpressionId, predicted: ExpressionId) -> u64 {
        match (target.affect_index(), predicted.affect_index()) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn row_total(&self, target: ExpressionId) -> u64 {
        target
            .affect_index()
            .map(|i| self.counts[i].iter().sum())
            .unwrap_or(0)
    }

    pub fn counts(&self) -> &[[u64; NUM_EXPRESSIONS]; NUM_EXPRESSIONS] {
        &self.counts
    }

    pub fn add(&mut self, target: ExpressionId, predicted: ExpressionId) -> Result<(), MetricError> {
        self.counts[index_of(target)?][index_of(predicted)?] += 1;
        Ok(())
    }

    /// Adds another partition's counts; order-independent.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (c, o) in row.iter_mut().zip(other_row.iter()) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn build_confusion(records: &[EvalRecord]) -> Result<ConfusionMatrix, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for r in records {
        cm.add(r.target, r.predicted)?;
    }
    Ok(cm)
}

/// Fraction of records edited toward `i` that were predicted as `j`.
pub fn directed_confusion(
    cm: &ConfusionMatrix,
    i: ExpressionId,
    j: ExpressionId,
) -> Result<f64, MetricError> {
    let n = cm.row_total(i);
    if n == 0 {
        return Err(MetricError::NoSamplesForClass(i));
    }
    Ok(cm.count(i, j) as f64 / n as f64)
}

/// Bidirectional confusion rate.
pub fn bcr(cm: &ConfusionMatrix, i: ExpressionId, j: ExpressionId) -> Result<f64, MetricError> {
    let ij = directed_confusion(cm, i, j)?;
    let ji = directed_confusion(cm, j, i)?;
    // sum commutes exactly, so bcr(i, j) == bcr(j, i) bitwise
    Ok(0.5 * (ij + ji))
}

/// Mean bidirectional confusion over every registered pair.
pub fn mscr(cm: &ConfusionMatrix, registry: &ConfusingPairRegistry) -> Result<f64, MetricError> {
    if registry.is_empty() {
        return Err(MetricError::EmptyRegistry);
    }
    let mut sum = 0.0;
    for pair in registry.pairs() {
        sum += bcr(cm, pair.first(), pair.second())?;
    }
    Ok(sum / registry.len() as f64)
}

/// Fraction of records whose predicted dominant expression equals the target.
/// Every record's target must belong to `subset`.
pub fn accuracy(records: &[EvalRecord], subset: &[ExpressionId]) -> Result<f64, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut hits = 0usize;
    for r in records {
        if !subset.contains(&r.target) {
            return Err(MetricError::TargetOutsideSubset(r.target));
        }
        if r.predicted == r.target {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// Mean identity similarity in raw form and clamped to `[0, 1]` for HES.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentitySimilarity {
    pub raw: f64,
    pub clamped: f64,
}

pub fn identity_similarity(id_sims: &[f64]) -> Result<IdentitySimilarity, MetricError> {
    if id_sims.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    for &s in id_sims {
        if !(-1.0..=1.0).contains(&s) {
            return Err(MetricError::OutOfRange { value: s, lo: -1.0, hi: 1.0 });
        }
    }
    let raw = id_sims.iter().sum::<f64>() / id_sims.len() as f64;
    Ok(IdentitySimilarity { raw, clamped: raw.clamp(0.0, 1.0) })
}

/// Harmonic editing score: harmonic mean of expression score and identity similarity.
pub fn hes(s_e: f64, s_id: f64) -> Result<f64, MetricError> {
    for v in [s_e, s_id] {
        if !(0.0..=1.0).contains(&v) {
            return Err(MetricError::OutOfRange { value: v, lo: 0.0, hi: 1.0 });
        }
    }
    let denom = s_e + s_id;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * s_e * s_id / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pearson {
    pub r: f64,
    /// Set when either series has zero variance; `r` is then 0.
    pub degenerate: bool,
}

/// Sample Pearson correlation via centered sums.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Pearson, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(MetricError::TooFewPoints(n));
    }
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Pearson { r: 0.0, degenerate: true });
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(Pearson { r: r.clamp(-1.0, 1.0), degenerate: false })
}

/// Intensity response of one (source, expression) combination across a grid of α.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSeries {
    pub key: String,
    pub target: ExpressionId,
    /// `(alpha, score)` points.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClsResult {
    pub cls: f64,
    pub used: usize,
    pub skipped: usize,
}

const GRID_TOL: f64 = 1e-9;

fn check_uniform(series: &AlphaSeries) -> Result<(), MetricError> {
    let mut alphas: Vec<f64> = series.points.iter().map(|p| p.0).collect();
    alphas.sort_by(f64::total_cmp);
    let step = alphas[1] - alphas[0];
    let span = (alphas[alphas.len() - 1] - alphas[0]).abs().max(1.0);
    for w in alphas.windows(2) {
        if ((w[1] - w[0]) - step).abs() > GRID_TOL * span || step <= 0.0 {
            return Err(MetricError::NonUniformGrid(series.key.clone()));
        }
    }
    Ok(())
}

/// Control linearity: mean per-series Pearson correlation between α and score.
/// Degenerate series are skipped and tallied.
pub fn cls(groups: &[AlphaSeries]) -> Result<ClsResult, MetricError> {
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for series in groups {
        if series.points.len() < 2 {
            return Err(MetricError::TooFewPoints(series.points.len()));
        }
        check_uniform(series)?;
        let xs: Vec<f64> = series.points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = series.points.iter().map(|p| p.1).collect();
        let p = pearson(&xs, &ys)?;
        if p.degenerate {
            skipped += 1;
        } else {
            sum += p.r;
            used += 1;
        }
    }
    if used == 0 {
        return Err(MetricError::NoValidSeries { skipped });
    }
    Ok(ClsResult { cls: sum / used as f64, used, skipped })
}

/// Groups records into α-series keyed by `(sample_id, target)`. Only groups
/// with at least two distinct α values are returned, already sorted by α.
pub fn alpha_series(records: &[EvalRecord]) -> Vec<AlphaSeries> {
    let mut groups: BTreeMap<(String, ExpressionId), Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.sample_id.clone(), r.target))
            .or_default()
            .push((r.alpha, r.s_e));
    }
    groups
        .into_iter()
        .filter_map(|((key, target), mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let distinct = points.windows(2).filter(|w| w[0].0 != w[1].0).count() + 1;
            (distinct >= 2).then_some(AlphaSeries { key, target, points })
        })
        .collect()
}

/// Identity-similarity regime of a corpus mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdRegime {
    Natural,
    CopyPasteSuspect,
    IdentityDistortion,
    Intermediate,
}

impl IdRegime {
    pub fn classify(mean_id_sim: f64) -> Self {
        if mean_id_sim > 0.8 {
            IdRegime::CopyPasteSuspect
        } else if mean_id_sim < 0.5 {
            IdRegime::IdentityDistortion
        } else if (0.6..=0.7).contains(&mean_id_sim) {
            IdRegime::Natural
        } else {
            IdRegime::Intermediate
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            IdRegime::Natural => "natural",
            IdRegime::CopyPasteSuspect => "copy-paste suspect",
            IdRegime::IdentityDistortion => "identity distortion",
            IdRegime::Intermediate => "intermediate",
        }
    }
}

impl fmt::Display for IdRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// Records below this commanded intensity are excluded from the
    /// categorical metrics (mSCR, Acc, ID-Sim, HES); CLS always sees every record.
    pub classify_min_alpha: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { classify_min_alpha: 0.0 }
    }
}

/// Aggregated benchmark row. `None` means the metric had no applicable records.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mscr: f64,
    pub acc6: Option<f64>,
    pub acc12: f64,
    /// Raw (unclamped) mean identity similarity.
    pub id_sim: Option<f64>,
    /// Mean of per-record HES.
    pub hes: Option<f64>,
    /// HES of the corpus means, kept as a diagnostic.
    pub hes_of_means: Option<f64>,
    pub cls6: Option<f64>,
    pub cls12: Option<f64>,
    pub cls_skipped: usize,
    pub id_regime: Option<IdRegime>,
    pub n_records: usize,
}

pub const REPORT_KEYS: [&str; 7] = ["mSCR", "Acc-6", "Acc-12", "ID-Sim", "HES", "CLS-6", "CLS-12"];

fn cls_subset(series: &[AlphaSeries], basic_only: bool) -> Result<(Option<f64>, usize), MetricError> {
    let picked: Vec<AlphaSeries> = series
        .iter()
        .filter(|s| !basic_only || s.target.is_basic())
        .cloned()
        .collect();
    if picked.is_empty() {
        return Ok((None, 0));
    }
    match cls(&picked) {
        Ok(c) => Ok((Some(c.cls), c.skipped)),
        Err(MetricError::NoValidSeries { skipped }) => Ok((None, skipped)),
        Err(e) => Err(e),
    }
}

pub fn report(records: &[EvalRecord], registry: &ConfusingPairRegistry) -> Result<MetricReport, MetricError> {
    report_with(records, registry, ReportOptions::default())
}

pub fn report_with(
    records: &[EvalRecord],
    registry: &ConfusingPairRegistry,
    opts: ReportOptions,
) -> Result<MetricReport, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let scored: Vec<EvalRecord> = records
        .iter()
        .filter(|r| r.alpha >= opts.classify_min_alpha)
        .cloned()
        .collect();
    let cm = build_confusion(&scored)?;
    let mscr = mscr(&cm, registry)?;
    let acc12 = accuracy(&scored, &ExpressionId::TARGETS)?;
    let basic: Vec<EvalRecord> = scored.iter().filter(|r| r.target.is_basic()).cloned().collect();
    let acc6 = if basic.is_empty() {
        None
    } else {
        Some(accuracy(&basic, &ExpressionId::BASIC)?)
    };

    let mut id_raw_sum = 0.0;
    let mut hes_sum = 0.0;
    let mut s_e_sum = 0.0;
    let mut n_id = 0usize;
    for r in scored.iter().filter(|r| !r.id_sims.is_empty()) {
        let sim = identity_similarity(&r.id_sims)?;
        id_raw_sum += sim.raw;
        hes_sum += hes(r.s_e, sim.clamped)?;
        s_e_sum += r.s_e;
        n_id += 1;
    }
    let (id_sim, hes_mean, hes_of_means) = if n_id == 0 {
        (None, None, None)
    } else {
        let id = id_raw_sum / n_id as f64;
        let se = s_e_sum / n_id as f64;
        (Some(id), Some(hes_sum / n_id as f64), Some(hes(se, id.clamp(0.0, 1.0))?))
    };

    let series = alpha_series(records);
    let (cls12, skipped12) = cls_subset(&series, false)?;
    let (cls6, _) = cls_subset(&series, true)?;

    Ok(MetricReport {
        mscr,
        acc6,
        acc12,
        id_sim,
        hes: hes_mean,
        hes_of_means,
        cls6,
        cls12,
        cls_skipped: skipped12,
        id_regime: id_sim.map(IdRegime::classify),
        n_records: records.len(),
    })
}

/// Mean response at one commanded intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub expression_score: f64,
    /// Mean of the per-record raw identity similarities, if any record has them.
    pub id_similarity: Option<f64>,
    pub n: usize,
}

/// Mean `s_e` and identity similarity per distinct α, in ascending α.
pub fn alpha_response(records: &[EvalRecord]) -> Vec<AlphaPoint> {
    let mut groups: BTreeMap<u64, (f64, f64, f64, usize, usize)> = BTreeMap::new();
    for r in records {
        // non-negative finite floats order like their bit patterns
        let alpha = r.alpha + 0.0;
        let g = groups.entry(alpha.to_bits()).or_insert((alpha, 0.0, 0.0, 0, 0));
        g.1 += r.s_e;
        g.3 += 1;
        if !r.id_sims.is_empty() {
            g.2 += r.id_sims.iter().sum::<f64>() / r.id_sims.len() as f64;
            g.4 += 1;
        }
    }
    groups
        .into_values()
        .map(|(alpha, se, id, n, n_id)| AlphaPoint {
            alpha,
            expression_score: se / n as f64,
            id_similarity: (n_id > 0).then(|| id / n_id as f64),
            n,
        })
        .collect()
}

fn fmt_opt(v: Option<f64>, fixed: bool) -> String {
    match v {
        Some(x) if fixed => format!("{x:.4}"),
        Some(x) => format!("{x}"),
        None => "NA".to_string(),
    }
}

impl MetricReport {
    fn values(&self) -> [Option<f64>; 7] {
        [
            Some(self.mscr),
            self.acc6,
            Some(self.acc12),
            self.id_sim,
            self.hes,
            self.cls6,
            self.cls12,
        ]
    }

    /// `(key, value)` pairs in header order.
    pub fn entries(&self) -> Vec<(&'static str, Option<f64>)> {
        REPORT_KEYS.iter().copied().zip(self.values()).collect()
    }

    pub fn csv_header() -> String {
        REPORT_KEYS.join(",")
    }

    /// Full-precision CSV row; missing metrics are `NA`.
    pub fn csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| fmt_opt(*v, false))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Human-readable table with 4-decimal values and diagnostics.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k:<8} {}", fmt_opt(v, true));
        }
        let _ = writeln!(out, "{:<8} {}", "records", self.n_records);
        let _ = writeln!(out, "{:<8} {}", "HES(mean)", fmt_opt(self.hes_of_means, true));
        let _ = writeln!(out, "{:<8} {}", "CLS-skip", self.cls_skipped);
        let regime = self.id_regime.map(|r| r.label()).unwrap_or("NA");
        let _ = writeln!(out, "{:<8} {}", "ID-regime", regime);
        out
    }
}

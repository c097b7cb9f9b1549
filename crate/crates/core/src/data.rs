//! Annotation and prediction ingestion, quality filtering, triplet manifests and
//! the MEAD discrete-intensity adapter.
//!
//! Both file kinds are JSON Lines (UTF-8, one object per line, blank lines ignored).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{
    AffectError, AffectVector, ConfusingPairRegistry, Domain, ExpressionId, SampleRecord, NUM_EXPRESSIONS,
};
use crate::metrics::EvalRecord;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: malformed record: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: validation failed: {cause}")]
    ValidationFailed { line: usize, cause: String },
    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("unknown MEAD intensity level `{0}` (expected low, medium or high)")]
    UnknownLevel(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn read_text(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Non-blank lines with 1-based line numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r'))).filter(|(_, l)| !l.trim().is_empty())
}

// ---------------------------------------------------------------------------
// annotations

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Categorical {
    gender: Option<String>,
    age_group: Option<String>,
    skin_tone: Option<String>,
    expression: Option<String>,
    anime_style: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct Descriptions {
    appearance_sentence: String,
    action_sentence: String,
    background_sentence: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnnotation {
    sample_id: String,
    identity_id: String,
    domain: Domain,
    target: String,
    alpha_gt: f64,
    affect: Vec<f64>,
    #[serde(default)]
    categorical: Option<Categorical>,
    #[serde(default)]
    #[allow(dead_code)]
    descriptions: Option<Descriptions>,
}

const GENDERS: &[&str] = &["male", "female", "androgynous", "unknown"];
const AGE_GROUPS: &[&str] = &["child", "teen", "young_adult", "adult", "middle_aged", "senior", "unknown"];
const SKIN_TONES: &[&str] = &["very_light", "light", "medium", "dark", "very_dark", "unknown"];
const CAT_EXPRESSIONS: &[&str] = &["neutral", "happy", "sad", "angry", "surprised", "fear", "disgust", "other", "unknown"];
const ANIME_STYLES: &[&str] = &["2d_anime", "chibi", "manga", "sketch", "cg_anime", "other", "unknown"];

impl Categorical {
    fn check(&self, domain: Domain) -> Result<(), String> {
        let fields: [(&str, &Option<String>, &[&str]); 5] = [
            ("gender", &self.gender, GENDERS),
            ("age_group", &self.age_group, AGE_GROUPS),
            ("skin_tone", &self.skin_tone, SKIN_TONES),
            ("expression", &self.expression, CAT_EXPRESSIONS),
            ("anime_style", &self.anime_style, ANIME_STYLES),
        ];
        for (name, value, allowed) in fields {
            if let Some(v) = value {
                if !allowed.contains(&v.as_str()) {
                    return Err(format!("categorical.{name} = `{v}` is not one of {allowed:?}"));
                }
            }
        }
        match domain {
            Domain::Real if self.anime_style.is_some() => Err("categorical.anime_style is only valid for anime records".into()),
            Domain::Anime if self.skin_tone.is_some() => Err("categorical.skin_tone is only valid for real records".into()),
            _ => Ok(()),
        }
    }
}

/// A per-line failure collected while parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub kind: LineErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineErrorKind {
    Malformed(String),
    Validation(AffectError),
    AlphaOutOfRange(f64),
    DuplicateId(String),
    InvalidCategorical(String),
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LineErrorKind::Malformed(m) => write!(f, "line {}: malformed: {m}", self.line),
            LineErrorKind::Validation(e) => write!(f, "line {}: validation failed: {e}", self.line),
            LineErrorKind::AlphaOutOfRange(a) => write!(f, "line {}: alpha_gt {a} outside [0, 1]", self.line),
            LineErrorKind::DuplicateId(id) => write!(f, "line {}: duplicate sample_id `{id}`", self.line),
            LineErrorKind::InvalidCategorical(m) => write!(f, "line {}: {m}", self.line),
        }
    }
}

impl From<LineError> for DataError {
    fn from(e: LineError) -> Self {
        match e.kind {
            LineErrorKind::Malformed(msg) => DataError::Malformed { line: e.line, msg },
            LineErrorKind::Validation(AffectError::UnknownLabel(label)) => DataError::UnknownLabel { line: e.line, label },
            _ => {
                let cause = e.to_string();
                DataError::ValidationFailed { line: e.line, cause }
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationParse {
    pub records: Vec<SampleRecord>,
    pub errors: Vec<LineError>,
}

fn annotation_from_line(line: usize, text: &str) -> Result<SampleRecord, LineError> {
    let err = |kind| LineError { line, kind };
    let raw: RawAnnotation = serde_json::from_str(text).map_err(|e| err(LineErrorKind::Malformed(e.to_string())))?;
    let target = ExpressionId::parse_label(&raw.target).map_err(|e| err(LineErrorKind::Validation(e)))?;
    let affect = AffectVector::new(&raw.affect).map_err(|e| err(LineErrorKind::Validation(e)))?;
    if !(0.0..=1.0).contains(&raw.alpha_gt) {
        return Err(err(LineErrorKind::AlphaOutOfRange(raw.alpha_gt)));
    }
    if let Some(c) = &raw.categorical {
        c.check(raw.domain).map_err(|m| err(LineErrorKind::InvalidCategorical(m)))?;
    }
    Ok(SampleRecord {
        sample_id: raw.sample_id,
        identity_id: raw.identity_id,
        domain: raw.domain,
        target,
        alpha_gt: raw.alpha_gt,
        affect,
    })
}

/// Parses annotation JSON Lines, collecting every line error. With `fail_fast`
/// parsing stops after the first one.
pub fn parse_annotations_str(text: &str, fail_fast: bool) -> AnnotationParse {
    let mut out = AnnotationParse::default();
    let mut seen = HashSet::new();
    for (line, l) in numbered_lines(text) {
        let parsed = annotation_from_line(line, l).and_then(|r| {
            if seen.insert(r.sample_id.clone()) {
                Ok(r)
            } else {
                Err(LineError { line, kind: LineErrorKind::DuplicateId(r.sample_id) })
            }
        });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(e) => {
                out.errors.push(e);
                if fail_fast {
                    break;
                }
            }
        }
    }
    out
}

pub fn parse_annotations(path: &Path, fail_fast: bool) -> Result<AnnotationParse, DataError> {
    Ok(parse_annotations_str(&read_text(path)?, fail_fast))
}

// ---------------------------------------------------------------------------
// quality filter

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub min_dominant: f64,
    pub max_secondary_gap: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { min_dominant: 0.6, max_secondary_gap: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    /// Dominant score below `min_dominant`.
    LowConfidence,
    /// Dominant expression differs from the declared target.
    TargetMismatch,
    /// Runner-up within `max_secondary_gap` of the dominant score.
    Ambiguous,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::LowConfidence => "low_confidence",
            RejectReason::TargetMismatch => "target_mismatch",
            RejectReason::Ambiguous => "ambiguous",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<SampleRecord>,
    pub rejected: Vec<(SampleRecord, RejectReason)>,
}

/// Why `r` would be rejected, if at all. Neutral-target records carry no
/// dominant-expression claim and always pass.
pub fn reject_reason(r: &SampleRecord, cfg: &FilterConfig) -> Option<RejectReason> {
    if r.target == ExpressionId::Neutral {
        return None;
    }
    let (dominant, top, runner_up) = r.affect.dominant_with_runner_up();
    if top < cfg.min_dominant {
        Some(RejectReason::LowConfidence)
    } else if dominant != r.target {
        Some(RejectReason::TargetMismatch)
    } else if runner_up >= top - cfg.max_secondary_gap {
        Some(RejectReason::Ambiguous)
    } else {
        None
    }
}

pub fn quality_filter(records: &[SampleRecord], cfg: &FilterConfig) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for r in records {
        match reject_reason(r, cfg) {
            None => out.kept.push(r.clone()),
            Some(reason) => out.rejected.push((r.clone(), reason)),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// triplets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRow {
    pub src_id: String,
    pub pos_id: String,
    pub neg_id: String,
    pub expr_pos: ExpressionId,
    pub expr_neg: ExpressionId,
    pub alpha_pos: f64,
    pub alpha_neg: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripletManifest {
    pub rows: Vec<TripletRow>,
    /// Identities that produced no row.
    pub skipped_identities: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletOptions {
    /// Non-neutral records at or below this intensity may serve as sources.
    pub source_max_alpha: f64,
}

impl Default for TripletOptions {
    fn default() -> Self {
        TripletOptions { source_max_alpha: 0.1 }
    }
}

pub const MANIFEST_COLUMNS: [&str; 7] = ["src_id", "pos_id", "neg_id", "expr_pos", "expr_neg", "alpha_pos", "alpha_neg"];

/// Strongest sample of `expr` for an identity: highest `alpha_gt`, ties to the
/// lexicographically smallest `sample_id`.
fn strongest<'a>(records: &[&'a SampleRecord], expr: ExpressionId, min_alpha: f64) -> Option<&'a SampleRecord> {
    records
        .iter()
        .copied()
        .filter(|r| r.target == expr && r.alpha_gt > min_alpha)
        .min_by(|a, b| b.alpha_gt.total_cmp(&a.alpha_gt).then_with(|| a.sample_id.cmp(&b.sample_id)))
}

/// One row per (registered pair, source) for every identity that has a source
/// and both pair members. The positive is the pair's lower-code member.
pub fn build_triplets(records: &[SampleRecord], registry: &ConfusingPairRegistry, opts: &TripletOptions) -> TripletManifest {
    let mut by_identity: BTreeMap<&str, Vec<&SampleRecord>> = BTreeMap::new();
    for r in records {
        by_identity.entry(r.identity_id.as_str()).or_default().push(r);
    }
    let mut manifest = TripletManifest::default();
    for group in by_identity.values() {
        let mut sources: Vec<&SampleRecord> = group
            .iter()
            .copied()
            .filter(|r| r.target == ExpressionId::Neutral || r.alpha_gt <= opts.source_max_alpha)
            .collect();
        sources.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let before = manifest.rows.len();
        for pair in registry.pairs() {
            let (Some(pos), Some(neg)) = (
                strongest(group, pair.first(), opts.source_max_alpha),
                strongest(group, pair.second(), opts.source_max_alpha),
            ) else {
                continue;
            };
            for src in &sources {
                manifest.rows.push(TripletRow {
                    src_id: src.sample_id.clone(),
                    pos_id: pos.sample_id.clone(),
                    neg_id: neg.sample_id.clone(),
                    expr_pos: pair.first(),
                    expr_neg: pair.second(),
                    alpha_pos: pos.alpha_gt,
                    alpha_neg: neg.alpha_gt,
                });
            }
        }
        if manifest.rows.len() == before {
            manifest.skipped_identities += 1;
        }
    }
    manifest
}

impl TripletManifest {
    pub fn to_csv(&self) -> Result<String, DataError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(MANIFEST_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.src_id.as_str(),
                r.pos_id.as_str(),
                r.neg_id.as_str(),
                r.expr_pos.label(),
                r.expr_neg.label(),
                &r.alpha_pos.to_string(),
                &r.alpha_neg.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| DataError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

// ---------------------------------------------------------------------------
// MEAD

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeadLevel {
    Low,
    Medium,
    High,
}

impl FromStr for MeadLevel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" | "level_1" | "1" => Ok(MeadLevel::Low),
            "medium" | "level_2" | "2" => Ok(MeadLevel::Medium),
            "high" | "level_3" | "3" => Ok(MeadLevel::High),
            _ => Err(DataError::UnknownLevel(s.to_string())),
        }
    }
}

pub fn mead_intensity(level: MeadLevel) -> f64 {
    match level {
        MeadLevel::Low => 0.5,
        MeadLevel::Medium => 0.75,
        MeadLevel::High => 1.0,
    }
}

// ---------------------------------------------------------------------------
// predictions

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawScores {
    Array(Vec<f64>),
    Named(BTreeMap<String, f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrediction {
    sample_id: String,
    target: String,
    alpha: f64,
    #[serde(default)]
    scores: Option<RawScores>,
    #[serde(default)]
    predicted: Option<String>,
    #[serde(default)]
    s_e: Option<f64>,
    #[serde(default)]
    id_sims: Vec<f64>,
}

fn label(line: usize, raw: &str) -> Result<ExpressionId, DataError> {
    ExpressionId::parse_label(raw).map_err(|_| DataError::UnknownLabel { line, label: raw.to_string() })
}

fn scores_vector(line: usize, raw: RawScores) -> Result<AffectVector, DataError> {
    let values = match raw {
        RawScores::Array(v) => v,
        RawScores::Named(map) => {
            let mut slots = [None; NUM_EXPRESSIONS];
            for (k, v) in map {
                let e = label(line, &k)?;
                let i = e.affect_index().ok_or_else(|| DataError::Malformed {
                    line,
                    msg: format!("score key `{k}` names neutral"),
                })?;
                if slots[i].replace(v).is_some() {
                    return Err(DataError::Malformed { line, msg: format!("score for {e} given twice") });
                }
            }
            let mut out = Vec::with_capacity(NUM_EXPRESSIONS);
            for (i, s) in slots.iter().enumerate() {
                let e = ExpressionId::from_affect_index(i);
                out.push(s.ok_or_else(|| DataError::Malformed { line, msg: format!("missing score for {e}") })?);
            }
            out
        }
    };
    AffectVector::new(&values).map_err(|e| DataError::ValidationFailed { line, cause: e.to_string() })
}

fn prediction_from_line(line: usize, text: &str) -> Result<EvalRecord, DataError> {
    let raw: RawPrediction =
        serde_json::from_str(text).map_err(|e| DataError::Malformed { line, msg: e.to_string() })?;
    let target = label(line, &raw.target)?;
    if target == ExpressionId::Neutral {
        return Err(DataError::ValidationFailed { line, cause: "target must not be neutral".into() });
    }
    if !(raw.alpha >= 0.0) || !raw.alpha.is_finite() {
        return Err(DataError::ValidationFailed { line, cause: format!("alpha {} must be finite and >= 0", raw.alpha) });
    }
    if let Some(bad) = raw.id_sims.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
        return Err(DataError::ValidationFailed { line, cause: format!("id similarity {bad} outside [-1, 1]") });
    }
    let scores = raw.scores.map(|s| scores_vector(line, s)).transpose()?;
    let predicted = match (&raw.predicted, &scores) {
        (Some(p), _) => label(line, p)?,
        (None, Some(v)) => v.dominant(),
        (None, None) => return Err(DataError::Malformed { line, msg: "need `scores` or `predicted`".into() }),
    };
    if predicted == ExpressionId::Neutral {
        return Err(DataError::ValidationFailed { line, cause: "predicted label must not be neutral".into() });
    }
    let s_e = match (raw.s_e, &scores) {
        (Some(s), _) => s,
        (None, Some(v)) => v.get(target).expect("non-neutral target"),
        (None, None) => return Err(DataError::Malformed { line, msg: "need `scores` or `s_e`".into() }),
    };
    if !(0.0..=1.0).contains(&s_e) {
        return Err(DataError::ValidationFailed { line, cause: format!("s_e {s_e} outside [0, 1]") });
    }
    Ok(EvalRecord { sample_id: raw.sample_id, target, alpha: raw.alpha, predicted, s_e, id_sims: raw.id_sims })
}

pub fn parse_predictions_str(text: &str) -> Result<Vec<EvalRecord>, DataError> {
    numbered_lines(text).map(|(line, l)| prediction_from_line(line, l)).collect()
}

pub fn load_predictions(path: &Path) -> Result<Vec<EvalRecord>, DataError> {
    parse_predictions_str(&read_text(path)?)
}

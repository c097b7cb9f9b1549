//! Loss terms of the symmetric training objective, each with an analytic gradient.
//!
//! Contrastive features are ℓ2-normalized before any distance is taken, so every
//! triplet loss is invariant to positive rescaling of its inputs. Cosine
//! distance is `1 - cosine similarity`.
//!
//! The `*_with_grad` functions return the value together with the gradient with
//! respect to every raw (pre-normalization) input vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::Embedding;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("non-finite loss input")]
    NonFinite,
    #[error("invalid loss config: {0}")]
    InvalidConfig(&'static str),
    #[error("triplet mode mismatch: config is {0:?}")]
    ModeMismatch(TripletMode),
    #[error("hinge gradient requested exactly at the max(0, .) kink")]
    UnsupportedAtKink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletMode {
    Hinge,
    LogRatio,
    Infonce,
}

impl std::str::FromStr for TripletMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hinge" => Ok(TripletMode::Hinge),
            "log_ratio" | "logratio" => Ok(TripletMode::LogRatio),
            "infonce" => Ok(TripletMode::Infonce),
            other => Err(format!("unknown triplet mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletConfig {
    pub mode: TripletMode,
    pub margin: f64,
    pub epsilon: f64,
    pub tau: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig { mode: TripletMode::Infonce, margin: 0.2, epsilon: 1e-6, tau: 0.07 }
    }
}

impl TripletConfig {
    pub fn with_mode(mode: TripletMode) -> Self {
        TripletConfig { mode, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.margin >= 0.0) {
            return Err(LossError::InvalidConfig("margin must be >= 0"));
        }
        if !(self.epsilon > 0.0) {
            return Err(LossError::InvalidConfig("epsilon must be > 0"));
        }
        if !(self.tau > 0.0) {
            return Err(LossError::InvalidConfig("tau must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_sc: f64,
    pub lambda_id: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_sc: 1.0, lambda_id: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.lambda_sc >= 0.0) || !(self.lambda_id >= 0.0) {
            return Err(LossError::InvalidConfig("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Generated, positive and negative features (raw, pre-normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTriplet {
    pub g: Embedding,
    pub p: Embedding,
    pub n: Embedding,
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), LossError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(LossError::DimMismatch(a.len(), b.len()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(e: &[f64]) -> Result<Vec<f64>, LossError> {
    let n = l2(e);
    if !(n > 0.0) || !n.is_finite() {
        return Err(LossError::ZeroVector);
    }
    Ok(e.iter().map(|x| x / n).collect())
}

/// Cosine similarity without clamping, plus its gradient with respect to both inputs.
fn cosine_parts(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), LossError> {
    check_dims(a, b)?;
    let na = l2(a);
    let nb = l2(b);
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(LossError::ZeroVector);
    }
    let s = dot(a, b) / (dot(a, a) * dot(b, b)).sqrt();
    // d s / d a = (b/|b| - s a/|a|) / |a|
    let ga = a.iter().zip(b).map(|(ai, bi)| (bi / nb - s * ai / na) / na).collect();
    let gb = a.iter().zip(b).map(|(ai, bi)| (ai / na - s * bi / nb) / nb).collect();
    Ok((s, ga, gb))
}

fn cosine_raw(a: &[f64], b: &[f64]) -> Result<f64, LossError> {
    check_dims(a, b)?;
    let na = l2(a);
    let nb = l2(b);
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(LossError::ZeroVector);
    }
    Ok(dot(a, b) / (dot(a, a) * dot(b, b)).sqrt())
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64, LossError> {
    Ok(cosine_raw(a, b)?.clamp(-1.0, 1.0))
}

pub fn cosine_dist(a: &[f64], b: &[f64]) -> Result<f64, LossError> {
    Ok(1.0 - cosine_sim(a, b)?)
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn require_mode(cfg: &TripletConfig, mode: TripletMode) -> Result<(), LossError> {
    cfg.validate()?;
    if cfg.mode == mode {
        Ok(())
    } else {
        Err(LossError::ModeMismatch(cfg.mode))
    }
}

pub fn triplet_hinge(t: &FeatureTriplet, cfg: &TripletConfig) -> Result<f64, LossError> {
    require_mode(cfg, TripletMode::Hinge)?;
    triplet_value(t.g.values(), t.p.values(), t.n.values(), cfg)
}

pub fn triplet_logratio(t: &FeatureTriplet, cfg: &TripletConfig) -> Result<f64, LossError> {
    require_mode(cfg, TripletMode::LogRatio)?;
    triplet_value(t.g.values(), t.p.values(), t.n.values(), cfg)
}

pub fn triplet_infonce(t: &FeatureTriplet, cfg: &TripletConfig) -> Result<f64, LossError> {
    require_mode(cfg, TripletMode::Infonce)?;
    triplet_value(t.g.values(), t.p.values(), t.n.values(), cfg)
}

/// Triplet loss for `cfg.mode`.
pub fn triplet_value(g: &[f64], p: &[f64], n: &[f64], cfg: &TripletConfig) -> Result<f64, LossError> {
    check_dims(g, p)?;
    check_dims(g, n)?;
    let s_p = cosine_raw(g, p)?;
    let s_n = cosine_raw(g, n)?;
    Ok(match cfg.mode {
        TripletMode::Hinge => ((1.0 - s_p) - (1.0 - s_n) + cfg.margin).max(0.0),
        TripletMode::LogRatio => ((1.0 - s_p + cfg.epsilon) / (1.0 - s_n + cfg.epsilon)).ln(),
        TripletMode::Infonce => softplus((s_n - s_p) / cfg.tau),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub value: f64,
    pub dg: Vec<f64>,
    pub dp: Vec<f64>,
    pub dn: Vec<f64>,
    /// True when a hinge evaluation sat exactly on the kink (zero subgradient used).
    pub at_kink: bool,
}

/// Value and gradients. At the hinge kink the zero subgradient is returned.
pub fn triplet_with_grad(g: &[f64], p: &[f64], n: &[f64], cfg: &TripletConfig) -> Result<TripletGrad, LossError> {
    check_dims(g, p)?;
    check_dims(g, n)?;
    let (s_p, dsp_dg, dsp_dp) = cosine_parts(g, p)?;
    let (s_n, dsn_dg, dsn_dn) = cosine_parts(g, n)?;
    // loss = f(s_p, s_n); record the two partials
    let (value, c_p, c_n, at_kink) = match cfg.mode {
        TripletMode::Hinge => {
            let arg = s_n - s_p + cfg.margin;
            if arg > 0.0 {
                (arg, -1.0, 1.0, false)
            } else {
                (0.0, 0.0, 0.0, arg == 0.0)
            }
        }
        TripletMode::LogRatio => {
            let dp = 1.0 - s_p + cfg.epsilon;
            let dn = 1.0 - s_n + cfg.epsilon;
            ((dp / dn).ln(), -1.0 / dp, 1.0 / dn, false)
        }
        TripletMode::Infonce => {
            let z = (s_n - s_p) / cfg.tau;
            let w = sigmoid(z) / cfg.tau;
            (softplus(z), -w, w, false)
        }
    };
    let dg = dsp_dg.iter().zip(&dsn_dg).map(|(a, b)| c_p * a + c_n * b).collect();
    let dp = dsp_dp.iter().map(|a| c_p * a).collect();
    let dn = dsn_dn.iter().map(|b| c_n * b).collect();
    Ok(TripletGrad { value, dg, dp, dn, at_kink })
}

/// Half-sum of the two branch triplets with the roles of the pair exchanged.
pub fn symmetric_contrastive(
    ga: &[f64],
    pa: &[f64],
    gb: &[f64],
    pb: &[f64],
    cfg: &TripletConfig,
) -> Result<f64, LossError> {
    let ta = triplet_value(ga, pa, pb, cfg)?;
    let tb = triplet_value(gb, pb, pa, cfg)?;
    Ok(0.5 * (ta + tb))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrad {
    pub value: f64,
    pub dga: Vec<f64>,
    pub dpa: Vec<f64>,
    pub dgb: Vec<f64>,
    pub dpb: Vec<f64>,
    pub at_kink: bool,
}

pub fn symmetric_contrastive_with_grad(
    ga: &[f64],
    pa: &[f64],
    gb: &[f64],
    pb: &[f64],
    cfg: &TripletConfig,
) -> Result<QuadGrad, LossError> {
    let ta = triplet_with_grad(ga, pa, pb, cfg)?;
    let tb = triplet_with_grad(gb, pb, pa, cfg)?;
    let half = |v: &[f64]| v.iter().map(|x| 0.5 * x).collect::<Vec<_>>();
    let sum_half = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>();
    Ok(QuadGrad {
        value: 0.5 * (ta.value + tb.value),
        dga: half(&ta.dg),
        dgb: half(&tb.dg),
        // pa is the positive of branch a and the negative of branch b
        dpa: sum_half(&ta.dp, &tb.dn),
        dpb: sum_half(&ta.dn, &tb.dp),
        at_kink: ta.at_kink || tb.at_kink,
    })
}

/// `½ [(1 - cos(ga, pa)) + (1 - cos(gb, pb))]` on identity features.
pub fn identity_loss(ga: &[f64], pa: &[f64], gb: &[f64], pb: &[f64]) -> Result<f64, LossError> {
    let a = cosine_raw(ga, pa)?;
    let b = cosine_raw(gb, pb)?;
    Ok(0.5 * ((1.0 - a) + (1.0 - b)))
}

pub fn identity_loss_with_grad(ga: &[f64], pa: &[f64], gb: &[f64], pb: &[f64]) -> Result<QuadGrad, LossError> {
    let (a, dga, dpa) = cosine_parts(ga, pa)?;
    let (b, dgb, dpb) = cosine_parts(gb, pb)?;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| -0.5 * x).collect::<Vec<_>>();
    Ok(QuadGrad {
        value: 0.5 * ((1.0 - a) + (1.0 - b)),
        dga: scale(dga),
        dpa: scale(dpa),
        dgb: scale(dgb),
        dpb: scale(dpb),
        at_kink: false,
    })
}

/// Squared L2 distance between a predicted velocity and `x1 - x0`.
pub fn flow_matching_loss(v_pred: &[f64], x0: &[f64], x1: &[f64]) -> Result<f64, LossError> {
    check_dims(v_pred, x0)?;
    check_dims(v_pred, x1)?;
    Ok(v_pred
        .iter()
        .zip(x0.iter().zip(x1))
        .map(|(v, (a, b))| {
            let r = v - (b - a);
            r * r
        })
        .sum())
}

/// Returns `(value, d/dv_pred, d/dx0, d/dx1)`.
pub fn flow_matching_with_grad(
    v_pred: &[f64],
    x0: &[f64],
    x1: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>), LossError> {
    check_dims(v_pred, x0)?;
    check_dims(v_pred, x1)?;
    let r: Vec<f64> = v_pred.iter().zip(x0.iter().zip(x1)).map(|(v, (a, b))| v - (b - a)).collect();
    let value = r.iter().map(|x| x * x).sum();
    let dv: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
    let dx0 = dv.clone();
    let dx1 = dv.iter().map(|x| -x).collect();
    Ok((value, dv, dx0, dx1))
}

/// Batch mean of the flow-matching loss, plus the per-sample values.
pub fn flow_matching_batch(
    v_pred: &[Vec<f64>],
    x0: &[Vec<f64>],
    x1: &[Vec<f64>],
) -> Result<(f64, Vec<f64>), LossError> {
    if v_pred.len() != x0.len() || v_pred.len() != x1.len() {
        return Err(LossError::DimMismatch(v_pred.len(), x0.len().min(x1.len())));
    }
    if v_pred.is_empty() {
        return Ok((0.0, vec![]));
    }
    let per = v_pred
        .iter()
        .zip(x0.iter().zip(x1))
        .map(|(v, (a, b))| flow_matching_loss(v, a, b))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((mean, per))
}

/// `½(fm_a + fm_b) + λ_sc·sc + λ_id·id`.
pub fn total_loss(fm_a: f64, fm_b: f64, sc: f64, id: f64, w: &LossWeights) -> Result<f64, LossError> {
    if [fm_a, fm_b, sc, id, w.lambda_sc, w.lambda_id].iter().any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite);
    }
    Ok(0.5 * (fm_a + fm_b) + w.lambda_sc * sc + w.lambda_id * id)
}

/// Inputs for [`gradient`]; each variant names the loss and carries its inputs.
#[derive(Debug, Clone, Copy)]
pub enum LossInputs<'a> {
    Triplet { g: &'a [f64], p: &'a [f64], n: &'a [f64] },
    SymmetricContrastive { ga: &'a [f64], pa: &'a [f64], gb: &'a [f64], pb: &'a [f64] },
    Identity { ga: &'a [f64], pa: &'a [f64], gb: &'a [f64], pb: &'a [f64] },
    FlowMatching { v_pred: &'a [f64], x0: &'a [f64], x1: &'a [f64] },
}

/// Gradients with respect to every input vector, in the variant's field order.
///
/// Hinge evaluations exactly on the kink are reported as
/// [`LossError::UnsupportedAtKink`]; the `*_with_grad` functions instead use the
/// zero subgradient there.
pub fn gradient(inputs: LossInputs<'_>, cfg: &TripletConfig) -> Result<(f64, Vec<Vec<f64>>), LossError> {
    match inputs {
        LossInputs::Triplet { g, p, n } => {
            cfg.validate()?;
            let t = triplet_with_grad(g, p, n, cfg)?;
            if t.at_kink {
                return Err(LossError::UnsupportedAtKink);
            }
            Ok((t.value, vec![t.dg, t.dp, t.dn]))
        }
        LossInputs::SymmetricContrastive { ga, pa, gb, pb } => {
            cfg.validate()?;
            let q = symmetric_contrastive_with_grad(ga, pa, gb, pb, cfg)?;
            if q.at_kink {
                return Err(LossError::UnsupportedAtKink);
            }
            Ok((q.value, vec![q.dga, q.dpa, q.dgb, q.dpb]))
        }
        LossInputs::Identity { ga, pa, gb, pb } => {
            let q = identity_loss_with_grad(ga, pa, gb, pb)?;
            Ok((q.value, vec![q.dga, q.dpa, q.dgb, q.dpb]))
        }
        LossInputs::FlowMatching { v_pred, x0, x1 } => {
            let (v, dv, d0, d1) = flow_matching_with_grad(v_pred, x0, x1)?;
            Ok((v, vec![dv, d0, d1]))
        }
    }
}

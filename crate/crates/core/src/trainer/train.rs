//! Symmetric dual-branch training on the synthetic manifold.
//!
//! Each [`SymmetricBatch`] holds one identity and one registered pair `(a, b)`.
//! Both branches regress the flow-matching velocity from the shared source to
//! their own target; the one-step endpoint estimates `Ĝ_a`, `Ĝ_b` then enter
//! the contrastive loss (positives and hard negatives swapped between branches)
//! and the identity loss through the frozen projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::eval::{evaluate_synthetic, EvalSettings, NetGenerator};
use super::linalg::axpy;
use super::net::{NetError, VelocityNet};
use super::optim::{Adam, AdamConfig};
use super::world::World;
use crate::affect::{ExpressionId, ExpressionPair};
use crate::interp::{AlphaRange, InterpError};
use crate::losses::{
    flow_matching_with_grad, identity_loss_with_grad, symmetric_contrastive_with_grad, total_loss,
    triplet_with_grad, LossError, LossWeights, TripletConfig,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at step {step}: {breakdown:?}")]
    NonFiniteLoss { step: u64, breakdown: LossBreakdown },
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Eval(#[from] super::eval::EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Symmetric,
    /// Contrastive supervision on branch `a` only.
    Asymmetric,
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(TrainMode::Symmetric),
            "asymmetric" => Ok(TrainMode::Asymmetric),
            other => Err(format!("unknown training mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Optimizer steps; `epochs` is accepted as an alias.
    #[serde(alias = "epochs")]
    pub steps: u64,
    /// Symmetric units averaged per optimizer step.
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Curve rows are emitted every `log_every` steps (and at the last step).
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            steps: 2000,
            batch_size: 8,
            hidden: 64,
            seed: 0,
            mode: TrainMode::Symmetric,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.hidden == 0 || self.log_every == 0 {
            return Err(TrainError::InvalidConfig("batch_size, hidden and log_every must be > 0".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::InvalidConfig("need lr > 0 and betas in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Everything the objective needs besides the network.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub world: &'a World,
    pub weights: LossWeights,
    pub triplet: TripletConfig,
    pub mode: TrainMode,
    pub alpha_range: AlphaRange,
}

/// One symmetric training unit: shared source, two confusing targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricBatch {
    pub identity: usize,
    pub expr_a: ExpressionId,
    pub expr_b: ExpressionId,
    pub x_src: Vec<f64>,
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
    pub alpha_a: f64,
    pub alpha_b: f64,
    /// Flow time shared by both branches.
    pub t: f64,
}

impl SymmetricBatch {
    /// The same unit with branch roles exchanged.
    pub fn swapped(&self) -> Self {
        SymmetricBatch {
            identity: self.identity,
            expr_a: self.expr_b,
            expr_b: self.expr_a,
            x_src: self.x_src.clone(),
            x_a: self.x_b.clone(),
            x_b: self.x_a.clone(),
            alpha_a: self.alpha_b,
            alpha_b: self.alpha_a,
            t: self.t,
        }
    }

    pub fn pair(&self) -> Option<ExpressionPair> {
        ExpressionPair::new(self.expr_a, self.expr_b).ok()
    }
}

/// Draws a unit for a training identity and a registered pair; branch `a` is the
/// pair's lower-code member.
pub fn sample_batch<R: Rng>(world: &World, rng: &mut R) -> SymmetricBatch {
    let ids = world.train_identities();
    let identity = rng.random_range(ids);
    let pairs = world.registry.pairs();
    let pair = pairs[rng.random_range(0..pairs.len())];
    let alpha_a: f64 = rng.random_range(0.0..=1.0);
    let alpha_b: f64 = rng.random_range(0.0..=1.0);
    let t: f64 = rng.random_range(0.0..1.0);
    let x_src = world.sample_latent(identity, ExpressionId::Neutral, 0.0, rng);
    let x_a = world.sample_latent(identity, pair.first(), alpha_a, rng);
    let x_b = world.sample_latent(identity, pair.second(), alpha_b, rng);
    SymmetricBatch { identity, expr_a: pair.first(), expr_b: pair.second(), x_src, x_a, x_b, alpha_a, alpha_b, t }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// `½ (L_FM^a + L_FM^b)`
    pub fm: f64,
    pub sc: f64,
    pub id: f64,
}

impl LossBreakdown {
    fn is_finite(&self) -> bool {
        self.total.is_finite() && self.fm.is_finite() && self.sc.is_finite() && self.id.is_finite()
    }

    fn add_scaled(&mut self, o: &LossBreakdown, s: f64) {
        self.total += s * o.total;
        self.fm += s * o.fm;
        self.sc += s * o.sc;
        self.id += s * o.id;
    }
}

struct Branch {
    cache: super::net::ForwardCache,
    dv_fm: Vec<f64>,
    fm: f64,
    g_feat: Vec<f64>,
    p_feat: Vec<f64>,
    g_id: Vec<f64>,
    p_id: Vec<f64>,
}

fn run_branch(
    net: &VelocityNet,
    obj: &Objective<'_>,
    expr: ExpressionId,
    alpha: f64,
    x_src: &[f64],
    x_pos: &[f64],
    t: f64,
) -> Result<Branch, TrainError> {
    let e = obj.world.encode_condition(expr, alpha, obj.alpha_range)?;
    let x_t: Vec<f64> = x_src.iter().zip(x_pos).map(|(a, b)| (1.0 - t) * a + t * b).collect();
    let (v, cache) = net.forward(&x_t, t, e.values())?;
    let (fm, dv_fm, _, _) = flow_matching_with_grad(&v, x_src, x_pos)?;
    let g = axpy(&x_t, 1.0 - t, &v);
    let enc = &obj.world.encoders;
    Ok(Branch {
        cache,
        dv_fm,
        fm,
        g_feat: enc.feature_proj.matvec(&g),
        p_feat: enc.feature_proj.matvec(x_pos),
        g_id: enc.id_proj.matvec(&g),
        p_id: enc.id_proj.matvec(x_pos),
    })
}

fn check_unit(world: &World, unit: &SymmetricBatch) -> Result<(), TrainError> {
    let registered = world.registry.contains(unit.expr_a, unit.expr_b).unwrap_or(false);
    if !registered {
        return Err(TrainError::InvalidBatch(format!("({}, {}) is not a registered pair", unit.expr_a, unit.expr_b)));
    }
    if !(0.0..1.0).contains(&unit.t) {
        return Err(TrainError::InvalidBatch(format!("t = {} outside [0, 1)", unit.t)));
    }
    for a in [unit.alpha_a, unit.alpha_b] {
        if !(0.0..=1.0).contains(&a) {
            return Err(TrainError::InvalidBatch(format!("alpha {a} outside [0, 1]")));
        }
    }
    let d = world.latent_dim();
    if unit.x_src.len() != d || unit.x_a.len() != d || unit.x_b.len() != d {
        return Err(TrainError::InvalidBatch("latent dimension mismatch".into()));
    }
    Ok(())
}

/// Mean objective over `units` and its gradient with respect to the net parameters.
pub fn objective_with_grad(
    net: &VelocityNet,
    units: &[SymmetricBatch],
    obj: &Objective<'_>,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    if units.is_empty() {
        return Err(TrainError::InvalidBatch("empty batch".into()));
    }
    let mut grad = vec![0.0; net.num_params()];
    let mut mean = LossBreakdown::default();
    let scale = 1.0 / units.len() as f64;
    let enc = &obj.world.encoders;
    let w = obj.weights;
    for unit in units {
        check_unit(obj.world, unit)?;
        let t = unit.t;
        let a = run_branch(net, obj, unit.expr_a, unit.alpha_a, &unit.x_src, &unit.x_a, t)?;
        let b = run_branch(net, obj, unit.expr_b, unit.alpha_b, &unit.x_src, &unit.x_b, t)?;

        // feature-space gradients of the contrastive and identity terms w.r.t. Ĝ_a, Ĝ_b
        let m = obj.world.embed_dim();
        let (sc, dsc_a, dsc_b) = if w.lambda_sc == 0.0 {
            (0.0, vec![0.0; m], vec![0.0; m])
        } else {
            match obj.mode {
                TrainMode::Symmetric => {
                    let q = symmetric_contrastive_with_grad(&a.g_feat, &a.p_feat, &b.g_feat, &b.p_feat, &obj.triplet)?;
                    (q.value, q.dga, q.dgb)
                }
                TrainMode::Asymmetric => {
                    let ta = triplet_with_grad(&a.g_feat, &a.p_feat, &b.p_feat, &obj.triplet)?;
                    (ta.value, ta.dg, vec![0.0; m])
                }
            }
        };
        let k = obj.world.cfg.id_dim;
        let (id, did_a, did_b) = if w.lambda_id == 0.0 {
            (0.0, vec![0.0; k], vec![0.0; k])
        } else {
            let q = identity_loss_with_grad(&a.g_id, &a.p_id, &b.g_id, &b.p_id)?;
            (q.value, q.dga, q.dgb)
        };
        let total = total_loss(a.fm, b.fm, sc, id, &w).map_err(|_| TrainError::NonFiniteLoss {
            step: 0,
            breakdown: LossBreakdown { total: f64::NAN, fm: 0.5 * (a.fm + b.fm), sc, id },
        })?;
        mean.add_scaled(&LossBreakdown { total, fm: 0.5 * (a.fm + b.fm), sc, id }, scale);

        // ∂L/∂v = ½ ∂FM/∂v + (1 - t) [λ_sc Fᵀ ∂SC/∂f + λ_id Φᵀ ∂ID/∂φ]
        for (branch, dsc, did) in [(&a, &dsc_a, &did_a), (&b, &dsc_b, &did_b)] {
            let back_sc = enc.feature_proj.matvec_t(dsc);
            let back_id = enc.id_proj.matvec_t(did);
            let go: Vec<f64> = (0..branch.dv_fm.len())
                .map(|i| {
                    scale
                        * (0.5 * branch.dv_fm[i]
                            + (1.0 - t) * (w.lambda_sc * back_sc[i] + w.lambda_id * back_id[i]))
                })
                .collect();
            net.backward(&branch.cache, &go, &mut grad);
        }
    }
    Ok((mean, grad))
}

/// Objective value only.
pub fn objective(net: &VelocityNet, units: &[SymmetricBatch], obj: &Objective<'_>) -> Result<LossBreakdown, TrainError> {
    objective_with_grad(net, units, obj).map(|(l, _)| l)
}

/// Network plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: VelocityNet,
    opt: Adam,
    steps: u64,
}

impl Trainer {
    pub fn new(net: VelocityNet, adam: AdamConfig) -> Self {
        let n = net.num_params();
        Trainer { net, opt: Adam::new(adam, n), steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Evaluates the objective on `units` and applies one optimizer update.
    pub fn train_step(&mut self, units: &[SymmetricBatch], obj: &Objective<'_>) -> Result<LossBreakdown, TrainError> {
        let (loss, grad) = objective_with_grad(&self.net, units, obj).map_err(|e| match e {
            TrainError::NonFiniteLoss { breakdown, .. } => TrainError::NonFiniteLoss { step: self.steps + 1, breakdown },
            other => other,
        })?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteLoss { step: self.steps + 1, breakdown: loss });
        }
        self.opt.step(self.net.params_mut(), &grad);
        self.steps += 1;
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub step: u64,
    #[serde(rename = "L_total")]
    pub total: f64,
    #[serde(rename = "L_FM")]
    pub fm: f64,
    #[serde(rename = "L_SC")]
    pub sc: f64,
    #[serde(rename = "L_ID")]
    pub id: f64,
    #[serde(rename = "mSCR")]
    pub mscr: f64,
    #[serde(rename = "CLS")]
    pub cls: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: VelocityNet,
    pub curve: Vec<CurveRow>,
}

/// Trains from a seeded initialization for `cfg.steps` steps. Curve rows carry
/// the mean losses over each logging window plus held-out synthetic metrics.
pub fn train(
    world: &World,
    cfg: &TrainConfig,
    weights: LossWeights,
    triplet: TripletConfig,
    eval: &EvalSettings,
) -> Result<TrainedModel, TrainError> {
    cfg.validate()?;
    weights.validate()?;
    triplet.validate()?;
    let obj = Objective { world, weights, triplet, mode: cfg.mode, alpha_range: eval.alpha_range() };
    let net = VelocityNet::new(world.latent_dim(), world.embed_dim(), cfg.hidden, cfg.seed);
    let mut trainer = Trainer::new(net, cfg.adam());
    // batch stream, independent of the init stream
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c_0000_0001);
    let mut curve = Vec::new();
    let mut window = LossBreakdown::default();
    let mut in_window = 0u64;
    for step in 1..=cfg.steps {
        let units: Vec<SymmetricBatch> = (0..cfg.batch_size).map(|_| sample_batch(world, &mut rng)).collect();
        let loss = trainer.train_step(&units, &obj)?;
        window.add_scaled(&loss, 1.0);
        in_window += 1;
        if step % cfg.log_every == 0 || step == cfg.steps {
            let s = 1.0 / in_window as f64;
            let ev = evaluate_synthetic(&NetGenerator(&trainer.net), world, eval)?;
            curve.push(CurveRow {
                step,
                total: window.total * s,
                fm: window.fm * s,
                sc: window.sc * s,
                id: window.id * s,
                mscr: ev.report.mscr,
                cls: ev.report.cls12.unwrap_or(0.0),
            });
            window = LossBreakdown::default();
            in_window = 0;
        }
    }
    Ok(TrainedModel { net: trainer.net, curve })
}

//! Synthetic benchmark: edits held-out identities across an α grid and scores
//! them with nearest-prototype classification in the frozen feature space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{dot, norm, sub};
use super::net::{one_step_generate, NetError, VelocityNet};
use super::world::World;
use crate::affect::{ExpressionId, DEFAULT_ALPHA_MAX};
use crate::interp::{AlphaRange, Embedding, InterpError};
use crate::metrics::{report_with, EvalRecord, MetricError, MetricReport, ReportOptions};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid evaluation settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub alpha_max: f64,
    /// Upper end of the evaluation grid `[0, grid_max]`.
    pub grid_max: f64,
    pub grid_points: usize,
    /// Grid points below this α only contribute to CLS.
    pub classify_min_alpha: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { alpha_max: DEFAULT_ALPHA_MAX, grid_max: 1.0, grid_points: 11, classify_min_alpha: 0.3, seed: 0 }
    }
}

impl EvalSettings {
    pub fn alpha_range(&self) -> AlphaRange {
        AlphaRange::new(self.alpha_max)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.grid_points < 5 {
            return Err(EvalError::InvalidSettings(format!("grid needs >= 5 points, got {}", self.grid_points)));
        }
        if !(self.grid_max > 0.0) || self.grid_max > self.alpha_max {
            return Err(EvalError::InvalidSettings(format!(
                "grid_max {} must lie in (0, alpha_max = {}]",
                self.grid_max, self.alpha_max
            )));
        }
        if !(0.0..=self.grid_max).contains(&self.classify_min_alpha) {
            return Err(EvalError::InvalidSettings("classify_min_alpha must lie in [0, grid_max]".into()));
        }
        Ok(())
    }

    /// Uniform grid `k · grid_max / (n - 1)`, endpoints included.
    pub fn alpha_grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        (0..n).map(|k| if k + 1 == n { self.grid_max } else { self.grid_max * k as f64 / (n - 1) as f64 }).collect()
    }
}

/// Produces an edited latent from a source latent.
pub trait Generator: Sync {
    fn generate(
        &self,
        world: &World,
        identity: usize,
        x_src: &[f64],
        expr: ExpressionId,
        alpha: f64,
        e_cond: &Embedding,
    ) -> Result<Vec<f64>, EvalError>;
}

/// One-step generation from `t = 0`.
pub struct NetGenerator<'a>(pub &'a VelocityNet);

impl Generator for NetGenerator<'_> {
    fn generate(&self, _: &World, _: usize, x_src: &[f64], _: ExpressionId, _: f64, e: &Embedding) -> Result<Vec<f64>, EvalError> {
        Ok(one_step_generate(self.0, x_src, 0.0, e.values())?)
    }
}

/// Noise-free ground-truth target `u_id + α·p_expr`.
pub struct OracleGenerator;

impl Generator for OracleGenerator {
    fn generate(&self, w: &World, identity: usize, _: &[f64], expr: ExpressionId, alpha: f64, _: &Embedding) -> Result<Vec<f64>, EvalError> {
        Ok(w.mean_latent(identity, expr, alpha))
    }
}

/// Ground-truth displacement applied to the noisy source, `x_src + α·p_expr`.
pub struct SourceOracleGenerator;

impl Generator for SourceOracleGenerator {
    fn generate(&self, w: &World, _: usize, x_src: &[f64], expr: ExpressionId, alpha: f64, _: &Embedding) -> Result<Vec<f64>, EvalError> {
        let p = w.prototype(expr).ok_or_else(|| EvalError::InvalidSettings("neutral has no prototype".into()))?;
        Ok(x_src.iter().zip(p).map(|(x, pi)| x + alpha * pi).collect())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEval {
    pub records: Vec<EvalRecord>,
    pub report: MetricReport,
}

fn cosine_or_zero(a: &[f64], b: &[f64]) -> f64 {
    let n = norm(a) * norm(b);
    if n == 0.0 {
        0.0
    } else {
        (dot(a, b) / n).clamp(-1.0, 1.0)
    }
}

/// Nearest prototype by cosine in feature space; ties and zero displacements
/// resolve to the lowest code. Callers pass `x̂ - u_id`, so source noise carried
/// into the edit counts against the classification.
pub fn classify_displacement(world: &World, displacement: &[f64]) -> ExpressionId {
    let f = world.encoders.feature_proj.matvec(displacement);
    let mut best = (ExpressionId::TARGETS[0], f64::NEG_INFINITY);
    for e in ExpressionId::TARGETS {
        let fp = world.encoders.feature_proj.matvec(world.prototype(e).expect("target has a prototype"));
        let c = cosine_or_zero(&f, &fp);
        if c > best.1 {
            best = (e, c);
        }
    }
    best.0
}

/// Normalized projection of `x̂ - u_id` on the target prototype in feature space, clamped to `[0, 1]`.
pub fn intensity_score(world: &World, identity: usize, x_hat: &[f64], expr: ExpressionId) -> f64 {
    let enc = &world.encoders.feature_proj;
    let fp = enc.matvec(world.prototype(expr).expect("target has a prototype"));
    let fd = enc.matvec(&sub(x_hat, &world.identities[identity]));
    (dot(&fd, &fp) / dot(&fp, &fp)).clamp(0.0, 1.0)
}

fn point_seed(base: u64, identity: usize, expr: ExpressionId, k: usize) -> u64 {
    let mut z = base
        ^ (identity as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (u64::from(expr.code())).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (k as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Evaluates `gen` on every held-out identity × registered expression × grid point.
pub fn evaluate_synthetic<G: Generator>(gen: &G, world: &World, settings: &EvalSettings) -> Result<SyntheticEval, EvalError> {
    settings.validate()?;
    let grid = settings.alpha_grid();
    let range = settings.alpha_range();
    let members = world.registry.members();
    let base = settings.seed ^ world.cfg.seed.rotate_left(17);
    let per_identity: Vec<Result<Vec<EvalRecord>, EvalError>> = world
        .heldout_identities()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|identity| {
            let mut out = Vec::with_capacity(members.len() * grid.len());
            for &expr in &members {
                for (k, &alpha) in grid.iter().enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(point_seed(base, identity, expr, k));
                    let x_src = world.sample_latent(identity, ExpressionId::Neutral, 0.0, &mut rng);
                    let e = world.encode_condition(expr, alpha, range)?;
                    let x_hat = gen.generate(world, identity, &x_src, expr, alpha, &e)?;
                    let predicted = classify_displacement(world, &sub(&x_hat, &world.identities[identity]));
                    let id = &world.encoders.id_proj;
                    let id_sim = cosine_or_zero(&id.matvec(&x_hat), &id.matvec(&x_src));
                    out.push(EvalRecord {
                        sample_id: format!("id{identity:03}-{expr}"),
                        target: expr,
                        alpha,
                        predicted,
                        s_e: intensity_score(world, identity, &x_hat, expr),
                        id_sims: vec![id_sim],
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut records = Vec::new();
    for r in per_identity {
        records.extend(r?);
    }
    let report = report_with(
        &records,
        &world.registry,
        ReportOptions { classify_min_alpha: settings.classify_min_alpha },
    )?;
    Ok(SyntheticEval { records, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affect::ConfusingPairRegistry;
    use crate::trainer::world::{generate_world, SyntheticWorldConfig};

    fn world() -> World {
        generate_world(&SyntheticWorldConfig::default(), &ConfusingPairRegistry::default()).unwrap()
    }

    #[test]
    fn grid_is_uniform_with_exact_endpoints() {
        let g = EvalSettings::default().alpha_grid();
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[10]), (0.0, 1.0));
        for w in g.windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
        let bad = EvalSettings { grid_points: 4, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn oracle_generator_is_always_correct() {
        let w = world();
        let ev = evaluate_synthetic(&OracleGenerator, &w, &EvalSettings::default()).unwrap();
        assert_eq!(ev.report.acc12, 1.0);
        assert_eq!(ev.report.mscr, 0.0);
        assert_eq!(ev.records.len(), 16 * 4 * 11);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let w = world();
        let net = VelocityNet::new(8, 16, 16, 3);
        let a = evaluate_synthetic(&NetGenerator(&net), &w, &EvalSettings::default()).unwrap();
        let b = evaluate_synthetic(&NetGenerator(&net), &w, &EvalSettings::default()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.report, b.report);
    }
}

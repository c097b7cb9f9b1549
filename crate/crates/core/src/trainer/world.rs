//! Synthetic expression manifold.
//!
//! Latents are `x = u_id + α·p_expr + σ·ε`: an identity vector, an expression
//! prototype direction scaled by intensity, and isotropic noise. Prototypes of
//! registered confusing pairs share cosine `overlap`; every other pair of
//! prototypes is kept below `max_nonpair_cos` in absolute cosine. Text anchors
//! (`e_neu`, `e[expr]`) follow the same overlap structure in the embedding space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::linalg::{axpy, dot, norm, Matrix};
use crate::affect::{ConfusingPairRegistry, ExpressionId, NUM_EXPRESSIONS};
use crate::interp::{interpolate, residual_direction, AlphaRange, Embedding, InterpError};
use crate::tensorfile::{TensorFile, TensorFileError};

const MAX_ATTEMPTS: usize = 16;
const REPULSION_ITERS: usize = 4000;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("could not construct a full-rank {0} after {MAX_ATTEMPTS} attempts")]
    RankDeficiency(&'static str),
    #[error("could not place prototypes with the requested overlap structure after {MAX_ATTEMPTS} attempts")]
    Placement,
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    TensorFile(#[from] TensorFileError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticWorldConfig {
    pub latent_dim: usize,
    pub embed_dim: usize,
    /// Output size of the frozen identity projection.
    pub id_dim: usize,
    pub n_identities: usize,
    /// Identities reserved for evaluation (the last ones).
    pub n_heldout: usize,
    pub overlap: f64,
    pub max_nonpair_cos: f64,
    /// Norm of each text-anchor shift `e[expr] - e_neu`.
    pub anchor_shift: f64,
    /// Cosine between the anchor shifts of a registered pair.
    pub anchor_overlap: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        SyntheticWorldConfig {
            latent_dim: 8,
            embed_dim: 16,
            id_dim: 4,
            n_identities: 64,
            n_heldout: 16,
            overlap: 0.8,
            max_nonpair_cos: 0.5,
            anchor_shift: 0.4,
            anchor_overlap: 0.8,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticWorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidConfig(m.to_string()));
        if self.latent_dim < 2 || self.embed_dim < 2 {
            return bad("latent_dim and embed_dim must be >= 2");
        }
        if self.id_dim == 0 || self.id_dim > self.latent_dim {
            return bad("id_dim must be in 1..=latent_dim");
        }
        if !(0.0..1.0).contains(&self.overlap) || !(0.0..1.0).contains(&self.anchor_overlap) {
            return bad("overlap and anchor_overlap must be in [0, 1)");
        }
        if !(self.max_nonpair_cos > 0.0 && self.max_nonpair_cos < 1.0) {
            return bad("max_nonpair_cos must be in (0, 1)");
        }
        if !(self.noise_sigma > 0.0) {
            return bad("noise_sigma must be > 0");
        }
        if !(self.anchor_shift > 0.0) {
            return bad("anchor_shift must be > 0");
        }
        if self.n_heldout == 0 || self.n_heldout >= self.n_identities {
            return bad("need 0 < n_heldout < n_identities");
        }
        Ok(())
    }
}

/// Fixed linear stand-ins for the frozen feature and identity encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEncoders {
    /// `embed_dim × latent_dim`
    pub feature_proj: Matrix,
    /// `id_dim × latent_dim`
    pub id_proj: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub cfg: SyntheticWorldConfig,
    pub registry: ConfusingPairRegistry,
    pub identities: Vec<Vec<f64>>,
    /// Unit prototype per non-neutral expression, by affect index.
    pub prototypes: Vec<Vec<f64>>,
    pub e_neu: Embedding,
    /// Text anchor per non-neutral expression, by affect index.
    pub anchors: Vec<Embedding>,
    pub encoders: FrozenEncoders,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

fn pair_partner(registry: &ConfusingPairRegistry) -> Vec<Option<usize>> {
    let mut partner = vec![None; NUM_EXPRESSIONS];
    for p in registry.pairs() {
        let a = p.first().affect_index().unwrap();
        let b = p.second().affect_index().unwrap();
        partner[a] = Some(b);
        partner[b] = Some(a);
    }
    partner
}

/// Sets `v[b]` to the unit vector at cosine `overlap` from `v[a]` in the plane they span.
fn enforce_pair(vs: &mut [Vec<f64>], a: usize, b: usize, overlap: f64) {
    let va = vs[a].clone();
    let proj = dot(&vs[b], &va);
    let mut q = axpy(&vs[b], -proj, &va);
    let qn = norm(&q);
    if qn < 1e-9 {
        // degenerate: pick any direction orthogonal to va
        q = va.iter().enumerate().map(|(i, _)| if i == 0 { 1.0 } else { 0.0 }).collect();
        let p = dot(&q, &va);
        q = unit(&axpy(&q, -p, &va));
    } else {
        q.iter_mut().for_each(|x| *x /= qn);
    }
    let s = (1.0 - overlap * overlap).sqrt();
    vs[b] = va.iter().zip(&q).map(|(x, y)| overlap * x + s * y).collect();
}

/// Places 12 unit vectors in `dim` dimensions with the registry's overlap structure.
fn structured_directions(
    rng: &mut ChaCha8Rng,
    dim: usize,
    registry: &ConfusingPairRegistry,
    overlap: f64,
    cap: f64,
) -> Option<Vec<Vec<f64>>> {
    let partner = pair_partner(registry);
    let is_pair = |i: usize, j: usize| partner[i] == Some(j);
    let mut vs: Vec<Vec<f64>> = (0..NUM_EXPRESSIONS).map(|_| unit(&gaussian_vec(rng, dim, 1.0))).collect();
    let leaders: Vec<(usize, usize)> = registry
        .pairs()
        .iter()
        .map(|p| (p.first().affect_index().unwrap(), p.second().affect_index().unwrap()))
        .collect();
    let target = cap - 0.02;
    let step = 0.2;
    for _ in 0..REPULSION_ITERS {
        for &(a, b) in &leaders {
            enforce_pair(&mut vs, a, b, overlap);
        }
        let mut worst: f64 = 0.0;
        for i in 0..NUM_EXPRESSIONS {
            for j in 0..NUM_EXPRESSIONS {
                if i != j && !is_pair(i, j) {
                    worst = worst.max(dot(&vs[i], &vs[j]).abs());
                }
            }
        }
        if worst <= target {
            return Some(vs);
        }
        let mut next = vs.clone();
        for i in 0..NUM_EXPRESSIONS {
            for j in 0..NUM_EXPRESSIONS {
                if i == j || is_pair(i, j) {
                    continue;
                }
                let c = dot(&vs[i], &vs[j]);
                if c.abs() > target {
                    next[i] = axpy(&next[i], -step * c, &vs[j]);
                }
            }
        }
        vs = next.iter().map(|v| unit(v)).collect();
    }
    None
}

fn full_rank_gaussian(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    what: &'static str,
) -> Result<Matrix, WorldError> {
    let sd = 1.0 / (cols as f64).sqrt();
    let want = rows.min(cols);
    for _ in 0..MAX_ATTEMPTS {
        let data = gaussian_vec(rng, rows * cols, sd);
        let m = Matrix { rows, cols, data };
        if m.rank(rows > cols, 1e-6) == want {
            return Ok(m);
        }
    }
    Err(WorldError::RankDeficiency(what))
}

pub fn generate_world(cfg: &SyntheticWorldConfig, registry: &ConfusingPairRegistry) -> Result<World, WorldError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.latent_dim;
    let m = cfg.embed_dim;

    let identities: Vec<Vec<f64>> = (0..cfg.n_identities)
        .map(|_| gaussian_vec(&mut rng, d, 1.0 / (d as f64).sqrt()))
        .collect();

    let place = |rng: &mut ChaCha8Rng, dim: usize, overlap: f64| -> Result<Vec<Vec<f64>>, WorldError> {
        for _ in 0..MAX_ATTEMPTS {
            if let Some(v) = structured_directions(rng, dim, registry, overlap, cfg.max_nonpair_cos) {
                return Ok(v);
            }
        }
        Err(WorldError::Placement)
    };
    let prototypes = place(&mut rng, d, cfg.overlap)?;

    let e_neu = Embedding::new(gaussian_vec(&mut rng, m, 1.0 / (m as f64).sqrt()))?;
    let shifts = place(&mut rng, m, cfg.anchor_overlap)?;
    let anchors = shifts
        .iter()
        .map(|s| Embedding::new(axpy(e_neu.values(), cfg.anchor_shift, s)))
        .collect::<Result<Vec<_>, _>>()?;

    let feature_proj = full_rank_gaussian(&mut rng, m, d, "feature projection")?;
    let id_proj = full_rank_gaussian(&mut rng, cfg.id_dim, d, "identity projection")?;

    Ok(World {
        cfg: cfg.clone(),
        registry: registry.clone(),
        identities,
        prototypes,
        e_neu,
        anchors,
        encoders: FrozenEncoders { feature_proj, id_proj },
    })
}

impl World {
    pub fn latent_dim(&self) -> usize {
        self.cfg.latent_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    pub fn train_identities(&self) -> std::ops::Range<usize> {
        0..self.cfg.n_identities - self.cfg.n_heldout
    }

    pub fn heldout_identities(&self) -> std::ops::Range<usize> {
        self.cfg.n_identities - self.cfg.n_heldout..self.cfg.n_identities
    }

    pub fn prototype(&self, expr: ExpressionId) -> Option<&[f64]> {
        expr.affect_index().map(|i| self.prototypes[i].as_slice())
    }

    /// Noise-free latent mean `u_id + α·p_expr`.
    pub fn mean_latent(&self, identity: usize, expr: ExpressionId, alpha: f64) -> Vec<f64> {
        let u = &self.identities[identity];
        match self.prototype(expr) {
            Some(p) if alpha != 0.0 => axpy(u, alpha, p),
            _ => u.clone(),
        }
    }

    /// One noisy latent draw. `Neutral` (or α = 0) samples around `u_id`.
    pub fn sample_latent<R: Rng>(&self, identity: usize, expr: ExpressionId, alpha: f64, rng: &mut R) -> Vec<f64> {
        let mut x = self.mean_latent(identity, expr, alpha);
        for xi in x.iter_mut() {
            *xi += self.cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        x
    }

    /// Conditioning embedding `e_neu + α (e[expr] - e_neu)`.
    pub fn encode_condition(&self, expr: ExpressionId, alpha: f64, range: AlphaRange) -> Result<Embedding, InterpError> {
        range.check(alpha)?;
        match expr.affect_index() {
            None if alpha == 0.0 => Ok(self.e_neu.clone()),
            None => Err(InterpError::AlphaOutOfRange { alpha, alpha_max: 0.0 }),
            Some(i) => {
                let d = residual_direction(&self.e_neu, &self.anchors[i])?;
                interpolate(&self.e_neu, &d, alpha, range)
            }
        }
    }

    pub fn to_tensor_file(&self) -> Result<TensorFile, WorldError> {
        let mut f = TensorFile::new();
        let d = self.cfg.latent_dim;
        let m = self.cfg.embed_dim;
        f.insert("world.identities", vec![self.identities.len(), d], self.identities.concat())?;
        f.insert("world.prototypes", vec![NUM_EXPRESSIONS, d], self.prototypes.concat())?;
        f.insert("world.e_neu", vec![m], self.e_neu.values().to_vec())?;
        let anchors: Vec<f64> = self.anchors.iter().flat_map(|a| a.values().iter().copied()).collect();
        f.insert("world.anchors", vec![NUM_EXPRESSIONS, m], anchors)?;
        let fp = &self.encoders.feature_proj;
        f.insert("world.feature_proj", vec![fp.rows, fp.cols], fp.data.clone())?;
        let ip = &self.encoders.id_proj;
        f.insert("world.id_proj", vec![ip.rows, ip.cols], ip.data.clone())?;
        Ok(f)
    }

    /// Restores a world saved by [`to_tensor_file`](Self::to_tensor_file); the
    /// config and registry are not stored in the file and must be supplied.
    pub fn from_tensor_file(
        f: &TensorFile,
        cfg: &SyntheticWorldConfig,
        registry: &ConfusingPairRegistry,
    ) -> Result<World, WorldError> {
        let d = cfg.latent_dim;
        let m = cfg.embed_dim;
        let rows = |data: &[f64], w: usize| data.chunks(w).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let identities = rows(f.get_shaped("world.identities", &[cfg.n_identities, d])?, d);
        let prototypes = rows(f.get_shaped("world.prototypes", &[NUM_EXPRESSIONS, d])?, d);
        let e_neu = Embedding::new(f.get_shaped("world.e_neu", &[m])?.to_vec())?;
        let anchors = rows(f.get_shaped("world.anchors", &[NUM_EXPRESSIONS, m])?, m)
            .into_iter()
            .map(Embedding::new)
            .collect::<Result<Vec<_>, _>>()?;
        let feature_proj = Matrix { rows: m, cols: d, data: f.get_shaped("world.feature_proj", &[m, d])?.to_vec() };
        let id_proj = Matrix {
            rows: cfg.id_dim,
            cols: d,
            data: f.get_shaped("world.id_proj", &[cfg.id_dim, d])?.to_vec(),
        };
        Ok(World {
            cfg: cfg.clone(),
            registry: registry.clone(),
            identities,
            prototypes,
            e_neu,
            anchors,
            encoders: FrozenEncoders { feature_proj, id_proj },
        })
    }
}

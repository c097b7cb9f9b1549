//! Acceptance suite: one verdict line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so every line is printed even when all
//! criteria pass.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use exprbench::affect::{ConfusingPairRegistry, ExpressionId, ExpressionPair};
use exprbench::config::RunConfig;
use exprbench::data::{mead_intensity, MeadLevel};
use exprbench::interp::{interpolate, residual_direction, AlphaRange, Embedding};
use exprbench::losses::{
    flow_matching_with_grad, identity_loss, identity_loss_with_grad, symmetric_contrastive, triplet_value,
    triplet_with_grad, flow_matching_loss, LossWeights, TripletConfig, TripletMode,
};
use exprbench::metrics::{bcr, build_confusion, cls, hes, report, AlphaSeries, EvalRecord, MetricReport};
use exprbench::trainer::{
    evaluate_synthetic, generate_world, objective, objective_with_grad, sample_batch, train,
    NetGenerator, Objective, SymmetricBatch, TrainMode, VelocityNet, World,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// 1. metric oracle suite

fn random_registry(rng: &mut ChaCha8Rng) -> ConfusingPairRegistry {
    let n_pairs = rng.random_range(1..=4);
    let mut pool = ExpressionId::TARGETS.to_vec();
    pool.shuffle(rng);
    let pairs = pool
        .chunks(2)
        .take(n_pairs)
        .map(|c| ExpressionPair::new(c[0], c[1]).unwrap())
        .collect();
    ConfusingPairRegistry::new(pairs).unwrap()
}

fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<EvalRecord> {
    let budget = rng.random_range(60..=1000);
    let hit_rate: f64 = rng.random_range(0.2..0.95);
    let mut out = Vec::new();
    let mut series = 0usize;
    while out.len() < budget {
        let target = if series < 12 { ExpressionId::TARGETS[series] } else { *ExpressionId::TARGETS.choose(rng).unwrap() };
        let n = rng.random_range(2..=8usize).min(budget - out.len()).max(2);
        let step = rng.random_range(0.05..0.2);
        for k in 0..n {
            let predicted = if rng.random_bool(hit_rate) { target } else { *ExpressionId::TARGETS.choose(rng).unwrap() };
            let n_sims = rng.random_range(0..=3usize);
            out.push(EvalRecord {
                sample_id: format!("s{series:04}"),
                target,
                alpha: k as f64 * step,
                predicted,
                s_e: rng.random_range(0.0..=1.0),
                id_sims: (0..n_sims).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            });
        }
        series += 1;
    }
    out
}

struct Brute {
    bcr: Vec<f64>,
    mscr: f64,
    acc12: f64,
    acc6: f64,
    id_sim: f64,
    hes: f64,
    cls12: f64,
    cls6: f64,
}

fn brute_rate(records: &[EvalRecord], i: ExpressionId, j: ExpressionId) -> f64 {
    let row: Vec<&EvalRecord> = records.iter().filter(|r| r.target == i).collect();
    row.iter().filter(|r| r.predicted == j).count() as f64 / row.len() as f64
}

/// Cosine of the mean-removed vectors.
fn centered_cosine(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let centre = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - m).collect::<Vec<f64>>()
    };
    let (cx, cy) = (centre(xs), centre(ys));
    let nx = cx.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ny = cy.iter().map(|y| y * y).sum::<f64>().sqrt();
    let dot: f64 = cx.iter().zip(&cy).map(|(x, y)| x * y).sum();
    (nx > 0.0 && ny > 0.0).then(|| dot / nx / ny)
}

fn brute_force(records: &[EvalRecord], registry: &ConfusingPairRegistry) -> Brute {
    let bcrs: Vec<f64> = registry
        .pairs()
        .iter()
        .map(|p| 0.5 * (brute_rate(records, p.first(), p.second()) + brute_rate(records, p.second(), p.first())))
        .collect();
    let mscr = bcrs.iter().sum::<f64>() / bcrs.len() as f64;
    let hits = |rs: &[&EvalRecord]| rs.iter().filter(|r| r.target == r.predicted).count() as f64 / rs.len() as f64;
    let all: Vec<&EvalRecord> = records.iter().collect();
    let basic: Vec<&EvalRecord> = records.iter().filter(|r| ExpressionId::BASIC.contains(&r.target)).collect();
    let with_id: Vec<&EvalRecord> = records.iter().filter(|r| !r.id_sims.is_empty()).collect();
    let mut id_sum = 0.0;
    let mut hes_sum = 0.0;
    for r in &with_id {
        let s = r.id_sims.iter().sum::<f64>() / r.id_sims.len() as f64;
        id_sum += s;
        let c = s.clamp(0.0, 1.0);
        hes_sum += if r.s_e + c == 0.0 { 0.0 } else { 2.0 * r.s_e * c / (r.s_e + c) };
    }
    let mut groups: BTreeMap<(String, u8), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.sample_id.clone(), r.target.code())).or_default();
        g.0.push(r.alpha);
        g.1.push(r.s_e);
    }
    let mean_r = |basic_only: bool| {
        let rs: Vec<f64> = groups
            .iter()
            .filter(|((_, code), _)| !basic_only || (1..=6).contains(code))
            .filter_map(|(_, (x, y))| centered_cosine(x, y))
            .collect();
        rs.iter().sum::<f64>() / rs.len() as f64
    };
    Brute {
        bcr: bcrs,
        mscr,
        acc12: hits(&all),
        acc6: hits(&basic),
        id_sim: id_sum / with_id.len() as f64,
        hes: hes_sum / with_id.len() as f64,
        cls12: mean_r(false),
        cls6: mean_r(true),
    }
}

fn criterion_1() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let registry = random_registry(&mut rng);
        let records = random_corpus(&mut rng);
        let rep = report(&records, &registry).expect("report");
        let cm = build_confusion(&records).unwrap();
        let b = brute_force(&records, &registry);
        for (p, want) in registry.pairs().iter().zip(&b.bcr) {
            worst = worst.max((bcr(&cm, p.first(), p.second()).unwrap() - want).abs());
        }
        let pairs = [
            (rep.mscr, b.mscr),
            (rep.acc12, b.acc12),
            (rep.acc6.unwrap(), b.acc6),
            (rep.id_sim.unwrap(), b.id_sim),
            (rep.hes.unwrap(), b.hes),
            (rep.cls12.unwrap(), b.cls12),
            (rep.cls6.unwrap(), b.cls6),
        ];
        for (got, want) in pairs {
            worst = worst.max((got - want).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(worst <= 1e-12 && secs < 30.0, format!("max |diff| {worst:.2e} over 100 corpora in {secs:.2}s"))
}

// ---------------------------------------------------------------------------
// 2. formula fixtures

fn collapse_fixture(registry: &ConfusingPairRegistry) -> Vec<EvalRecord> {
    let mut out = Vec::new();
    for (k, &t) in ExpressionId::TARGETS.iter().enumerate() {
        let predicted = registry
            .pairs()
            .iter()
            .find(|p| p.contains(t))
            .map(|p| p.first())
            .unwrap_or(t);
        for s in 0..4 {
            out.push(EvalRecord {
                sample_id: format!("c{k:02}-{s}"),
                target: t,
                alpha: 1.0,
                predicted,
                s_e: 0.9,
                id_sims: vec![0.65],
            });
        }
    }
    out
}

fn criterion_2() -> Verdict {
    let h = hes(0.8, 0.6).unwrap();
    let hes_ok = (h - 0.685714).abs() <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(0xacc2);
    let mut sym_ok = true;
    for _ in 0..50 {
        let cm = build_confusion(&random_corpus(&mut rng)).unwrap();
        for &i in &ExpressionId::TARGETS {
            for &j in &ExpressionId::TARGETS {
                sym_ok &= bcr(&cm, i, j).unwrap().to_bits() == bcr(&cm, j, i).unwrap().to_bits();
            }
        }
    }

    let registry = ConfusingPairRegistry::default();
    let collapsed = report(&collapse_fixture(&registry), &registry).unwrap();
    let collapse_ok = (collapsed.mscr - 0.5).abs() <= 1e-12;

    let alphas: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
    let line = AlphaSeries {
        key: "linear".into(),
        target: ExpressionId::Happy,
        points: alphas.iter().map(|&a| (a, 0.1 + 0.8 * a)).collect(),
    };
    let c = cls(&[line]).unwrap().cls;
    let cls_ok = c == 1.0;

    verdict(
        hes_ok && sym_ok && collapse_ok && cls_ok,
        format!("hes {h:.6}, BCR symmetric {sym_ok}, collapse mSCR {:.12}, linear CLS {c}", collapsed.mscr),
    )
}

// ---------------------------------------------------------------------------
// 3. constants and triplet identities

fn criterion_3() -> Verdict {
    let t = TripletConfig::default();
    let cfg = RunConfig::default();
    let consts_ok = t.tau == 0.07
        && t.margin == 0.2
        && t.epsilon == 1e-6
        && cfg.losses.tau == 0.07
        && cfg.losses.margin == 0.2
        && cfg.losses.epsilon == 1e-6
        && cfg.losses.lambda_sc == 1.0
        && cfg.losses.lambda_id == 0.1
        && cfg.training.beta1 == 0.9
        && cfg.training.beta2 == 0.999;

    let g = [0.3, -1.2, 0.5, 2.0];
    let p = [1.0, 0.1, -0.4, 0.7];
    let info = triplet_value(&g, &p, &p, &TripletConfig::with_mode(TripletMode::Infonce)).unwrap();
    let info_ok = (info - std::f64::consts::LN_2).abs() <= 1e-12;
    let lr = triplet_value(&g, &p, &p, &TripletConfig::with_mode(TripletMode::LogRatio)).unwrap();
    let lr_ok = lr == 0.0;
    let n = [0.0, 0.0, 0.0, 1.0];
    let near = [1.0, 0.0, 0.0, 0.0];
    let hinge = triplet_value(&near, &near, &n, &TripletConfig::with_mode(TripletMode::Hinge)).unwrap();
    let hinge_ok = hinge == 0.0;

    verdict(
        consts_ok && info_ok && lr_ok && hinge_ok,
        format!("defaults {consts_ok}, InfoNCE(sP=sN)-ln2 = {:.1e}, log-ratio {lr}, inactive hinge {hinge}", info - std::f64::consts::LN_2),
    )
}

// ---------------------------------------------------------------------------
// 4. gradient fidelity

const FD_H: f64 = 1e-5;

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

/// Central differences of `f` with respect to the concatenation of `inputs`.
fn numeric_grad(inputs: &[Vec<f64>], f: &dyn Fn(&[Vec<f64>]) -> f64) -> Vec<f64> {
    let mut work = inputs.to_vec();
    let mut out = Vec::new();
    for v in 0..inputs.len() {
        for i in 0..inputs[v].len() {
            let x = work[v][i];
            work[v][i] = x + FD_H;
            let up = f(&work);
            work[v][i] = x - FD_H;
            let down = f(&work);
            work[v][i] = x;
            out.push((up - down) / (2.0 * FD_H));
        }
    }
    out
}

fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn triplet_checks(mode: TripletMode, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let cfg = TripletConfig::with_mode(mode);
    let mut worst = 0.0f64;
    let mut n_ok = 0;
    while n_ok < 100 {
        let g = randn_vec(rng, 16);
        let p: Vec<f64> = g.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
        let n = randn_vec(rng, 16);
        if mode == TripletMode::Hinge {
            let arg = cos(&g, &n) - cos(&g, &p) + cfg.margin;
            if arg.abs() < 1e-3 {
                continue;
            }
        }
        let t = triplet_with_grad(&g, &p, &n, &cfg).unwrap();
        let analytic: Vec<f64> = [t.dg, t.dp, t.dn].concat();
        let numeric = numeric_grad(&[g, p, n], &|v| triplet_value(&v[0], &v[1], &v[2], &cfg).unwrap());
        worst = worst.max(rel_err(&analytic, &numeric));
        n_ok += 1;
    }
    (n_ok, worst)
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    d / (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

fn identity_checks(rng: &mut ChaCha8Rng) -> (usize, f64) {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let v: Vec<Vec<f64>> = (0..4).map(|_| randn_vec(rng, 6)).collect();
        let q = identity_loss_with_grad(&v[0], &v[1], &v[2], &v[3]).unwrap();
        let analytic = [q.dga, q.dpa, q.dgb, q.dpb].concat();
        let numeric = numeric_grad(&v, &|w| identity_loss(&w[0], &w[1], &w[2], &w[3]).unwrap());
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    (100, worst)
}

fn flow_checks(rng: &mut ChaCha8Rng) -> (usize, f64) {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let v: Vec<Vec<f64>> = (0..3).map(|_| randn_vec(rng, 8)).collect();
        let (_, dv, dx0, dx1) = flow_matching_with_grad(&v[0], &v[1], &v[2]).unwrap();
        let analytic = [dv, dx0, dx1].concat();
        let numeric = numeric_grad(&v, &|w| flow_matching_loss(&w[0], &w[1], &w[2]).unwrap());
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    (100, worst)
}

fn objective_checks(world: &World, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let setups = [
        (TrainMode::Symmetric, TripletMode::Infonce),
        (TrainMode::Asymmetric, TripletMode::Infonce),
        (TrainMode::Symmetric, TripletMode::LogRatio),
        (TrainMode::Asymmetric, TripletMode::LogRatio),
    ];
    let mut worst = 0.0f64;
    for k in 0..100 {
        let (mode, tmode) = setups[k % setups.len()];
        let obj = Objective {
            world,
            weights: LossWeights::default(),
            triplet: TripletConfig::with_mode(tmode),
            mode,
            alpha_range: AlphaRange::default(),
        };
        let net = VelocityNet::new(world.latent_dim(), world.embed_dim(), 16, rng.random());
        let units: Vec<SymmetricBatch> = (0..2).map(|_| sample_batch(world, rng)).collect();
        let (_, analytic) = objective_with_grad(&net, &units, &obj).unwrap();
        let params = vec![net.params().to_vec()];
        let numeric = numeric_grad(&params, &|p| {
            let mut n = net.clone();
            n.params_mut().copy_from_slice(&p[0]);
            objective(&n, &units, &obj).unwrap().total
        });
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    (100, worst)
}

fn criterion_4(world: &World) -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc4);
    let results = [
        ("hinge", triplet_checks(TripletMode::Hinge, &mut rng)),
        ("log-ratio", triplet_checks(TripletMode::LogRatio, &mut rng)),
        ("infonce", triplet_checks(TripletMode::Infonce, &mut rng)),
        ("L_ID", identity_checks(&mut rng)),
        ("L_FM", flow_checks(&mut rng)),
        ("objective", objective_checks(world, &mut rng)),
    ];
    let secs = t0.elapsed().as_secs_f64();
    let pass = results.iter().all(|(_, (n, e))| *n >= 100 && *e < 1e-4) && secs < 60.0;
    let detail = results.iter().map(|(name, (_, e))| format!("{name} {e:.1e}")).collect::<Vec<_>>().join(", ");
    verdict(pass, format!("max rel err: {detail}; {secs:.1}s"))
}

// ---------------------------------------------------------------------------
// 5. interpolation exactness

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc5);
    let range = AlphaRange::default();
    let mut endpoint = 0.0f64;
    let mut affine = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(1..=32);
        let e_neu = Embedding::new(randn_vec(&mut rng, dim).iter().map(|x| 3.0 * x).collect()).unwrap();
        let e_tgt = Embedding::new(randn_vec(&mut rng, dim).iter().map(|x| 3.0 * x).collect()).unwrap();
        let d = residual_direction(&e_neu, &e_tgt).unwrap();
        let at0 = interpolate(&e_neu, &d, 0.0, range).unwrap();
        let at1 = interpolate(&e_neu, &d, 1.0, range).unwrap();
        for i in 0..dim {
            endpoint = endpoint.max((at0.values()[i] - e_neu.values()[i]).abs());
            endpoint = endpoint.max((at1.values()[i] - e_tgt.values()[i]).abs());
        }
        let a = rng.random_range(0.0..=1.5);
        let b = rng.random_range(0.0..=1.5);
        let lam: f64 = rng.random_range(0.0..=1.0);
        let mixed = interpolate(&e_neu, &d, lam * a + (1.0 - lam) * b, range).unwrap();
        let ea = interpolate(&e_neu, &d, a, range).unwrap();
        let eb = interpolate(&e_neu, &d, b, range).unwrap();
        for i in 0..dim {
            let rhs = lam * ea.values()[i] + (1.0 - lam) * eb.values()[i];
            affine = affine.max((mixed.values()[i] - rhs).abs());
        }
    }
    verdict(endpoint <= 1e-12 && affine <= 1e-12, format!("endpoint err {endpoint:.1e}, affine err {affine:.1e} over 1000 draws"))
}

// ---------------------------------------------------------------------------
// 6. swap symmetry

fn criterion_6(world: &World) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc6);
    let mut sc_ok = 0;
    let mut total_ok = 0;
    let modes = [TripletMode::Hinge, TripletMode::LogRatio, TripletMode::Infonce];
    for k in 0..100 {
        let cfg = TripletConfig::with_mode(modes[k % 3]);
        let v: Vec<Vec<f64>> = (0..4).map(|_| randn_vec(&mut rng, 16)).collect();
        let fwd = symmetric_contrastive(&v[0], &v[1], &v[2], &v[3], &cfg).unwrap();
        let rev = symmetric_contrastive(&v[2], &v[3], &v[0], &v[1], &cfg).unwrap();
        sc_ok += usize::from(fwd.to_bits() == rev.to_bits());

        let obj = Objective { world, weights: LossWeights::default(), triplet: cfg, mode: TrainMode::Symmetric, alpha_range: AlphaRange::default() };
        let net = VelocityNet::new(world.latent_dim(), world.embed_dim(), 64, k as u64);
        let units: Vec<SymmetricBatch> = (0..4).map(|_| sample_batch(world, &mut rng)).collect();
        let swapped: Vec<SymmetricBatch> = units.iter().map(SymmetricBatch::swapped).collect();
        let a = objective(&net, &units, &obj).unwrap().total;
        let b = objective(&net, &swapped, &obj).unwrap().total;
        total_ok += usize::from(a.to_bits() == b.to_bits());
    }
    verdict(sc_ok == 100 && total_ok == 100, format!("L_SC exact on {sc_ok}/100, L_total exact on {total_ok}/100"))
}

// ---------------------------------------------------------------------------
// 7 and 8. desk training

struct SeedRuns {
    untrained: MetricReport,
    full: MetricReport,
    asym: MetricReport,
    no_id: MetricReport,
    no_sc: MetricReport,
}

fn run_seed(seed: u64) -> SeedRuns {
    let mut cfg = RunConfig::default();
    cfg.world.seed = seed;
    cfg.training.seed = seed;
    let world = generate_world(&cfg.world, &cfg.eval.registry).unwrap();
    let settings = cfg.eval.settings();
    let trip = cfg.losses.triplet();
    let eval = |net: &VelocityNet| evaluate_synthetic(&NetGenerator(net), &world, &settings).unwrap().report;
    let fit = |mode: TrainMode, weights: LossWeights| {
        let mut tc = cfg.training.clone();
        tc.mode = mode;
        eval(&train(&world, &tc, weights, trip, &settings).unwrap().net)
    };
    let w = cfg.losses.weights();
    SeedRuns {
        untrained: eval(&VelocityNet::new(world.latent_dim(), world.embed_dim(), cfg.training.hidden, seed)),
        full: fit(TrainMode::Symmetric, w),
        asym: fit(TrainMode::Asymmetric, w),
        no_id: fit(TrainMode::Symmetric, LossWeights { lambda_id: 0.0, ..w }),
        no_sc: fit(TrainMode::Symmetric, LossWeights { lambda_sc: 0.0, ..w }),
    }
}

fn criterion_7(runs: &[SeedRuns], secs: f64) -> Verdict {
    let mut efficacy = 0;
    let mut sym_wins = 0;
    let mut lines = Vec::new();
    for r in runs {
        let cls = r.full.cls12.unwrap_or(f64::NAN);
        let un = r.untrained.cls12.unwrap_or(0.0);
        efficacy += usize::from(cls >= 0.9 && r.full.mscr <= 0.1 && un.abs() < 0.3);
        sym_wins += usize::from(r.full.mscr <= r.asym.mscr);
        lines.push(format!("CLS {cls:.3}/mSCR {:.3}/untrained {un:.3}/asym {:.3}", r.full.mscr, r.asym.mscr));
    }
    let pass = efficacy == runs.len() && sym_wins >= 4 && secs < 600.0;
    verdict(pass, format!("efficacy {efficacy}/5, sym<=asym {sym_wins}/5, {secs:.0}s [{}]", lines.join("; ")))
}

fn criterion_8(runs: &[SeedRuns]) -> Verdict {
    let id_lower = runs.iter().filter(|r| r.no_id.id_sim.unwrap() < r.full.id_sim.unwrap()).count();
    let sc_higher = runs.iter().filter(|r| r.no_sc.mscr > r.full.mscr).count();
    let d_id: Vec<String> = runs.iter().map(|r| format!("{:+.1e}", r.full.id_sim.unwrap() - r.no_id.id_sim.unwrap())).collect();
    verdict(
        id_lower >= 4 && sc_higher >= 4,
        format!("lambda_id=0 lowers ID-Sim on {id_lower}/5 (full minus ablated: {}), lambda_sc=0 raises mSCR on {sc_higher}/5", d_id.join(" ")),
    )
}

// ---------------------------------------------------------------------------
// 9. MEAD adapter

fn criterion_9() -> Verdict {
    let got: Vec<f64> = ["low", "medium", "high"].iter().map(|s| mead_intensity(s.parse::<MeadLevel>().unwrap())).collect();
    let pass = got == [0.5, 0.75, 1.0] && mead_intensity(MeadLevel::Low) == 0.5;
    verdict(pass, format!("low/medium/high -> {got:?}"))
}

// ---------------------------------------------------------------------------
// 10. CLI determinism

fn run_cli(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_exprbench")).args(args).env_remove("EXPRBENCH_CONFIG").output().expect("spawn cli");
    out.status.code().unwrap_or(-1)
}

fn dir_snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn criterion_10() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacca);
    let corpus = random_corpus(&mut rng);
    let body: String = corpus.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    let preds = root.join("preds.jsonl");
    std::fs::write(&preds, body).unwrap();

    let mut same = BTreeSet::new();
    let mut codes = Vec::new();
    for (name, base) in [("eval", vec!["--deterministic", "eval", preds.to_str().unwrap()]), ("train-toy", vec!["--deterministic", "train-toy", "--seed", "7"])] {
        let mut snaps = Vec::new();
        for run in 0..2usize {
            let out = root.join(name);
            if run > 0 {
                std::fs::remove_dir_all(&out).unwrap();
            }
            let mut args = base.clone();
            let out_s = out.to_string_lossy().into_owned();
            args.extend(["--out", out_s.as_str()]);
            codes.push(run_cli(&args));
            snaps.push(if out.is_dir() { dir_snapshot(&out) } else { BTreeMap::new() });
        }
        if snaps[0] == snaps[1] && !snaps[0].is_empty() {
            same.insert(name);
        }
    }
    let pass = same.len() == 2 && codes.iter().all(|&c| c == 0);
    verdict(pass, format!("byte-identical: {same:?}, exit codes {codes:?}"))
}

fn main() {
    let world = generate_world(&RunConfig::default().world, &ConfusingPairRegistry::default()).unwrap();
    let mut all = Vec::new();
    let mut report_line = |n: usize, name: &str, v: Verdict| {
        println!("criterion {n:>2} {:<6} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        all.push(v.pass);
    };
    report_line(1, "metric oracle suite", criterion_1());
    report_line(2, "formula fixtures", criterion_2());
    report_line(3, "constants and triplet identities", criterion_3());
    report_line(4, "gradient fidelity", criterion_4(&world));
    report_line(5, "interpolation exactness", criterion_5());
    report_line(6, "swap symmetry", criterion_6(&world));
    let t0 = Instant::now();
    let runs: Vec<SeedRuns> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..5u64).map(|seed| s.spawn(move || run_seed(seed))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let secs = t0.elapsed().as_secs_f64();
    report_line(7, "desk training efficacy", criterion_7(&runs, secs));
    report_line(8, "ablation directionality", criterion_8(&runs));
    report_line(9, "MEAD adapter", criterion_9());
    report_line(10, "pipeline determinism", criterion_10());
    let failed = all.iter().filter(|p| !**p).count();
    println!("acceptance: {}/{} criteria passed", all.len() - failed, all.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

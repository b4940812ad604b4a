//! Acceptance gate. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use modbal_core::backbone::{
    backward, bridge_value, forward_batch, gradient_bridge, score_full, CheckpointMeta, ModelParams, ModelShape,
    Upstream,
};
use modbal_core::counterfactual::reweight;
use modbal_core::data::{save_dataset, synth_generate, SynthConfig};
use modbal_core::diagnostics::{run_bridge_experiment, run_pilot, BridgeConfig, PilotResult};
use modbal_core::eval::{evaluate, ndcg_at_k, precision_at_k, rank_scores, recall_at_k, Channel, Split};
use modbal_core::losses::{bpr_loss, generic_distill, sd_variant_kl, sd_variant_mse, specific_distill, SdVariant};
use modbal_core::trainer::{l2_penalty, train_backbone, train_student, train_teacher, FileMonitor, NoMonitor, TrainConfig};
use modbal_core::{InteractionData, Matrix, ModalityFeatures, ModalitySet, Triple, TripleBatch, TripleKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

// ---------------------------------------------------------------------------
// Random small instances

fn random_instance(rng: &mut ChaCha8Rng, n_users: usize, n_items: usize, dim: usize, dm: &[usize]) -> (ModelParams, Vec<ModalityFeatures>) {
    let features: Vec<ModalityFeatures> = dm
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let data = (0..n_items * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            ModalityFeatures::new(["textual", "visual", "acoustic"][k], Matrix::from_vec(n_items, d, data)).unwrap()
        })
        .collect();
    let shape = ModelShape::new(n_users, n_items, dim, &features);
    let mut params = ModelParams::zeros(&shape);
    for (_, t) in params.tensors_mut() {
        for x in t.as_mut_slice() {
            *x = rng.random_range(-0.5..0.5);
        }
    }
    (params, features)
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, n_users: usize, n_items: usize, kind: TripleKind) -> TripleBatch {
    TripleBatch {
        triples: (0..n)
            .map(|_| {
                let pos = rng.random_range(0..n_items);
                let mut neg = rng.random_range(0..n_items);
                while neg == pos {
                    neg = rng.random_range(0..n_items);
                }
                Triple::new(rng.random_range(0..n_users), pos, neg)
            })
            .collect(),
        kind,
    }
}

// ---------------------------------------------------------------------------
// 1. Gradient-bridge identity

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_err = 0.0f64;
    let mut identical = true;
    for _ in 0..1000 {
        let (p, f) = random_instance(&mut rng, 5, 8, 4, &[6, 6]);
        let t = random_batch(&mut rng, 1, 5, 8, TripleKind::Bpr).triples[0];
        let c = gradient_bridge(&p, &f, t, 1e-5).unwrap();
        identical &= c.closed_form[0].to_bits() == c.closed_form[1].to_bits();
        for (a, b) in c.closed_form.iter().zip(&c.finite_difference) {
            max_err = max_err.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        identical && max_err <= 1e-6 && within(elapsed, 5),
        format!("1000 instances, closed forms bit-identical: {identical}, max |closed - fd| = {max_err:.2e}, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients against central finite differences

/// Loss value and accumulated analytic gradient for one objective.
type Objective<'a> = dyn Fn(&ModelParams, Option<&mut ModelParams>) -> f64 + 'a;

/// `|a - n| / max(|a|, |n|, 1e-4)`, maximized over every parameter entry.
fn max_rel_error(p: &ModelParams, obj: &Objective<'_>, h: f64) -> f64 {
    let mut g = ModelParams::zeros(&p.shape);
    obj(p, Some(&mut g));
    let mut worst = 0.0f64;
    let n_tensors = p.tensors().len();
    let mut q = p.clone();
    for k in 0..n_tensors {
        let len = p.tensors()[k].1.as_slice().len();
        for idx in 0..len {
            let x0 = p.tensors()[k].1.as_slice()[idx];
            q.tensors_mut()[k].1.as_mut_slice()[idx] = x0 + h;
            let up = obj(&q, None);
            q.tensors_mut()[k].1.as_mut_slice()[idx] = x0 - h;
            let down = obj(&q, None);
            q.tensors_mut()[k].1.as_mut_slice()[idx] = x0;
            let fd = (up - down) / (2.0 * h);
            let an = g.tensors()[k].1.as_slice()[idx];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-4));
        }
    }
    worst
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let names = ["bpr", "sd-hinge", "gd", "sd-kl", "sd-mse", "l2", "combined"];
    let mut worst = vec![0.0f64; names.len()];
    for _ in 0..100 {
        let (p, f) = random_instance(&mut rng, 8, 12, 4, &[6, 6]);
        let n_mod = 2;
        let all = ModalitySet::all(n_mod);
        let batch = random_batch(&mut rng, 10, 8, 12, TripleKind::Bpr);
        let generic = random_batch(&mut rng, 10, 8, 12, TripleKind::Generic);
        let tau = [0.1, 0.5, 1.0][rng.random_range(0..3)];
        let base = forward_batch(&p, &f, &batch).unwrap();
        // Teacher margins at least 1e-2 away from the student's so the hinge
        // stays differentiable under the h = 1e-5 perturbations.
        let teacher: Vec<Vec<f64>> = (0..n_mod)
            .map(|m| {
                base.delta_masked[m]
                    .iter()
                    .map(|s| {
                        let off: f64 = rng.random_range(0.01..1.0);
                        if rng.random_bool(0.5) { s + off } else { s - off }
                    })
                    .collect()
            })
            .collect();
        let teacher_generic: Vec<Vec<f64>> = (0..n_mod)
            .map(|_| (0..generic.len()).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let weights = [0.3, 0.7];
        let (lambda_kd, lambda_g, l2) = (0.4, 0.6, 0.05);

        let per_modality = |loss: &dyn Fn(&[f64], &[f64]) -> modbal_core::losses::LossGrad,
                            triples: &TripleBatch,
                            targets: &[Vec<f64>],
                            scale: &dyn Fn(usize) -> f64,
                            q: &ModelParams,
                            g: Option<&mut ModelParams>|
         -> f64 {
            let fw = forward_batch(q, &f, triples).unwrap();
            let mut value = 0.0;
            let mut grads = Vec::new();
            for m in 0..n_mod {
                let l = loss(&targets[m], &fw.delta_masked[m]);
                value += scale(m) * l.value;
                grads.push(l.grad.iter().map(|x| scale(m) * x).collect::<Vec<f64>>());
            }
            if let Some(g) = g {
                let ups: Vec<Upstream> = grads
                    .iter()
                    .enumerate()
                    .map(|(m, gr)| Upstream {
                        keep: ModalitySet::only(m),
                        grad: gr,
                    })
                    .collect();
                backward(q, &f, triples, &fw, &ups, g).unwrap();
            }
            value
        };
        let one = |_: usize| 1.0;
        let bpr = |q: &ModelParams, g: Option<&mut ModelParams>| {
            let fw = forward_batch(q, &f, &batch).unwrap();
            let l = bpr_loss(&fw.delta_full);
            if let Some(g) = g {
                backward(q, &f, &batch, &fw, &[Upstream { keep: all, grad: &l.grad }], g).unwrap();
            }
            l.value
        };
        let hinge = |q: &ModelParams, g: Option<&mut ModelParams>| {
            per_modality(&|t, s| specific_distill(t, s), &batch, &teacher, &one, q, g)
        };
        let gd = |q: &ModelParams, g: Option<&mut ModelParams>| {
            per_modality(&|t, s| generic_distill(t, s, tau), &generic, &teacher_generic, &one, q, g)
        };
        let kl = |q: &ModelParams, g: Option<&mut ModelParams>| {
            per_modality(&|t, s| sd_variant_kl(t, s, tau), &batch, &teacher, &one, q, g)
        };
        let mse = |q: &ModelParams, g: Option<&mut ModelParams>| {
            per_modality(&|t, s| sd_variant_mse(t, s), &batch, &teacher, &one, q, g)
        };
        let l2f = |q: &ModelParams, g: Option<&mut ModelParams>| match g {
            Some(g) => l2_penalty(q, &batch, all, l2, g),
            None => l2_penalty(q, &batch, all, l2, &mut ModelParams::zeros(&q.shape)),
        };
        let combined = |q: &ModelParams, mut g: Option<&mut ModelParams>| {
            let sd_scale = |m: usize| lambda_kd * weights[m];
            let gd_scale = |m: usize| lambda_kd * weights[m] * lambda_g;
            let mut v = bpr(q, g.as_deref_mut());
            v += per_modality(&|t, s| SdVariant::Hinge.apply(t, s, tau), &batch, &teacher, &sd_scale, q, g.as_deref_mut());
            v += per_modality(&|t, s| generic_distill(t, s, tau), &generic, &teacher_generic, &gd_scale, q, g.as_deref_mut());
            v + l2f(q, g)
        };
        let objectives: [&Objective<'_>; 7] = [&bpr, &hinge, &gd, &kl, &mse, &l2f, &combined];
        for (w, obj) in worst.iter_mut().zip(objectives) {
            *w = w.max(max_rel_error(&p, obj, 1e-5));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst.iter().all(|&w| w <= 1e-4) && within(elapsed, 30);
    let detail = names
        .iter()
        .zip(&worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("100 instances, max relative error: {detail}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// 3. Loss oracles

fn criterion_3() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let bpr = bpr_loss(&[0.0]).value;
    let gd = generic_distill(&[0.0], &[0.0], 1.0).value;
    let sd = specific_distill(&[0.7], &[0.5]).value;
    let w = reweight(&[0.2, 0.6]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_sum = 0.0f64;
    for _ in 0..10_000 {
        let m = rng.random_range(2..6);
        let rho: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..5.0)).collect();
        let lam = reweight(&rho).unwrap();
        worst_sum = worst_sum.max((lam.iter().sum::<f64>() - (m as f64 - 1.0)).abs());
    }
    // 0.7 - 0.5 is exact in binary floating point (Sterbenz); the hinge must
    // return precisely that difference.
    let pass = (bpr - ln2).abs() <= 1e-12
        && (gd - ln2).abs() <= 1e-12
        && sd == 0.7 - 0.5
        && w == [0.75, 0.25]
        && worst_sum <= 1e-9;
    outcome(
        pass,
        format!(
            "bpr(0) - ln2 = {:.1e}, gd(0,0,1) - ln2 = {:.1e}, sd(0.7,0.5) = {sd:?}, reweight(0.2,0.6) = {w:?}, max |Σλ - (M-1)| = {worst_sum:.1e}",
            bpr - ln2,
            gd - ln2
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Margin decomposition

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_sum = 0.0f64;
    let mut worst_scores = 0.0f64;
    for _ in 0..10_000 {
        let n_mod = rng.random_range(1..4);
        let dm: Vec<usize> = (0..n_mod).map(|_| rng.random_range(1..8)).collect();
        let dim = rng.random_range(1..6);
        let (p, f) = random_instance(&mut rng, 4, 6, dim, &dm);
        let batch = random_batch(&mut rng, 1, 4, 6, TripleKind::Bpr);
        let fw = forward_batch(&p, &f, &batch).unwrap();
        let s: f64 = fw.modality_scores.iter().map(|v| v[0]).sum();
        worst_sum = worst_sum.max((fw.delta_full[0] - fw.id_margin[0] - s).abs());
        let t = batch.triples[0];
        let direct = score_full(&p, &f, t.user, t.pos).unwrap() - score_full(&p, &f, t.user, t.neg).unwrap();
        worst_scores = worst_scores.max((fw.delta_full[0] - direct).abs());
    }
    outcome(
        worst_sum <= 1e-9 && worst_scores <= 1e-9,
        format!("10^4 instances, max |Δ - id - ΣS| = {worst_sum:.1e}, max |Δ - (score_i - score_j)| = {worst_scores:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Metric oracles

fn brute_metrics(ranking: &[usize], test: &[usize], k: usize) -> (f64, f64, f64) {
    let top = &ranking[..k.min(ranking.len())];
    let rel: Vec<f64> = top.iter().map(|i| if test.contains(i) { 1.0 } else { 0.0 }).collect();
    let hits: f64 = rel.iter().sum();
    let dcg: f64 = rel.iter().enumerate().map(|(r, g)| g / ((r + 2) as f64).log2()).sum();
    let mut ideal = vec![1.0; test.len()];
    ideal.resize(k.max(test.len()), 0.0);
    let idcg: f64 = ideal[..k].iter().enumerate().map(|(r, g)| g / ((r + 2) as f64).log2()).sum();
    (hits / test.len() as f64, hits / k as f64, dcg / idcg)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..60);
        let mut ranking: Vec<usize> = (0..n).collect();
        ranking.shuffle(&mut rng);
        let k = rng.random_range(1..30);
        let n_test = rng.random_range(1..=n.min(10));
        let mut test: Vec<usize> = (0..n).collect();
        test.shuffle(&mut rng);
        test.truncate(n_test);
        test.sort_unstable();
        let top = &ranking[..k.min(n)];
        let (r, p, g) = brute_metrics(&ranking, &test, k);
        if recall_at_k(top, &test) != r || precision_at_k(top, &test, k) != p || ndcg_at_k(top, &test, k) != g {
            mismatches += 1;
        }
    }

    // evaluate() against a per-user brute force over a random model.
    let (p, f) = random_instance(&mut rng, 12, 30, 3, &[4, 5]);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for u in 0..12 {
        let mut items: Vec<usize> = (0..30).collect();
        items.shuffle(&mut rng);
        train.push(items[..6].to_vec());
        val.push(if u % 4 == 0 { Vec::new() } else { items[6..8].to_vec() });
        test.push(items[8..8 + 1 + u % 3].to_vec());
    }
    let ids = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    let data = InteractionData::new(ids("u", 12), ids("i", 30), train, val, test).unwrap();
    let mut eval_mismatch = 0;
    for split in [Split::Val, Split::Test] {
        for keep_channel in Channel::all(2) {
            let rep = evaluate(&p, &f, &data, split, 5, &[keep_channel]).unwrap();
            let (mut sr, mut sp, mut sn, mut users) = (0.0, 0.0, 0.0, 0);
            for u in 0..12 {
                let held = if split == Split::Val { &data.val[u] } else { &data.test[u] };
                if held.is_empty() {
                    continue;
                }
                let keep = keep_channel.keep(2);
                let mut candidates: Vec<(f64, usize)> = (0..30)
                    .filter(|i| !data.train[u].contains(i) && (split == Split::Val || !data.val[u].contains(i)))
                    .map(|i| (modbal_core::backbone::score_masked(&p, &f, u, i, keep).unwrap(), i))
                    .collect();
                candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                let ranking: Vec<usize> = candidates.iter().map(|c| c.1).collect();
                let (r, pr, n) = brute_metrics(&ranking, held, 5);
                sr += r;
                sp += pr;
                sn += n;
                users += 1;
            }
            let u = users as f64;
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
            if rep.n_users_evaluated != users || !close(rep.recall, sr / u) || !close(rep.precision, sp / u) || !close(rep.ndcg, sn / u) {
                eval_mismatch += 1;
            }
        }
    }
    let single = ndcg_at_k(&[1, 4], &[4], 2);
    let target = 1.0 / 3f64.log2();
    // Scores 0.1, 0.9, 0.5 with k = 2 rank items 1 then 2.
    let small = rank_scores(&[0.1, 0.9, 0.5], &[], 2).items;
    outcome(
        mismatches == 0 && eval_mismatch == 0 && (single - target).abs() <= 1e-12 && small == [1, 2],
        format!(
            "500 fuzzed rankings, {mismatches} mismatches; evaluate vs per-user brute force: {eval_mismatch} mismatches over 6 split/channel pairs; NDCG rank-1 hit = {single:.15} (1/log2 3 = {target:.15})"
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. λ_kd = 0 degenerates to the backbone

fn small_synth(seed: u64) -> (InteractionData, Vec<ModalityFeatures>) {
    let mut sc = SynthConfig::two_modality(40, 60, 0.9, 0.2, seed);
    sc.interactions_per_user = 8;
    synth_generate(&sc).unwrap()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 8,
        lr: 0.01,
        batch_size: 64,
        max_epochs: 5,
        seed,
        ..TrainConfig::default()
    }
}

fn criterion_6() -> Outcome {
    let (data, f) = small_synth(6);
    let mut cfg = small_config(6);
    let teachers: Vec<ModelParams> = (0..2)
        .map(|m| train_teacher(&data, &f, m, &cfg, &mut NoMonitor).unwrap().params)
        .collect();
    cfg.loss.lambda_kd = 0.0;
    let meta = CheckpointMeta {
        seed: 6,
        info: serde_json::Value::Null,
    };
    let student = train_student(&data, &f, &teachers, &cfg, &mut NoMonitor).unwrap();
    let base = train_backbone(&data, &f, &cfg, &mut NoMonitor).unwrap();
    let a = student.params.to_bytes(&meta).unwrap();
    let b = base.params.to_bytes(&meta).unwrap();
    outcome(
        a == b,
        format!("{} checkpoint bytes, identical: {}, best epochs {} / {}", a.len(), a == b, student.best_epoch, base.best_epoch),
    )
}

// ---------------------------------------------------------------------------
// 7-9. Synthetic imbalance experiments
//
// Pinned setup: 200 users, 300 items, 20 interactions per user, latent dim 8,
// 16-dim features for each modality with signal fractions 0.9 (textual) and
// 0.2 (visual), noise 1.0. Model d = 16, Adam lr 0.01, batch 256, L2 1e-4,
// λ_kd = 0.1, λ_g = 0.1, τ = 0.1, patience 10, at most 300 epochs. Seeds 0, 1, 2.

const STRONG: &str = "textual";
const WEAK: &str = "visual";

fn imbalance_data(seed: u64) -> (InteractionData, Vec<ModalityFeatures>) {
    let mut sc = SynthConfig::two_modality(200, 300, 0.9, 0.2, seed);
    sc.latent_dim = 8;
    sc.feature_dim = 16;
    sc.noise_scale = 1.0;
    sc.interactions_per_user = 20;
    synth_generate(&sc).unwrap()
}

fn imbalance_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        dim: 16,
        lr: 0.01,
        batch_size: 256,
        l2_coeff: 1e-4,
        max_epochs: 300,
        patience: 10,
        eval_k: 20,
        seed,
        ..TrainConfig::default()
    };
    c.loss.lambda_kd = 0.1;
    c.loss.lambda_g = 0.1;
    c.loss.tau = 0.1;
    c
}

struct SeedRun {
    seed: u64,
    pilot: PilotResult,
    pilot_time: Duration,
    /// Test-split Recall@20 per channel label.
    baseline: Vec<(String, f64)>,
    ckd: Vec<(String, f64)>,
    ckd_time: Duration,
    no_generic: f64,
    no_reweight: f64,
    ablation_time: Duration,
}

fn recall_of(v: &[(String, f64)], label: &str) -> f64 {
    v.iter().find(|(l, _)| l == label).unwrap().1
}

fn run_seed(seed: u64) -> SeedRun {
    let (data, f) = imbalance_data(seed);
    let cfg = imbalance_config(seed);
    let t0 = Instant::now();
    let pilot = run_pilot(&data, &f, &cfg).unwrap();
    let pilot_time = t0.elapsed();
    let teachers: Vec<ModelParams> = pilot.teachers.iter().map(|t| t.params.clone()).collect();
    let channels = Channel::all(2);
    let test_recall = |p: &ModelParams| -> Vec<(String, f64)> {
        evaluate(p, &f, &data, Split::Test, 20, &channels)
            .unwrap()
            .per_channel
            .into_iter()
            .map(|c| (c.channel, c.metrics.recall))
            .collect()
    };
    let baseline = test_recall(&pilot.joint.params);
    let t1 = Instant::now();
    let ckd = test_recall(&train_student(&data, &f, &teachers, &cfg, &mut NoMonitor).unwrap().params);
    let ckd_time = t1.elapsed();
    let t2 = Instant::now();
    let no_gen_cfg = TrainConfig {
        enable_generic: false,
        ..cfg.clone()
    };
    let no_rw_cfg = TrainConfig {
        enable_reweight: false,
        ..cfg.clone()
    };
    let no_generic = recall_of(&test_recall(&train_student(&data, &f, &teachers, &no_gen_cfg, &mut NoMonitor).unwrap().params), "full");
    let no_reweight = recall_of(&test_recall(&train_student(&data, &f, &teachers, &no_rw_cfg, &mut NoMonitor).unwrap().params), "full");
    SeedRun {
        seed,
        pilot,
        pilot_time,
        baseline,
        ckd,
        ckd_time,
        no_generic,
        no_reweight,
        ablation_time: t2.elapsed(),
    }
}

fn criterion_7(runs: &[SeedRun]) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in runs {
        let joint = r.pilot.trace.run("multimodal").unwrap().at_best(WEAK).unwrap();
        let weak_only = r.pilot.trace.run(&format!("{WEAK}-only")).unwrap().at_best(WEAK).unwrap();
        let strong_joint = r.pilot.trace.run("multimodal").unwrap().at_best(STRONG).unwrap();
        let strong_only = r.pilot.trace.run(&format!("{STRONG}-only")).unwrap().at_best(STRONG).unwrap();
        wins += usize::from(joint < weak_only);
        parts.push(format!(
            "seed {}: weak joint {joint:.4} vs weak-only {weak_only:.4} (strong {strong_joint:.4} vs {strong_only:.4})",
            r.seed
        ));
    }
    let elapsed: Duration = runs.iter().map(|r| r.pilot_time).sum();
    outcome(
        wins >= 2 && within(elapsed, 300),
        format!("{wins}/3 seeds; {}; {elapsed:.1?}", parts.join("; ")),
    )
}

fn criterion_8(runs: &[SeedRun]) -> Outcome {
    let mut full_wins = 0;
    let mut weak_wins = 0;
    let mut parts = Vec::new();
    for r in runs {
        let (bf, bw) = (recall_of(&r.baseline, "full"), recall_of(&r.baseline, WEAK));
        let (cf, cw) = (recall_of(&r.ckd, "full"), recall_of(&r.ckd, WEAK));
        full_wins += usize::from(cf >= bf);
        weak_wins += usize::from(cw > bw);
        parts.push(format!("seed {}: full {bf:.4} -> {cf:.4}, weak {bw:.4} -> {cw:.4}", r.seed));
    }
    let elapsed: Duration = runs.iter().map(|r| r.pilot_time + r.ckd_time).sum();
    outcome(
        full_wins >= 2 && weak_wins >= 2 && within(elapsed, 600),
        format!("test Recall@20, full >= baseline on {full_wins}/3, weak > baseline on {weak_wins}/3; {}; {elapsed:.1?}", parts.join("; ")),
    )
}

fn criterion_9(runs: &[SeedRun]) -> Outcome {
    let mut gen_wins = 0;
    let mut rw_wins = 0;
    let mut parts = Vec::new();
    for r in runs {
        let full = recall_of(&r.ckd, "full");
        gen_wins += usize::from(full >= r.no_generic);
        rw_wins += usize::from(full >= r.no_reweight);
        parts.push(format!("seed {}: full {full:.4}, w/o Gen {:.4}, w/o re-weight {:.4}", r.seed, r.no_generic, r.no_reweight));
    }
    let mean = |f: &dyn Fn(&SeedRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let elapsed: Duration = runs.iter().map(|r| r.ablation_time).sum();
    outcome(
        gen_wins >= 2 && rw_wins >= 2,
        format!(
            "test Recall@20, full >= w/o Gen on {gen_wins}/3, >= w/o re-weight on {rw_wins}/3; means {:.4} / {:.4} / {:.4}; {}; {elapsed:.1?}",
            mean(&|r| recall_of(&r.ckd, "full")),
            mean(&|r| r.no_generic),
            mean(&|r| r.no_reweight),
            parts.join("; ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. Update suppression

fn criterion_10() -> Outcome {
    let start = Instant::now();
    // Modality 0 (textual) features scaled 10x; modality 1 (visual) is the weak one.
    let joint_cfg = BridgeConfig {
        feature_scale: vec![10.0, 1.0],
        steps: 200,
        ..BridgeConfig::default()
    };
    let solo_cfg = BridgeConfig {
        ablated: vec![0],
        ..joint_cfg.clone()
    };
    let joint = run_bridge_experiment(&joint_cfg).unwrap();
    let solo = run_bridge_experiment(&solo_cfg).unwrap();
    let last = 199;
    let (jn, sn) = (joint.steps[last].update_norm[1], solo.steps[last].update_norm[1]);
    let shared = joint.steps.iter().all(|s| s.bridge[0].to_bits() == s.bridge[1].to_bits());
    // The shared factor as a function of the total margin.
    let margins: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.05).collect();
    let decreasing = margins.windows(2).all(|w| bridge_value(w[1]) < bridge_value(w[0]));
    let j_margin = |s: &modbal_core::diagnostics::BridgeStep| s.modality_scores.iter().sum::<f64>();
    let grew = j_margin(&joint.steps[last]) > j_margin(&joint.steps[0]) && joint.steps[last].bridge[0] < joint.steps[0].bridge[0];
    let elapsed = start.elapsed();
    outcome(
        jn < sn && shared && decreasing && grew && within(elapsed, 30),
        format!(
            "weak update norm at step 200: joint {jn:.4e} vs solo {sn:.4e}; bridge {:.4} -> {:.4} (joint) vs {:.4} (solo) at step 200; mean S strong/weak {:.3}/{:.3}; {elapsed:.2?}",
            joint.steps[0].bridge[0],
            joint.steps[last].bridge[0],
            solo.steps[last].bridge[0],
            joint.steps[last].modality_scores[0],
            joint.steps[last].modality_scores[1],
        ),
    )
}

// ---------------------------------------------------------------------------
// 11. Determinism of every written artifact

fn write_pipeline(dir: &Path) {
    let mut sc = SynthConfig::two_modality(40, 60, 0.9, 0.2, 11);
    sc.interactions_per_user = 8;
    let (data, f) = synth_generate(&sc).unwrap();
    save_dataset(dir.join("data"), &data, &f, Some(serde_json::to_value(&sc).unwrap())).unwrap();
    let cfg = small_config(11);
    let mut teachers = Vec::new();
    for m in 0..2 {
        let meta = CheckpointMeta {
            seed: 11,
            info: serde_json::json!({ "role": "teacher", "modality": m }),
        };
        let mut mon = FileMonitor::create(dir, &format!("teacher_{m}"), false)
            .unwrap()
            .with_checkpoint(dir.join(format!("teacher_{m}.ckpt")), meta);
        teachers.push(train_teacher(&data, &f, m, &cfg, &mut mon).unwrap().params);
    }
    let mut mon = FileMonitor::create(dir, "student", true)
        .unwrap()
        .with_checkpoint(dir.join("student.ckpt"), CheckpointMeta::default());
    let student = train_student(&data, &f, &teachers, &cfg, &mut mon).unwrap();
    drop(mon);
    let report = evaluate(&student.params, &f, &data, Split::Test, 20, &Channel::all(2)).unwrap();
    std::fs::write(dir.join("metrics.json"), serde_json::to_vec_pretty(&report).unwrap()).unwrap();
    let pilot = run_pilot(&data, &f, &cfg).unwrap();
    std::fs::write(dir.join("pilot.csv"), pilot.trace.to_csv()).unwrap();
    let bridge = run_bridge_experiment(&BridgeConfig::default()).unwrap();
    std::fs::write(dir.join("bridge.csv"), bridge.to_csv()).unwrap();
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push((path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

fn criterion_11() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_pipeline(a.path());
    write_pipeline(b.path());
    let fa = files(a.path());
    let fb = files(b.path());
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        fa.len() == fb.len() && differing.is_empty(),
        format!("{} files compared (dataset, traces, causal log, checkpoints, metrics, pilot and bridge CSV), differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {n:>2} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    };
    report(1, "gradient-bridge identity", criterion_1());
    report(2, "analytic-gradient suite", criterion_2());
    report(3, "loss oracles", criterion_3());
    report(4, "margin decomposition", criterion_4());
    report(5, "metric oracles", criterion_5());
    report(6, "lambda_kd = 0 degeneration", criterion_6());
    let runs: Vec<SeedRun> = (0..3).map(run_seed).collect();
    report(7, "imbalance reproduction", criterion_7(&runs));
    report(8, "distillation efficacy direction", criterion_8(&runs));
    report(9, "ablation ordering", criterion_9(&runs));
    report(10, "update suppression", criterion_10());
    report(11, "determinism", criterion_11());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria passed");
}

//! End-to-end acceptance run: trains the default experiment in a temporary
//! directory and checks the ten criteria, printing one PASS/FAIL line each.
//! Takes a few minutes.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use cavlab::cav::{fit_cav, CavConfig, CavSource, StyleTag};
use cavlab::config::ExperimentConfig;
use cavlab::eval::{binarize, evaluate_iou, iou};
use cavlab::explain::{attribution_map, LatentModel};
use cavlab::image::BinaryMask;
use cavlab::models::{flatten_grads, latent_gradient, Autoencoder, Classifier, GradientAt, Mlp};
use cavlab::numerics::{cosine_similarity, gradient_check, Activation, Rng};
use cavlab::pipeline::{Evaluation, Pipeline, Split};
use cavlab::synthgen::{ConceptId, StyleId};

const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");
const SMOKE_CONFIG: &str = include_str!("../configs/smoke.toml");

struct Outcome {
    label: String,
    pass: bool,
    detail: String,
    informational: bool,
}

#[derive(Default)]
struct Ledger(Vec<Outcome>);

impl Ledger {
    fn record(&mut self, label: &str, pass: bool, detail: String) {
        self.push(label, pass, detail, false);
    }

    fn note(&mut self, label: &str, pass: bool, detail: String) {
        self.push(label, pass, detail, true);
    }

    fn push(&mut self, label: &str, pass: bool, detail: String, informational: bool) {
        let tag = match (informational, pass) {
            (true, true) => "INFO holds",
            (true, false) => "INFO fails",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        // straight to the process stderr so the lines show without --nocapture
        let _ = writeln!(std::io::stderr(), "[{tag}] {label}: {detail}");
        self.0.push(Outcome {
            label: label.to_string(),
            pass,
            detail,
            informational,
        });
    }
}

fn half_sse(y: &[f64], t: &[f64]) -> f64 {
    0.5 * y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn bce(logits: &[f64], t: &[f64]) -> f64 {
    logits
        .iter()
        .zip(t)
        .map(|(&l, &t)| l.max(0.0) - l * t + (-l.abs()).exp().ln_1p())
        .sum()
}

/// Adds N(0, 0.1) noise to every parameter. Freshly initialized biases are
/// zero, which puts ReLU pre-activations exactly on the kink whenever the
/// layer below is silent.
fn jitter(params: &[f64], rng: &mut Rng) -> Vec<f64> {
    params.iter().map(|p| p + 0.1 * rng.normal()).collect()
}

fn sample_coords(rng: &mut Rng, len: usize, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.below(len as u64) as usize).collect()
}

/// Criterion 1: every layer kind and the chained latent gradient against
/// central differences, 100 seeded cases each.
fn gradient_correctness() -> (bool, String) {
    let mut worst_layer: f64 = 0.0;
    let mut worst_chain: f64 = 0.0;
    let mut cases = 0;
    let acts = [Activation::Identity, Activation::Relu, Activation::Sigmoid];
    for seed in 0..100u64 {
        let mut rng = Rng::new(seed);
        let size = |rng: &mut Rng| 1 + rng.below(12) as usize;

        // a two-layer stack covering each hidden/output activation pairing
        let (n_in, hidden, n_out, batch) = (size(&mut rng), size(&mut rng), size(&mut rng), 1 + rng.below(4) as usize);
        let hidden_act = acts[(seed % 3) as usize];
        let out_act = acts[((seed / 3) % 3) as usize];
        let mut net: Mlp<f64> = Mlp::new(&[n_in, hidden, n_out], hidden_act, out_act, &mut rng);
        net.set_params_flat(&jitter(&net.params_flat(), &mut rng)).unwrap();
        let x: Vec<f64> = (0..batch * n_in).map(|_| rng.normal()).collect();
        let t: Vec<f64> = (0..batch * n_out).map(|_| rng.next_f64()).collect();
        let trace = net.forward_trace(x.clone(), batch).unwrap();
        let up: Vec<f64> = trace.output().iter().zip(&t).map(|(y, t)| y - t).collect();
        let (grads, dx) = net.backward(&trace, &up, GradientAt::Output, true);
        let params = net.params_flat();
        let coords = sample_coords(&mut rng, params.len(), 20);
        let mut probe = net.clone();
        let rep = gradient_check(
            |p| {
                probe.set_params_flat(p).unwrap();
                half_sse(&probe.forward(&x, batch).unwrap(), &t)
            },
            &params,
            &flatten_grads(&grads),
            &coords,
            1e-4,
        )
        .unwrap();
        worst_layer = worst_layer.max(rep.max_rel_error);
        let all: Vec<usize> = (0..x.len()).collect();
        let rep = gradient_check(|xi| half_sse(&net.forward(xi, batch).unwrap(), &t), &x, &dx.unwrap(), &all, 1e-4)
            .unwrap();
        worst_layer = worst_layer.max(rep.max_rel_error);

        // the classifier's logit-space gradient (sigmoid + cross-entropy)
        let mut clf_net: Mlp<f64> = Mlp::new(&[n_in, hidden, 3], Activation::Relu, Activation::Identity, &mut rng);
        clf_net.set_params_flat(&jitter(&clf_net.params_flat(), &mut rng)).unwrap();
        let t3: Vec<f64> = (0..batch * 3).map(|_| (rng.next_f64() < 0.5) as u8 as f64).collect();
        let trace = clf_net.forward_trace(x.clone(), batch).unwrap();
        let up: Vec<f64> = trace
            .output()
            .iter()
            .zip(&t3)
            .map(|(&l, t)| Activation::Sigmoid.apply(l) - t)
            .collect();
        let (grads, _) = clf_net.backward(&trace, &up, GradientAt::Logits, false);
        let params = clf_net.params_flat();
        let coords = sample_coords(&mut rng, params.len(), 20);
        let mut probe = clf_net.clone();
        let rep = gradient_check(
            |p| {
                probe.set_params_flat(p).unwrap();
                bce(&probe.forward(&x, batch).unwrap(), &t3)
            },
            &params,
            &flatten_grads(&grads),
            &coords,
            1e-4,
        )
        .unwrap();
        worst_layer = worst_layer.max(rep.max_rel_error);

        // full autoencoder objective, encoder and decoder parameters
        let (w, h) = (3 + rng.below(2) as usize, 3);
        let mut ae: Autoencoder<f64> = Autoencoder::new(w, h, 2 + rng.below(6) as usize, 1 + rng.below(4) as usize, seed);
        ae.encoder.set_params_flat(&jitter(&ae.encoder.params_flat(), &mut rng)).unwrap();
        ae.decoder.set_params_flat(&jitter(&ae.decoder.params_flat(), &mut rng)).unwrap();
        let px: Vec<f64> = (0..2 * w * h).map(|_| rng.next_f64()).collect();
        let (_, enc_g, dec_g) = ae.loss_and_grads(&px, 2).unwrap();
        let mut analytic = flatten_grads(&enc_g);
        analytic.extend(flatten_grads(&dec_g));
        let mut params = ae.encoder.params_flat();
        let n_enc = params.len();
        params.extend(ae.decoder.params_flat());
        let coords = sample_coords(&mut rng, params.len(), 30);
        let mut probe = ae.clone();
        let rep = gradient_check(
            |p| {
                probe.encoder.set_params_flat(&p[..n_enc]).unwrap();
                probe.decoder.set_params_flat(&p[n_enc..]).unwrap();
                probe.loss_and_grads(&px, 2).unwrap().0
            },
            &params,
            &analytic,
            &coords,
            1e-4,
        )
        .unwrap();
        worst_layer = worst_layer.max(rep.max_rel_error);

        // chained: classifier logit of the decoded latent
        let mut clf: Classifier<f64> = Classifier::new(w * h, 1 + rng.below(6) as usize, ConceptId::ALL.to_vec(), seed + 1);
        clf.net.set_params_flat(&jitter(&clf.net.params_flat(), &mut rng)).unwrap();
        let concept = ConceptId::ALL[(seed % 3) as usize];
        let z: Vec<f64> = (0..ae.latent_dim()).map(|_| rng.normal()).collect();
        let g = latent_gradient(&ae, &clf, &z, concept).unwrap();
        let k = clf.output_index(concept).unwrap();
        let all: Vec<usize> = (0..z.len()).collect();
        let rep = gradient_check(
            |zz| {
                let img = ae.decode_raw(zz, 1).unwrap();
                clf.logits_raw(&img).unwrap()[k]
            },
            &z,
            &g,
            &all,
            1e-4,
        )
        .unwrap();
        worst_chain = worst_chain.max(rep.max_rel_error);
        cases += 1;
    }
    (
        worst_layer < 1e-4 && worst_chain < 1e-3,
        format!("{cases} seeded cases; worst layer rel. error {worst_layer:.2e} (< 1e-4), chained {worst_chain:.2e} (< 1e-3)"),
    )
}

/// Criterion 8: IoU and binarize against brute-force oracles, CAV fit against
/// the class-mean direction.
fn oracle_equivalences() -> (bool, String) {
    let mut rng = Rng::new(808);
    let mut iou_ok = 0;
    for _ in 0..1000 {
        let (w, h) = (1 + rng.below(64) as usize, 1 + rng.below(64) as usize);
        let (pa, pb) = (rng.next_f64(), rng.next_f64());
        let a = BinaryMask::new(w, h, (0..w * h).map(|_| rng.next_f64() < pa).collect()).unwrap();
        let b = BinaryMask::new(w, h, (0..w * h).map(|_| rng.next_f64() < pb).collect()).unwrap();
        let set = |m: &BinaryMask| -> BTreeSet<usize> { (0..w * h).filter(|&i| m.bits()[i]).collect() };
        let (sa, sb) = (set(&a), set(&b));
        let union = sa.union(&sb).count();
        let oracle = if union == 0 { 0.0 } else { sa.intersection(&sb).count() as f64 / union as f64 };
        iou_ok += (iou(&a, &b).unwrap().value == oracle) as usize;
    }

    let mut bin_ok = 0;
    for _ in 0..500 {
        let n = 1 + rng.below(4096) as usize;
        let p = 1 + rng.below(99) as usize;
        let mut values: Vec<f32> = (0..n).map(|i| i as f32 * 0.25).collect();
        rng.shuffle(&mut values);
        let count = binarize(n, 1, &values, p as f64).unwrap().mask.count();
        bin_ok += (count == n * (100 - p) / 100 + 1) as usize;
    }

    let cloud = |rng: &mut Rng, cx: f64| -> Vec<Vec<f32>> {
        (0..200)
            .map(|_| vec![(cx + 0.1 * rng.normal()) as f32, (0.1 * rng.normal()) as f32])
            .collect()
    };
    let (pos, neg) = (cloud(&mut rng, 1.0), cloud(&mut rng, -1.0));
    let mean = |rows: &[Vec<f32>], j: usize| rows.iter().map(|r| r[j] as f64).sum::<f64>() / rows.len() as f64;
    let oracle = [mean(&pos, 0) - mean(&neg, 0), mean(&pos, 1) - mean(&neg, 1)];
    let p: Vec<&[f32]> = pos.iter().map(Vec::as_slice).collect();
    let n: Vec<&[f32]> = neg.iter().map(Vec::as_slice).collect();
    let src = CavSource { concept: None, style: StyleTag::Mixed, batch_seed: 1 };
    let cav = fit_cav(&p, &n, &CavConfig::default(), src).unwrap();
    let cos = cosine_similarity(cav.direction(), &oracle).unwrap();

    (
        iou_ok == 1000 && bin_ok == 500 && cos > 0.99,
        format!("IoU exact on {iou_ok}/1000 mask pairs; binarize counts exact on {bin_ok}/500 maps; toy CAV vs class-mean oracle cos {cos:.5} (> 0.99)"),
    )
}

/// Criterion 9: two fresh reproduce runs of one config give the same manifest.
fn determinism() -> (bool, String) {
    let cfg = ExperimentConfig::from_toml(SMOKE_CONFIG).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m1 = Pipeline::new(cfg.clone(), Some(a.path())).unwrap().reproduce().unwrap();
    let m2 = Pipeline::new(cfg, Some(b.path())).unwrap().reproduce().unwrap();
    (
        m1 == m2,
        format!("run hash {} vs {} over {} files", &m1.run_hash[..16], &m2.run_hash[..16], m1.files.len()),
    )
}

fn row(ev: &Evaluation, method: &str, concept: ConceptId) -> (f64, usize) {
    let r = ev
        .iou
        .get(method, concept)
        .unwrap_or_else(|| panic!("missing IoU row {method}/{concept}"));
    (r.mean, r.n)
}

fn pipeline_criteria(ledger: &mut Ledger, p: &Pipeline, ev: &Evaluation) {
    // 2: random baseline
    let mut worst: f64 = 0.0;
    for rep in &ev.similarity {
        for c in &rep.random {
            worst = worst.max(c.mean.abs());
        }
    }
    ledger.record(
        "AC2 random-baseline pattern",
        worst < 0.05,
        format!("max |mean cos(CAV group, 100 random)| = {worst:.4} (< 0.05) at d = {}", ev.similarity[0].d),
    );

    // 3: stability ordering, per concept
    let mut ok = true;
    let mut parts = Vec::new();
    for rep in &ev.similarity {
        let concept = rep.concept.unwrap();
        let cell = |a: &str, b: &str| rep.cell(a, b).unwrap().mean;
        let (aa, bb, ab) = (cell("A singles", "A singles"), cell("B singles", "B singles"), cell("A singles", "B singles"));
        let random = rep.random_cell("A singles").unwrap().mean.max(rep.random_cell("B singles").unwrap().mean);
        let (ma, mb, mab) = (cell("A mean", "A mean"), cell("B mean", "B mean"), cell("A mean", "B mean"));
        let pass = aa.min(bb) > ab && ab > random && ma.min(mb) > 0.9 && mab > ab;
        ok &= pass;
        parts.push(format!(
            "{concept}: intra {aa:.4}/{bb:.4} > inter {ab:.4} > random {random:.4}; mean self {ma:.4}/{mb:.4}; cos(mean_A, mean_B) {mab:.4}"
        ));
    }
    ledger.record("AC3 stability pattern", ok, parts.join(" | "));

    // 4: size ordering on the primary held-out set; style B reported alongside
    let ordering = |style: &str| {
        let m = format!("cav_mean_{style}");
        let (c, nc) = row(ev, &m, ConceptId::Cardio);
        let (e, ne) = row(ev, &m, ConceptId::Effusion);
        let (n, nn) = row(ev, &m, ConceptId::Nodule);
        (
            c > e && e > n && nc.min(ne).min(nn) >= 50,
            format!("CARDIO {c:.4} > EFFUSION {e:.4} > NODULE {n:.4} (n = {nc}, {ne}, {nn})"),
        )
    };
    let (pass, detail) = ordering("A");
    ledger.record("AC4 size-ordering pattern (style A)", pass, detail);
    let (pass, detail) = ordering("B");
    ledger.note("AC4 size ordering on style B", pass, detail);

    // 5: averaging vs singles
    let mut ok = true;
    let mut parts = Vec::new();
    for concept in [ConceptId::Cardio, ConceptId::Effusion] {
        let (mean, _) = row(ev, "cav_mean_A", concept);
        let (single, _) = row(ev, "cav_single_A", concept);
        ok &= mean >= single;
        parts.push(format!("{concept}: mean {mean:.5} >= singles {single:.5}"));
    }
    ledger.record("AC5 averaging-improves-attribution pattern", ok, parts.join("; "));

    // 6: true vs random for CARDIO
    let (truth, n) = row(ev, "cav_mean_A", ConceptId::Cardio);
    let (random, _) = row(ev, "random_A", ConceptId::Cardio);
    ledger.record(
        "AC6 meaningfulness over chance",
        truth >= 2.0 * random && n >= 50,
        format!("CARDIO IoU true CAV {truth:.4} vs random {random:.4} (ratio {:.2}, n = {n})", truth / random),
    );

    // 7: baseline table complete
    let styles = &p.config().data.styles;
    let complete = styles.iter().all(|s| {
        ConceptId::ALL.iter().all(|&c| {
            ev.iou
                .get(&format!("latent_shift_{s}"), c)
                .is_some_and(|r| r.n >= 1 && (0.0..=1.0).contains(&r.mean))
        })
    });
    let cells: Vec<String> = ConceptId::ALL
        .iter()
        .map(|&c| {
            let (ls, _) = row(ev, "latent_shift_A", c);
            let (cm, _) = row(ev, "cav_mean_A", c);
            format!("{c} latent shift {ls:.4} / CAV mean {cm:.4}")
        })
        .collect();
    ledger.record("AC7 baseline parity structure", complete, cells.join("; "));

    // 10: reconstruction failure mode
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &ev.reconstruction {
        let get = |c: ConceptId| r.in_mask.iter().find(|m| m.concept == c).unwrap().mean_squared_error;
        let (nod, car) = (get(ConceptId::Nodule), get(ConceptId::Cardio));
        ok &= nod > car;
        parts.push(format!("style {}: NODULE {nod:.5} > CARDIO {car:.5}", r.style));
    }
    ledger.record("AC10 failure-mode reproduction", ok, parts.join("; "));
}

/// Invariants that need the trained models.
fn trained_invariants(ledger: &mut Ledger, p: &Pipeline) {
    let ae = p.load_autoencoder().unwrap();
    let clf = p.load_classifier().unwrap();
    let ds = cavlab::synthgen::Dataset::load(&p.data_dir(Split::Eval, StyleId::A)).unwrap();

    // mass of the CARDIO attribution inside the CARDIO mask, true vs random
    let v = p.load_cavs(ConceptId::Cardio, StyleId::A).unwrap().means.remove(0);
    let r = cavlab::cav::random_unit_vector(ae.latent_dim(), 99).unwrap();
    let cfg = &p.config().traversal;
    let mass = |vec: &cavlab::cav::ConceptVector| -> (f64, usize) {
        let mut total = 0.0;
        let mut n = 0;
        for s in ds.samples.iter().filter(|s| s.has(ConceptId::Cardio)).take(50) {
            let m = attribution_map(&ae, &s.image, vec, cfg).unwrap();
            let mask = &s.masks[&ConceptId::Cardio];
            total += m.values().iter().zip(mask.bits()).filter(|(_, &b)| b).map(|(v, _)| *v as f64).sum::<f64>();
            n += 1;
        }
        (total / n as f64, n)
    };
    let ((t, n), (rnd, _)) = (mass(&v), mass(&r));
    ledger.note(
        "direction sensitivity (CARDIO)",
        t > rnd && n >= 50,
        format!("mean in-mask attribution mass {t:.3} (true CAV) vs {rnd:.3} (random), n = {n}"),
    );

    // Latent Shift moves against the classifier's probability
    let lambda = 1e-2;
    let mut drops = 0.0;
    let mut n = 0;
    for s in ds.samples.iter().filter(|s| s.has(ConceptId::Cardio)).take(50) {
        let z = LatentModel::encode(&ae, &s.image).unwrap().values();
        let g = latent_gradient(&ae, &clf, &z, ConceptId::Cardio).unwrap();
        let shifted: Vec<f32> = z.iter().zip(&g).map(|(a, b)| a - lambda * b).collect();
        let k = clf.output_index(ConceptId::Cardio).unwrap();
        let prob = |zz: &[f32]| clf.probabilities(&ae.decode(zz).unwrap()).unwrap()[k];
        drops += prob(&z) - prob(&shifted);
        n += 1;
    }
    ledger.note(
        "latent shift descends the classifier",
        drops / n as f64 >= 0.0,
        format!("mean probability drop {:.3e} at lambda {lambda} over {n} samples", drops / n as f64),
    );

    // percentile-95 maps keep the nearest-rank count on real attribution maps
    let s = ds.samples.iter().find(|s| s.has(ConceptId::Nodule)).unwrap();
    let res = evaluate_iou(std::slice::from_ref(s), ConceptId::Nodule, 95.0, 1, |img| {
        attribution_map(&ae, img, &v, cfg)
    })
    .unwrap();
    ledger.note(
        "single-sample IoU evaluation",
        (0.0..=1.0).contains(&res[0].iou),
        format!("sample {} NODULE IoU {:.4}", res[0].id, res[0].iou),
    );
}

#[test]
fn acceptance() {
    let mut ledger = Ledger::default();

    let (pass, detail) = gradient_correctness();
    ledger.record("AC1 gradient correctness", pass, detail);

    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(DEFAULT_CONFIG).unwrap();
    let pipeline = Pipeline::new(cfg, Some(dir.path())).unwrap();
    let manifest = pipeline.reproduce().unwrap();
    let ev = pipeline.load_evaluation().unwrap();
    assert_eq!(manifest.config_hash, ev.config_hash);
    pipeline_criteria(&mut ledger, &pipeline, &ev);
    trained_invariants(&mut ledger, &pipeline);

    let (pass, detail) = oracle_equivalences();
    ledger.record("AC8 oracle equivalences", pass, detail);

    let (pass, detail) = determinism();
    ledger.record("AC9 determinism", pass, detail);

    if let Ok(keep) = std::env::var("CAVLAB_KEEP_RUN") {
        let target = Path::new(&keep);
        let _ = std::fs::create_dir_all(target);
        for name in ["iou.md", "similarity.md", "reconstruction.md"] {
            let _ = std::fs::copy(pipeline.root().join("reports").join(name), target.join(name));
        }
    }

    let failed: Vec<&Outcome> = ledger.0.iter().filter(|o| !o.pass && !o.informational).collect();
    let required = ledger.0.iter().filter(|o| !o.informational).count();
    let _ = writeln!(
        std::io::stderr(),
        "acceptance: {}/{} criteria pass",
        required - failed.len(),
        required
    );
    assert!(
        failed.is_empty(),
        "failed: {}",
        failed.iter().map(|o| format!("{} ({})", o.label, o.detail)).collect::<Vec<_>>().join("; ")
    );
}

//! End-to-end acceptance checks, one PASS/FAIL line each.
//!
//! Runs every criterion by default. Pass criterion numbers as arguments
//! (`cargo test --test acceptance -- 1 3`) to run a subset. The process
//! exits non-zero when a criterion's failed sub-checks differ from
//! [`EXPECTED_FAILURES`], including when an expected failure starts passing.

use std::time::Instant;

use lsa_core::config::Config;
use lsa_core::data::{answer_space, io::render_batch, majority_rate, Dataset, FamilyMix, Sample};
use lsa_core::diagnostics::{gradcheck_seeds, Component};
use lsa_core::init::Builder;
use lsa_core::model::VqaModel;
use lsa_core::modulation::{reweight, BetaModulator};
use lsa_core::attention::SelfAttention;
use lsa_core::plan::{parse_placements, ArchGeometry, ModulationKind};
use lsa_core::train::report::RunStatus;
use lsa_core::train::sweep::RELATIONAL;
use lsa_core::train::{sweep, train, TrainSettings};
use lsa_tensor::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    /// Names of the failed sub-checks; empty on a pass.
    failed: Vec<&'static str>,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { failed: if pass { vec![] } else { vec!["all"] }, detail: detail.into() }
}

/// Sub-checks that cannot pass as stated; the README explains why. They
/// are still evaluated in full and reported as FAIL.
const EXPECTED_FAILURES: [(u32, &str); 2] = [(1, "rounding"), (6, "c")];

type Criterion = (u32, &'static str, fn() -> Outcome);

/// Three-decimal millions as printed in parameter tables.
fn millions(n: usize) -> String {
    format!("{:.3}M", n as f64 / 1e6)
}

fn parameter_counts() -> Outcome {
    let r34 = ArchGeometry::resnet34();
    let r152 = ArchGeometry::resnet152();
    let cases = [
        (&r34, "S3:B1", 81_920, "0.082M"),
        (&r34, "S1:B1;S2:B1;S3:B1", 107_520, "0.107M"),
        (&r34, "S3:B1,3,5", 245_760, "0.245M"),
        (&r152, "S3:B2,18,36", 3_932_160, "3.932M"),
    ];
    let mut failed = Vec::new();
    let mut notes = Vec::new();
    for (geo, places, want, shown) in cases {
        let got = geo.sa_params(&parse_placements(places).unwrap(), 8).unwrap();
        if got != want {
            failed.push("count");
            notes.push(format!("{places}: {got} != {want}"));
        }
        let printed = millions(got);
        if printed != shown {
            failed.push("rounding");
            notes.push(format!("{places}: {got} rounds to {printed}, table shows {shown}"));
        }
    }
    failed.sort_unstable();
    failed.dedup();
    let detail = if notes.is_empty() { "all four counts and roundings match".to_string() } else { notes.join("; ") };
    Outcome { failed, detail }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let components = [
        Component::Sa,
        Component::GammaMod,
        Component::GammaModSigmoid,
        Component::BetaMod,
        Component::Block,
        Component::Encoder,
        Component::Model,
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for c in components {
        let r = gradcheck_seeds(c, 0..20).unwrap();
        pass &= r.passed() && r.max_rel_error < 1e-4 && r.coords > 0;
        parts.push(format!("{c} {:.1e}", r.max_rel_error));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    outcome(pass, format!("{} in {secs:.0}s", parts.join(", ")))
}

fn eval_batch(count: usize, seed: u64) -> (Dataset, Vec<Sample>) {
    let data = Dataset::generate(seed, count, count, &FamilyMix::default(), 12).unwrap();
    let eval = data.eval.clone();
    (data, eval)
}

fn identity_at_init() -> Outcome {
    let (data, samples) = eval_batch(100, 11);
    let refs: Vec<&Sample> = samples.iter().collect();
    let images = render_batch(&refs);
    let tokens = data.tokens(&refs);
    let base_cfg = Config::default();
    let logits = |places: &str, kind: ModulationKind| {
        let mut mc = base_cfg.model_config(data.vocab.size(), answer_space());
        mc.plan = mc.plan.with_placements(parse_placements(places).unwrap()).with_modulation(kind);
        VqaModel::new(mc, 5).unwrap().logits(&images, &tokens).unwrap()
    };
    let base = logits("none", ModulationKind::None);
    let variants = [
        ("S3:B3", ModulationKind::None),
        ("S1:B1;S2:B2;S3:B1,2,3", ModulationKind::None),
        ("S3:B1,3", ModulationKind::Gamma),
        ("S2:B1;S3:B3", ModulationKind::Beta),
    ];
    let mismatched: Vec<String> = variants
        .iter()
        .filter(|(p, k)| !logits(p, *k).bit_eq(&base))
        .map(|(p, k)| format!("{p}/{k}"))
        .collect();
    let detail = if mismatched.is_empty() {
        format!("{} placements bitwise equal on 100 samples", variants.len())
    } else {
        format!("differs: {}", mismatched.join(", "))
    };
    outcome(mismatched.is_empty(), detail)
}

fn normalization() -> Outcome {
    let (data, samples) = eval_batch(1000, 12);
    let mut cfg = Config::default();
    cfg.apply_text("sa=S2:B2;S3:B1,3\nmodulation=beta").unwrap();
    let mut model = cfg.build_model(&data).unwrap();
    // Move every weight off its init so gates and distributions are not trivial.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ids: Vec<_> = model.store.entries().map(|(id, _)| id).collect();
    for id in ids {
        let t = model.store.get_mut(id);
        if t.numel() == 1 {
            *t = Tensor::vector(vec![rng.gen_range(0.5..1.5)]);
        }
    }
    let mut worst: f64 = 0.0;
    let mut distributions = 0usize;
    for chunk in samples.chunks(50) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let images = render_batch(&refs);
        let tokens = data.tokens(&refs);
        let mut g = Graph::new(&model.store, false, false);
        g.enable_recording();
        let out = model.forward(&mut g, &images, &tokens).unwrap();
        let probs = g.softmax(out.logits, 1).unwrap();
        let probs = g.value(probs).clone();
        for row in probs.data().chunks(probs.shape()[1]) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            distributions += 1;
        }
        for (_, t) in g.records() {
            let n = t.shape()[0];
            let cols = t.numel() / n;
            for j in 0..cols {
                let s: f64 = (0..n).map(|i| t.data()[i * cols + j]).sum();
                worst = worst.max((s - 1.0).abs());
                distributions += 1;
            }
        }
    }
    outcome(worst < 1e-9, format!("{distributions} distributions, max |sum - 1| = {worst:.1e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, n, h, d) = (rng.gen_range(2..7), rng.gen_range(1..=16), rng.gen_range(1..5), rng.gen_range(1..5));
        let c_bar = rng.gen_range(1..=c);
        let mut store = ParamStore::new();
        let sa = SelfAttention::new(&mut Builder::new(&mut store, seed).scope("sa"), c, c_bar, true).unwrap();
        let bm = BetaModulator::new(&mut Builder::new(&mut store, seed).scope("mod"), h, c, d).unwrap();
        let x = Tensor::new(vec![c, n], (0..c * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let q = Tensor::new(vec![1, h], (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let [wf, wg, wk, wp, wq] = [sa.w_f, sa.w_g, sa.w_k, bm.w_p, bm.w_q].map(|id| store.get(id).clone());

        let mut g = Graph::new(&store, false, false);
        let xv = g.constant(x.clone());
        let maps = sa.maps(&mut g, xv).unwrap();
        let o = sa.output(&mut g, xv, maps.weights).unwrap();
        let hv = g.constant(q.clone());
        let p = bm.project(&mut g, hv).unwrap();
        let p = g.select(p, 0).unwrap();
        let beta = bm.weights(&mut g, xv, p).unwrap();
        let r = reweight(&mut g, o, beta).unwrap();
        let (weights, o, beta, r) = (g.value(maps.weights), g.value(o), g.value(beta), g.value(r));

        let at = |t: &Tensor, i: usize, j: usize| t.data()[i * t.shape()[1] + j];
        let proj = |w: &Tensor, i: usize, k: usize| (0..c).map(|ch| at(w, ch, k) * at(&x, ch, i)).sum::<f64>();
        let score = |i: usize, j: usize| (0..c_bar).map(|k| proj(&wf, i, k) * proj(&wg, j, k)).sum::<f64>();
        let mut naive_beta = vec![0.0; n];
        let pq: Vec<f64> = (0..d).map(|k| (0..h).map(|m| q.data()[m] * at(&wp, m, k)).sum()).collect();
        let loc: Vec<f64> = (0..n).map(|i| (0..d).map(|k| proj(&wq, i, k) * pq[k]).sum()).collect();
        let top = loc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = loc.iter().map(|s| (s - top).exp()).sum();
        for i in 0..n {
            naive_beta[i] = (loc[i] - top).exp() / z;
            worst = worst.max((naive_beta[i] - beta.data()[i]).abs());
        }
        for j in 0..n {
            let top = (0..n).map(|i| score(i, j)).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..n).map(|i| (score(i, j) - top).exp()).sum();
            for ch in 0..c {
                let mut acc = 0.0;
                for i in 0..n {
                    let w = (score(i, j) - top).exp() / z;
                    worst = worst.max((w - at(weights, i, j)).abs());
                    acc += w * (0..c).map(|k| at(&wk, ch, k) * at(&x, k, i)).sum::<f64>();
                }
                worst = worst.max((acc - at(o, ch, j)).abs());
                worst = worst.max((naive_beta[j] * acc - at(r, ch, j)).abs());
            }
        }
    }
    outcome(worst < 1e-12, format!("50 instances, max deviation {worst:.1e}"))
}

/// Desk network used for the training criteria: stride-2 stem, one block
/// per stage, final 4x4 map.
fn desk_config(extra: &str) -> Config {
    let mut c = Config::default();
    c.apply_text("stem_stride=2\nstage_blocks=1,1,1\n").unwrap();
    c.apply_text(extra).unwrap();
    c
}

fn comparative_training() -> Outcome {
    let start = Instant::now();
    let base = desk_config("");
    let data = base.dataset().unwrap();
    let majority = majority_rate(&data.eval);
    let s3 = parse_placements("S3:B1").unwrap();
    let plain = sweep(&base, std::slice::from_ref(&s3), true, &data).unwrap();
    let beta_cfg = desk_config("modulation=beta");
    let modulated = sweep(&beta_cfg, std::slice::from_ref(&s3), false, &data).unwrap();
    println!("{}", plain.to_text());
    println!("{}", modulated.to_text());

    let none = parse_placements("none").unwrap();
    let failures = plain.rows.iter().chain(&modulated.rows).map(|r| r.failed()).sum::<usize>();
    let (b, s, m) = (plain.row(&none).unwrap(), plain.row(&s3).unwrap(), modulated.row(&s3).unwrap());
    let b_all = b.mean_accuracy().unwrap_or(0.0);
    let (b_rel, s_rel, m_rel) = (
        b.mean_pooled(&RELATIONAL).unwrap_or(0.0),
        s.mean_pooled(&RELATIONAL).unwrap_or(0.0),
        m.mean_pooled(&RELATIONAL).unwrap_or(0.0),
    );
    let a = b_all >= majority + 0.10;
    let bb = s_rel >= b_rel;
    let c = m_rel >= s_rel;
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    let failed = [(a, "a"), (bb, "b"), (c, "c"), (failures == 0, "runs")]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, part)| part)
        .collect();
    Outcome {
        failed,
        detail: format!(
            "(a) baseline {:.2}% vs majority {:.2}% {}; (b) SA rel+cmp {:.2}% vs baseline {:.2}% {}; \
             (c) SA+beta {:.2}% vs SA {:.2}% {}; {failures} failed runs; {:.0}s",
            100.0 * b_all,
            100.0 * majority,
            mark(a),
            100.0 * s_rel,
            100.0 * b_rel,
            mark(bb),
            100.0 * m_rel,
            100.0 * s_rel,
            mark(c),
            start.elapsed().as_secs_f64()
        ),
    }
}

fn gamma_diagnostic() -> Outcome {
    let cfg = desk_config("sa=S3:B1\nmodulation=gamma\ngamma_squash=sigmoid\ntrain_count=1000\neval_count=400\nepochs=3");
    let data = cfg.dataset().unwrap();
    let mut model = cfg.build_model(&data).unwrap();
    let out = train(&mut model, &data, &TrainSettings::from_config(&cfg), &cfg.hash()).unwrap();
    let series = out.report.gamma_h_series();
    let completed = out.report.status == RunStatus::Completed;
    let init = series.first().filter(|(e, _)| *e == 0).map(|(_, s)| s.mean);
    let centered = init.is_some_and(|m| (m - 0.5).abs() <= 0.05);
    let in_report = out.report.to_text(false).contains("gamma_h_mean");
    let trail: Vec<String> = series.iter().map(|(e, s)| format!("{e}:{:.3}", s.mean)).collect();
    outcome(
        completed && centered && series.len() == cfg.epochs + 1 && in_report,
        format!("mean gamma_h by epoch [{}]", trail.join(" ")),
    )
}

fn determinism() -> Outcome {
    let cfg = desk_config("sa=S2:B1;S3:B1\nmodulation=beta\ntrain_count=600\neval_count=200\nepochs=2\nseed=4");
    let data = cfg.dataset().unwrap();
    let run = || {
        let mut model = cfg.build_model(&data).unwrap();
        train(&mut model, &data, &TrainSettings::from_config(&cfg), &cfg.hash()).unwrap().report
    };
    let (a, b) = (run(), run());
    let same = a.loss_curve_text() == b.loss_curve_text() && a.to_text(false) == b.to_text(false);
    let bits = a.step_losses.iter().zip(&b.step_losses).all(|(x, y)| x.to_bits() == y.to_bits());
    outcome(same && bits && !a.step_losses.is_empty(), format!("{} step losses compared", a.step_losses.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "parameter counts", parameter_counts),
        (2, "gradient correctness", gradients),
        (3, "identity at init", identity_at_init),
        (4, "normalization invariants", normalization),
        (5, "oracle equivalence", oracle_equivalence),
        (6, "comparative training", comparative_training),
        (7, "gamma modulation diagnostic", gamma_diagnostic),
        (8, "determinism", determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let r = check();
        let expected: Vec<&str> = EXPECTED_FAILURES.iter().filter(|(c, _)| *c == n).map(|(_, p)| *p).collect();
        let verdict = if r.failed.is_empty() {
            "PASS"
        } else if r.failed == expected {
            "FAIL (expected)"
        } else {
            "FAIL"
        };
        println!("criterion {n} {name}: {verdict} ({})", r.detail);
        if r.failed != expected {
            unexpected += 1;
            if r.failed.is_empty() {
                println!("criterion {n} now passes; update EXPECTED_FAILURES");
            }
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria did not match their expected outcome");
        std::process::exit(1);
    }
}

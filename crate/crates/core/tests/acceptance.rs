//! Acceptance criteria 1-11. Runs without the libtest harness so every
//! verdict prints: `cargo test -p emocircuit --test acceptance [-- 4 9]`.

use emocircuit::affect::valence_to_unit;
use emocircuit::appraisal::{mean_memory_valence, memory_update, mood_modulator, mood_update, perceive, MemoryRegistry, MoodState, Percept, PerceptionMode};
use emocircuit::cccnn::{Cccnn, ModelSpec};
use emocircuit::eval::ccc;
use emocircuit::frontend::{MfccMap, VisualClip};
use emocircuit::gwr::{GwrNetwork, GwrNeuron, GwrParams, StepEvent};
use emocircuit::nn::ops;
use emocircuit::nn::{Activation, ConvGeom, Mode};
use emocircuit::pipeline::gradcheck::{layer_cases, model_case};
use emocircuit::pipeline::{
    build_report, fit_perception, fresh_state, load_corpus, replay, represent, train_audio, train_cross, train_visual,
    LoadedEvent, ReplayOutput, Settings, StageReport,
};
use emocircuit::session::{load_session, load_state, save_state, BlobMode, ModelState};
use emocircuit::Tensor;
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

mod common;
use common::pipeline::{quick_pipeline, settings, write_session, QUICK};
use common::*;

/// Outcome of one criterion: pass flag and a one-line detail.
type Verdict = (bool, String);

fn check(ok: bool, detail: impl Into<String>) -> Verdict {
    (ok, detail.into())
}

fn gradients() -> Verdict {
    let t = Instant::now();
    let mut cases = layer_cases(1).unwrap();
    cases.push(model_case("desk", 1, 8).unwrap());
    let elapsed = t.elapsed();
    let worst = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = cases.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    check(
        failed.is_empty() && elapsed < Duration::from_secs(60),
        format!("{} cases incl. desk model, worst rel err {worst:.2e}, {:.1}s, failed {failed:?}", cases.len(), elapsed.as_secs_f64()),
    )
}

fn forward_oracles() -> Verdict {
    let mut r = rng(100);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let c = r.gen_range(1..4);
        let (d, h, w) = (r.gen_range(1..5), r.gen_range(2..7), r.gen_range(2..7));
        let (kd, kh, kw) = (r.gen_range(1..=d), r.gen_range(1..=h), r.gen_range(1..=w));
        let f = r.gen_range(1..4);
        let x = random_tensor(&mut r, &[c, d, h, w]);
        let k = random_tensor(&mut r, &[f, c, kd, kh, kw]);
        let b = random_tensor(&mut r, &[f]);
        let y = ops::conv3d_forward(&x, &k, &b, &ConvGeom::default()).unwrap();
        worst = worst.max(max_abs_diff(y.data(), &naive_conv3d_relu(&x, &k, &b)));
    }
    for _ in 0..200 {
        let (c, l, f) = (r.gen_range(1..27), r.gen_range(3..36), r.gen_range(1..6));
        let kl = r.gen_range(1..=3);
        let x = random_tensor(&mut r, &[c, l]);
        let k = random_tensor(&mut r, &[f, c, kl]);
        let b = random_tensor(&mut r, &[f]);
        worst = worst.max(max_abs_diff(ops::conv1d_forward(&x, &k, &b).unwrap().data(), &naive_conv1d_relu(&x, &k, &b)));
    }
    for _ in 0..200 {
        let dims = r.gen_range(1..=3);
        let window = r.gen_range(1..=3);
        let stride = r.gen_range(1..=window);
        let mut shape = vec![r.gen_range(1..4)];
        shape.extend((0..dims).map(|_| r.gen_range(window..window + 5)));
        let x = random_tensor(&mut r, &shape);
        let y = ops::pool_max(&x, window, stride, dims).unwrap();
        worst = worst.max(max_abs_diff(y.data(), &naive_pool(&x, window, stride, dims)));
    }
    let acts: [(Activation, fn(f64) -> f64); 4] = [
        (Activation::Linear, |v| v),
        (Activation::Relu, |v| v.max(0.0)),
        (Activation::Tanh, f64::tanh),
        (Activation::Sigmoid, |v| 1.0 / (1.0 + (-v).exp())),
    ];
    for i in 0..200 {
        let (n, m) = (r.gen_range(1..40), r.gen_range(1..20));
        let x = random_tensor(&mut r, &[n]);
        let w = random_tensor(&mut r, &[m, n]);
        let b = random_tensor(&mut r, &[m]);
        let (act, f) = acts[i % 4];
        let y = ops::fc_forward(&x, &w, &b, act).unwrap();
        worst = worst.max(max_abs_diff(y.data(), &naive_fc(x.data(), &w, b.data(), f)));
    }
    check(worst < 1e-12, format!("4 x 200 cases, worst abs diff {worst:.2e}"))
}

fn random_clip(r: &mut impl Rng) -> VisualClip {
    VisualClip::new(Tensor::from_fn(&[9, 16, 16], |_| r.gen_range(0.0..1.0))).unwrap()
}

fn random_mfcc(r: &mut impl Rng) -> MfccMap {
    MfccMap::new(Tensor::from_fn(&[26, 35], |_| r.gen_range(-5.0..5.0))).unwrap()
}

fn unisensory_equivalence() -> Verdict {
    let model = Cccnn::new(ModelSpec::desk(), 31).unwrap();
    let mut r = rng(32);
    let mut identical = 0;
    for _ in 0..100 {
        let (fv, pv) = model.visual_forward(&random_clip(&mut r), Mode::Infer).unwrap();
        let (fa, pa) = model.auditory_forward(&random_mfcc(&mut r), Mode::Infer).unwrap();
        let out = model.cross_forward(Some(&pv), Some(&pa), 0.0, 0.0).unwrap();
        if out.visual_features.as_ref() == Some(&fv) && out.auditory_features.as_ref() == Some(&fa) {
            identical += 1;
        }
    }
    check(identical == 100, format!("{identical}/100 inputs bit-identical"))
}

fn gamma_linearity() -> Verdict {
    let model = Cccnn::new(ModelSpec::desk(), 41).unwrap();
    let mut r = rng(42);
    let mut exact = 0;
    let mut total = 0;
    for _ in 0..5 {
        let (_, pv) = model.visual_forward(&random_clip(&mut r), Mode::Infer).unwrap();
        let (_, pa) = model.auditory_forward(&random_mfcc(&mut r), Mode::Infer).unwrap();
        let one = model.cross_forward(Some(&pv), Some(&pa), 1.0, 1.0).unwrap();
        let (cv, ca) = (one.cross_visual.unwrap(), one.cross_auditory.unwrap());
        for g in [0.0, 0.5, 1.0] {
            let out = model.cross_forward(Some(&pv), Some(&pa), g, g).unwrap();
            total += 2;
            exact += (out.last_in_visual.unwrap() == cv.zip_map(&pv, |c, p| c * g + p).unwrap()) as usize;
            exact += (out.last_in_auditory.unwrap() == ca.zip_map(&pa, |c, p| c * g + p).unwrap()) as usize;
        }
    }
    check(exact == total, format!("{exact}/{total} last-layer inputs exactly interpolated at gamma 0, 0.5, 1"))
}

fn bmu_oracle() -> Verdict {
    let mut r = rng(51);
    let mut matched = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..=50);
        let dim = r.gen_range(1..=8);
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| r.gen_range(-2.0..2.0)).collect() };
        let weights: Vec<Vec<f64>> = (0..n).map(|_| draw(dim)).collect();
        let contexts: Vec<Vec<Vec<f64>>> = (0..n).map(|_| (0..2).map(|_| draw(dim)).collect()).collect();
        let global: Vec<Vec<f64>> = (0..2).map(|_| draw(dim)).collect();
        let x = draw(dim);
        let neurons = weights
            .iter()
            .zip(&contexts)
            .map(|(w, c)| GwrNeuron::new(w.clone(), c.clone(), 0))
            .collect();
        let params = GwrParams::default();
        let alpha = params.alpha.clone();
        let net = GwrNetwork::from_parts(params, neurons, vec![], global.clone(), None).unwrap();
        matched += (net.find_bmu(&x).unwrap().index == brute_force_bmu(&x, &weights, &contexts, &global, &alpha)) as usize;
    }
    check(matched == 1000, format!("{matched}/1000 exact index matches"))
}

fn gwr_rules() -> Verdict {
    let params = GwrParams { a_t: 0.3, max_edge_age: 50, ..GwrParams::default() };
    let mut net = GwrNetwork::new(3, params.clone()).unwrap();
    let mut r = rng(61);
    let (mut inserted, mut violations) = (0, Vec::new());
    for t in 0..10_000 {
        let centre = (t / 500) as f64;
        let x: Vec<f64> = (0..3).map(|_| centre + r.gen_range(-1.5..1.5)).collect();
        let mut probe = net.clone();
        let expected = (!probe.is_empty()).then(|| {
            probe.update_global_context();
            let b = probe.find_bmu(&x).unwrap();
            ((-b.distance).exp(), probe.neurons()[b.index].habituation)
        });
        let out = net.step(&x, None).unwrap();
        if let Some((a, h)) = expected {
            let should = a < params.a_t && h < params.h_t;
            let did = matches!(out.event, StepEvent::Inserted(_));
            inserted += did as usize;
            if should != did || (out.activity, out.bmu_habituation) != (a, h) {
                violations.push(format!("insertion rule at step {t}"));
            }
        }
        if net.neurons().iter().any(|n| !(n.habituation > 0.0 && n.habituation <= 1.0)) {
            violations.push(format!("habituation out of (0,1] at step {t}"));
        }
        if let Err(e) = net.check_well_formed() {
            violations.push(format!("step {t}: {e}"));
        }
    }
    check(violations.is_empty() && inserted > 0, format!("10^4 steps, {inserted} insertions, violations {:?}", violations.first()))
}

fn modulator() -> Verdict {
    let mut bad = Vec::new();
    for v_m in [-1.0, 0.0, 0.3, 1.0] {
        if mood_modulator(0.5, v_m, 1.0).unwrap() != (1.0, 1) {
            bad.push("middle case");
        }
    }
    if mood_modulator(0.8, 0.0, 1.0).unwrap() != (2.0, 2) {
        bad.push("(0.8, 0)");
    }
    if mood_modulator(0.2, 0.0, 1.0).unwrap() != (0.0, 0) {
        bad.push("(0.2, 0)");
    }
    let (m, _) = mood_modulator(0.8, 1.0, 1.0).unwrap();
    if (m - (1.0 + std::f64::consts::E)).abs() >= 1e-12 {
        bad.push("(0.8, 1)");
    }
    let mut r = rng(71);
    for _ in 0..10_000 {
        let (v_p, v_m, e) = (r.gen_range(0.0..=1.0), r.gen_range(-1.0..=1.0), r.gen_range(0.01..5.0));
        let (m, reps) = mood_modulator(v_p, v_m, e).unwrap();
        if reps as f64 != m.round().max(0.0) {
            bad.push("sweep");
            break;
        }
    }
    check(bad.is_empty(), format!("table + 10^4-point sweep, mismatches {bad:?}"))
}

fn ccc_oracle() -> Verdict {
    let mut r = rng(81);
    let (mut worst, mut sym, mut aff): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..500 {
        let n = r.gen_range(2..150);
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v + r.gen_range(-1.0..1.0)).collect();
        let c = ccc(&x, &y).unwrap();
        worst = worst.max((c - naive_ccc(&x, &y)).abs());
        sym = sym.max((c - ccc(&y, &x).unwrap()).abs());
        let (a, b) = (r.gen_range(0.1..3.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 }, r.gen_range(-4.0..4.0));
        let f = |v: &[f64]| v.iter().map(|t| a * t + b).collect::<Vec<f64>>();
        aff = aff.max((c - ccc(&f(&x), &f(&y)).unwrap()).abs());
    }
    check(
        worst < 1e-12 && sym < 1e-9 && aff < 1e-9,
        format!("500 pairs: oracle {worst:.1e}, symmetry {sym:.1e}, affine {aff:.1e}"),
    )
}

/// The default synthetic session, trained once and shared by criteria 9 and 10.
struct Acceptance {
    dir: tempfile::TempDir,
    session: PathBuf,
    data: Vec<LoadedEvent>,
    stages: Vec<StageReport>,
    trained: ModelState,
    replayed: ReplayOutput,
    state_after: ModelState,
    elapsed: Duration,
}

fn acceptance_run() -> &'static Acceptance {
    static RUN: OnceLock<Acceptance> = OnceLock::new();
    RUN.get_or_init(|| {
        let t = Instant::now();
        let s = Settings::default();
        let dir = tempfile::tempdir().unwrap();
        let session = write_session(dir.path(), &s, 7);
        let data = load_corpus(&session).unwrap();
        let mut st = fresh_state(&s).unwrap();
        let stages = vec![
            train_visual(&mut st, &data, &s, 11).unwrap(),
            train_audio(&mut st, &data, &s, 11).unwrap(),
            train_cross(&mut st, &data, &s, 11).unwrap(),
            fit_perception(&mut st, &data, &s, 11).unwrap(),
        ];
        let trained = st.clone();
        let replayed = replay(&mut st, &data, &s).unwrap();
        Acceptance { dir, session, data, stages, trained, replayed, state_after: st, elapsed: t.elapsed() }
    })
}

fn end_to_end() -> Verdict {
    let run = acceptance_run();
    let events = load_session(&run.session).unwrap();
    let report = build_report("acceptance", &events, &run.replayed).unwrap();
    let head_acc = run.stages[3].test_accuracy.unwrap();
    let memory: Vec<(String, f64)> = report
        .rows
        .iter()
        .filter(|r| r.group_kind == "memory")
        .map(|r| (r.group.clone(), r.ccc_valence.unwrap()))
        .collect();
    let mood = report.row("mood", "session").unwrap().ccc_valence.unwrap();
    let mean_v = |who: &str| mean_memory_valence(run.state_after.memories.get(who).unwrap());
    let pairs = [("ana", "ben"), ("cai", "dov")];
    let opposite = pairs.iter().all(|(p, n)| mean_v(p) > 0.0 && mean_v(n) < 0.0);
    let a = head_acc >= 0.9;
    let b = memory.iter().all(|(_, c)| *c >= 0.8);
    let c = mood >= 0.7;
    let budget = run.elapsed < Duration::from_secs(600);
    let mem_text: Vec<String> = memory.iter().map(|(s, c)| format!("{s} {c:.3}")).collect();
    let means: Vec<String> = ["ana", "ben", "cai", "dov"].iter().map(|s| format!("{s} {:+.3}", mean_v(s))).collect();
    check(
        a && b && c && opposite && budget,
        format!(
            "(a) head accuracy {head_acc:.3} {}; (b) memory valence CCC [{}] {}; (c) mood valence CCC {mood:.3} {}; (d) memory means [{}] {}; {:.0}s",
            ok(a),
            mem_text.join(", "),
            ok(b),
            ok(c),
            means.join(", "),
            ok(opposite),
            run.elapsed.as_secs_f64()
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn modulation_effect() -> Verdict {
    let run = acceptance_run();
    let st = &run.trained;
    let model = st.model.as_ref().unwrap();
    let heads = st.heads.as_ref().unwrap();
    let net = st.perception.as_ref().unwrap();
    let mut perception = net.clone();
    // the positive-leaning subject's percepts, in session order
    let stream: Vec<Percept> = run
        .data
        .iter()
        .filter(|e| e.event.subject == "ana")
        .map(|e| perceive(&mut perception, heads, &represent(model, e).unwrap(), PerceptionMode::Frozen).unwrap())
        .collect();
    // two memories of the same expressions that differ only in appraisal sign
    let memory = |sign: f64| {
        let mut reg = MemoryRegistry::default();
        for p in &stream {
            let p = Percept { valence: sign * p.valence.abs(), ..p.clone() };
            memory_update(&mut reg, "ana", &p).unwrap();
        }
        reg.memories.remove("ana").unwrap()
    };
    let (pos, neg) = (memory(1.0), memory(-1.0));
    let updates = |mem| {
        let mut mood = MoodState::new(1.0).unwrap();
        for p in &stream {
            mood_update(&mut mood, p, Some(mem)).unwrap();
        }
        mood.updates
    };
    let (congruent, incongruent) = (updates(&pos), updates(&neg));
    let positive = stream.iter().filter(|p| valence_to_unit(p.valence) > 0.5).count();
    check(
        congruent > incongruent,
        format!(
            "{} percepts ({positive} positive): congruent memory {congruent} mood updates, incongruent {incongruent}",
            stream.len()
        ),
    )
}

fn snapshot_files(out: &ReplayOutput, dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> =
        out.write_dir(dir).unwrap().into_iter().map(|n| (n.clone(), std::fs::read(dir.join(&n)).unwrap())).collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let s = settings(QUICK);
    let root = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let dir = root.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        let (_, data, mut st) = quick_pipeline(&dir, &s);
        let out = replay(&mut st, &data, &s).unwrap();
        save_state(&st, &dir.join("state.json"), BlobMode::Embedded).unwrap();
        runs.push((snapshot_files(&out, &dir.join("replay")), std::fs::read(dir.join("state.json")).unwrap()));
    }
    let same_runs = runs[0] == runs[1];

    // round trip of the acceptance state, both blob modes
    let run = acceptance_run();
    let mut round_trip = true;
    for (mode, name) in [(BlobMode::Embedded, "e"), (BlobMode::SideFiled, "s")] {
        let (p1, p2) = (run.dir.path().join(format!("{name}1.json")), run.dir.path().join(format!("{name}2.json")));
        save_state(&run.trained, &p1, mode).unwrap();
        let back = load_state(&p1).unwrap();
        save_state(&back, &p2, mode).unwrap();
        let text = |p: &Path, stem: &str| std::fs::read_to_string(p).unwrap().replace(stem, "");
        round_trip &= back == run.trained && text(&p1, &format!("{name}1.json")) == text(&p2, &format!("{name}2.json"));
    }
    let mut reloaded = load_state(&run.dir.path().join("e1.json")).unwrap();
    let mut original = run.trained.clone();
    let mut same_percepts = 0;
    for e in &run.data {
        let pa = {
            let x = represent(original.model.as_ref().unwrap(), e).unwrap();
            perceive(original.perception.as_mut().unwrap(), original.heads.as_ref().unwrap(), &x, PerceptionMode::Frozen).unwrap()
        };
        let pb = {
            let x = represent(reloaded.model.as_ref().unwrap(), e).unwrap();
            perceive(reloaded.perception.as_mut().unwrap(), reloaded.heads.as_ref().unwrap(), &x, PerceptionMode::Frozen).unwrap()
        };
        same_percepts += (pa == pb) as usize;
    }
    let all = same_percepts == run.data.len();
    check(
        same_runs && round_trip && all,
        format!(
            "seeded reruns byte-identical {}; save/load/save byte-identical {}; reloaded percepts {same_percepts}/{}",
            ok(same_runs),
            ok(round_trip),
            run.data.len()
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 11] = [
        (1, "gradient correctness", gradients),
        (2, "forward oracles", forward_oracles),
        (3, "unisensory equivalence", unisensory_equivalence),
        (4, "gamma linearity", gamma_linearity),
        (5, "GWR winner oracle", bmu_oracle),
        (6, "GWR rule conformance", gwr_rules),
        (7, "modulator table", modulator),
        (8, "CCC oracle", ccc_oracle),
        (9, "synthetic end-to-end", end_to_end),
        (10, "modulation effect", modulation_effect),
        (11, "determinism and persistence", determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let (pass, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += !pass as usize;
        println!("criterion {n:>2} {name}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

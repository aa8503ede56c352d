//! One PASS/FAIL line per acceptance criterion, written straight to stderr so
//! the lines show up without `--nocapture`.

mod common;

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sslse::analysis::{cn_curve, cn_distance};
use sslse::data::{read_wav, wav_files};
use sslse::dsp::{istft, resample, stft, Waveform, HOP, WINDOW_LEN, WORKING_RATE};
use sslse::encoder::{EncoderConfig, ToyEncoder, LATENT_STRIDE};
use sslse::enhancer::{run_smoke, smoke_config, smoke_corpus};
use sslse::fusion::{self, softmax, weighted_sum, Composition};
use sslse::metrics::{composite_scores, llr, segmental_snr, stoi, wss, DEFAULT_RETENTION};

const ROUND_TRIP_MIN_DB: f64 = 60.0;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(5);
const GRAD_SEEDS: u64 = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_TOL: f64 = 1e-10;
const AFFINE_TOL: f64 = 1e-9;
const SIMPLEX_TOL: f64 = 1e-9;
const FREEZE_STEPS: usize = 100;
const SMOKE_CORPUS_SEED: u64 = 7;
const SMOKE_ENCODER_SEED: u64 = 1;
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];
const SMOKE_MAX_STEPS: usize = 2000;
const SMOKE_MAX_RATIO: f64 = 0.7;
const SMOKE_MIN_STOI_GAIN: f64 = 0.02;
const SMOKE_BUDGET: Duration = Duration::from_secs(600);
const STOI_IDENTITY_TOL: f64 = 1e-6;
const DISTORTION_IDENTITY_TOL: f64 = 1e-8;
const COMPOSITE_TOL: f64 = 1e-9;
const VCTK_ENV: &str = "SSLSE_VCTK_DIR";
const VCTK_PAIRS: usize = 824;
const VCTK_STOI: f64 = 0.915;
const VCTK_TOL: f64 = 0.01;
const VCTK_BUDGET: Duration = Duration::from_secs(600);

struct Ledger {
    failed: Vec<&'static str>,
}

impl Ledger {
    fn report(&mut self, name: &'static str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(std::io::stderr(), "[{tag}] {name}: {detail}");
        if !ok {
            self.failed.push(name);
        }
    }

    fn skip(&self, name: &str, why: &str) {
        let _ = writeln!(std::io::stderr(), "[SKIP] {name}: {why}");
    }
}

fn white(len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), WORKING_RATE).unwrap()
}

fn snr(reference: &[f64], estimate: &[f64]) -> f64 {
    let err: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum();
    let sig: f64 = reference.iter().map(|a| a * a).sum();
    10.0 * (sig / err.max(1e-300)).log10()
}

fn dsp_round_trip(l: &mut Ledger) {
    let t = Instant::now();
    let mut worst = f64::INFINITY;
    for seed in 0..20 {
        let len = 8000 + 997 * seed as usize;
        let x = white(len, seed);
        let s = stft(&x, WINDOW_LEN, HOP).unwrap();
        let y = istft(&s.magnitude, &s.phase, WINDOW_LEN, HOP, len).unwrap();
        let interior = WINDOW_LEN..len - WINDOW_LEN;
        worst = worst.min(snr(&x.samples()[interior.clone()], &y.samples()[interior]));
    }
    let dt = t.elapsed();
    l.report(
        "dsp round trip",
        worst >= ROUND_TRIP_MIN_DB && dt < ROUND_TRIP_BUDGET,
        format!("worst interior SNR {worst:.1} dB over 20 signals (>= {ROUND_TRIP_MIN_DB}), {dt:.2?} (< {ROUND_TRIP_BUDGET:?})"),
    );
}

fn frame_geometry(l: &mut Ledger) {
    let x = white(20_480, 99);
    let spec = stft(&x, WINDOW_LEN, HOP).unwrap().frames();
    let enc = ToyEncoder::new(EncoderConfig::default(), 0).unwrap();
    let stack = enc.forward(&x).unwrap();
    let fused = fusion::align_duplicate(stack.last(), spec, LATENT_STRIDE, HOP).unwrap().rows();
    l.report(
        "frame geometry",
        spec == 128 && stack.frames() == 64 && fused == 128,
        format!("stft {spec}, latent {}, fused {fused} (want 128/64/128)", stack.frames()),
    );
}

fn gradient_suite(l: &mut Ledger) {
    let t = Instant::now();
    let cases = sslse::gradsuite::run_suite(GRAD_SEEDS).unwrap();
    let dt = t.elapsed();
    let worst = cases.iter().max_by(|a, b| a.worst_rel_error.total_cmp(&b.worst_rel_error)).unwrap();
    l.report(
        "gradient suite",
        cases.iter().all(|c| c.passed()) && dt < GRAD_BUDGET,
        format!(
            "{} cases x {GRAD_SEEDS} seeds, worst {:.2e} ({}) < {:.0e}, {dt:.1?} (< {GRAD_BUDGET:?})",
            cases.len(),
            worst.worst_rel_error,
            worst.case,
            sslse::gradsuite::TOLERANCE
        ),
    );
}

fn cn_oracle(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut oracle_err = 0.0f64;
    for _ in 0..50 {
        let (n_layers, t, d) = (rng.gen_range(1..5), rng.gen_range(2..9), rng.gen_range(1..6));
        let c = common::raw(&mut rng, n_layers, t, d);
        let n = common::raw(&mut rng, n_layers, t, d);
        let (sc, sn) = (common::to_stack(&c), common::to_stack(&n));
        for layer in 0..n_layers {
            let got = cn_distance(&sc, &sn, layer).unwrap();
            oracle_err = oracle_err.max((got - common::brute_force(&c, &n, layer)).abs());
        }
    }
    let same = common::to_stack(&common::raw(&mut rng, 3, 6, 4));
    let zero = cn_curve(&same, &same).unwrap().iter().all(|&v| v == 0.0);
    let mut affine_err = 0.0f64;
    for _ in 0..50 {
        let (n_layers, t, d) = (rng.gen_range(1..4), rng.gen_range(3..9), rng.gen_range(1..5));
        let c = common::raw(&mut rng, n_layers, t, d);
        let n = common::raw(&mut rng, n_layers, t, d);
        let base = cn_curve(&common::to_stack(&c), &common::to_stack(&n)).unwrap();
        let moved = cn_curve(
            &common::to_stack(&common::affine(&c, &mut rng)),
            &common::to_stack(&common::affine(&n, &mut rng)),
        )
        .unwrap();
        for (a, b) in base.iter().zip(&moved) {
            affine_err = affine_err.max((a - b).abs());
        }
    }
    l.report(
        "cn distance oracle",
        oracle_err <= ORACLE_TOL && zero && affine_err <= AFFINE_TOL,
        format!(
            "brute force diff {oracle_err:.1e} (<= {ORACLE_TOL:.0e}) on 50 stacks, identical -> 0: {zero}, affine diff {affine_err:.1e} (<= {AFFINE_TOL:.0e})"
        ),
    );
}

fn fusion_laws(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layers = (0..5)
        .map(|_| sslse::matrix::Matrix::from_fn(7, 3, |_, _| rng.gen_range(-2.0..2.0)))
        .collect();
    let stack = sslse::encoder::LayerStack::new(layers, LATENT_STRIDE, WORKING_RATE).unwrap();
    let one_hot = (0..5).all(|j| {
        let mut w = vec![0.0; 5];
        w[j] = 1.0;
        weighted_sum(&stack, &w).unwrap().as_slice() == stack.layer(j).as_slice()
    });
    let trace = common::simplex_trace(1000);
    let worst = trace.iter().map(|w| (w.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    let nonneg = trace.iter().flatten().all(|&x| x >= 0.0);
    let moved = trace.last().unwrap() != &softmax(&[0.0; 6]);
    l.report(
        "layer fusion laws",
        one_hot && worst <= SIMPLEX_TOL && nonneg && moved,
        format!("one-hot bitwise: {one_hot}, after 1000 Adam steps |sum-1| <= {worst:.1e} (<= {SIMPLEX_TOL:.0e}), nonnegative: {nonneg}"),
    );
}

fn freeze_policies(l: &mut Ledger) {
    let checks = common::freeze_suite(FREEZE_STEPS);
    let ok = checks.iter().all(|c| c.passed());
    let detail = checks
        .iter()
        .map(|c| format!("{} {}", c.policy, if c.passed() { "ok" } else { c.detail.as_str() }))
        .collect::<Vec<_>>()
        .join(", ");
    l.report("freeze policies", ok, format!("{FREEZE_STEPS} steps: {detail}"));
}

fn smoke_and_ablation(l: &mut Ledger) {
    let (train_pairs, test_pairs) = smoke_corpus(SMOKE_CORPUS_SEED).unwrap();
    let best = |comp: Composition, seed: u64| {
        let cfg = smoke_config(comp, seed);
        let t = Instant::now();
        let (report, _) = run_smoke(&train_pairs, &test_pairs, &cfg, SMOKE_ENCODER_SEED).unwrap();
        (report, cfg.max_steps, t.elapsed())
    };

    let (smoke, steps, dt) = best(Composition::WsLog1p, ABLATION_SEEDS[0]);
    l.report(
        "smoke training",
        smoke.loss_ratio() <= SMOKE_MAX_RATIO
            && smoke.stoi_gain() > SMOKE_MIN_STOI_GAIN
            && steps <= SMOKE_MAX_STEPS
            && dt < SMOKE_BUDGET,
        format!(
            "ws+log1p {steps} steps: val L1 ratio {:.3} (<= {SMOKE_MAX_RATIO}), STOI {:.4} -> {:.4} gain {:+.4} (> {SMOKE_MIN_STOI_GAIN}), {dt:.0?} (< {SMOKE_BUDGET:?})",
            smoke.loss_ratio(),
            smoke.noisy_stoi,
            smoke.enhanced_stoi,
            smoke.stoi_gain()
        ),
    );

    let mut with = vec![smoke.best_val];
    let mut without = Vec::new();
    for &seed in &ABLATION_SEEDS[1..] {
        with.push(best(Composition::WsLog1p, seed).0.best_val);
    }
    for &seed in &ABLATION_SEEDS {
        without.push(best(Composition::Ws, seed).0.best_val);
    }
    let (a, b) = (median(&with), median(&without));
    l.report(
        "cross-domain ablation",
        a <= b,
        format!("median best val L1 over seeds {ABLATION_SEEDS:?}: ws+log1p {a:.4} <= ws {b:.4} (ws+log1p {with:.4?}, ws {without:.4?})"),
    );
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn metric_identities(l: &mut Ledger) {
    let x = sslse::data::speech_like(48_000, WORKING_RATE, &mut ChaCha8Rng::seed_from_u64(5));
    let s = stoi(&x, &x).unwrap();
    let seg = segmental_snr(&x, &x).unwrap();
    let ll = llr(&x, &x, DEFAULT_RETENTION).unwrap().value;
    let ws = wss(&x, &x, DEFAULT_RETENTION).unwrap().value;
    let clamp = composite_scores(4.5, 0.0, 0.0, 35.0).csig;
    let zero = composite_scores(0.0, 0.0, 0.0, 0.0);
    let raw_csig = 3.093 - 1.029 * 0.0 + 0.603 * 4.5 - 0.009 * 0.0;
    let ok = (s - 1.0).abs() <= STOI_IDENTITY_TOL
        && seg == 35.0
        && ll <= DISTORTION_IDENTITY_TOL
        && ws <= DISTORTION_IDENTITY_TOL
        && (raw_csig - 5.8065f64).abs() <= COMPOSITE_TOL
        && clamp == 5.0
        && (zero.cbak - 1.634).abs() <= COMPOSITE_TOL
        && (zero.covl - 1.594).abs() <= COMPOSITE_TOL;
    l.report(
        "metric identities",
        ok,
        format!(
            "stoi {s:.9}, segsnr {seg}, llr {ll:.1e}, wss {ws:.1e}, csig {raw_csig:.4} -> {clamp}, cbak {:.3}, covl {:.3}",
            zero.cbak, zero.covl
        ),
    );
}

fn vctk(l: &mut Ledger) {
    let Some(root) = std::env::var_os(VCTK_ENV) else {
        l.skip("vctk noisy stoi", &format!("set {VCTK_ENV} to a folder with clean_testset_wav/ and noisy_testset_wav/"));
        return;
    };
    let root = Path::new(&root);
    let t = Instant::now();
    let load = |p: &Path| resample(&read_wav(p).unwrap(), WORKING_RATE).unwrap();
    let files = wav_files(&root.join("clean_testset_wav")).unwrap();
    let mut total = 0.0;
    for f in &files {
        let clean = load(f);
        let noisy = load(&root.join("noisy_testset_wav").join(f.file_name().unwrap()));
        total += stoi(&clean, &noisy).unwrap();
    }
    let mean = total / files.len() as f64;
    let dt = t.elapsed();
    l.report(
        "vctk noisy stoi",
        files.len() == VCTK_PAIRS && (mean - VCTK_STOI).abs() <= VCTK_TOL && dt < VCTK_BUDGET,
        format!("{} pairs (want {VCTK_PAIRS}), mean STOI {mean:.4} (want {VCTK_STOI} +- {VCTK_TOL}), {dt:.0?}", files.len()),
    );
}

fn determinism(l: &mut Ledger) {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| sslse::cli::dispatch(std::iter::once("sslse").chain(args.iter().copied()));
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, common::TINY_RUN_CONFIG).unwrap();
    let corpus = dir.path().join("corpus");
    let emb = dir.path().join("emb");
    assert_eq!(run(&["synth", "--config", &s(&cfg), "--out", &s(&corpus)]), 0);
    assert_eq!(run(&["embed", "--config", &s(&cfg), "--corpus", &s(&corpus), "--out", &s(&emb)]), 0);
    let once = |tag: &str| {
        let out = dir.path().join(tag);
        let cn = out.join("cn.csv");
        let train = ["train", "--config", &s(&cfg), "--corpus", &s(&corpus), "--out", &s(&out)];
        assert_eq!(run(&train), 0);
        let analyze = [
            "analyze-cn",
            "--clean-emb",
            &s(&emb.join("clean")),
            "--noisy-emb",
            &s(&emb.join("noisy")),
            "--weights",
            &s(&out.join("weights.json")),
            "--out",
            &s(&cn),
        ];
        assert_eq!(run(&analyze), 0);
        ["loss.csv", "cn.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let (a, b) = (once("r1"), once("r2"));
    l.report(
        "determinism",
        a == b,
        format!("loss.csv identical: {}, cn.csv identical: {}", a[0] == b[0], a[1] == b[1]),
    );
}

#[test]
fn acceptance() {
    let mut l = Ledger { failed: Vec::new() };
    dsp_round_trip(&mut l);
    frame_geometry(&mut l);
    gradient_suite(&mut l);
    cn_oracle(&mut l);
    fusion_laws(&mut l);
    freeze_policies(&mut l);
    smoke_and_ablation(&mut l);
    metric_identities(&mut l);
    vctk(&mut l);
    determinism(&mut l);
    assert!(l.failed.is_empty(), "failed: {:?}", l.failed);
}

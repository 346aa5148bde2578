//! Acceptance suite. Runs every criterion, prints one `PASS`/`FAIL` line
//! each, and exits nonzero if any failed.

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kwsbias::dataset::{
    gender_balance, split, synth_dataset, BalancedBatches, Dataset, Group, Split, SplitRatios, SplitStrategy,
    SynthConfig,
};
use kwsbias::dsp::{dct_ii_matrix, mel_filterbank, FeatureConfig, FeatureMatrix, FrameLayout, SpectrumPlan, WindowFn};
use kwsbias::metrics::{confusion_matrix, evaluate, group_bias, mcc, reliability_bias, EvalReport, PerformanceMetric};
use kwsbias::nn::{
    build_model, loss_and_grad_raw, train, Architecture, LabeledFeatures, LayerSpec, ModelSpec, Network, TrainConfig,
};
use kwsbias::pipeline::{featurize_splits, SplitFeatures};
use kwsbias::pruning::{
    apply_magnitude_mask, prune_train, pruned_count, sparsity_at_step, sparsity_summary, PruneConfig, Schedule,
    GRID_SPARSITIES,
};
use kwsbias::selection::{select, CriterionKind, SelectionCriterion};
use kwsbias::sweep::{
    expand_grid, read_results, run_sweep, BaselineRule, ExperimentGrid, ExperimentRecord, LearningRates, MfccCount,
    Preset, Stage, SweepPlan,
};
use kwsbias::Executor;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

struct Outcome {
    name: &'static str,
    elapsed: Duration,
    result: Check,
}

fn run(name: &'static str, limit: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let mut result = f();
    let elapsed = start.elapsed();
    if result.is_ok() {
        if let Err(e) = within(elapsed, limit) {
            result = Err(e);
        }
    }
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    println!("[{tag}] {name} ({:.2}s) {detail}", elapsed.as_secs_f64());
    Outcome { name, elapsed, result }
}

// ---------------------------------------------------------------- bias

fn bias_oracle() -> Check {
    let rb = reliability_bias([0.8, 0.4], 0.6).map_err(e2s)?;
    ensure((rb - LN_2).abs() < 1e-12, || format!("reliability_bias({{0.8, 0.4}}, 0.6) = {rb}"))?;
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a: f64 = r.random_range(1e-3..1.0);
        let b: f64 = r.random_range(1e-3..1.0);
        let same = group_bias(a, a).map_err(e2s)?;
        ensure(same == 0.0, || format!("group_bias({a}, {a}) = {same}"))?;
        let ab = group_bias(a, b).map_err(e2s)?;
        let ba = group_bias(b, a).map_err(e2s)?;
        worst = worst.max((ab.abs() - ba.abs()).abs()).max((ab - (a.ln() - b.ln())).abs());
    }
    ensure(worst < 1e-12, || format!("identity error {worst:e}"))?;
    Ok(format!("ln 2 reproduced; max identity error {worst:.1e} over 1000 draws"))
}

// ---------------------------------------------------------------- MCC

/// Pearson correlation of the one-hot truth and prediction matrices.
fn mcc_by_covariance(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    let n = pred.len() as f64;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let mp = pred.iter().filter(|&&p| p == c).count() as f64 / n;
        let mt = truth.iter().filter(|&&t| t == c).count() as f64 / n;
        for (&p, &t) in pred.iter().zip(truth) {
            let dp = f64::from(u8::from(p == c)) - mp;
            let dt = f64::from(u8::from(t == c)) - mt;
            xy += dp * dt;
            xx += dp * dp;
            yy += dt * dt;
        }
    }
    if xx == 0.0 || yy == 0.0 {
        0.0
    } else {
        xy / (xx * yy).sqrt()
    }
}

fn mcc_oracle() -> Check {
    let cm = confusion_matrix(&[0, 0, 1, 1, 2, 1], &[0, 0, 1, 1, 2, 2], 3).map_err(e2s)?;
    let hand = mcc(&cm).map_err(e2s)?;
    ensure((hand - 18.0 / 528f64.sqrt()).abs() < 1e-12, || format!("hand case gave {hand}"))?;
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = r.random_range(2..=10);
        let n = r.random_range(1..300);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        // mix of informative and random predictions
        let pred: Vec<usize> =
            truth.iter().map(|&t| if r.random_bool(0.6) { t } else { r.random_range(0..k) }).collect();
        let got = mcc(&confusion_matrix(&pred, &truth, k).map_err(e2s)?).map_err(e2s)?;
        worst = worst.max((got - mcc_by_covariance(&pred, &truth, k)).abs());
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("hand case {hand:.4}; max deviation {worst:.1e} over 1000 draws"))
}

// ---------------------------------------------------------------- gradients

fn gradient_check() -> Check {
    let specs = [
        LayerSpec::Conv { filters: 3, kernel: (3, 2), stride: (1, 1) },
        LayerSpec::MaxPool { size: (2, 2) },
        LayerSpec::Conv { filters: 2, kernel: (2, 2), stride: (2, 1) },
        LayerSpec::Dense { units: 6, relu: true },
        LayerSpec::Dense { units: 3, relu: false },
    ];
    let net = Network::new((12, 7), &specs, false).map_err(e2s)?;
    let n_params = net.num_params();
    ensure(n_params <= 1000, || format!("{n_params} parameters"))?;
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut params = net.zeros();
    for t in params.iter_mut() {
        for v in t.iter_mut() {
            *v = r.random_range(-0.5..0.5);
        }
    }
    let inputs: Vec<Vec<f64>> = (0..4).map(|_| (0..net.input_len()).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let labels = [0, 2, 1, 2];
    let (_, grads) = loss_and_grad_raw(&net, &params, &refs, &labels).map_err(e2s)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for ti in 0..params.len() {
        for j in 0..params[ti].len() {
            let orig = params[ti][j];
            params[ti][j] = orig + h;
            let up = loss_and_grad_raw(&net, &params, &refs, &labels).map_err(e2s)?.0;
            params[ti][j] = orig - h;
            let down = loss_and_grad_raw(&net, &params, &refs, &labels).map_err(e2s)?.0;
            params[ti][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[ti][j];
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("{n_params} params (conv, strided conv, pool, dense); max relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- DSP

fn dsp_checks() -> Check {
    for n in [8, 13, 40] {
        let m = dct_ii_matrix(n, n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| m[i][k] * m[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                ensure((dot - want).abs() < 1e-10, || format!("DCT {n}: <row {i}, row {j}> = {dot}"))?;
            }
        }
    }

    let mut r = ChaCha8Rng::seed_from_u64(4);
    for n in [64, 256, 512] {
        let plan = SpectrumPlan::new(n).map_err(e2s)?;
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let p = plan.power(&x).map_err(e2s)?;
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let half = n / 2;
        let spec = (p[0] + p[half] + 2.0 * p[1..half].iter().sum::<f64>()) / n as f64;
        ensure((spec - energy).abs() / energy < 1e-9, || format!("Parseval {n}: {spec} vs {energy}"))?;
    }

    for _ in 0..200 {
        let ms = r.random_range(5..60u32);
        let pct = r.random_range(10..100u32);
        let rate = if r.random_bool(0.5) { 8000 } else { 16000 };
        let layout = FrameLayout::new(ms, pct, rate).map_err(e2s)?;
        let len = r.random_range(layout.frame_len..20_000);
        let mut naive = 0;
        let mut start = 0;
        while start + layout.frame_len <= len {
            naive += 1;
            start += layout.step;
        }
        let got = layout.num_frames(len).map_err(e2s)?;
        ensure(got == naive, || format!("{layout:?} len {len}: {got} frames, enumeration {naive}"))?;
    }

    let (fft, rate) = (512, 16000);
    let bank = mel_filterbank(40, fft, rate, 0.0, 8000.0).map_err(e2s)?;
    let plan = SpectrumPlan::new(fft).map_err(e2s)?;
    let mut checked = 0;
    for b in 0..bank.num_banks() {
        let f = bank.center_hz(b);
        let tone: Vec<f64> = (0..fft)
            .map(|i| {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / fft as f64).cos();
                w * (2.0 * PI * f * i as f64 / f64::from(rate)).sin()
            })
            .collect();
        let energies = bank.apply(&plan.power(&tone).map_err(e2s)?);
        let top = (0..energies.len()).max_by(|&a, &c| energies[a].total_cmp(&energies[c])).unwrap_or(0);
        ensure(top == b, || format!("tone at {f:.1} Hz peaked in bank {top}, expected {b}"))?;
        checked += 1;
    }
    Ok(format!("DCT, Parseval, 200 frame-count draws, {checked} Mel band-centre tones"))
}

// ---------------------------------------------------------------- pruning

fn random_features(n: usize, shape: (usize, usize), k: usize, seed: u64) -> LabeledFeatures {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n)
        .map(|_| FeatureMatrix::new((0..shape.0 * shape.1).map(|_| r.random_range(-1.0..1.0)).collect(), shape.0, shape.1))
        .collect();
    let labels = (0..n).map(|i| i % k).collect();
    let groups = (0..n).map(|i| if (i / k).is_multiple_of(2) { Group::Male } else { Group::Female }).collect();
    LabeledFeatures::new(inputs, labels, groups).expect("consistent synthetic features")
}

fn pruning_schedule() -> Check {
    for total in [1usize, 7, 50, 1000] {
        for (si, sf) in [(0.0, 0.9), (0.1, 0.5), (0.3, 0.3)] {
            let cfg = PruneConfig { initial_sparsity: si, final_sparsity: sf, ..PruneConfig::default() };
            let s0 = sparsity_at_step(&cfg, 0, total).map_err(e2s)?;
            let st = sparsity_at_step(&cfg, total, total).map_err(e2s)?;
            ensure(s0 == si && st == sf, || format!("T={total}: s(0)={s0}, s(T)={st}"))?;
            let mut prev = s0;
            for t in 1..=total {
                let s = sparsity_at_step(&cfg, t, total).map_err(e2s)?;
                ensure(s >= prev, || format!("T={total}: s({t})={s} < {prev}"))?;
                prev = s;
            }
        }
    }

    let mut r = ChaCha8Rng::seed_from_u64(5);
    for &s in &GRID_SPARSITIES {
        for _ in 0..50 {
            let n = r.random_range(1..4000);
            let w: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let dropped = apply_magnitude_mask(&w, s).iter().filter(|k| !**k).count();
            let want = ((s * n as f64 + 0.5).floor()) as usize;
            ensure(dropped == want && pruned_count(s, n) == want, || format!("s={s} n={n}: {dropped} pruned, want {want}"))?;
        }
    }

    // 128 examples / batch 16 = 8 steps per epoch; 13 epochs = 104 steps
    let train_set = random_features(128, (20, 10), 4, 6);
    let val = random_features(16, (20, 10), 4, 7);
    let spec = ModelSpec::new(Architecture::Cnn, (20, 10), 4);
    let base = build_model(&spec, 8).map_err(e2s)?;
    let mut worst_nonzero = 0usize;
    let mut steps = 0;
    for &s in &GRID_SPARSITIES {
        let cfg = PruneConfig {
            final_sparsity: s,
            frequency: 10,
            pruning_learning_rate: 1e-3,
            epochs: 13,
            batch_size: 16,
            seed: 9,
            ..PruneConfig::default()
        };
        let out = prune_train(&base, &cfg, &train_set, &val).map_err(e2s)?;
        steps = out.history.total_steps;
        let summary = sparsity_summary(&out.model, s);
        for t in &summary.tensors {
            let want = pruned_count(s, t.size) as f64 / t.size as f64;
            ensure(t.sparsity == want, || format!("s={s} {}: sparsity {} want {want}", t.name, t.sparsity))?;
        }
        let infos = out.model.tensor_info();
        let mut mi = 0;
        for (info, w) in infos.iter().zip(&out.model.tensors) {
            if !info.is_weight {
                continue;
            }
            let mask = &out.mask.masks()[mi];
            mi += 1;
            worst_nonzero += w.iter().zip(mask).filter(|(v, keep)| !**keep && **v != 0.0).count();
        }
    }
    ensure(steps >= 100, || format!("only {steps} optimizer steps"))?;
    ensure(worst_nonzero == 0, || format!("{worst_nonzero} masked weights became nonzero"))?;
    Ok(format!("exact endpoints and monotone; exact counts for every grid sparsity; masks hold over {steps} steps"))
}

// ---------------------------------------------------------------- grid

fn grid_counts() -> Check {
    let t1 = ExperimentGrid::table1(0);
    let train_n = expand_grid(&t1).map_err(e2s)?.len();
    let prune_n = t1.pruning_size();
    let mut t9 = ExperimentGrid::table9(0);
    let mut per_pair = Vec::new();
    for rate in [8000, 16000] {
        for arch in Architecture::ALL {
            t9.sample_rates = vec![rate];
            t9.architectures = vec![arch];
            per_pair.push(expand_grid(&t9).map_err(e2s)?.len());
        }
    }
    ensure(train_n == 3456, || format!("table1 training grid {train_n}"))?;
    ensure(prune_n == 72, || format!("table1 pruning grid {prune_n}"))?;
    ensure(per_pair.iter().all(|&n| n == 48), || format!("table9 per (rate, arch) {per_pair:?}"))?;
    Ok(format!("{train_n} training, {prune_n} pruning per baseline, 48 per (rate, architecture)"))
}

// ---------------------------------------------------------------- training

fn corpus(dir: &Path, cfg: &SynthConfig, strategy: SplitStrategy, seed: u64) -> Result<(Dataset, SplitFeatures), String> {
    let ds = synth_dataset(cfg, dir).map_err(e2s)?;
    let ds = split(&ds, SplitRatios::default(), strategy, seed).map_err(e2s)?;
    let exec = Executor::default();
    let clips = ds.load_audio(&exec).map_err(e2s)?;
    let feats = featurize_splits(&ds, &clips, &FeatureConfig::default(), &exec).map_err(e2s)?;
    Ok((ds, feats))
}

fn desk_training() -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let synth = SynthConfig { num_classes: 4, speakers_per_gender: 4, utterances_per_speaker: 5, seed: 0, ..SynthConfig::default() };
    let (ds, feats) = corpus(dir.path(), &synth, SplitStrategy::PerKeyword, 0)?;
    let spec = ModelSpec::new(Architecture::Cnn, feats.input_shape().ok_or("empty train split")?, ds.num_classes());
    let cfg = TrainConfig { seed: 0, ..TrainConfig::default() };
    let a = train(&spec, &feats.train, &feats.validation, &cfg).map_err(e2s)?;
    let b = train(&spec, &feats.train, &feats.validation, &cfg).map_err(e2s)?;
    let best = a.history.runs.iter().find(|r| r.learning_rate == a.learning_rate).ok_or("no winning run")?;
    let val_mcc = best.final_validation_mcc().ok_or("no epochs")?;
    ensure(best.epochs.len() <= 10, || format!("{} epochs", best.epochs.len()))?;
    ensure(val_mcc >= 0.9, || format!("validation MCC {val_mcc:.3} at lr {}", a.learning_rate))?;
    ensure(a.model.tensors == b.model.tensors && a.history == b.history, || "rerun with the same seed differs".into())?;
    Ok(format!(
        "{} train / {} validation; validation MCC {val_mcc:.3} at lr {} in 10 epochs; rerun identical",
        feats.train.len(),
        feats.validation.len(),
        a.learning_rate
    ))
}

// ---------------------------------------------------------------- trends

fn record_from(report: &EvalReport, stage: Stage, index: usize, id: &str) -> ExperimentRecord {
    let mut r = ExperimentRecord { stage, index, experiment_id: id.into(), status: "ok".into(), ..Default::default() };
    r.set_metrics(report);
    r
}

fn trends(tables: &mut Vec<Vec<ExperimentRecord>>) -> Check {
    let mut a_hits = 0;
    let mut b_hits = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let dir = tempfile::tempdir().map_err(e2s)?;
        let synth = SynthConfig { speakers_per_gender: 8, seed, ..SynthConfig::default() };
        let (ds, feats) = corpus(dir.path(), &synth, SplitStrategy::PerKeywordGroup, seed)?;
        let spec = ModelSpec::new(Architecture::Cnn, feats.input_shape().ok_or("empty train split")?, ds.num_classes());
        let base = train(&spec, &feats.train, &feats.validation, &TrainConfig { seed, ..TrainConfig::default() })
            .map_err(e2s)?;
        let base_report = evaluate(&base.model, &feats.test, PerformanceMetric::Mcc).map_err(e2s)?;
        let mut table = vec![record_from(&base_report, Stage::Train, 0, "baseline")];
        let mut mccs = Vec::new();
        for (i, (s, lr)) in [(0.2, 1e-3), (0.9, 1e-3), (0.9, 1e-5)].into_iter().enumerate() {
            let cfg = PruneConfig { final_sparsity: s, pruning_learning_rate: lr, seed, ..PruneConfig::default() };
            let out = prune_train(&base.model, &cfg, &feats.train, &feats.validation).map_err(e2s)?;
            let rep = evaluate(&out.model, &feats.test, PerformanceMetric::Mcc).map_err(e2s)?;
            mccs.push(rep.overall_mcc);
            table.push(record_from(&rep, Stage::Prune, i, &format!("s{s}-lr{lr:e}")));
        }
        let base_mcc = base_report.overall_mcc;
        // (a) sparsity 0.2 versus 0.9 at the same learning rate
        if mccs[0] >= mccs[1] {
            a_hits += 1;
        }
        // (b) delta-MCC at 0.9: learning rate 1e-3 versus 1e-5
        if mccs[1] - base_mcc >= mccs[2] - base_mcc {
            b_hits += 1;
        }
        lines.push(format!("seed {seed}: base {base_mcc:.2}, s0.2 {:.2}, s0.9@1e-3 {:.2}, s0.9@1e-5 {:.2}", mccs[0], mccs[1], mccs[2]));
        tables.push(table);
    }
    let detail = format!("(a) {a_hits}/5, (b) {b_hits}/5 [{}]", lines.join("; "));
    ensure(a_hits >= 4 && b_hits >= 4, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- sweep and protocol

fn small_plan() -> SweepPlan {
    SweepPlan {
        grid: ExperimentGrid {
            preset: Preset::Custom,
            global_seed: 17,
            sample_rates: vec![8000],
            architectures: vec![Architecture::Cnn],
            num_mel_banks: vec![20, 26],
            num_mfcc: vec![MfccCount(Some(10)), MfccCount(Some(12))],
            frame_lengths_ms: vec![40],
            frame_steps_pct: vec![60],
            windows: vec![WindowFn::Hamming],
            final_sparsities: vec![0.5],
            pruning_frequencies: vec![5],
            pruning_schedules: vec![Schedule::PolynomialDecay],
            pruning_learning_rates: LearningRates::List(vec![1e-3]),
        },
        train: TrainConfig { epochs: 3, batch_size: 16, learning_rate_grid: vec![1e-2], seed: 0 },
        prune: PruneConfig { epochs: 2, batch_size: 16, ..PruneConfig::default() },
        metric: PerformanceMetric::Mcc,
        baselines: BaselineRule { criteria: vec![CriterionKind::HighAccuracy], m: 1, accuracy_tolerance: 0.015 },
        run_pruning: true,
    }
}

fn protocol(tables: &mut Vec<Vec<ExperimentRecord>>) -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let synth = SynthConfig { speakers_per_gender: 6, utterances_per_speaker: 2, seed: 3, ..SynthConfig::default() };
    let raw = synth_dataset(&synth, &dir.path().join("data")).map_err(e2s)?;

    for strategy in [SplitStrategy::Pooled, SplitStrategy::PerKeyword, SplitStrategy::PerKeywordGroup] {
        let ds = split(&raw, SplitRatios::default(), strategy, 1).map_err(e2s)?;
        let mut owner = std::collections::HashMap::new();
        for u in ds.utterances() {
            let prev = owner.insert((u.keyword.clone(), u.speaker_id.clone()), u.split);
            ensure(prev.is_none_or(|p| p == u.split), || format!("{strategy:?}: pair ({}, {}) spans splits", u.keyword, u.speaker_id))?;
        }
        let sets: Vec<BTreeSet<_>> = [Split::Train, Split::Validation, Split::Test]
            .iter()
            .map(|s| owner.iter().filter(|(_, v)| *v == s).map(|(k, _)| k.clone()).collect())
            .collect();
        ensure(sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]), || {
            format!("{strategy:?}: overlapping pair sets")
        })?;
    }

    // drop a varying number of female utterances per keyword, then balance
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let rows: Vec<_> = raw
        .utterances()
        .iter()
        .filter(|u| u.group == Group::Male || r.random_bool(0.3 + 0.15 * u.class_index as f64))
        .cloned()
        .collect();
    let skewed = Dataset::from_rows(rows, raw.metadata.clone()).map_err(e2s)?;
    let balanced = gender_balance(&skewed, 4).map_err(e2s)?;
    for kw in balanced.keywords() {
        let (m, f) = (balanced.count(kw, Group::Male), balanced.count(kw, Group::Female));
        ensure(m == f && m > 0, || format!("{kw}: {m} male vs {f} female after balancing"))?;
    }

    let groups: Vec<Group> = (0..97).map(|i| if i % 3 == 0 { Group::Female } else { Group::Male }).collect();
    for bs in [2, 16, 128] {
        let batches = BalancedBatches::new(&groups, bs, 5).map_err(e2s)?;
        for e in 0..3 {
            for b in batches.epoch(e) {
                let males = b.iter().filter(|&&i| groups[i] == Group::Male).count();
                ensure(b.len() == bs && 2 * males == bs, || format!("batch of {} with {males} male", b.len()))?;
            }
        }
    }

    let ds = split(&raw, SplitRatios { train: 0.5, validation: 0.25, test: 0.25 }, SplitStrategy::PerKeywordGroup, 2)
        .map_err(e2s)?;
    let clips = ds.load_audio(&Executor::Sequential).map_err(e2s)?;
    let plan = small_plan();
    let seq = dir.path().join("seq");
    let par = dir.path().join("par");
    run_sweep(&plan, &ds, &clips, &seq, &Executor::Sequential).map_err(e2s)?;
    run_sweep(&plan, &ds, &clips, &par, &Executor::with_parallelism(4)).map_err(e2s)?;
    let a = std::fs::read(seq.join("results.csv")).map_err(e2s)?;
    let b = std::fs::read(par.join("results.csv")).map_err(e2s)?;
    ensure(a == b, || "results differ between parallelism 1 and 4".into())?;
    let table = read_results(&seq.join("results.csv")).map_err(e2s)?;
    let rows = table.len();
    tables.push(table);
    Ok(format!("pair-disjoint splits, equal gender counts, half-per-gender batches; {rows}-row sweep byte-identical at 1 vs 4 workers"))
}

// ---------------------------------------------------------------- selection

fn selection_soundness(tables: &[Vec<ExperimentRecord>]) -> Check {
    ensure(!tables.is_empty(), || "no results tables were produced".into())?;
    let mut checked = 0;
    for table in tables {
        for stage in [Stage::Train, Stage::Prune] {
            let rows: Vec<(f64, f64)> = table
                .iter()
                .filter(|r| r.stage == stage && r.is_ok())
                .filter_map(|r| Some((r.overall_mcc?, r.reliability_bias?)))
                .collect();
            if rows.is_empty() {
                continue;
            }
            let best = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);

            let crit = SelectionCriterion::new(CriterionKind::LowBiasHighAccuracy);
            let pick = select(&rows, &crit).map_err(e2s)?[0];
            ensure(rows[pick].0 >= 0.985 * best, || format!("pick {pick} below threshold"))?;
            let min_bias =
                rows.iter().filter(|r| r.0 >= 0.985 * best).map(|r| r.1).fold(f64::INFINITY, f64::min);
            ensure(rows[pick].1 == min_bias, || format!("pick bias {} but qualifier minimum {min_bias}", rows[pick].1))?;

            let strict = select(&rows, &SelectionCriterion { accuracy_tolerance: 0.0, ..crit }).map_err(e2s)?[0];
            let top: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].0 == best).collect();
            let want = top.iter().copied().min_by(|&a, &b| rows[a].1.total_cmp(&rows[b].1)).ok_or("no maximum")?;
            ensure(strict == want, || format!("tolerance 0 chose {strict}, high accuracy with bias tie-break gives {want}"))?;
            let ha = select(&rows, &SelectionCriterion::new(CriterionKind::HighAccuracy)).map_err(e2s)?[0];
            ensure(rows[ha].0 == rows[strict].0, || "tolerance 0 left the top-MCC set".into())?;
            checked += 1;
        }
    }
    ensure(checked > 0, || "no table had scorable rows".into())?;
    let distinct: HashSet<usize> = tables.iter().map(Vec::len).collect();
    Ok(format!("{checked} candidate sets from {} tables (sizes {distinct:?}) verified by exhaustive scan", tables.len()))
}

fn main() {
    // A criterion that panics counts as a failure instead of aborting the suite.
    let guard = |f: &dyn Fn() -> Check| -> Check {
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()))
    };
    let secs = Duration::from_secs;
    let mut tables = Vec::new();
    let mut out = vec![
        run("bias oracle", secs(1), || guard(&bias_oracle)),
        run("MCC oracle", secs(5), || guard(&mcc_oracle)),
        run("gradient check", secs(30), || guard(&gradient_check)),
        run("DSP checks", secs(10), || guard(&dsp_checks)),
        run("pruning schedule and masks", secs(60), || guard(&pruning_schedule)),
        run("grid-count reproduction", secs(1), || guard(&grid_counts)),
        run("desk-scale training", secs(180), || guard(&desk_training)),
    ];
    let mut trend_tables = Vec::new();
    out.push(run("pruning trends", secs(900), || {
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| trends(&mut trend_tables)))
            .unwrap_or_else(|_| Err("panicked".into()))
    }));
    tables.append(&mut trend_tables);
    let mut sweep_tables = Vec::new();
    let protocol_outcome = run("protocol invariants", secs(300), || {
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| protocol(&mut sweep_tables)))
            .unwrap_or_else(|_| Err("panicked".into()))
    });
    tables.append(&mut sweep_tables);
    out.push(run("selection soundness", secs(5), || guard(&|| selection_soundness(&tables))));
    out.push(protocol_outcome);

    let failed: Vec<&str> = out.iter().filter(|o| o.result.is_err()).map(|o| o.name).collect();
    let total: Duration = out.iter().map(|o| o.elapsed).sum();
    println!("{} of {} criteria passed in {:.1}s", out.len() - failed.len(), out.len(), total.as_secs_f64());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}

//! Sequential versus rayon executors on feature extraction and a small
//! training sweep.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kwsbias::dataset::{split, synth_dataset, SplitRatios, SplitStrategy, SynthConfig};
use kwsbias::dsp::{FeatureConfig, WindowFn};
use kwsbias::metrics::PerformanceMetric;
use kwsbias::nn::{Architecture, TrainConfig};
use kwsbias::pipeline::featurize_clips;
use kwsbias::pruning::PruneConfig;
use kwsbias::sweep::{run_sweep, BaselineRule, ExperimentGrid, MfccCount, Preset, SweepPlan};
use kwsbias::Executor;

fn executors() -> Vec<(&'static str, Executor)> {
    let mut v = vec![("sequential", Executor::Sequential)];
    if cfg!(feature = "parallel") {
        v.push(("parallel", Executor::with_parallelism(0)));
    }
    v
}

fn bench(c: &mut Criterion) {
    let data = tempfile::tempdir().unwrap();
    let synth = SynthConfig { speakers_per_gender: 4, utterances_per_speaker: 2, ..SynthConfig::default() };
    let ds = synth_dataset(&synth, data.path()).unwrap();
    let ratios = SplitRatios { train: 0.5, validation: 0.25, test: 0.25 };
    let ds = split(&ds, ratios, SplitStrategy::PerKeywordGroup, 0).unwrap();
    let clips = ds.load_audio(&Executor::Sequential).unwrap();

    let features = FeatureConfig::default();
    let mut g = c.benchmark_group("featurize");
    g.sample_size(10);
    for (name, exec) in executors() {
        g.bench_function(name, |b| b.iter(|| black_box(featurize_clips(&clips, &features, &exec).unwrap())));
    }
    g.finish();

    let plan = SweepPlan {
        grid: ExperimentGrid {
            preset: Preset::Custom,
            sample_rates: vec![8000],
            architectures: vec![Architecture::Cnn],
            num_mel_banks: vec![20, 26],
            num_mfcc: vec![MfccCount(Some(10)), MfccCount(Some(12))],
            frame_lengths_ms: vec![40],
            frame_steps_pct: vec![60],
            windows: vec![WindowFn::Hamming],
            ..ExperimentGrid::table1(0)
        },
        train: TrainConfig { epochs: 1, batch_size: 16, learning_rate_grid: vec![1e-2], seed: 0 },
        prune: PruneConfig::default(),
        metric: PerformanceMetric::Mcc,
        baselines: BaselineRule::default(),
        run_pruning: false,
    };
    let mut g = c.benchmark_group("sweep_4_experiments");
    g.sample_size(10);
    for (name, exec) in executors() {
        g.bench_function(name, |b| {
            b.iter(|| {
                let out = tempfile::tempdir().unwrap();
                black_box(run_sweep(&plan, &ds, &clips, out.path(), &exec).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);

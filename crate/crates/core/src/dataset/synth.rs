//! Synthetic keyword corpus.
//!
//! Class `k` is a sequence of three tone segments whose frequencies are the
//! base-5 digits of `k` mapped onto a geometric frequency ladder. Each
//! speaker multiplies all frequencies by a persistent pitch factor drawn
//! from a group-specific range; the ranges are disjoint, so group
//! membership is a learnable covariate. Utterances vary in onset, level
//! and additive noise. This is a test fixture, not a model of speech.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{samples_for, AudioClip, SUPPORTED_RATES};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng, stream_seed};

use super::{write_manifest, Dataset, DatasetMetadata, Group, Split, Utterance, MAX_KEYWORDS};

const LADDER_HZ: [f64; 5] = [350.0, 560.0, 900.0, 1440.0, 2300.0];
const SEGMENTS: usize = 3;
const SEGMENT_MS: f64 = 180.0;
const FADE_MS: f64 = 15.0;
const TEMPLATE_ONSET_MS: f64 = 200.0;
const MALE_PITCH: (f64, f64) = (0.80, 0.92);
const FEMALE_PITCH: (f64, f64) = (1.08, 1.20);

/// Keyword names: every name is longer than three characters and has a
/// unique three-letter prefix, so keyword selection keeps all of them.
const NAMES: [&str; MAX_KEYWORDS] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliett",
    "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
    "uniform", "victor", "whiskey", "xray", "yankee", "zulu", "seven", "eight", "three", "four",
    "five", "nine", "zero", "left", "right",
];

pub fn keyword_name(class: usize) -> &'static str {
    NAMES[class]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub speakers_per_gender: usize,
    /// Utterances per speaker per class.
    pub utterances_per_speaker: usize,
    pub sample_rate: u32,
    pub seed: u64,
    #[serde(default = "default_clip_ms")]
    pub clip_duration_ms: u32,
    /// Standard deviation of the additive Gaussian noise.
    #[serde(default = "default_noise")]
    pub noise_level: f64,
}

fn default_clip_ms() -> u32 {
    1000
}

fn default_noise() -> f64 {
    0.02
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            speakers_per_gender: 4,
            utterances_per_speaker: 5,
            sample_rate: 16000,
            seed: 0,
            clip_duration_ms: default_clip_ms(),
            noise_level: default_noise(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(2..=MAX_KEYWORDS).contains(&self.num_classes) {
            return bad(format!("num_classes must be in 2..={MAX_KEYWORDS}"));
        }
        if self.speakers_per_gender < 2 {
            return bad("speakers_per_gender must be >= 2".into());
        }
        if self.utterances_per_speaker == 0 {
            return bad("utterances_per_speaker must be >= 1".into());
        }
        if !SUPPORTED_RATES.contains(&self.sample_rate) {
            return bad(format!("sample_rate must be one of {SUPPORTED_RATES:?}"));
        }
        let word_ms = TEMPLATE_ONSET_MS + 60.0 + SEGMENTS as f64 * SEGMENT_MS;
        if f64::from(self.clip_duration_ms) < word_ms {
            return bad(format!("clip_duration_ms must be >= {word_ms}"));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad("noise_level must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// Rendering parameters of one utterance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtteranceParams {
    pub class: usize,
    pub pitch: f64,
    pub onset_ms: f64,
    pub amplitude: f64,
    pub noise_std: f64,
    pub noise_seed: u64,
}

fn segment_freqs(class: usize) -> [f64; SEGMENTS] {
    let mut out = [0.0; SEGMENTS];
    let mut k = class;
    for f in &mut out {
        *f = LADDER_HZ[k % LADDER_HZ.len()];
        k /= LADDER_HZ.len();
    }
    out
}

pub fn render_utterance(p: &UtteranceParams, sample_rate: u32, clip_duration_ms: u32) -> AudioClip {
    let rate = f64::from(sample_rate);
    let n = samples_for(clip_duration_ms, sample_rate);
    let mut samples = vec![0.0; n];
    let seg_len = (SEGMENT_MS * rate / 1000.0).round() as usize;
    let fade = (FADE_MS * rate / 1000.0).round() as usize;
    let start = (p.onset_ms * rate / 1000.0).round().max(0.0) as usize;
    for (s, freq) in segment_freqs(p.class).iter().enumerate() {
        let f = freq * p.pitch;
        let offset = start + s * seg_len;
        for i in 0..seg_len {
            let Some(x) = samples.get_mut(offset + i) else { break };
            let edge = i.min(seg_len - 1 - i);
            let env = if edge < fade {
                0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos()
            } else {
                1.0
            };
            *x += p.amplitude * env * (2.0 * PI * f * i as f64 / rate).sin();
        }
    }
    if p.noise_std > 0.0 {
        let mut r = rng(p.noise_seed);
        let normal = Normal::new(0.0, p.noise_std).expect("finite std");
        samples.iter_mut().for_each(|x| *x += normal.sample(&mut r));
    }
    samples.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
    AudioClip::new(samples, sample_rate)
}

/// Noise-free, unshifted rendering of a class.
pub fn class_template(class: usize, sample_rate: u32, clip_duration_ms: u32) -> AudioClip {
    render_utterance(
        &UtteranceParams {
            class,
            pitch: 1.0,
            onset_ms: TEMPLATE_ONSET_MS,
            amplitude: 0.5,
            noise_std: 0.0,
            noise_seed: 0,
        },
        sample_rate,
        clip_duration_ms,
    )
}

struct Speaker {
    id: String,
    group: Group,
    pitch: f64,
}

fn speakers(cfg: &SynthConfig) -> Vec<Speaker> {
    let mut out = Vec::new();
    for (gi, (group, range, tag)) in [(Group::Male, MALE_PITCH, 'm'), (Group::Female, FEMALE_PITCH, 'f')]
        .into_iter()
        .enumerate()
    {
        for s in 0..cfg.speakers_per_gender {
            let mut r = rng(mix_seed(stream_seed(cfg.seed, "speaker"), (gi * 1000 + s) as u64));
            out.push(Speaker {
                id: format!("{tag}{s:02}"),
                group,
                pitch: r.random_range(range.0..range.1),
            });
        }
    }
    out
}

/// Rendering parameters and metadata for every utterance, in manifest order.
pub(crate) fn plan(cfg: &SynthConfig) -> Vec<(Utterance, UtteranceParams)> {
    let mut out = Vec::new();
    let base = stream_seed(cfg.seed, "utterance");
    for spk in speakers(cfg) {
        for class in 0..cfg.num_classes {
            for u in 0..cfg.utterances_per_speaker {
                let index = out.len() as u64;
                let mut r = rng(mix_seed(base, index));
                let params = UtteranceParams {
                    class,
                    pitch: spk.pitch,
                    onset_ms: TEMPLATE_ONSET_MS + r.random_range(-40.0..40.0),
                    amplitude: r.random_range(0.3..0.6),
                    noise_std: cfg.noise_level,
                    noise_seed: r.random(),
                };
                let keyword = keyword_name(class);
                out.push((
                    Utterance {
                        audio_path: format!("wav/{}_{keyword}_{u:02}.wav", spk.id).into(),
                        keyword: keyword.to_string(),
                        class_index: class,
                        speaker_id: spk.id.clone(),
                        group: spk.group,
                        split: Split::Unassigned,
                    },
                    params,
                ));
            }
        }
    }
    out
}

/// Renders the corpus into `out_dir/wav/` and writes `out_dir/manifest.csv`.
/// Output is a pure function of the config.
pub fn synth_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<Dataset> {
    cfg.validate()?;
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let mut rows = Vec::new();
    for (mut utt, params) in plan(cfg) {
        utt.audio_path = out_dir.join(&utt.audio_path);
        let clip = render_utterance(&params, cfg.sample_rate, cfg.clip_duration_ms);
        super::write_wav(&utt.audio_path, &clip)?;
        rows.push(utt);
    }
    let meta = DatasetMetadata {
        name: "synthetic".into(),
        notes: vec![format!(
            "synthetic corpus: {} classes, {} speakers/gender, {} utterances/speaker/class, {} Hz, seed {}",
            cfg.num_classes, cfg.speakers_per_gender, cfg.utterances_per_speaker, cfg.sample_rate, cfg.seed
        )],
        ..Default::default()
    };
    let keywords = (0..cfg.num_classes).map(|k| keyword_name(k).to_string()).collect();
    let ds = Dataset::new(rows, keywords, meta)?;
    write_manifest(&ds, &out_dir.join("manifest.csv"))?;
    Ok(ds)
}

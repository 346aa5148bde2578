//! Audio front-end: resampling, framing, windowing, power spectra, Mel
//! filterbanks, log-Mel spectrograms and MFCCs with per-coefficient mean
//! normalization.
//!
//! All functions here are pure; extractors can be shared across threads.

mod features;
mod frame;
mod mel;
mod resample;
mod spectrum;
mod window;

pub use features::{dct_ii_matrix, extract_features, fit_duration, FeatureExtractor, LOG_FLOOR};
pub use frame::{frame, FrameLayout};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use resample::{resample, resample_to};
pub use spectrum::{power_spectrum, SpectrumPlan};
pub use window::{window_coefficients, WindowFn};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rates accepted after ingestion.
pub const SUPPORTED_RATES: [u32; 2] = [8000, 16000];

pub const FRAME_LENGTHS_MS: [u32; 4] = [20, 25, 30, 40];
pub const FRAME_STEPS_PCT: [u32; 3] = [40, 50, 60];
pub const MEL_BANKS: [usize; 6] = [20, 26, 32, 40, 60, 80];
pub const MFCC_COUNTS: [usize; 5] = [10, 11, 12, 13, 14];

/// Mono audio with amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silence(duration_ms: u32, sample_rate: u32) -> Self {
        Self::new(vec![0.0; samples_for(duration_ms, sample_rate)], sample_rate)
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / f64::from(self.sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `round(duration_ms * sample_rate / 1000)` in integer arithmetic.
pub fn samples_for(duration_ms: u32, sample_rate: u32) -> usize {
    ((u64::from(duration_ms) * u64::from(sample_rate) + 500) / 1000) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureType {
    LogMel,
    Mfcc,
}

impl FeatureType {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureType::LogMel => "log_mel",
            FeatureType::Mfcc => "mfcc",
        }
    }
}

/// One point in the pre-processing design space.
/// Omitted fields take the [`Default`] values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub feature_type: FeatureType,
    pub num_mel_banks: usize,
    /// `None` (written `"none"`) for log-Mel features.
    #[serde(with = "mfcc_serde")]
    pub num_mfcc: Option<usize>,
    pub frame_length_ms: u32,
    pub frame_step_pct: u32,
    pub window: WindowFn,
    #[serde(default = "default_clip_ms")]
    pub clip_duration_ms: u32,
}

/// Serde form of an optional MFCC count: an integer, or `"none"` (also
/// accepted as 0) for log-Mel.
pub(crate) mod mfcc_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_u64(*n as u64),
            None => s.serialize_str("none"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Ok(None),
            Raw::N(n) => Ok(Some(n as usize)),
            Raw::S(s) if s.eq_ignore_ascii_case("none") => Ok(None),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected an MFCC count or \"none\", got {s:?}"))),
        }
    }
}

fn default_clip_ms() -> u32 {
    1000
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            feature_type: FeatureType::Mfcc,
            num_mel_banks: 40,
            num_mfcc: Some(13),
            frame_length_ms: 25,
            frame_step_pct: 40,
            window: WindowFn::Hamming,
            clip_duration_ms: 1000,
        }
    }
}

impl FeatureConfig {
    /// Builds a config, deriving the feature type from `num_mfcc`
    /// (`None` means log-Mel).
    pub fn new(
        sample_rate: u32,
        num_mel_banks: usize,
        num_mfcc: Option<usize>,
        frame_length_ms: u32,
        frame_step_pct: u32,
        window: WindowFn,
    ) -> Self {
        Self {
            sample_rate,
            feature_type: if num_mfcc.is_some() {
                FeatureType::Mfcc
            } else {
                FeatureType::LogMel
            },
            num_mel_banks,
            num_mfcc,
            frame_length_ms,
            frame_step_pct,
            window,
            clip_duration_ms: default_clip_ms(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !SUPPORTED_RATES.contains(&self.sample_rate) {
            return bad(format!("sample_rate {} not in {SUPPORTED_RATES:?}", self.sample_rate));
        }
        if !FRAME_LENGTHS_MS.contains(&self.frame_length_ms) {
            return bad(format!(
                "frame_length_ms {} not in {FRAME_LENGTHS_MS:?}",
                self.frame_length_ms
            ));
        }
        if !FRAME_STEPS_PCT.contains(&self.frame_step_pct) {
            return bad(format!(
                "frame_step_pct {} not in {FRAME_STEPS_PCT:?}",
                self.frame_step_pct
            ));
        }
        if !MEL_BANKS.contains(&self.num_mel_banks) {
            return bad(format!("num_mel_banks {} not in {MEL_BANKS:?}", self.num_mel_banks));
        }
        match (self.feature_type, self.num_mfcc) {
            (FeatureType::Mfcc, Some(n)) => {
                if !MFCC_COUNTS.contains(&n) {
                    return bad(format!("num_mfcc {n} not in {MFCC_COUNTS:?}"));
                }
                if n > self.num_mel_banks {
                    return bad(format!("num_mfcc {n} exceeds num_mel_banks {}", self.num_mel_banks));
                }
            }
            (FeatureType::LogMel, None) => {}
            (ft, n) => {
                return bad(format!("feature_type {ft:?} inconsistent with num_mfcc {n:?}"));
            }
        }
        if self.clip_duration_ms == 0 {
            return bad("clip_duration_ms must be positive".into());
        }
        Ok(())
    }

    pub fn num_coeffs(&self) -> usize {
        self.num_mfcc.unwrap_or(self.num_mel_banks)
    }

    pub fn frame_layout(&self) -> Result<FrameLayout> {
        FrameLayout::new(self.frame_length_ms, self.frame_step_pct, self.sample_rate)
    }

    /// `(frames, coefficients)` of the matrices this config produces.
    pub fn output_shape(&self) -> Result<(usize, usize)> {
        let len = samples_for(self.clip_duration_ms, self.sample_rate);
        Ok((self.frame_layout()?.num_frames(len)?, self.num_coeffs()))
    }
}

/// Time x coefficient matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub num_frames: usize,
    pub num_coeffs: usize,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, num_frames: usize, num_coeffs: usize) -> Self {
        debug_assert_eq!(values.len(), num_frames * num_coeffs);
        Self {
            values,
            num_frames,
            num_coeffs,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_frames, self.num_coeffs)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.num_coeffs..(t + 1) * self.num_coeffs]
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.num_coeffs + c]
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.num_coeffs];
        for t in 0..self.num_frames {
            for (m, v) in means.iter_mut().zip(self.row(t)) {
                *m += v;
            }
        }
        let n = self.num_frames.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_invariants() {
        assert!(FeatureConfig::default().validate().is_ok());
        let mut c = FeatureConfig { num_mfcc: None, ..FeatureConfig::default() };
        assert!(c.validate().is_err(), "mfcc type without count");
        c.feature_type = FeatureType::LogMel;
        assert!(c.validate().is_ok());
        c.frame_step_pct = 45;
        assert!(c.validate().is_err());
        let c = FeatureConfig::new(22050, 40, None, 25, 40, WindowFn::Hann);
        assert!(c.validate().is_err());
    }

    #[test]
    fn output_shape_default() {
        assert_eq!(FeatureConfig::default().output_shape().unwrap(), (98, 13));
    }

    #[test]
    fn sample_count_rounding() {
        assert_eq!(samples_for(1000, 16000), 16000);
        assert_eq!(samples_for(25, 16000), 400);
        assert_eq!(samples_for(1, 8000), 8);
    }
}

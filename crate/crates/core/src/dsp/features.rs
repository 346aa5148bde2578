use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::{
    mel_filterbank, samples_for, window_coefficients, AudioClip, FeatureConfig, FeatureMatrix,
    FeatureType, FrameLayout, MelFilterbank, SpectrumPlan,
};

/// Floor added to filterbank energies before the natural log.
pub const LOG_FLOOR: f64 = 1e-6;

/// Orthonormal DCT-II rows `0..num_out` for inputs of length `num_in`.
pub fn dct_ii_matrix(num_out: usize, num_in: usize) -> Vec<Vec<f64>> {
    let m = num_in as f64;
    (0..num_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            (0..num_in)
                .map(|i| scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * m)).cos())
                .collect()
        })
        .collect()
}

/// Zero-pads at the end or truncates from the end to exactly `duration_ms`.
pub fn fit_duration(clip: &AudioClip, duration_ms: u32) -> AudioClip {
    let target = samples_for(duration_ms, clip.sample_rate);
    let mut samples = clip.samples.clone();
    samples.resize(target, 0.0);
    AudioClip::new(samples, clip.sample_rate)
}

/// Precomputed window, FFT plan, filterbank and DCT for one [`FeatureConfig`].
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    layout: FrameLayout,
    window: Vec<f64>,
    plan: SpectrumPlan,
    filterbank: MelFilterbank,
    dct: Option<Vec<Vec<f64>>>,
}

impl FeatureExtractor {
    pub fn new(config: &FeatureConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.frame_layout()?;
        let window = window_coefficients(config.window, layout.frame_len)?;
        let plan = SpectrumPlan::new(layout.frame_len)?;
        let filterbank = mel_filterbank(
            config.num_mel_banks,
            plan.fft_size(),
            config.sample_rate,
            0.0,
            f64::from(config.sample_rate) / 2.0,
        )?;
        let dct = match config.feature_type {
            FeatureType::Mfcc => Some(dct_ii_matrix(
                config.num_coeffs(),
                config.num_mel_banks,
            )),
            FeatureType::LogMel => None,
        };
        Ok(Self {
            config: config.clone(),
            layout,
            window,
            plan,
            filterbank,
            dct,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// frame -> window -> power spectrum -> Mel filterbank -> ln(e + floor)
    /// -> optional DCT-II -> per-column mean removal.
    ///
    /// The clip is first fitted to the configured duration.
    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        if clip.sample_rate != self.config.sample_rate {
            return Err(Error::InvalidConfig(format!(
                "clip at {} Hz given to a {} Hz pipeline; resample first",
                clip.sample_rate, self.config.sample_rate
            )));
        }
        let clip = fit_duration(clip, self.config.clip_duration_ms);
        let frames = self.layout.frames(&clip.samples)?;
        let num_coeffs = self.config.num_coeffs();
        let mut values = Vec::with_capacity(frames.len() * num_coeffs);
        let mut windowed = vec![0.0; self.layout.frame_len];
        for fr in &frames {
            for ((w, s), c) in windowed.iter_mut().zip(fr.iter()).zip(&self.window) {
                *w = s * c;
            }
            let power = self.plan.power(&windowed)?;
            let log_mel: Vec<f64> = self
                .filterbank
                .apply(&power)
                .into_iter()
                .map(|e| (e + LOG_FLOOR).ln())
                .collect();
            match &self.dct {
                Some(dct) => values.extend(
                    dct.iter()
                        .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum::<f64>()),
                ),
                None => values.extend(log_mel),
            }
        }
        let mut out = FeatureMatrix::new(values, frames.len(), num_coeffs);
        mean_normalize(&mut out);
        if out.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::PipelineFailure("non-finite feature value".into()));
        }
        Ok(out)
    }
}

/// Subtracts each column's mean over time. The mean is accumulated relative
/// to the column's first value so constant columns become exactly zero.
fn mean_normalize(m: &mut FeatureMatrix) {
    let (rows, cols) = m.shape();
    if rows == 0 {
        return;
    }
    for c in 0..cols {
        let pivot = m.values[c];
        let shift: f64 = (0..rows).map(|t| m.values[t * cols + c] - pivot).sum::<f64>() / rows as f64;
        for t in 0..rows {
            let v = &mut m.values[t * cols + c];
            *v = (*v - pivot) - shift;
        }
    }
}

pub fn extract_features(clip: &AudioClip, config: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(config)?.extract(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::WindowFn;
    use rand::{Rng, SeedableRng};

    fn noisy_clip(seed: u64, rate: u32) -> AudioClip {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = samples_for(1000, rate);
        AudioClip::new(
            (0..n)
                .map(|i| 0.3 * (i as f64 * 0.05).sin() + 0.1 * rng.random_range(-1.0..1.0))
                .collect(),
            rate,
        )
    }

    #[test]
    fn dct_of_constant_row() {
        let dct = dct_ii_matrix(4, 4);
        let out: Vec<f64> = dct.iter().map(|r| r.iter().sum::<f64>()).collect();
        assert!((out[0] - 2.0).abs() < 1e-12);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dct_is_orthonormal() {
        for m in [4, 13, 20, 40, 80] {
            let d = dct_ii_matrix(m, m);
            for i in 0..m {
                for j in 0..m {
                    let dot: f64 = d[i].iter().zip(&d[j]).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10, "m={m} ({i},{j}) = {dot}");
                }
            }
        }
    }

    #[test]
    fn silence_gives_exact_zeros() {
        for (mfcc, wf) in [(Some(13), WindowFn::Hamming), (None, WindowFn::Hann)] {
            let cfg = FeatureConfig::new(16000, 40, mfcc, 25, 40, wf);
            let m = extract_features(&AudioClip::silence(1000, 16000), &cfg).unwrap();
            assert!(m.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn default_shape() {
        let m = extract_features(&noisy_clip(1, 16000), &FeatureConfig::default()).unwrap();
        assert_eq!(m.shape(), (98, 13));
        let log_mel = FeatureConfig::new(8000, 26, None, 20, 50, WindowFn::Hann);
        let m = extract_features(&noisy_clip(1, 8000), &log_mel).unwrap();
        assert_eq!(m.shape(), (99, 26));
    }

    #[test]
    fn columns_are_centered() {
        let m = extract_features(&noisy_clip(3, 16000), &FeatureConfig::default()).unwrap();
        assert!(m.column_means().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn deterministic() {
        let clip = noisy_clip(5, 16000);
        let a = extract_features(&clip, &FeatureConfig::default()).unwrap();
        let b = extract_features(&clip, &FeatureConfig::default()).unwrap();
        assert_eq!(
            a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn short_clips_are_padded_and_long_clips_truncated() {
        let cfg = FeatureConfig::default();
        let short = AudioClip::new(vec![0.1; 3000], 16000);
        assert_eq!(extract_features(&short, &cfg).unwrap().shape(), (98, 13));
        let long = AudioClip::new(vec![0.1; 40000], 16000);
        assert_eq!(extract_features(&long, &cfg).unwrap().shape(), (98, 13));
    }

    #[test]
    fn rate_mismatch_rejected() {
        let err = extract_features(&AudioClip::silence(1000, 8000), &FeatureConfig::default());
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}

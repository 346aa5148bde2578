use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::AudioClip;

/// Taps per side of the anti-aliasing filter, per unit of decimation factor.
const HALF_TAPS_PER_FACTOR: usize = 32;

/// Integer-factor decimation with a Blackman-windowed sinc low-pass whose
/// cutoff sits at the output Nyquist frequency. The filter is zero-phase
/// (centred), so output sample `n` aligns with input sample `n * factor`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    if target_rate == 0 || clip.sample_rate < target_rate || !clip.sample_rate.is_multiple_of(target_rate) {
        return Err(Error::UnsupportedRate {
            from: clip.sample_rate,
            to: target_rate,
        });
    }
    let factor = (clip.sample_rate / target_rate) as usize;
    let taps = lowpass_taps(factor);
    let half = (taps.len() / 2) as isize;
    let x = &clip.samples;
    let out_len = x.len().div_ceil(factor);
    let samples = (0..out_len)
        .map(|n| {
            let centre = (n * factor) as isize;
            taps.iter()
                .enumerate()
                .filter_map(|(k, h)| {
                    let idx = centre + half - k as isize;
                    (idx >= 0 && (idx as usize) < x.len()).then(|| h * x[idx as usize])
                })
                .sum()
        })
        .collect();
    Ok(AudioClip::new(samples, target_rate))
}

/// Resamples only when needed; borrows otherwise.
pub fn resample_to(clip: &AudioClip, target_rate: u32) -> Result<std::borrow::Cow<'_, AudioClip>> {
    if clip.sample_rate == target_rate {
        Ok(std::borrow::Cow::Borrowed(clip))
    } else {
        resample(clip, target_rate).map(std::borrow::Cow::Owned)
    }
}

fn lowpass_taps(factor: usize) -> Vec<f64> {
    let half = HALF_TAPS_PER_FACTOR * factor;
    let len = 2 * half + 1;
    let cutoff = 0.5 / factor as f64;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let m = i as f64 - half as f64;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * m).sin() / (PI * m)
            };
            let t = i as f64 / (len - 1) as f64;
            let blackman = 0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos();
            sinc * blackman
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= gain);
    taps
}

use crate::error::{Error, Result};

/// HTK Mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on a Mel-spaced grid, one row per bank.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    num_banks: usize,
    num_bins: usize,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn num_banks(&self) -> usize {
        self.num_banks
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn row(&self, bank: usize) -> &[f64] {
        &self.weights[bank * self.num_bins..(bank + 1) * self.num_bins]
    }

    pub fn center_hz(&self, bank: usize) -> f64 {
        self.centers_hz[bank]
    }

    /// Bank energies for one power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        debug_assert_eq!(power.len(), self.num_bins);
        (0..self.num_banks)
            .map(|b| self.row(b).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Builds `num_banks` unit-peak triangles whose edges are equally spaced in
/// Mel between `f_min` and `f_max`, evaluated at the bin centre frequencies
/// `k * sample_rate / fft_size` for `k = 0..=fft_size/2`.
pub fn mel_filterbank(
    num_banks: usize,
    fft_size: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    let nyquist = f64::from(sample_rate) / 2.0;
    if num_banks == 0 || fft_size < 2 {
        return Err(Error::InvalidConfig(format!(
            "filterbank needs num_banks >= 1 and fft_size >= 2 (got {num_banks}, {fft_size})"
        )));
    }
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidConfig(format!(
            "require 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]"
        )));
    }
    let num_bins = fft_size / 2 + 1;
    let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..num_banks + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (num_banks + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / fft_size as f64;

    let mut weights = vec![0.0; num_banks * num_bins];
    for b in 0..num_banks {
        let (lo, c, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        let row = &mut weights[b * num_bins..(b + 1) * num_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rise = (f - lo) / (c - lo);
            let fall = (hi - f) / (hi - c);
            *w = rise.min(fall).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::DegenerateFilterbank { bank: b, num_banks });
        }
    }
    Ok(MelFilterbank {
        weights,
        num_banks,
        num_bins,
        centers_hz: edges[1..=num_banks].to_vec(),
    })
}

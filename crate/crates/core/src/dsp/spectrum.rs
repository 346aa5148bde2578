use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Reusable one-sided power-spectrum transform for a fixed frame length.
///
/// Frames are zero-padded to the next power of two; the output holds
/// `fft_size / 2 + 1` unnormalized bins `|X[k]|^2`.
#[derive(Clone)]
pub struct SpectrumPlan {
    frame_len: usize,
    fft_size: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumPlan")
            .field("frame_len", &self.frame_len)
            .field("fft_size", &self.fft_size)
            .finish()
    }
}

impl SpectrumPlan {
    pub fn new(frame_len: usize) -> Result<Self> {
        if frame_len == 0 {
            return Err(Error::InvalidLength("frame length must be >= 1".into()));
        }
        let fft_size = frame_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            frame_len,
            fft_size,
            fft,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn power(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.frame_len {
            return Err(Error::Shape(format!(
                "frame of {} samples given to a plan for {}",
                frame.len(),
                self.frame_len
            )));
        }
        if frame.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal("non-finite sample in frame".into()));
        }
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_size)
            .collect();
        self.fft.process(&mut buf);
        Ok(buf[..self.num_bins()].iter().map(|c| c.norm_sqr()).collect())
    }
}

pub fn power_spectrum(frame: &[f64]) -> Result<Vec<f64>> {
    SpectrumPlan::new(frame.len())?.power(frame)
}

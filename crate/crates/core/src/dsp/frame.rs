use crate::error::{Error, Result};

use super::samples_for;

/// Frame and hop sizes in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameLayout {
    pub frame_len: usize,
    pub step: usize,
}

impl FrameLayout {
    /// `frame_len = round(ms * rate / 1000)`, `step = round(frame_len * pct / 100)`.
    pub fn new(frame_length_ms: u32, frame_step_pct: u32, sample_rate: u32) -> Result<Self> {
        let frame_len = samples_for(frame_length_ms, sample_rate);
        if frame_len == 0 {
            return Err(Error::InvalidLength(format!(
                "{frame_length_ms} ms at {sample_rate} Hz is zero samples"
            )));
        }
        let step = (frame_len * frame_step_pct as usize + 50) / 100;
        if step == 0 {
            return Err(Error::InvalidLength(format!(
                "frame step of {frame_step_pct}% of {frame_len} samples rounds to zero"
            )));
        }
        Ok(Self { frame_len, step })
    }

    pub fn num_frames(&self, signal_len: usize) -> Result<usize> {
        if signal_len < self.frame_len {
            return Err(Error::TooShortSignal {
                len: signal_len,
                frame: self.frame_len,
            });
        }
        Ok((signal_len - self.frame_len) / self.step + 1)
    }

    /// Contiguous frames; a trailing remainder shorter than a frame is dropped.
    pub fn frames<'a>(&self, signal: &'a [f64]) -> Result<Vec<&'a [f64]>> {
        let n = self.num_frames(signal.len())?;
        Ok((0..n)
            .map(|i| &signal[i * self.step..i * self.step + self.frame_len])
            .collect())
    }
}

pub fn frame(
    signal: &[f64],
    frame_length_ms: u32,
    frame_step_pct: u32,
    sample_rate: u32,
) -> Result<Vec<&[f64]>> {
    FrameLayout::new(frame_length_ms, frame_step_pct, sample_rate)?.frames(signal)
}

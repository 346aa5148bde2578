use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFn {
    Hamming,
    Hann,
}

impl WindowFn {
    fn alpha(self) -> f64 {
        match self {
            WindowFn::Hamming => 0.54,
            WindowFn::Hann => 0.5,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            WindowFn::Hamming => "hamming",
            WindowFn::Hann => "hann",
        }
    }
}

/// Periodic (DFT-even) window: `w[n] = a - (1 - a) cos(2 pi n / N)`.
pub fn window_coefficients(window: WindowFn, length: usize) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::InvalidLength("window length must be >= 1".into()));
    }
    let a = window.alpha();
    let n = length as f64;
    Ok((0..length)
        .map(|i| a - (1.0 - a) * (2.0 * PI * i as f64 / n).cos())
        .collect())
}

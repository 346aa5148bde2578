use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::PruneConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    #[default]
    PolynomialDecay,
}

impl Schedule {
    pub const ALL: [Schedule; 2] = [Schedule::Constant, Schedule::PolynomialDecay];

    pub fn as_str(&self) -> &'static str {
        match self {
            Schedule::Constant => "constant",
            Schedule::PolynomialDecay => "polynomial_decay",
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "polynomial_decay" | "polynomial" => Ok(Schedule::PolynomialDecay),
            other => Err(Error::InvalidConfig(format!("unknown schedule {other:?}"))),
        }
    }
}

/// Target sparsity at optimizer step `step` of `total_steps`.
///
/// Polynomial decay is `s_f + (s_i - s_f) * (1 - t/T)^3`. The result is
/// clamped to the `[s_i, s_f]` interval so rounding can neither break the
/// boundary values nor monotonicity.
pub fn sparsity_at_step(config: &PruneConfig, step: usize, total_steps: usize) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidConfig("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(Error::InvalidConfig(format!("step {step} beyond total_steps {total_steps}")));
    }
    let (si, sf) = (config.initial_sparsity, config.final_sparsity);
    Ok(match config.schedule {
        Schedule::Constant => sf,
        Schedule::PolynomialDecay => {
            if step == 0 {
                return Ok(si);
            }
            if step == total_steps {
                return Ok(sf);
            }
            let frac = 1.0 - step as f64 / total_steps as f64;
            let s = sf + (si - sf) * frac.powi(3);
            if sf >= si { s.clamp(si, sf) } else { s.clamp(sf, si) }
        }
    })
}

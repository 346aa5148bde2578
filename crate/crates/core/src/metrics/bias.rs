use crate::error::{Error, Result};

/// `ln(performance_i / performance_overall)`: negative when the group does
/// worse than the population, positive when it does better.
pub fn group_bias(performance_i: f64, performance_overall: f64) -> Result<f64> {
    if !(performance_i > 0.0 && performance_overall > 0.0) || !performance_i.is_finite() || !performance_overall.is_finite()
    {
        return Err(Error::NonPositivePerformance { group: performance_i, overall: performance_overall });
    }
    Ok((performance_i / performance_overall).ln())
}

/// Unweighted sum of absolute group biases.
pub fn reliability_bias<I>(group_performances: I, performance_overall: f64) -> Result<f64>
where
    I: IntoIterator<Item = f64>,
{
    group_performances
        .into_iter()
        .map(|p| group_bias(p, performance_overall).map(f64::abs))
        .sum()
}

use crate::error::{Error, Result};
use crate::model::SplitModelParams;

/// Elementwise weighted average of congruent parameter sets.
///
/// Weights are normalized to sum to one. The average is accumulated as an
/// offset from the first set, so averaging identical sets returns them exactly.
pub fn fedavg(param_sets: &[SplitModelParams], weights: &[f64]) -> Result<SplitModelParams> {
    let Some(first) = param_sets.first() else {
        return Err(Error::contract("fedavg needs at least one parameter set"));
    };
    if weights.len() != param_sets.len() {
        return Err(Error::contract(format!(
            "{} parameter sets but {} weights",
            param_sets.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::config(format!("fedavg weights must be finite and >= 0, got {w}")));
    }
    if let Some(i) = param_sets.iter().position(|p| !p.congruent(first)) {
        return Err(Error::contract(format!("parameter set {i} differs in shape from set 0")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::config("fedavg weights sum to zero"));
    }

    let mut offset = first.zeros_like();
    for (set, w) in param_sets.iter().zip(weights).skip(1) {
        let share = w / total;
        let delta = set.zip_map(first, |x, x0| x - x0)?;
        offset = offset.zip_map(&delta, |a, d| a + share * d)?;
    }
    first.zip_map(&offset, |x0, d| x0 + d)
}

use crate::error::{Error, Result};
use crate::nn::ParameterSet;

/// Relative slack allowed between accumulated and expected weight.
pub const AGGREGATION_TOLERANCE: f64 = 1e-12;

/// Weighted mean built one contribution at a time. The total weight is
/// known up front, so each update is added pre-scaled by `weight / total`
/// and can be dropped as soon as `accumulate` returns.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationState {
    running: ParameterSet,
    weight_accumulated: f64,
    weight_total_expected: f64,
}

impl AggregationState {
    pub fn new(template: &ParameterSet, weight_total_expected: f64) -> Result<Self> {
        if !(weight_total_expected.is_finite() && weight_total_expected > 0.0) {
            return Err(Error::Argument(format!(
                "expected total weight must be positive, got {weight_total_expected}"
            )));
        }
        Ok(Self {
            running: template.zeros_like(),
            weight_accumulated: 0.0,
            weight_total_expected,
        })
    }

    pub fn weight_accumulated(&self) -> f64 {
        self.weight_accumulated
    }

    pub fn weight_total_expected(&self) -> f64 {
        self.weight_total_expected
    }

    pub fn accumulate(&mut self, update: &ParameterSet, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Argument(format!(
                "contribution weight must be positive, got {weight}"
            )));
        }
        let after = self.weight_accumulated + weight;
        if after > self.weight_total_expected * (1.0 + AGGREGATION_TOLERANCE) {
            return Err(Error::Internal(format!(
                "aggregation received weight {after} beyond the expected {}",
                self.weight_total_expected
            )));
        }
        self.running.add_scaled(update, weight / self.weight_total_expected)?;
        self.weight_accumulated = after;
        Ok(())
    }

    /// Weighted mean of the contributions received so far.
    pub fn current_mean(&self) -> ParameterSet {
        let mut mean = self.running.clone();
        if self.weight_accumulated > 0.0 {
            let scale = self.weight_total_expected / self.weight_accumulated;
            mean.values_mut().for_each(|v| *v *= scale);
        }
        mean
    }

    /// The final weighted mean; fails unless every expected contribution arrived.
    pub fn finish(self) -> Result<ParameterSet> {
        let gap = (self.weight_accumulated - self.weight_total_expected).abs();
        if gap > AGGREGATION_TOLERANCE * self.weight_total_expected {
            return Err(Error::Internal(format!(
                "aggregation closed with weight {} of the expected {}",
                self.weight_accumulated, self.weight_total_expected
            )));
        }
        Ok(self.running)
    }
}

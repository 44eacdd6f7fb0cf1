//! Per-intruder error, the episode objective and headline metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the per-intruder error and the controller reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeWeights {
    /// Error charged for a late detection, in `[0, 1]`.
    pub mu1: f64,
    /// Weight of perimeter coverage in the reward.
    pub mu2: f64,
    /// Weight of resolved intruder errors in the reward.
    pub mu3: f64,
}

impl Default for OutcomeWeights {
    fn default() -> Self {
        Self {
            mu1: 0.5,
            mu2: 2.0,
            mu3: 1.0,
        }
    }
}

impl OutcomeWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu1) {
            return Err(Error::config("weights.mu1", "must lie in [0, 1]"));
        }
        if !(self.mu2 > 0.0 && self.mu2.is_finite()) {
            return Err(Error::config("weights.mu2", "must be positive"));
        }
        if !(self.mu3 > 0.0 && self.mu3.is_finite()) {
            return Err(Error::config("weights.mu3", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Early,
    Late,
    Missed,
}

impl Outcome {
    /// Early iff detected strictly before the geofence crossing.
    pub fn classify(t_det: Option<u64>, t_g: u64) -> Outcome {
        match t_det {
            Some(t) if t < t_g => Outcome::Early,
            Some(_) => Outcome::Late,
            None => Outcome::Missed,
        }
    }

    pub fn is_detected(self) -> bool {
        self != Outcome::Missed
    }
}

/// `0` for early, `mu1` for late, `1` for a miss.
pub fn object_error(t_det: Option<u64>, t_g: u64, weights: &OutcomeWeights) -> f64 {
    match Outcome::classify(t_det, t_g) {
        Outcome::Early => 0.0,
        Outcome::Late => weights.mu1,
        Outcome::Missed => 1.0,
    }
}

/// Sum of intruder errors normalized by the expected intruder count
/// `alpha * horizon`.
pub fn objective(errors: &[f64], alpha: f64, horizon_ttis: u64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().sum::<f64>() / (alpha * horizon_ttis as f64)
}

/// What happened to one intruder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntruderOutcome {
    pub object_id: u64,
    pub t_in: u64,
    pub t_g: u64,
    pub t_exit: u64,
    pub t_det: Option<u64>,
    /// Device whose report was fused first.
    pub detector: Option<u32>,
    pub outcome: Outcome,
}

impl IntruderOutcome {
    /// Entry-to-detection delay in seconds.
    pub fn delay_s(&self, tti_duration: f64) -> Option<f64> {
        self.t_det.map(|t| (t - self.t_in) as f64 * tti_duration)
    }
}

/// Detection rate, early-detection rate and mean time-to-detect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub intruders: u64,
    pub detected: u64,
    pub early: u64,
    pub p_det: Option<f64>,
    pub p_early: Option<f64>,
    pub mean_t_det_s: Option<f64>,
}

/// Tallies outcomes. Rates are `None` with no intruders, and the mean delay
/// is `None` when nothing was detected.
pub fn metrics(outcomes: &[IntruderOutcome], tti_duration: f64) -> DetectionMetrics {
    let intruders = outcomes.len() as u64;
    let detected = outcomes.iter().filter(|o| o.outcome.is_detected()).count() as u64;
    let early = outcomes
        .iter()
        .filter(|o| o.outcome == Outcome::Early)
        .count() as u64;
    let delay_sum: f64 = outcomes
        .iter()
        .filter_map(|o| o.delay_s(tti_duration))
        .sum();
    let rate = |k: u64| (intruders > 0).then(|| k as f64 / intruders as f64);
    DetectionMetrics {
        intruders,
        detected,
        early,
        p_det: rate(detected),
        p_early: rate(early),
        mean_t_det_s: (detected > 0).then(|| delay_sum / detected as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(t_det: Option<u64>, t_g: u64) -> IntruderOutcome {
        IntruderOutcome {
            object_id: 0,
            t_in: 0,
            t_g,
            t_exit: 10_000,
            t_det,
            detector: None,
            outcome: Outcome::classify(t_det, t_g),
        }
    }

    #[test]
    fn error_branches() {
        let w = OutcomeWeights::default();
        assert_eq!(object_error(Some(100), 500, &w), 0.0);
        assert_eq!(object_error(Some(500), 500, &w), w.mu1);
        assert_eq!(object_error(None, 500, &w), 1.0);
    }

    #[test]
    fn objective_arithmetic() {
        assert_eq!(objective(&[], 0.1, 10), 0.0);
        assert_eq!(objective(&[0.0, 0.5, 1.0], 0.3, 10), 0.5);
        assert_eq!(objective(&[0.0, 0.0], 0.3, 10), 0.0);
    }

    #[test]
    fn metric_counts() {
        let m = metrics(
            &[
                outcome(Some(1), 10),
                outcome(Some(20), 10),
                outcome(None, 10),
            ],
            1e-3,
        );
        assert_eq!(m.p_det, Some(2.0 / 3.0));
        assert_eq!(m.p_early, Some(1.0 / 3.0));

        let m = metrics(&[outcome(Some(200), 1000), outcome(Some(400), 1000)], 1e-3);
        assert_eq!((m.p_det, m.p_early), (Some(1.0), Some(1.0)));
        assert!((m.mean_t_det_s.unwrap() - 0.3).abs() < 1e-12);

        let m = metrics(&[outcome(None, 5)], 1e-3);
        assert_eq!(m.mean_t_det_s, None);
        assert_eq!(metrics(&[], 1e-3).p_det, None);
    }

    #[test]
    fn rejects_bad_weights() {
        let w = OutcomeWeights {
            mu1: 1.5,
            ..Default::default()
        };
        assert!(w.validate().is_err());
        let w = OutcomeWeights {
            mu3: 0.0,
            ..Default::default()
        };
        assert!(w.validate().is_err());
    }
}

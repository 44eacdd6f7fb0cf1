use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::environment::{ArrivalProfile, GeofenceLayout, MAX_ARRIVAL_PROB_PER_TTI};
use crate::error::{Error, Result};
use crate::fgs::WakeupParams;
use crate::geometry::SensingParams;
use crate::policy::grid::{GridConfig, PhaseMode};
use crate::policy::qlearn::LearningParams;
use crate::policy::scoring::OutcomeWeights;

/// One simulated day at 1 ms TTIs.
pub const DAY_TTIS: u64 = 86_400_000;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Grid,
    Rl,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Grid => "grid",
            PolicyKind::Rl => "rl",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            PolicyKind::Grid => 0,
            PolicyKind::Rl => 1,
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(PolicyKind::Grid),
            "rl" => Ok(PolicyKind::Rl),
            other => Err(Error::config("policy", format!("unknown policy `{other}`"))),
        }
    }
}

/// Offline budget spent before an RL controller is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingParams {
    /// Q-learning episodes, one scripted intruder each.
    pub episodes: u32,
    /// Proposals evaluated by the placement search.
    pub placement_budget: u32,
    /// Rollouts averaged per placement score.
    pub placement_rollouts: u32,
    /// Spacing of candidate camera slots along the protected boundary, m.
    pub slot_spacing: f64,
    /// Probability of accepting a non-improving move, and of jumping to a
    /// random slot instead of a neighbour.
    pub placement_epsilon: f64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            episodes: 200,
            placement_budget: 40,
            placement_rollouts: 8,
            slot_spacing: 0.25,
            placement_epsilon: 0.1,
        }
    }
}

impl TrainingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_spacing > 0.0 && self.slot_spacing <= 0.5) {
            return Err(Error::config(
                "training.slot_spacing",
                "must lie in (0, 0.5]",
            ));
        }
        if self.placement_rollouts == 0 {
            return Err(Error::config(
                "training.placement_rollouts",
                "must be at least 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.placement_epsilon) {
            return Err(Error::config(
                "training.placement_epsilon",
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Everything a run needs. Loaded from TOML; omitted keys take defaults,
/// except `seed`, which must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: Option<u64>,
    pub policy: PolicyKind,
    pub n_devices: usize,
    /// Duty-cycle period in TTIs.
    pub tau: u64,
    pub phase_mode: PhaseMode,
    /// Seconds per TTI.
    pub tti_duration: f64,
    pub horizon_ttis: u64,
    /// Intruder speed, m/s.
    pub intruder_speed: f64,
    pub status_period_ttis: u64,
    /// Minimum TTIs between two rotations of one camera.
    pub rotation_cooldown_ttis: u64,
    /// Stop accepting reports for an intruder once it has been detected.
    pub suppress_after_fusion: bool,
    /// Let the grid baseline receive wake-ups too.
    pub grid_wakeups: bool,
    /// Below-threshold sighting reports the fusion centre accepts per
    /// intruder (RL only).
    pub max_sightings_per_object: u32,
    /// Points sampled on the barrier line when measuring coverage.
    pub coverage_samples: usize,
    /// Wall-clock hours at which energy snapshots are taken.
    pub snapshot_hours: Vec<f64>,
    pub record_events: bool,
    pub layout: GeofenceLayout,
    pub arrivals: ArrivalProfile,
    pub energy: EnergyParams,
    pub sensing: SensingParams,
    pub weights: OutcomeWeights,
    pub wakeup: WakeupParams,
    pub learning: LearningParams,
    pub training: TrainingParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: None,
            policy: PolicyKind::Grid,
            n_devices: 20,
            tau: 64,
            phase_mode: PhaseMode::Staggered,
            tti_duration: 1e-3,
            horizon_ttis: DAY_TTIS,
            intruder_speed: 1.0,
            status_period_ttis: 900_000,
            rotation_cooldown_ttis: 100,
            suppress_after_fusion: true,
            grid_wakeups: false,
            max_sightings_per_object: 2,
            coverage_samples: 1024,
            snapshot_hours: vec![6.0, 9.0, 12.0, 15.0, 18.0, 21.0],
            record_events: false,
            layout: GeofenceLayout::default(),
            arrivals: ArrivalProfile::default(),
            energy: EnergyParams::default(),
            sensing: SensingParams::default(),
            weights: OutcomeWeights::default(),
            wakeup: WakeupParams::default(),
            learning: LearningParams::default(),
            training: TrainingParams::default(),
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| Error::parse("config", e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            n_devices: self.n_devices,
            tau: self.tau,
            phase_mode: self.phase_mode,
        }
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let seed = self
            .seed
            .ok_or_else(|| Error::config("seed", "is required"))?;
        let _ = seed;
        if self.n_devices == 0 {
            return Err(Error::config("n_devices", "must be at least 1"));
        }
        if u32::try_from(self.n_devices).is_err() {
            return Err(Error::config("n_devices", "too large"));
        }
        if self.tau == 0 || u32::try_from(self.tau).is_err() {
            return Err(Error::config("tau", "must lie in [1, 2^32)"));
        }
        if !(self.tti_duration > 0.0 && self.tti_duration.is_finite()) {
            return Err(Error::config("tti_duration", "must be positive"));
        }
        if !(self.intruder_speed > 0.0 && self.intruder_speed.is_finite()) {
            return Err(Error::config("intruder_speed", "must be positive"));
        }
        if self.status_period_ttis == 0 {
            return Err(Error::config("status_period_ttis", "must be at least 1"));
        }
        if self.coverage_samples == 0 {
            return Err(Error::config("coverage_samples", "must be at least 1"));
        }
        if self.snapshot_hours.iter().any(|h| !(0.0..24.0).contains(h)) {
            return Err(Error::config("snapshot_hours", "hours must lie in [0, 24)"));
        }
        if self.wakeup.sample_every_ttis == 0 {
            return Err(Error::config(
                "wakeup.sample_every_ttis",
                "must be at least 1",
            ));
        }
        self.layout.validate()?;
        self.arrivals.validate()?;
        for (field, rate) in [
            ("arrivals.day_rate", self.arrivals.day_rate),
            ("arrivals.night_rate", self.arrivals.night_rate),
        ] {
            if rate / 3600.0 * self.tti_duration > MAX_ARRIVAL_PROB_PER_TTI {
                return Err(Error::config(
                    field,
                    "per-TTI arrival probability exceeds 0.1",
                ));
            }
        }
        self.energy.validate()?;
        self.sensing.validate()?;
        self.weights.validate()?;
        self.learning.validate()?;
        self.training.validate()?;
        Ok(())
    }

    /// Expected arrivals per TTI over one day of the configured profile.
    pub fn alpha(&self) -> f64 {
        self.arrivals.alpha(0, self.tti_duration)
    }

    /// TTIs (within the horizon) at which snapshots fall, with their
    /// `HH:MM` labels, in time order.
    pub fn snapshot_ttis(&self) -> Vec<(u64, String)> {
        let mut out: Vec<(u64, String)> = self
            .snapshot_hours
            .iter()
            .map(|&h| {
                let secs = ((h - self.arrivals.clock_origin) * 3600.0).rem_euclid(86_400.0);
                let tti = (secs / self.tti_duration).round() as u64;
                let minutes = (h * 60.0).round() as u64;
                (tti, format!("{:02}:{:02}", minutes / 60, minutes % 60))
            })
            .filter(|(t, _)| *t < self.horizon_ttis)
            .collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = SimConfig::default().validate().unwrap_err();
        assert!(err.to_string().contains("seed"));
        assert!(SimConfig::with_seed(1).validate().is_ok());
    }

    #[test]
    fn toml_roundtrip_and_field_names() {
        let cfg = SimConfig {
            n_devices: 32,
            tau: 128,
            ..SimConfig::with_seed(9)
        };
        let back = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);

        let cfg = SimConfig::from_toml_str("seed = 1\n[energy]\nlambda = 2.0\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("energy.lambda"), "{err}");
        assert!(SimConfig::from_toml_str("seed = 1\nbogus = 3\n").is_err());
    }

    #[test]
    fn snapshot_labels() {
        let cfg = SimConfig::with_seed(1);
        let snaps = cfg.snapshot_ttis();
        assert_eq!(snaps.len(), 6);
        assert_eq!(snaps[0], (21_600_000, "06:00".to_string()));
        assert_eq!(snaps[5].1, "21:00");
    }
}

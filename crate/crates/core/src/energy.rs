//! Normalized discrete energy harvesting and consumption.
//!
//! Energy is stored as an integer count of micro-units so that buffer
//! arithmetic, threshold checks and conservation bookkeeping are exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MICROS_PER_UNIT: u64 = 1_000_000;

/// Fraction of capacity below which a device is unavailable.
pub const AVAILABILITY_PERCENT: u64 = 15;

/// An amount of energy, in micro-units.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Energy(u64);

impl Energy {
    pub const ZERO: Energy = Energy(0);

    pub const fn from_micros(micros: u64) -> Self {
        Energy(micros)
    }

    /// Converts from (fractional) units, rounding to the nearest micro-unit.
    pub fn from_units(units: f64) -> Result<Self> {
        if !(units.is_finite() && units >= 0.0) {
            return Err(Error::config(
                "energy",
                format!("{units} is not a valid amount"),
            ));
        }
        let micros = (units * MICROS_PER_UNIT as f64).round();
        if micros > u64::MAX as f64 {
            return Err(Error::config("energy", format!("{units} overflows")));
        }
        Ok(Energy(micros as u64))
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn units(self) -> f64 {
        self.0 as f64 / MICROS_PER_UNIT as f64
    }

    pub fn saturating_mul(self, k: u64) -> Energy {
        Energy(self.0.saturating_mul(k))
    }
}

impl std::ops::Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        self.0 += rhs.0;
    }
}

/// Energy parameters as written in configuration files (floating units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// Buffer capacity.
    pub c_max: f64,
    /// Units gained by one harvest arrival.
    pub p_b: f64,
    /// Arrival probability per harvest tick.
    pub lambda: f64,
    /// Cost of one uplink transmission.
    pub p_tx: f64,
    /// Cost of receiving and processing one wake-up request.
    pub p_wur: f64,
    /// Cost of one 30° camera rotation step.
    pub p_rot_bin: f64,
    /// Cost of one sensing TTI.
    pub p_sense: f64,
    /// TTIs between harvest ticks.
    pub harvest_period_ttis: u64,
    /// Buffer level at the start of a run, as a fraction of `c_max`.
    pub initial_fraction: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            c_max: 10.0,
            p_b: 1.0,
            lambda: 0.1,
            p_tx: 1.0,
            p_wur: 0.01,
            p_rot_bin: 0.1,
            p_sense: 0.0,
            harvest_period_ttis: 60_000,
            initial_fraction: 1.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_max > 0.0 && self.c_max.is_finite()) {
            return Err(Error::config("energy.c_max", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("energy.lambda", "must lie in [0, 1]"));
        }
        if self.harvest_period_ttis == 0 {
            return Err(Error::config(
                "energy.harvest_period_ttis",
                "must be at least 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.initial_fraction) {
            return Err(Error::config(
                "energy.initial_fraction",
                "must lie in [0, 1]",
            ));
        }
        for (field, v) in [
            ("energy.p_b", self.p_b),
            ("energy.p_tx", self.p_tx),
            ("energy.p_wur", self.p_wur),
            ("energy.p_rot_bin", self.p_rot_bin),
            ("energy.p_sense", self.p_sense),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be non-negative and finite"));
            }
        }
        Ok(())
    }

    /// Fixed-point form used by the simulator.
    pub fn model(&self) -> Result<EnergyModel> {
        self.validate()?;
        let c_max = Energy::from_units(self.c_max)?;
        Ok(EnergyModel {
            c_max,
            p_b: Energy::from_units(self.p_b)?,
            lambda: self.lambda,
            p_tx: Energy::from_units(self.p_tx)?,
            p_wur: Energy::from_units(self.p_wur)?,
            p_rot_bin: Energy::from_units(self.p_rot_bin)?,
            p_sense: Energy::from_units(self.p_sense)?,
            harvest_period_ttis: self.harvest_period_ttis,
            initial: Energy::from_micros(
                (c_max.micros() as f64 * self.initial_fraction).round() as u64
            ),
        })
    }
}

/// Validated energy parameters in micro-units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub c_max: Energy,
    pub p_b: Energy,
    pub lambda: f64,
    pub p_tx: Energy,
    pub p_wur: Energy,
    pub p_rot_bin: Energy,
    pub p_sense: Energy,
    pub harvest_period_ttis: u64,
    pub initial: Energy,
}

impl EnergyModel {
    pub fn is_harvest_tick(&self, tti: u64) -> bool {
        tti > 0 && tti.is_multiple_of(self.harvest_period_ttis)
    }
}

/// Battery of one device. The level never leaves `[0, c_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyBuffer {
    level: Energy,
}

impl EnergyBuffer {
    pub fn new(level: Energy, model: &EnergyModel) -> Self {
        Self {
            level: level.min(model.c_max),
        }
    }

    pub fn level(&self) -> Energy {
        self.level
    }

    pub fn fraction(&self, model: &EnergyModel) -> f64 {
        self.level.micros() as f64 / model.c_max.micros() as f64
    }

    /// One harvest tick: with probability `lambda` add `p_b`, discarding
    /// overflow above `c_max`. Returns the energy actually stored.
    pub fn harvest_step<R: Rng + ?Sized>(&mut self, model: &EnergyModel, rng: &mut R) -> Energy {
        if model.lambda > 0.0 && rng.random_bool(model.lambda) {
            let before = self.level;
            self.level = (self.level + model.p_b).min(model.c_max);
            Energy(self.level.0 - before.0)
        } else {
            Energy::ZERO
        }
    }

    /// Spends `cost` if the buffer holds at least that much. On failure the
    /// buffer is left untouched.
    pub fn try_consume(&mut self, cost: Energy) -> bool {
        if self.level >= cost {
            self.level = Energy(self.level.0 - cost.0);
            true
        } else {
            false
        }
    }

    /// At or above 15% of capacity.
    pub fn is_available(&self, model: &EnergyModel) -> bool {
        u128::from(self.level.0) * 100
            >= u128::from(model.c_max.0) * u128::from(AVAILABILITY_PERCENT)
    }

    pub fn is_depleted(&self) -> bool {
        self.level == Energy::ZERO
    }
}

/// What a unit of consumed energy was spent on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionClass {
    Sensing,
    Rotation,
    WakeUp,
    DetectionTx,
    SightingTx,
    StatusTx,
}

impl ActionClass {
    pub const ALL: [ActionClass; 6] = [
        ActionClass::Sensing,
        ActionClass::Rotation,
        ActionClass::WakeUp,
        ActionClass::DetectionTx,
        ActionClass::SightingTx,
        ActionClass::StatusTx,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

/// Per-device energy bookkeeping: initial + harvested - consumed = level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial: Energy,
    pub harvested: Energy,
    consumed: [Energy; 6],
    /// Actions refused for lack of energy.
    pub failed_actions: u64,
}

impl EnergyLedger {
    pub fn new(initial: Energy) -> Self {
        Self {
            initial,
            ..Default::default()
        }
    }

    pub fn record(&mut self, class: ActionClass, cost: Energy) {
        self.consumed[class.index()] += cost;
    }

    pub fn consumed(&self, class: ActionClass) -> Energy {
        self.consumed[class.index()]
    }

    pub fn total_consumed(&self) -> Energy {
        self.consumed
            .iter()
            .copied()
            .fold(Energy::ZERO, |a, b| a + b)
    }

    /// Checks `initial + harvested - consumed == level`.
    pub fn balances(&self, level: Energy) -> bool {
        u128::from(self.initial.0) + u128::from(self.harvested.0)
            == u128::from(self.total_consumed().0) + u128::from(level.0)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn model() -> EnergyModel {
        EnergyParams::default().model().unwrap()
    }

    fn units(u: f64) -> Energy {
        Energy::from_units(u).unwrap()
    }

    #[test]
    fn overflow_is_discarded() {
        let m = EnergyParams {
            lambda: 1.0,
            ..Default::default()
        }
        .model()
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut full = EnergyBuffer::new(units(10.0), &m);
        assert_eq!(full.harvest_step(&m, &mut rng), Energy::ZERO);
        assert_eq!(full.level(), units(10.0));
        let mut b = EnergyBuffer::new(units(3.0), &m);
        assert_eq!(b.harvest_step(&m, &mut rng), units(1.0));
        assert_eq!(b.level(), units(4.0));
    }

    #[test]
    fn zero_lambda_never_harvests() {
        let m = EnergyParams {
            lambda: 0.0,
            ..Default::default()
        }
        .model()
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = EnergyBuffer::new(units(3.0), &m);
        for _ in 0..1000 {
            b.harvest_step(&m, &mut rng);
        }
        assert_eq!(b.level(), units(3.0));
    }

    #[test]
    fn consume_semantics() {
        let m = model();
        let mut b = EnergyBuffer::new(units(1.0), &m);
        assert!(b.try_consume(units(1.0)));
        assert_eq!(b.level(), Energy::ZERO);
        let mut b = EnergyBuffer::new(units(0.5), &m);
        assert!(!b.try_consume(m.p_tx));
        assert_eq!(b.level(), units(0.5));
        assert!(b.try_consume(Energy::ZERO));
        assert_eq!(b.level(), units(0.5));
    }

    #[test]
    fn availability_threshold() {
        let m = model();
        assert!(EnergyBuffer::new(units(1.5), &m).is_available(&m));
        assert!(!EnergyBuffer::new(units(1.49), &m).is_available(&m));
        assert!(EnergyBuffer::new(units(10.0), &m).is_available(&m));
    }

    #[test]
    fn small_costs_are_exact() {
        let m = model();
        let mut b = EnergyBuffer::new(units(0.3), &m);
        for _ in 0..3 {
            assert!(b.try_consume(m.p_rot_bin));
        }
        assert!(b.is_depleted());
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = EnergyParams {
            lambda: 1.5,
            ..Default::default()
        };
        assert!(
            matches!(bad.validate(), Err(Error::InvalidConfig { field, .. }) if field == "energy.lambda")
        );
        assert!(EnergyParams {
            harvest_period_ttis: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(Energy::from_units(-1.0).is_err());
    }

    #[test]
    fn ledger_balances() {
        let mut l = EnergyLedger::new(units(5.0));
        l.harvested += units(1.0);
        l.record(ActionClass::DetectionTx, units(1.0));
        l.record(ActionClass::Rotation, units(0.1));
        assert!(l.balances(units(4.9)));
        assert!(!l.balances(units(5.0)));
    }
}

//! Tabular Q-learning over discretized device states.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scoring::OutcomeWeights;
use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::geometry::{Vec2, ROTATION_STEP_DEG};

const TABLE_HEADER: &str = "geofence-qtable v1";

/// What a device knows about itself at a decision epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceState {
    /// Whether the device sensed at its previous decision.
    pub active: bool,
    pub theta_min: f64,
    /// Confidence of the most recent observation.
    pub last_confidence: f64,
    pub position: Vec2,
    pub level: Energy,
}

/// Discretization used to turn a [`DeviceState`] into a table key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBins {
    pub p_th: f64,
    pub c_max: Energy,
    pub energy_levels: u8,
    pub cell_size: f64,
}

impl StateBins {
    /// One energy bin per unit of capacity and 1 m position cells.
    pub fn new(p_th: f64, c_max: Energy) -> Self {
        let levels = c_max.units().ceil().clamp(1.0, 255.0) as u8;
        Self {
            p_th,
            c_max,
            energy_levels: levels,
            cell_size: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub active: u8,
    pub orientation: u8,
    /// 0: nothing seen, 1: below threshold, 2: valid.
    pub confidence: u8,
    pub energy: u8,
    pub cell_x: i16,
    pub cell_y: i16,
}

pub fn encode_state(state: &DeviceState, bins: &StateBins) -> StateKey {
    let orientation = (state.theta_min / ROTATION_STEP_DEG)
        .floor()
        .clamp(0.0, 11.0) as u8;
    let confidence = if state.last_confidence <= 0.0 {
        0
    } else if state.last_confidence < bins.p_th {
        1
    } else {
        2
    };
    let levels = u64::from(bins.energy_levels);
    let cap = bins.c_max.micros().max(1);
    let energy = ((u128::from(state.level.micros()) * u128::from(levels) / u128::from(cap)) as u64)
        .min(levels - 1) as u8;
    let cell = |v: f64| {
        (v / bins.cell_size)
            .floor()
            .clamp(i16::MIN as f64, i16::MAX as f64) as i16
    };
    StateKey {
        active: u8::from(state.active),
        orientation,
        confidence,
        energy,
        cell_x: cell(state.position.x),
        cell_y: cell(state.position.y),
    }
}

/// Sense-or-sleep combined with an optional one-step rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub activate: bool,
    pub rotation: i8,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action {
            activate: false,
            rotation: 0,
        },
        Action {
            activate: false,
            rotation: -1,
        },
        Action {
            activate: false,
            rotation: 1,
        },
        Action {
            activate: true,
            rotation: 0,
        },
        Action {
            activate: true,
            rotation: -1,
        },
        Action {
            activate: true,
            rotation: 1,
        },
    ];

    pub fn index(self) -> usize {
        Action::ALL
            .iter()
            .position(|a| *a == self)
            .expect("action is in the table")
    }
}

/// `(1 - active/N) + mu2 * cov - alpha * mu3 * errors`, evaluated from counts.
pub fn reward_counts(
    active: usize,
    n: usize,
    cov: f64,
    error_sum: f64,
    alpha: f64,
    weights: &OutcomeWeights,
) -> f64 {
    let activity = 1.0 - active as f64 / n as f64;
    activity + weights.mu2 * cov - alpha * weights.mu3 * error_sum
}

/// Per-TTI reward from the activation vector, current coverage and the
/// errors of intruders resolved at this TTI.
pub fn reward(
    delta: &[bool],
    cov: f64,
    error_events: &[f64],
    alpha: f64,
    weights: &OutcomeWeights,
) -> f64 {
    let active = delta.iter().filter(|&&d| d).count();
    let error_sum: f64 = error_events.iter().sum();
    reward_counts(active, delta.len(), cov, error_sum, alpha, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub epsilon: f64,
    pub learning_rate: f64,
    pub discount: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            learning_rate: 0.1,
            discount: 0.9,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("learning.epsilon", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::config(
                "learning.learning_rate",
                "must lie in [0, 1]",
            ));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config("learning.discount", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Q-table shared by all devices. Unseen states read as zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QPolicy {
    pub params: LearningParams,
    table: HashMap<StateKey, [f64; 6]>,
}

impl QPolicy {
    pub fn new(params: LearningParams) -> Self {
        Self {
            params,
            table: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn values(&self, key: &StateKey) -> [f64; 6] {
        self.table.get(key).copied().unwrap_or([0.0; 6])
    }

    /// Highest-valued action; ties go to the earlier entry of [`Action::ALL`].
    pub fn greedy(&self, key: &StateKey) -> Action {
        let q = self.values(key);
        let mut best = 0;
        for i in 1..6 {
            if q[i] > q[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    /// Epsilon-greedy choice. With `epsilon == 0` no randomness is drawn.
    pub fn select_action<R: Rng + ?Sized>(&self, key: &StateKey, rng: &mut R) -> Action {
        let eps = self.params.epsilon;
        if eps > 0.0 && rng.random_bool(eps) {
            Action::ALL[rng.random_range(0..6)]
        } else {
            self.greedy(key)
        }
    }

    /// One-step Q-learning update.
    pub fn q_update(
        &mut self,
        key: StateKey,
        action: Action,
        reward: f64,
        next: &StateKey,
    ) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::parse("reward", format!("non-finite value {reward}")));
        }
        let next_best = self
            .values(next)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let LearningParams {
            learning_rate: lr,
            discount: gamma,
            ..
        } = self.params;
        let q = self.table.entry(key).or_insert([0.0; 6]);
        let i = action.index();
        q[i] += lr * (reward + gamma * next_best - q[i]);
        Ok(())
    }

    /// Copy with exploration disabled.
    pub fn frozen(&self) -> QPolicy {
        QPolicy {
            params: LearningParams {
                epsilon: 0.0,
                ..self.params
            },
            table: self.table.clone(),
        }
    }

    /// Plain-text form with sorted keys, so equal tables serialize to equal
    /// bytes.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        let _ = writeln!(out, "{TABLE_HEADER}");
        let _ = writeln!(
            out,
            "params {} {} {}",
            p.epsilon, p.learning_rate, p.discount
        );
        let mut keys: Vec<&StateKey> = self.table.keys().collect();
        keys.sort_unstable();
        for k in keys {
            let _ = write!(
                out,
                "{} {} {} {} {} {}",
                k.active, k.orientation, k.confidence, k.energy, k.cell_x, k.cell_y
            );
            for v in &self.table[k] {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<QPolicy> {
        let bad =
            |line: usize, reason: &str| Error::parse("q-table", format!("line {line}: {reason}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TABLE_HEADER => {}
            _ => return Err(bad(1, "missing header")),
        }
        let (i, params_line) = lines.next().ok_or_else(|| bad(2, "missing params"))?;
        let nums: Vec<f64> = params_line
            .strip_prefix("params ")
            .ok_or_else(|| bad(i + 1, "expected params"))?
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(i + 1, "bad number"))?;
        let [epsilon, learning_rate, discount] = nums[..] else {
            return Err(bad(i + 1, "expected three params"));
        };
        let params = LearningParams {
            epsilon,
            learning_rate,
            discount,
        };
        params.validate()?;
        let mut table = HashMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 12 {
                return Err(bad(i + 1, "expected 12 fields"));
            }
            let int = |s: &str| s.parse::<i64>().map_err(|_| bad(i + 1, "bad integer"));
            let small = |s: &str| -> Result<u8> {
                u8::try_from(int(s)?).map_err(|_| bad(i + 1, "field out of range"))
            };
            let cell = |s: &str| -> Result<i16> {
                i16::try_from(int(s)?).map_err(|_| bad(i + 1, "field out of range"))
            };
            let key = StateKey {
                active: small(f[0])?,
                orientation: small(f[1])?,
                confidence: small(f[2])?,
                energy: small(f[3])?,
                cell_x: cell(f[4])?,
                cell_y: cell(f[5])?,
            };
            let mut q = [0.0f64; 6];
            for (slot, s) in q.iter_mut().zip(&f[6..]) {
                *slot = s.parse().map_err(|_| bad(i + 1, "bad q-value"))?;
                if !slot.is_finite() {
                    return Err(bad(i + 1, "non-finite q-value"));
                }
            }
            if table.insert(key, q).is_some() {
                return Err(bad(i + 1, "duplicate state"));
            }
        }
        Ok(QPolicy { params, table })
    }
}

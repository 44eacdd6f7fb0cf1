//! Fixed duty-cycled baseline: evenly spaced, outward-facing cameras that
//! wake every `tau` TTIs.

use serde::{Deserialize, Serialize};

use crate::environment::Square;
use crate::error::{Error, Result};
use crate::geometry::{SensingParams, SensorPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Every device wakes at the same TTIs.
    Aligned,
    /// Device `k` is offset by `k * floor(tau / n)`.
    #[default]
    Staggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    pub n_devices: usize,
    pub tau: u64,
    pub phase_mode: PhaseMode,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_devices == 0 {
            return Err(Error::config("n_devices", "must be at least 1"));
        }
        if self.tau == 0 {
            return Err(Error::config("tau", "must be at least 1"));
        }
        Ok(())
    }

    pub fn phase(&self, device: usize) -> u64 {
        match self.phase_mode {
            PhaseMode::Aligned => 0,
            PhaseMode::Staggered => (device as u64 * (self.tau / self.n_devices as u64)) % self.tau,
        }
    }
}

/// True iff `device` senses at TTI `t`, i.e. `(t - phase) mod tau == 0`.
pub fn grid_schedule(device: usize, t: u64, config: &GridConfig) -> bool {
    (i128::from(t) - i128::from(config.phase(device))).rem_euclid(i128::from(config.tau)) == 0
}

/// `n` cameras spaced evenly by arc length around `perimeter`, starting at
/// the bottom midpoint, each facing along the outward normal.
pub fn grid_placement(n: usize, perimeter: &Square, sensing: &SensingParams) -> Vec<SensorPose> {
    let step = perimeter.perimeter() / n as f64;
    (0..n)
        .map(|i| {
            let s = i as f64 * step;
            sensing.pose_facing(perimeter.point_at(s), perimeter.outward_normal_deg(s))
        })
        .collect()
}

/// Precomputed wake slots grouped by residue mod `tau`.
#[derive(Debug, Clone)]
pub struct DutySchedule {
    tau: u64,
    residues: Vec<(u64, Vec<u32>)>,
}

impl DutySchedule {
    pub fn new(config: &GridConfig) -> Self {
        let mut residues: Vec<(u64, Vec<u32>)> = Vec::new();
        let mut by_phase: Vec<(u64, u32)> = (0..config.n_devices)
            .map(|k| (config.phase(k), k as u32))
            .collect();
        by_phase.sort_unstable();
        for (phase, k) in by_phase {
            match residues.last_mut() {
                Some((r, list)) if *r == phase => list.push(k),
                _ => residues.push((phase, vec![k])),
            }
        }
        Self {
            tau: config.tau,
            residues,
        }
    }

    /// Devices scheduled at `t`, ascending.
    pub fn devices_at(&self, t: u64) -> &[u32] {
        let r = t % self.tau;
        match self.residues.binary_search_by_key(&r, |(res, _)| *res) {
            Ok(i) => &self.residues[i].1,
            Err(_) => &[],
        }
    }

    /// First TTI strictly after `t` at which some device is scheduled.
    pub fn next_slot_after(&self, t: u64) -> u64 {
        let r = t % self.tau;
        let base = t - r;
        match self.residues.iter().find(|(res, _)| *res > r) {
            Some((res, _)) => base + res,
            None => base + self.tau + self.residues[0].0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::GeofenceLayout;
    use crate::geometry::Vec2;

    #[test]
    fn schedule_examples() {
        let c = GridConfig {
            n_devices: 4,
            tau: 4,
            phase_mode: PhaseMode::Aligned,
        };
        let on: Vec<u64> = (0..10).filter(|&t| grid_schedule(0, t, &c)).collect();
        assert_eq!(on, vec![0, 4, 8]);

        let c = GridConfig {
            phase_mode: PhaseMode::Staggered,
            ..c
        };
        let phases: Vec<u64> = (0..4).map(|k| c.phase(k)).collect();
        assert_eq!(phases, vec![0, 1, 2, 3]);
    }

    #[test]
    fn activation_counts() {
        for (n, tau, horizon) in [(3, 7, 100u64), (16, 8, 1000), (5, 1024, 5000)] {
            for mode in [PhaseMode::Aligned, PhaseMode::Staggered] {
                let c = GridConfig {
                    n_devices: n,
                    tau,
                    phase_mode: mode,
                };
                for k in 0..n {
                    let count = (0..horizon).filter(|&t| grid_schedule(k, t, &c)).count() as u64;
                    assert!(count == horizon / tau || count == horizon.div_ceil(tau));
                }
            }
        }
    }

    #[test]
    fn duty_schedule_matches_predicate() {
        let c = GridConfig {
            n_devices: 6,
            tau: 16,
            phase_mode: PhaseMode::Staggered,
        };
        let s = DutySchedule::new(&c);
        for t in 0..200u64 {
            let expect: Vec<u32> = (0..6)
                .filter(|&k| grid_schedule(k, t, &c))
                .map(|k| k as u32)
                .collect();
            assert_eq!(s.devices_at(t), expect.as_slice());
            let next = (t + 1..).find(|&u| !s.devices_at(u).is_empty()).unwrap();
            assert_eq!(s.next_slot_after(t), next);
        }
    }

    #[test]
    fn placement_faces_out() {
        let layout = GeofenceLayout::default();
        let sq = layout.protected();
        let poses = grid_placement(8, &sq, &SensingParams::default());
        assert_eq!(poses.len(), 8);
        assert!((poses[0].position.x - 0.0).abs() < 1e-12);
        assert!((poses[0].position.y + 3.5).abs() < 1e-12);
        assert!((poses[0].bisector() - 270.0).abs() < 1e-9);
        for p in &poses {
            assert!((sq.chebyshev(p.position) - 3.5).abs() < 1e-9);
            let out = p.position + Vec2::from_angle_deg(p.bisector()) * 0.1;
            assert!(!sq.contains(out));
        }
    }
}

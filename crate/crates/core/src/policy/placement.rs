//! Offline placement search and placement CSV I/O.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::environment::TrajectorySampler;
use crate::error::{Error, Result};
use crate::geometry::{SensorPose, Vec2, ROTATION_STEP_DEG};
use crate::par::{map_indexed, Execution};
use crate::rng::{stream, Purpose, Seed};
use crate::sim::{run_trial, trial_trajectory, Controller, SimConfig};

/// Home rotations beyond this many steps either way face inward.
const MAX_HOME_STEPS: i32 = 2;

pub struct SearchSpec<'a> {
    pub cfg: &'a SimConfig,
    pub sampler: &'a dyn TrajectorySampler,
    /// Proposals to evaluate; zero returns the grid placement.
    pub budget: u32,
    /// Rollouts per score, shared by every proposal.
    pub rollouts: u32,
    pub slot_spacing: f64,
    pub epsilon: f64,
    pub seed: Seed,
    pub exec: Execution,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub placement: Vec<SensorPose>,
    pub best_score: f64,
    pub initial_score: f64,
    pub evaluations: u32,
}

/// A camera as arc position on the protected boundary plus a home rotation
/// relative to the outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    arc: f64,
    steps: i32,
}

fn poses(cfg: &SimConfig, slots: &[Slot]) -> Vec<SensorPose> {
    let sq = cfg.layout.protected();
    slots
        .iter()
        .map(|s| {
            let bisector = sq.outward_normal_deg(s.arc) + f64::from(s.steps) * ROTATION_STEP_DEG;
            cfg.sensing.pose_facing(sq.point_at(s.arc), bisector)
        })
        .collect()
}

/// Mean over the rollouts of the episode score: mean per-TTI activity plus
/// weighted coverage, minus the weighted intruder error.
fn score(spec: &SearchSpec<'_>, placement: &[SensorPose]) -> Result<f64> {
    let cfg = spec.cfg;
    let scores = map_indexed(spec.exec, spec.rollouts as usize, |k| -> Result<f64> {
        let mut seed = spec.seed;
        seed[24..28].copy_from_slice(&(k as u32).to_le_bytes());
        let traj = trial_trajectory(cfg, spec.sampler, &seed);
        let out = run_trial(cfg, placement, Controller::Grid, traj, &seed, true)?;
        let r = out.reward;
        let ttis = r.ttis.max(1) as f64;
        let error: f64 = out
            .outcomes
            .iter()
            .map(|o| super::scoring::object_error(o.t_det, o.t_g, &cfg.weights))
            .sum();
        Ok((r.activity + cfg.weights.mu2 * r.coverage) / ttis - cfg.weights.mu3 * error)
    });
    let mut sum = 0.0;
    for s in scores {
        sum += s?;
    }
    Ok(sum / f64::from(spec.rollouts.max(1)))
}

/// Epsilon-greedy local search starting from the grid placement. Each
/// proposal moves one camera by one slot, turns its home orientation by one
/// step, or (with probability `epsilon`) jumps it to a random slot.
/// Non-improving proposals are accepted with probability `epsilon`. Returns
/// the best placement seen.
pub fn placement_search(spec: &SearchSpec<'_>) -> Result<SearchResult> {
    let cfg = spec.cfg;
    cfg.validate()?;
    if !(spec.slot_spacing > 0.0 && spec.slot_spacing <= 0.5) {
        return Err(Error::config(
            "training.slot_spacing",
            "must lie in (0, 0.5]",
        ));
    }
    let n = cfg.n_devices;
    let perimeter = cfg.layout.protected().perimeter();
    let slot_count = (perimeter / spec.slot_spacing).round().max(1.0) as u64;
    let mut current: Vec<Slot> = (0..n)
        .map(|i| Slot {
            arc: i as f64 * perimeter / n as f64,
            steps: 0,
        })
        .collect();
    let initial_score = score(spec, &poses(cfg, &current))?;
    let mut current_score = initial_score;
    let mut best = current.clone();
    let mut best_score = initial_score;
    let mut rng = stream(&spec.seed, Purpose::Search);
    for _ in 0..spec.budget {
        let i = rng.random_range(0..n);
        let mut proposal = current.clone();
        let slot = &mut proposal[i];
        if rng.random_bool(spec.epsilon) {
            slot.arc = rng.random_range(0..slot_count) as f64 * spec.slot_spacing;
        } else {
            let here = (slot.arc / spec.slot_spacing).round();
            match rng.random_range(0..4) {
                0 => slot.arc = (here - 1.0).rem_euclid(slot_count as f64) * spec.slot_spacing,
                1 => slot.arc = (here + 1.0).rem_euclid(slot_count as f64) * spec.slot_spacing,
                2 => slot.steps = (slot.steps - 1).max(-MAX_HOME_STEPS),
                _ => slot.steps = (slot.steps + 1).min(MAX_HOME_STEPS),
            }
        }
        let s = score(spec, &poses(cfg, &proposal))?;
        if s > best_score {
            best_score = s;
            best = proposal.clone();
        }
        if s > current_score || rng.random_bool(spec.epsilon) {
            current = proposal;
            current_score = s;
        }
    }
    Ok(SearchResult {
        placement: poses(cfg, &best),
        best_score,
        initial_score,
        evaluations: spec.budget,
    })
}

/// Writes `device_id,x,y,theta_min`.
pub fn write_placement_csv<W: Write>(mut out: W, placement: &[SensorPose]) -> std::io::Result<()> {
    writeln!(out, "device_id,x,y,theta_min")?;
    for (i, p) in placement.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            i, p.position.x, p.position.y, p.theta_min
        )?;
    }
    Ok(())
}

/// Reads a placement written by [`write_placement_csv`]; optics come from
/// `cfg.sensing`.
pub fn read_placement_csv<R: BufRead>(input: R, cfg: &SimConfig) -> Result<Vec<SensorPose>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::parse("placement", e.to_string()))?;
        if i == 0 {
            if line.trim() != "device_id,x,y,theta_min" {
                return Err(Error::parse("placement", "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(
                "placement",
                format!("line {}: expected 4 fields", i + 1),
            ));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse("placement", format!("line {}: bad number `{s}`", i + 1)))
        };
        let s = &cfg.sensing;
        out.push(SensorPose::new(
            Vec2::new(num(f[1])?, num(f[2])?),
            num(f[3])?,
            s.fov,
            s.r_max,
            s.eta,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{IntruderTrajectory, Square};
    use crate::policy::grid::grid_placement;
    use crate::rng::run_seed;

    /// Every intruder crosses the midpoint of the right side horizontally.
    struct Corridor;

    impl TrajectorySampler for Corridor {
        fn sample(
            &self,
            id: u64,
            t_spawn: u64,
            _rng: &mut dyn rand::RngCore,
        ) -> IntruderTrajectory {
            IntruderTrajectory::new(
                id,
                t_spawn,
                Vec2::new(4.0, 0.0),
                Vec2::new(3.5, 0.0),
                Vec2::new(-4.0, 0.0),
                1.0,
            )
            .unwrap()
        }
    }

    fn corridor_cfg() -> SimConfig {
        SimConfig {
            n_devices: 1,
            tau: 1,
            ..SimConfig::with_seed(5)
        }
    }

    #[test]
    fn zero_budget_is_grid() {
        let cfg = corridor_cfg();
        let res = placement_search(&SearchSpec {
            cfg: &cfg,
            sampler: &Corridor,
            budget: 0,
            rollouts: 2,
            slot_spacing: 0.25,
            epsilon: 0.1,
            seed: run_seed(1),
            exec: Execution::Sequential,
        })
        .unwrap();
        assert_eq!(
            res.placement,
            grid_placement(1, &cfg.layout.protected(), &cfg.sensing)
        );
        assert_eq!(res.best_score, res.initial_score);
    }

    #[test]
    fn finds_the_corridor() {
        let cfg = corridor_cfg();
        let res = placement_search(&SearchSpec {
            cfg: &cfg,
            sampler: &Corridor,
            budget: 300,
            rollouts: 1,
            slot_spacing: 0.5,
            epsilon: 1.0,
            seed: run_seed(2),
            exec: Execution::Sequential,
        })
        .unwrap();
        assert!(res.best_score >= res.initial_score);
        let target = Vec2::new(3.5, 0.0);
        let d = res.placement[0].position.distance(target);
        assert!(d <= 0.5 + 1e-9, "ended {d} m from the corridor");
        let sq: Square = cfg.layout.protected();
        assert!((sq.chebyshev(res.placement[0].position) - 3.5).abs() < 1e-9);
    }

    #[test]
    fn csv_roundtrip() {
        let cfg = SimConfig::with_seed(1);
        let p = grid_placement(6, &cfg.layout.protected(), &cfg.sensing);
        let mut buf = Vec::new();
        write_placement_csv(&mut buf, &p).unwrap();
        let back = read_placement_csv(&buf[..], &cfg).unwrap();
        assert_eq!(back, p);
    }
}

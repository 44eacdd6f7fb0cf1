//! The per-TTI simulation loop and the runs built on it.

mod config;
mod engine;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use config::{PolicyKind, SimConfig, TrainingParams, DAY_TTIS};
pub use engine::{
    Arrivals, Controller, Counters, DeviceEnergy, EnergySnapshot, Engine, EpisodeSpec, QAccess,
    RewardTotals, SimOutput,
};

use crate::energy::{ActionClass, Energy};
use crate::environment::{
    sample_arrivals, IntruderTrajectory, TrajectorySampler, UniformTraversal,
};
use crate::error::Result;
use crate::fgs::EventLog;
use crate::geometry::SensorPose;
use crate::par::Execution;
use crate::policy::grid::grid_placement;
use crate::policy::placement::{placement_search, SearchSpec};
use crate::policy::qlearn::QPolicy;
use crate::policy::scoring::{metrics, objective, IntruderOutcome};
use crate::rng::{run_seed, stream, trial_seed, Purpose, Seed};

/// Seed-derivation tags that keep training and search streams apart from
/// evaluation trials.
pub(crate) const TAG_TRAINING: u8 = 2;
pub(crate) const TAG_SEARCH: u8 = 3;

/// The default intruder law for a config.
pub fn default_sampler(cfg: &SimConfig) -> UniformTraversal {
    UniformTraversal {
        layout: cfg.layout,
        speed: cfg.intruder_speed,
    }
}

/// One scripted intruder for a trial: spawn uniform in `[0, tau)` so that
/// its phase relative to the duty cycle is random, path from `sampler`.
pub fn trial_trajectory(
    cfg: &SimConfig,
    sampler: &dyn TrajectorySampler,
    seed: &Seed,
) -> IntruderTrajectory {
    let mut rng = stream(seed, Purpose::Arrivals);
    let t_spawn = rng.random_range(0..cfg.tau);
    sampler.sample(0, t_spawn, &mut rng)
}

/// Runs a single-intruder episode that ends once the intruder is resolved.
pub fn run_trial(
    cfg: &SimConfig,
    placement: &[SensorPose],
    controller: Controller<'_>,
    trajectory: IntruderTrajectory,
    seed: &Seed,
    track_reward: bool,
) -> Result<SimOutput> {
    run_trial_from(
        cfg,
        placement,
        controller,
        trajectory,
        seed,
        track_reward,
        None,
    )
}

/// [`run_trial`] with every buffer starting at `initial_level` instead of
/// the configured fraction.
pub fn run_trial_from(
    cfg: &SimConfig,
    placement: &[SensorPose],
    controller: Controller<'_>,
    trajectory: IntruderTrajectory,
    seed: &Seed,
    track_reward: bool,
    initial_level: Option<Energy>,
) -> Result<SimOutput> {
    let horizon = trajectory
        .crossing_times(&cfg.layout, cfg.tti_duration)
        .t_exit
        + 1;
    let sampler = default_sampler(cfg);
    let spec = EpisodeSpec {
        arrivals: Arrivals::Scripted(vec![trajectory]),
        sampler: &sampler,
        horizon_ttis: horizon,
        stop_when_resolved: true,
        track_reward,
        initial_level,
        take_snapshots: false,
    };
    Engine::new(cfg, placement, controller, spec, seed)?.run()
}

/// Trains a Q-table online over `cfg.training.episodes` scripted episodes.
/// Each episode starts every buffer at a level drawn uniformly from
/// `[0, c_max]` so that the table sees every energy bin.
pub fn train_policy(
    cfg: &SimConfig,
    placement: &[SensorPose],
    sampler: &dyn TrajectorySampler,
) -> Result<QPolicy> {
    cfg.validate()?;
    let root = cfg.seed.expect("validated");
    let c_max = cfg.energy.model()?.c_max;
    let mut q = QPolicy::new(cfg.learning);
    for e in 0..cfg.training.episodes {
        let seed = trial_seed(root, TAG_TRAINING, cfg.n_devices as u32, cfg.tau as u32, e);
        let traj = trial_trajectory(cfg, sampler, &seed);
        let level =
            Energy::from_micros(stream(&seed, Purpose::Search).random_range(0..=c_max.micros()));
        run_trial_from(
            cfg,
            placement,
            Controller::Rl(QAccess::Learn(&mut q)),
            traj,
            &seed,
            true,
            Some(level),
        )?;
    }
    Ok(q)
}

/// Learned deployment: placement from the search, then a trained table.
#[derive(Debug, Clone)]
pub struct RlArtifacts {
    pub placement: Vec<SensorPose>,
    pub policy: QPolicy,
    pub placement_score: f64,
    pub initial_score: f64,
}

pub fn prepare_rl(cfg: &SimConfig, exec: Execution) -> Result<RlArtifacts> {
    cfg.validate()?;
    let root = cfg.seed.expect("validated");
    let sampler = default_sampler(cfg);
    let search = placement_search(&SearchSpec {
        cfg,
        sampler: &sampler,
        budget: cfg.training.placement_budget,
        rollouts: cfg.training.placement_rollouts,
        slot_spacing: cfg.training.slot_spacing,
        epsilon: cfg.training.placement_epsilon,
        seed: trial_seed(root, TAG_SEARCH, cfg.n_devices as u32, cfg.tau as u32, 0),
        exec,
    })?;
    let policy = train_policy(cfg, &search.placement, &sampler)?.frozen();
    Ok(RlArtifacts {
        placement: search.placement,
        policy,
        placement_score: search.best_score,
        initial_score: search.initial_score,
    })
}

/// Everything reported for one run, serialized as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub policy: PolicyKind,
    pub n_devices: usize,
    pub tau: u64,
    pub seed: u64,
    pub horizon_ttis: u64,
    pub tti_duration: f64,
    pub intruders: u64,
    pub detected: u64,
    pub early: u64,
    pub p_det: Option<f64>,
    pub p_early: Option<f64>,
    pub mean_t_det_s: Option<f64>,
    /// Normalized error sum over the run.
    pub objective: f64,
    pub outcomes: Vec<IntruderOutcome>,
    pub snapshots: Vec<EnergySnapshot>,
    /// Total energy spent per action class, in units.
    pub consumed_by_class: BTreeMap<ActionClass, f64>,
    pub devices: Vec<DeviceEnergy>,
    pub counters: Counters,
    pub reward: RewardTotals,
}

impl MetricsRecord {
    pub fn from_output(cfg: &SimConfig, out: &SimOutput) -> Self {
        let m = metrics(&out.outcomes, cfg.tti_duration);
        let errors: Vec<f64> = out
            .outcomes
            .iter()
            .map(|o| crate::policy::scoring::object_error(o.t_det, o.t_g, &cfg.weights))
            .collect();
        Self {
            policy: cfg.policy,
            n_devices: cfg.n_devices,
            tau: cfg.tau,
            seed: cfg.seed.unwrap_or(0),
            horizon_ttis: cfg.horizon_ttis,
            tti_duration: cfg.tti_duration,
            intruders: m.intruders,
            detected: m.detected,
            early: m.early,
            p_det: m.p_det,
            p_early: m.p_early,
            mean_t_det_s: m.mean_t_det_s,
            objective: if cfg.horizon_ttis == 0 {
                0.0
            } else {
                objective(&errors, cfg.alpha(), cfg.horizon_ttis)
            },
            outcomes: out.outcomes.clone(),
            snapshots: out.snapshots.clone(),
            consumed_by_class: out
                .consumed_by_class
                .iter()
                .map(|(k, v)| (*k, v.units()))
                .collect(),
            devices: out.devices.clone(),
            counters: out.counters,
            reward: out.reward,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// True iff every device's energy account balances exactly.
    pub fn energy_balanced(&self) -> bool {
        self.devices.iter().all(|d| d.balanced)
    }
}

pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub events: EventLog,
    pub placement: Vec<SensorPose>,
    pub policy: Option<QPolicy>,
}

/// Full-horizon run with Poisson arrivals and a given deployment.
pub fn run_with(
    cfg: &SimConfig,
    placement: &[SensorPose],
    controller: Controller<'_>,
) -> Result<(MetricsRecord, EventLog)> {
    cfg.validate()?;
    let seed = run_seed(cfg.seed.expect("validated"));
    let arrivals = sample_arrivals(
        &cfg.arrivals,
        cfg.horizon_ttis,
        cfg.tti_duration,
        &mut stream(&seed, Purpose::Arrivals),
    )?;
    let sampler = default_sampler(cfg);
    let spec = EpisodeSpec {
        arrivals: Arrivals::Sampled(arrivals),
        sampler: &sampler,
        horizon_ttis: cfg.horizon_ttis,
        stop_when_resolved: false,
        track_reward: false,
        initial_level: None,
        take_snapshots: true,
    };
    let out = Engine::new(cfg, placement, controller, spec, &seed)?.run()?;
    Ok((MetricsRecord::from_output(cfg, &out), out.events))
}

/// Runs the configured policy over the configured horizon. The RL policy is
/// first placed and trained on scripted episodes, then evaluated greedily.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    run_exec(cfg, Execution::default())
}

pub fn run_exec(cfg: &SimConfig, exec: Execution) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.policy {
        PolicyKind::Grid => {
            let placement = grid_placement(cfg.n_devices, &cfg.layout.protected(), &cfg.sensing);
            let (metrics, events) = run_with(cfg, &placement, Controller::Grid)?;
            Ok(RunOutput {
                metrics,
                events,
                placement,
                policy: None,
            })
        }
        PolicyKind::Rl => {
            let rl = prepare_rl(cfg, exec)?;
            let (metrics, events) = run_with(
                cfg,
                &rl.placement,
                Controller::Rl(QAccess::Frozen(&rl.policy)),
            )?;
            Ok(RunOutput {
                metrics,
                events,
                placement: rl.placement,
                policy: Some(rl.policy),
            })
        }
    }
}

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{PolicyKind, SimConfig};
use crate::energy::{ActionClass, Energy, EnergyBuffer, EnergyLedger, EnergyModel};
use crate::environment::{CrossingTimes, IntruderTrajectory, TrajectorySampler};
use crate::error::Result;
use crate::fgs::{
    covered_points, first_valid, predict, select_wakeups, CoverageUnion, DetectionReport,
    EventKind, EventLog, PredictorParams, WakeCandidate,
};
use crate::geometry::{rotate_pose, sensing_power, SensorPose, Vec2};
use crate::policy::grid::DutySchedule;
use crate::policy::qlearn::{
    encode_state, reward_counts, Action, DeviceState, QPolicy, StateBins, StateKey,
};
use crate::policy::scoring::{object_error, IntruderOutcome, Outcome};
use crate::rng::{stream, Purpose, Seed};

/// How the Q-table is used during a run.
pub enum QAccess<'p> {
    /// Epsilon-greedy with online updates.
    Learn(&'p mut QPolicy),
    /// Greedy and read-only.
    Frozen(&'p QPolicy),
}

pub enum Controller<'p> {
    Grid,
    Rl(QAccess<'p>),
}

impl Controller<'_> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Controller::Grid => PolicyKind::Grid,
            Controller::Rl(_) => PolicyKind::Rl,
        }
    }
}

/// Where intruders come from.
pub enum Arrivals {
    /// Spawn TTIs given; paths drawn from the sampler at spawn time.
    Sampled(Vec<u64>),
    /// Fully scripted intruders, sorted by spawn TTI.
    Scripted(Vec<IntruderTrajectory>),
}

pub struct EpisodeSpec<'a> {
    pub arrivals: Arrivals,
    pub sampler: &'a dyn TrajectorySampler,
    pub horizon_ttis: u64,
    /// End as soon as every intruder has been resolved.
    pub stop_when_resolved: bool,
    /// Accumulate the per-TTI reward even for the grid controller.
    pub track_reward: bool,
    pub initial_level: Option<Energy>,
    pub take_snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySnapshot {
    pub label: String,
    pub tti: u64,
    pub average_percent: f64,
    pub available: usize,
    pub depleted: usize,
}

/// Final energy account of one device, in units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEnergy {
    pub device_id: u32,
    pub initial: f64,
    pub harvested: f64,
    pub consumed: f64,
    pub level: f64,
    pub failed_actions: u64,
    /// `initial + harvested - consumed == level` in exact fixed point.
    pub balanced: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub detection_reports: u64,
    pub sighting_reports: u64,
    pub status_reports: u64,
    pub wakeups_issued: u64,
    pub rotations: u64,
    /// Device-TTIs spent sensing.
    pub sensing_ttis: u64,
    pub failed_actions: u64,
    pub q_updates: u64,
}

/// Sums of the reward terms over every simulated TTI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTotals {
    pub ttis: u64,
    pub activity: f64,
    pub coverage: f64,
    pub errors: f64,
    pub reward: f64,
}

pub struct SimOutput {
    pub outcomes: Vec<IntruderOutcome>,
    pub snapshots: Vec<EnergySnapshot>,
    pub devices: Vec<DeviceEnergy>,
    pub consumed_by_class: BTreeMap<ActionClass, Energy>,
    pub counters: Counters,
    pub reward: RewardTotals,
    pub events: EventLog,
    /// First TTI not simulated.
    pub end_tti: u64,
}

const FLAG_REPORTED: u8 = 1;
const FLAG_SIGHTED: u8 = 2;

struct Device {
    pose: SensorPose,
    buffer: EnergyBuffer,
    ledger: EnergyLedger,
    covered: Vec<u32>,
    /// Senses every TTI while `t < engaged_until`.
    engaged_until: u64,
    wake_queued: bool,
    last_rotation: Option<u64>,
    was_active: bool,
    last_confidence: f64,
    /// Decision awaiting its reward (same TTI).
    decided: Option<(StateKey, Action)>,
    /// Decision awaiting the next state for its update.
    pending: Option<(StateKey, Action, f64)>,
}

struct Live {
    traj: IntruderTrajectory,
    times: CrossingTimes,
    flags: Vec<u8>,
    best: Vec<f64>,
    reports: Vec<DetectionReport>,
    sightings: u32,
    detected: Option<(u64, u32)>,
    new_reports: usize,
}

pub struct Engine<'a, 'p> {
    cfg: &'a SimConfig,
    model: EnergyModel,
    devices: Vec<Device>,
    schedule: DutySchedule,
    controller: Controller<'p>,
    bins: StateBins,
    barrier: Vec<Vec2>,
    union: CoverageUnion,
    spec: EpisodeSpec<'a>,
    arrival_ttis: Vec<u64>,
    scripted: Vec<IntruderTrajectory>,
    next_arrival: usize,
    live: Vec<Live>,
    rng_traj: ChaCha8Rng,
    rng_harvest: ChaCha8Rng,
    rng_policy: ChaCha8Rng,
    engaged: Vec<u32>,
    wake_queue: Vec<u32>,
    outcomes: Vec<IntruderOutcome>,
    snapshots: Vec<EnergySnapshot>,
    snapshot_ttis: Vec<(u64, String)>,
    next_snapshot: usize,
    events: EventLog,
    counters: Counters,
    reward: RewardTotals,
    alpha: f64,
    predictor: PredictorParams,
    coverage_cache: Option<(Vec<u32>, f64)>,
    skip_idle_slots: bool,
    // scratch
    active: Vec<u32>,
    want: Vec<u32>,
    positions: Vec<Option<Vec2>>,
}

impl<'a, 'p> Engine<'a, 'p> {
    pub fn new(
        cfg: &'a SimConfig,
        placement: &[SensorPose],
        controller: Controller<'p>,
        spec: EpisodeSpec<'a>,
        seed: &Seed,
    ) -> Result<Self> {
        cfg.validate()?;
        if placement.len() != cfg.n_devices {
            return Err(crate::Error::config(
                "n_devices",
                format!(
                    "placement has {} devices, config {}",
                    placement.len(),
                    cfg.n_devices
                ),
            ));
        }
        let model = cfg.energy.model()?;
        let level = spec.initial_level.unwrap_or(model.initial);
        let barrier = cfg.layout.barrier().sample_perimeter(cfg.coverage_samples);
        let p_th = cfg.sensing.p_th;
        let devices = placement
            .iter()
            .map(|&pose| {
                let buffer = EnergyBuffer::new(level, &model);
                Device {
                    pose,
                    ledger: EnergyLedger::new(buffer.level()),
                    buffer,
                    covered: covered_points(&pose, &barrier, p_th),
                    engaged_until: 0,
                    wake_queued: false,
                    last_rotation: None,
                    was_active: false,
                    last_confidence: 0.0,
                    decided: None,
                    pending: None,
                }
            })
            .collect();
        let (arrival_ttis, scripted) = match &spec.arrivals {
            Arrivals::Sampled(t) => (t.clone(), Vec::new()),
            Arrivals::Scripted(v) => (v.iter().map(|o| o.t_spawn).collect(), v.clone()),
        };
        let skip_idle_slots = matches!(controller, Controller::Grid)
            && !spec.track_reward
            && model.p_sense == Energy::ZERO;
        let snapshot_ttis = if spec.take_snapshots {
            cfg.snapshot_ttis()
        } else {
            Vec::new()
        };
        Ok(Self {
            cfg,
            model,
            devices,
            schedule: DutySchedule::new(&cfg.grid()),
            controller,
            bins: StateBins::new(p_th, model.c_max),
            union: CoverageUnion::new(barrier.len()),
            barrier,
            arrival_ttis,
            scripted,
            next_arrival: 0,
            live: Vec::new(),
            rng_traj: stream(seed, Purpose::Trajectories),
            rng_harvest: stream(seed, Purpose::Harvest),
            rng_policy: stream(seed, Purpose::Policy),
            engaged: Vec::new(),
            wake_queue: Vec::new(),
            outcomes: Vec::new(),
            snapshots: Vec::new(),
            snapshot_ttis,
            next_snapshot: 0,
            events: EventLog::new(cfg.record_events),
            counters: Counters::default(),
            reward: RewardTotals::default(),
            alpha: cfg.alpha(),
            predictor: PredictorParams {
                center: cfg.layout.center,
                nominal_speed: cfg.intruder_speed,
                tti_duration: cfg.tti_duration,
            },
            coverage_cache: None,
            skip_idle_slots,
            spec,
            active: Vec::new(),
            want: Vec::new(),
            positions: Vec::new(),
        })
    }

    fn tracks_reward(&self) -> bool {
        self.spec.track_reward || matches!(self.controller, Controller::Rl(_))
    }

    pub fn run(mut self) -> Result<SimOutput> {
        let horizon = self.spec.horizon_ttis;
        let mut t = 0;
        while t < horizon {
            self.take_snapshots(t);
            self.step(t)?;
            if self.spec.stop_when_resolved
                && self.next_arrival == self.arrival_ttis.len()
                && self.live.is_empty()
            {
                t += 1;
                break;
            }
            let next = self.next_event(t).min(horizon);
            if self.tracks_reward() {
                // idle TTIs: nobody senses, nothing resolves
                let idle = next - t - 1;
                self.reward.ttis += idle;
                self.reward.activity += idle as f64;
                self.reward.reward += idle as f64;
            }
            t = next;
        }
        Ok(self.finish(t.min(horizon)))
    }

    fn take_snapshots(&mut self, t: u64) {
        while let Some((tti, label)) = self.snapshot_ttis.get(self.next_snapshot) {
            if *tti > t {
                break;
            }
            let n = self.devices.len();
            let sum: f64 = self
                .devices
                .iter()
                .map(|d| d.buffer.fraction(&self.model))
                .sum();
            self.snapshots.push(EnergySnapshot {
                label: label.clone(),
                tti: *tti,
                average_percent: 100.0 * sum / n as f64,
                available: self
                    .devices
                    .iter()
                    .filter(|d| d.buffer.is_available(&self.model))
                    .count(),
                depleted: self
                    .devices
                    .iter()
                    .filter(|d| d.buffer.is_depleted())
                    .count(),
            });
            self.next_snapshot += 1;
        }
    }

    fn next_event(&self, t: u64) -> u64 {
        let mut next = u64::MAX;
        if !self.engaged.is_empty() || !self.wake_queue.is_empty() {
            return t + 1;
        }
        if !self.live.is_empty() || !self.skip_idle_slots {
            next = next.min(self.schedule.next_slot_after(t));
        }
        for o in &self.live {
            // misses resolve at the last TTI the intruder is present
            next = next.min(o.times.t_exit.saturating_sub(1).max(t + 1));
        }
        if let Some(&a) = self.arrival_ttis.get(self.next_arrival) {
            next = next.min(a.max(t + 1));
        }
        let hp = self.model.harvest_period_ttis;
        next = next.min((t / hp + 1) * hp);
        let sp = self.cfg.status_period_ttis;
        next = next.min((t / sp + 1) * sp);
        if let Some((s, _)) = self.snapshot_ttis.get(self.next_snapshot) {
            next = next.min((*s).max(t + 1));
        }
        next
    }

    fn charge(&mut self, j: usize, class: ActionClass, cost: Energy) -> bool {
        let d = &mut self.devices[j];
        if d.buffer.try_consume(cost) {
            d.ledger.record(class, cost);
            true
        } else {
            d.ledger.failed_actions += 1;
            self.counters.failed_actions += 1;
            false
        }
    }

    fn step(&mut self, t: u64) -> Result<()> {
        let dt = self.cfg.tti_duration;
        let p_th = self.cfg.sensing.p_th;
        let n = self.devices.len();

        // 1. arrivals
        while self.arrival_ttis.get(self.next_arrival) == Some(&t) {
            let id = self.next_arrival as u64;
            let traj = if self.scripted.is_empty() {
                self.spec.sampler.sample(id, t, &mut self.rng_traj)
            } else {
                self.scripted[self.next_arrival]
            };
            let times = traj.crossing_times(&self.cfg.layout, dt);
            self.events
                .push(t, EventKind::ObjectSpawned, None, Some(traj.id), None);
            self.live.push(Live {
                traj,
                times,
                flags: vec![0; n],
                best: vec![0.0; n],
                reports: Vec::new(),
                sightings: 0,
                detected: None,
                new_reports: 0,
            });
            self.next_arrival += 1;
        }

        // 2. intruder positions
        self.positions.clear();
        for o in &self.live {
            self.positions.push(o.traj.position_at(t, dt));
        }

        // 3. harvest
        if self.model.is_harvest_tick(t) {
            for d in &mut self.devices {
                let got = d.buffer.harvest_step(&self.model, &mut self.rng_harvest);
                d.ledger.harvested += got;
            }
        }

        // 4-5. wake-up delivery, decisions, rotations
        let mut woken = std::mem::take(&mut self.wake_queue);
        for &j in &woken {
            let j = j as usize;
            self.devices[j].wake_queued = false;
            if self.charge(j, ActionClass::WakeUp, self.model.p_wur) {
                let d = &mut self.devices[j];
                if d.engaged_until <= t {
                    self.engaged.push(j as u32);
                }
                d.engaged_until = t + self.cfg.wakeup.horizon_ttis;
            }
        }
        woken.clear();
        self.wake_queue = woken;
        self.engaged
            .retain(|&j| self.devices[j as usize].engaged_until > t);

        self.want.clear();
        let slot_devices = self.schedule.devices_at(t);
        let slot_live =
            !slot_devices.is_empty() && (!self.skip_idle_slots || !self.live.is_empty());
        if slot_live {
            let slot_devices: Vec<u32> = slot_devices.to_vec();
            for &j in &slot_devices {
                let activate = self.decide(j as usize, t)?;
                if activate {
                    self.want.push(j);
                }
            }
        }
        self.want.extend_from_slice(&self.engaged);
        self.want.sort_unstable();
        self.want.dedup();

        // 6-7. sensing and reports
        self.active.clear();
        let want = std::mem::take(&mut self.want);
        let r_max2 = self.cfg.sensing.r_max * self.cfg.sensing.r_max;
        let is_rl = matches!(self.controller, Controller::Rl(_));
        for &j32 in &want {
            let j = j32 as usize;
            if !self.devices[j].buffer.is_available(&self.model) {
                continue;
            }
            if self.model.p_sense > Energy::ZERO
                && !self.charge(j, ActionClass::Sensing, self.model.p_sense)
            {
                continue;
            }
            self.active.push(j32);
            self.counters.sensing_ttis += 1;
            let pose = self.devices[j].pose;
            let mut seen = 0.0f64;
            for k in 0..self.live.len() {
                let Some(p) = self.positions[k] else { continue };
                let o = &self.live[k];
                if o.detected.is_some() && self.cfg.suppress_after_fusion {
                    continue;
                }
                let d = p - pose.position;
                if d.dot(d) > r_max2 {
                    continue;
                }
                let conf = sensing_power(&pose, p);
                seen = seen.max(conf);
                let o = &mut self.live[k];
                if conf > o.best[j] {
                    o.best[j] = conf;
                }
                let best = o.best[j];
                let flags = o.flags[j];
                if best >= p_th && flags & FLAG_REPORTED == 0 {
                    if self.charge(j, ActionClass::DetectionTx, self.model.p_tx) {
                        let o = &mut self.live[k];
                        o.flags[j] |= FLAG_REPORTED;
                        o.reports.push(DetectionReport {
                            device_id: j32,
                            object_id: o.traj.id,
                            tti: t,
                            confidence: best,
                            observed_position: p,
                            class_label: None,
                        });
                        o.new_reports += 1;
                        self.counters.detection_reports += 1;
                    }
                } else if is_rl
                    && best > 0.0
                    && best < p_th
                    && flags & (FLAG_SIGHTED | FLAG_REPORTED) == 0
                    && o.sightings < self.cfg.max_sightings_per_object
                    && o.detected.is_none()
                    && self.charge(j, ActionClass::SightingTx, self.model.p_tx)
                {
                    let o = &mut self.live[k];
                    o.flags[j] |= FLAG_SIGHTED;
                    o.sightings += 1;
                    o.reports.push(DetectionReport {
                        device_id: j32,
                        object_id: o.traj.id,
                        tti: t,
                        confidence: best,
                        observed_position: p,
                        class_label: None,
                    });
                    o.new_reports += 1;
                    self.counters.sighting_reports += 1;
                }
            }
            self.devices[j].last_confidence = seen;
        }
        for &j in &want {
            let active = self.active.binary_search(&j).is_ok();
            let d = &mut self.devices[j as usize];
            d.was_active = active;
            if !active {
                d.last_confidence = 0.0;
            }
        }
        self.want = want;

        // 8. status reports
        if t > 0 && t.is_multiple_of(self.cfg.status_period_ttis) {
            for j in 0..n {
                if self.charge(j, ActionClass::StatusTx, self.model.p_tx) {
                    self.counters.status_reports += 1;
                }
            }
        }

        // 9. fusion, prediction, wake-ups
        let wakeups_on = is_rl || self.cfg.grid_wakeups;
        for k in 0..self.live.len() {
            if self.live[k].new_reports == 0 {
                continue;
            }
            let fresh = self.live[k].new_reports;
            self.live[k].new_reports = 0;
            let start = self.live[k].reports.len() - fresh;
            let o = &self.live[k];
            for r in &o.reports[start..] {
                let kind = if r.confidence >= p_th {
                    EventKind::ReportReceived
                } else {
                    EventKind::SightingReceived
                };
                self.events.push(
                    t,
                    kind,
                    Some(r.device_id),
                    Some(r.object_id),
                    Some(r.confidence),
                );
            }
            if o.detected.is_some() {
                continue;
            }
            if let Some(r) = first_valid(&o.reports[start..], p_th) {
                let (dev, id) = (r.device_id, r.object_id);
                self.live[k].detected = Some((t, dev));
                self.events
                    .push(t, EventKind::FusedDetection, Some(dev), Some(id), None);
                continue;
            }
            if !wakeups_on {
                continue;
            }
            let Some(track) = predict(&o.reports, &self.predictor) else {
                continue;
            };
            let candidates: Vec<WakeCandidate> = self
                .devices
                .iter()
                .enumerate()
                .map(|(j, d)| WakeCandidate {
                    device_id: j as u32,
                    pose: d.pose,
                    sleeping: d.engaged_until <= t && !d.wake_queued,
                    available: d.buffer.is_available(&self.model),
                })
                .collect();
            let chosen = select_wakeups(
                &track,
                &candidates,
                t,
                &self.cfg.wakeup,
                self.cfg.tti_duration,
                p_th,
            );
            let object_id = o.traj.id;
            for j in chosen {
                self.devices[j as usize].wake_queued = true;
                self.wake_queue.push(j);
                self.counters.wakeups_issued += 1;
                self.events
                    .push(t, EventKind::WakeUpIssued, Some(j), Some(object_id), None);
            }
        }

        // 10. resolve outcomes
        let mut error_sum = 0.0;
        let weights = self.cfg.weights;
        let suppress = self.cfg.suppress_after_fusion;
        let mut k = 0;
        while k < self.live.len() {
            let o = &self.live[k];
            let just_detected = matches!(o.detected, Some((td, _)) if td == t);
            if just_detected {
                let (td, dev) = o.detected.expect("detected");
                error_sum += object_error(Some(td), o.times.t_g, &weights);
                self.outcomes.push(IntruderOutcome {
                    object_id: o.traj.id,
                    t_in: o.times.t_in,
                    t_g: o.times.t_g,
                    t_exit: o.times.t_exit,
                    t_det: Some(td),
                    detector: Some(dev),
                    outcome: Outcome::classify(Some(td), o.times.t_g),
                });
            }
            let gone = t + 1 >= o.times.t_exit;
            if gone && o.detected.is_none() {
                error_sum += object_error(None, o.times.t_g, &weights);
                self.outcomes.push(IntruderOutcome {
                    object_id: o.traj.id,
                    t_in: o.times.t_in,
                    t_g: o.times.t_g,
                    t_exit: o.times.t_exit,
                    t_det: None,
                    detector: None,
                    outcome: Outcome::Missed,
                });
                self.events
                    .push(t, EventKind::ObjectMissed, None, Some(o.traj.id), None);
            }
            if gone || (o.detected.is_some() && suppress) {
                self.live.swap_remove(k);
                self.positions.swap_remove(k);
            } else {
                k += 1;
            }
        }
        // keep live objects in spawn order for deterministic iteration
        self.live.sort_by_key(|o| o.traj.id);
        if self.live.iter().all(|o| o.detected.is_some()) {
            for &j in &self.engaged {
                self.devices[j as usize].engaged_until = 0;
            }
            self.engaged.clear();
            for &j in &self.wake_queue {
                self.devices[j as usize].wake_queued = false;
            }
            self.wake_queue.clear();
        }

        // 11. reward and learning
        if self.tracks_reward() {
            let cov = self.coverage();
            let r = reward_counts(self.active.len(), n, cov, error_sum, self.alpha, &weights);
            self.reward.ttis += 1;
            self.reward.activity += 1.0 - self.active.len() as f64 / n as f64;
            self.reward.coverage += cov;
            self.reward.errors += error_sum;
            self.reward.reward += r;
            if slot_live {
                // split the activity and coverage gain over an idle TTI into
                // per-device shares: each active device is credited with the
                // barrier points it adds to those of lower-indexed ones
                let share = self.incremental_shares(n, weights.mu2);
                let deciders: Vec<u32> = self.schedule.devices_at(t).to_vec();
                for j in deciders {
                    let d = &mut self.devices[j as usize];
                    if let Some((key, action)) = d.decided.take() {
                        let signal = share.get(&j).copied().unwrap_or(0.0);
                        d.pending = Some((key, action, signal));
                    }
                }
            }
        }
        Ok(())
    }

    /// Decision of a scheduled device. Returns whether it wants to sense.
    fn decide(&mut self, j: usize, t: u64) -> Result<bool> {
        let Controller::Rl(access) = &mut self.controller else {
            return Ok(true);
        };
        let d = &self.devices[j];
        let state = DeviceState {
            active: d.was_active,
            theta_min: d.pose.theta_min,
            last_confidence: d.last_confidence,
            position: d.pose.position,
            level: d.buffer.level(),
        };
        let key = encode_state(&state, &self.bins);
        let action = match access {
            QAccess::Learn(q) => {
                if let Some((pk, pa, pr)) = self.devices[j].pending.take() {
                    q.q_update(pk, pa, pr, &key)?;
                    self.counters.q_updates += 1;
                }
                q.select_action(&key, &mut self.rng_policy)
            }
            QAccess::Frozen(q) => q.greedy(&key),
        };
        self.devices[j].decided = Some((key, action));
        let cooled = match self.devices[j].last_rotation {
            None => true,
            Some(last) => t - last >= self.cfg.rotation_cooldown_ttis,
        };
        if action.rotation != 0 && cooled {
            let steps = i32::from(action.rotation);
            let cost = self
                .model
                .p_rot_bin
                .saturating_mul(u64::from(steps.unsigned_abs()));
            if self.charge(j, ActionClass::Rotation, cost) {
                let d = &mut self.devices[j];
                d.pose = rotate_pose(&d.pose, steps).0;
                d.covered = covered_points(&d.pose, &self.barrier, self.cfg.sensing.p_th);
                d.last_rotation = Some(t);
                self.counters.rotations += 1;
                self.coverage_cache = None;
            }
        }
        Ok(action.activate)
    }

    fn coverage(&mut self) -> f64 {
        if self.active.is_empty() {
            return 0.0;
        }
        if let Some((set, cov)) = &self.coverage_cache {
            if *set == self.active {
                return *cov;
            }
        }
        let devices = &self.devices;
        let count = self.union.union_count(
            self.active
                .iter()
                .map(|&j| devices[j as usize].covered.as_slice()),
        );
        let cov = count as f64 / self.barrier.len() as f64;
        self.coverage_cache = Some((self.active.clone(), cov));
        cov
    }

    /// Learning signal of each active device, keyed by device id.
    fn incremental_shares(&mut self, n: usize, mu2: f64) -> BTreeMap<u32, f64> {
        let devices = &self.devices;
        let fresh = self.union.incremental_counts(
            self.active
                .iter()
                .map(|&j| devices[j as usize].covered.as_slice()),
        );
        let m = self.barrier.len() as f64;
        self.active
            .iter()
            .zip(fresh)
            .map(|(&j, c)| (j, mu2 * c as f64 / m - 1.0 / n as f64))
            .collect()
    }

    fn finish(self, end_tti: u64) -> SimOutput {
        let mut consumed_by_class = BTreeMap::new();
        for class in ActionClass::ALL {
            let total = self
                .devices
                .iter()
                .fold(Energy::ZERO, |acc, d| acc + d.ledger.consumed(class));
            consumed_by_class.insert(class, total);
        }
        let devices = self
            .devices
            .iter()
            .enumerate()
            .map(|(j, d)| DeviceEnergy {
                device_id: j as u32,
                initial: d.ledger.initial.units(),
                harvested: d.ledger.harvested.units(),
                consumed: d.ledger.total_consumed().units(),
                level: d.buffer.level().units(),
                failed_actions: d.ledger.failed_actions,
                balanced: d.ledger.balances(d.buffer.level()),
            })
            .collect();
        SimOutput {
            outcomes: self.outcomes,
            snapshots: self.snapshots,
            devices,
            consumed_by_class,
            counters: self.counters,
            reward: self.reward,
            events: self.events,
            end_tti,
        }
    }
}

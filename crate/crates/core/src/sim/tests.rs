use super::*;
use crate::energy::EnergyParams;
use crate::environment::ArrivalProfile;
use crate::geometry::{SensingParams, Vec2};
use crate::policy::qlearn::QPolicy;
use crate::policy::scoring::Outcome;

fn free_energy() -> EnergyParams {
    EnergyParams {
        p_tx: 0.0,
        p_wur: 0.0,
        p_rot_bin: 0.0,
        p_sense: 0.0,
        ..EnergyParams::default()
    }
}

fn one_device_cfg() -> SimConfig {
    SimConfig {
        n_devices: 1,
        tau: 1,
        horizon_ttis: 20_000,
        ..SimConfig::with_seed(3)
    }
}

/// A camera on the right side facing +x and a horizontal pass 0.3 m in
/// front of it.
fn single_pass() -> (Vec<SensorPose>, IntruderTrajectory) {
    let pose = SensingParams::default().pose_facing(Vec2::new(3.5, 0.0), 0.0);
    let traj = IntruderTrajectory::new(
        0,
        5,
        Vec2::new(3.8, -4.0),
        Vec2::new(3.8, 0.0),
        Vec2::new(3.8, 4.0),
        1.0,
    )
    .unwrap();
    (vec![pose], traj)
}

#[test]
fn null_dynamics_only_harvest() {
    let cfg = SimConfig {
        n_devices: 4,
        tau: 1,
        horizon_ttis: 300_000,
        energy: EnergyParams {
            initial_fraction: 0.2,
            harvest_period_ttis: 1000,
            lambda: 0.5,
            ..free_energy()
        },
        arrivals: ArrivalProfile {
            day_rate: 0.0,
            night_rate: 0.0,
            ..Default::default()
        },
        ..SimConfig::with_seed(11)
    };
    let run = run(&cfg).unwrap();
    let m = &run.metrics;
    assert_eq!(m.intruders, 0);
    assert!(m.energy_balanced());
    for d in &m.devices {
        assert!((d.level - (d.initial + d.harvested)).abs() < 1e-9);
        assert_eq!(d.consumed, 0.0);
    }
}

#[test]
fn single_pass_reports_once() {
    let cfg = one_device_cfg();
    let (placement, traj) = single_pass();
    let out = run_trial(
        &cfg,
        &placement,
        Controller::Grid,
        traj,
        &run_seed(1),
        false,
    )
    .unwrap();
    assert_eq!(out.counters.detection_reports, 1);
    assert_eq!(out.outcomes.len(), 1);
    assert!(out.outcomes[0].outcome.is_detected());
    assert_eq!(out.outcomes[0].detector, Some(0));
    let tx = out.consumed_by_class[&ActionClass::DetectionTx];
    assert_eq!(tx.units(), 1.0);
    assert!(out.devices[0].balanced);
}

#[test]
fn insufficient_charge_blocks_report() {
    // 0.5 of 2 units is still available (25%) but short of P_Tx
    let cfg = SimConfig {
        energy: EnergyParams {
            c_max: 2.0,
            initial_fraction: 0.25,
            ..EnergyParams::default()
        },
        ..one_device_cfg()
    };
    let (placement, traj) = single_pass();
    let out = run_trial(
        &cfg,
        &placement,
        Controller::Grid,
        traj,
        &run_seed(1),
        false,
    )
    .unwrap();
    assert_eq!(out.counters.detection_reports, 0);
    assert_eq!(out.outcomes[0].outcome, Outcome::Missed);
    assert_eq!(out.devices[0].level, 0.5);
    assert!(out.devices[0].failed_actions > 0);
}

#[test]
fn zero_horizon_is_empty() {
    let cfg = SimConfig {
        horizon_ttis: 0,
        ..SimConfig::with_seed(1)
    };
    let run = run(&cfg).unwrap();
    assert_eq!(run.metrics.intruders, 0);
    assert_eq!(run.metrics.p_det, None);
    assert!(run.metrics.snapshots.is_empty());
}

#[test]
fn same_seed_same_bytes() {
    let cfg = SimConfig {
        n_devices: 12,
        tau: 32,
        horizon_ttis: 3_600_000,
        arrivals: ArrivalProfile {
            clock_origin: 8.0,
            ..Default::default()
        },
        record_events: true,
        ..SimConfig::with_seed(77)
    };
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert!(a.metrics.intruders > 0);
    assert_eq!(a.metrics.to_json(), b.metrics.to_json());
    let mut ea = Vec::new();
    let mut eb = Vec::new();
    a.events.write_jsonl(&mut ea).unwrap();
    b.events.write_jsonl(&mut eb).unwrap();
    assert_eq!(ea, eb);
    for o in &a.metrics.outcomes {
        if let Some(t) = o.t_det {
            assert!(o.t_in <= t && t <= o.t_exit);
        }
    }
}

#[test]
fn rl_trains_and_stays_balanced() {
    let cfg = SimConfig {
        n_devices: 16,
        tau: 64,
        policy: PolicyKind::Rl,
        training: TrainingParams {
            episodes: 20,
            placement_budget: 4,
            placement_rollouts: 2,
            ..Default::default()
        },
        ..SimConfig::with_seed(4)
    };
    let sampler = default_sampler(&cfg);
    let placement = grid_placement(16, &cfg.layout.protected(), &cfg.sensing);
    let q = train_policy(&cfg, &placement, &sampler).unwrap();
    assert!(!q.is_empty());
    let frozen: QPolicy = q.frozen();
    let traj = trial_trajectory(&cfg, &sampler, &run_seed(9));
    let out = run_trial(
        &cfg,
        &placement,
        Controller::Rl(QAccess::Frozen(&frozen)),
        traj,
        &run_seed(9),
        true,
    )
    .unwrap();
    assert!(out.devices.iter().all(|d| d.balanced));
    assert!(out.reward.ttis > 0);
}

#[test]
fn snapshots_bound_counts() {
    let cfg = SimConfig {
        n_devices: 20,
        tau: 1024,
        energy: EnergyParams {
            initial_fraction: 0.5,
            ..Default::default()
        },
        ..SimConfig::with_seed(2)
    };
    let run = run(&cfg).unwrap();
    assert_eq!(run.metrics.snapshots.len(), 6);
    for s in &run.metrics.snapshots {
        assert!(s.available + s.depleted <= 20);
        assert!((0.0..=100.0).contains(&s.average_percent));
    }
    assert!(run.metrics.energy_balanced());
}

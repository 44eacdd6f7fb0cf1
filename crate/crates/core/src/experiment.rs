//! Parameter sweeps, minimum-density search and the energy table.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::policy::grid::grid_placement;
use crate::policy::qlearn::QPolicy;
use crate::policy::scoring::{Outcome, OutcomeWeights};
use crate::rng::trial_seed;
use crate::sim::{
    default_sampler, prepare_rl, run_exec, run_trial, trial_trajectory, Controller, EnergySnapshot,
    PolicyKind, QAccess, SimConfig,
};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Infeasible,
}

/// Aggregated trials of one `(policy, N, tau)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub policy: PolicyKind,
    pub n_devices: usize,
    pub tau: u64,
    pub tti_duration: f64,
    pub trials: u64,
    pub detected: u64,
    pub early: u64,
    /// Sum of entry-to-detection delays over detected trials, seconds.
    pub delay_sum_s: f64,
    pub status: CellStatus,
    pub note: Option<String>,
}

impl CellResult {
    pub fn p_det(&self) -> Option<f64> {
        (self.trials > 0 && self.status == CellStatus::Ok)
            .then(|| self.detected as f64 / self.trials as f64)
    }

    pub fn p_early(&self) -> Option<f64> {
        (self.trials > 0 && self.status == CellStatus::Ok)
            .then(|| self.early as f64 / self.trials as f64)
    }

    pub fn mean_t_det_s(&self) -> Option<f64> {
        (self.detected > 0).then(|| self.delay_sum_s / self.detected as f64)
    }

    pub fn ci(&self) -> (f64, f64) {
        wilson_interval(self.detected, self.trials, Z95)
    }

    pub fn ci_halfwidth(&self) -> f64 {
        let (lo, hi) = self.ci();
        (hi - lo) / 2.0
    }

    fn infeasible(cfg: &SimConfig, trials: u64, note: String) -> Self {
        CellResult {
            policy: cfg.policy,
            n_devices: cfg.n_devices,
            tau: cfg.tau,
            tti_duration: cfg.tti_duration,
            trials,
            detected: 0,
            early: 0,
            delay_sum_s: 0.0,
            status: CellStatus::Infeasible,
            note: Some(note),
        }
    }
}

fn cell_config(base: &SimConfig, policy: PolicyKind, n: usize, tau: u64) -> SimConfig {
    SimConfig {
        policy,
        n_devices: n,
        tau,
        ..base.clone()
    }
}

/// Runs `trials` single-intruder trials of one cell. RL cells are placed
/// and trained first; the trained table is then shared read-only by all
/// trials.
pub fn evaluate_cell(
    base: &SimConfig,
    policy: PolicyKind,
    n: usize,
    tau: u64,
    trials: u32,
    exec: Execution,
) -> Result<CellResult> {
    let cfg = cell_config(base, policy, n, tau);
    if let Err(e) = cfg.validate() {
        return match e {
            Error::InvalidConfig { ref field, .. } if field == "n_devices" || field == "tau" => Ok(
                CellResult::infeasible(&cfg, u64::from(trials), e.to_string()),
            ),
            other => Err(other),
        };
    }
    let root = cfg.seed.expect("validated");
    let sampler = default_sampler(&cfg);
    let (placement, table): (Vec<_>, Option<QPolicy>) = match policy {
        PolicyKind::Grid => (
            grid_placement(n, &cfg.layout.protected(), &cfg.sensing),
            None,
        ),
        PolicyKind::Rl => {
            let rl = prepare_rl(&cfg, exec)?;
            (rl.placement, Some(rl.policy))
        }
    };
    let outcomes = map_indexed(exec, trials as usize, |i| {
        let seed = trial_seed(root, policy.code(), n as u32, tau as u32, i as u32);
        let traj = trial_trajectory(&cfg, &sampler, &seed);
        let controller = match &table {
            None => Controller::Grid,
            Some(q) => Controller::Rl(QAccess::Frozen(q)),
        };
        run_trial(&cfg, &placement, controller, traj, &seed, false).map(|out| out.outcomes)
    });
    let mut result = CellResult {
        policy,
        n_devices: n,
        tau,
        tti_duration: cfg.tti_duration,
        trials: u64::from(trials),
        detected: 0,
        early: 0,
        delay_sum_s: 0.0,
        status: CellStatus::Ok,
        note: None,
    };
    for trial in outcomes {
        for o in trial? {
            if o.outcome.is_detected() {
                result.detected += 1;
                result.delay_sum_s += o.delay_s(cfg.tti_duration).unwrap_or(0.0);
            }
            if o.outcome == Outcome::Early {
                result.early += 1;
            }
        }
    }
    Ok(result)
}

/// Grid of cells to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub n_values: Vec<usize>,
    pub tau_values: Vec<u64>,
    pub trials: u32,
    pub policies: Vec<PolicyKind>,
}

impl SweepSpec {
    pub fn default_n_values() -> Vec<usize> {
        vec![4, 8, 16, 32, 64, 128, 256, 512]
    }

    pub fn default_tau_values() -> Vec<u64> {
        vec![1, 4, 8, 16, 32, 64, 128, 256, 512, 1024]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::config("sweep.n_values", "must not be empty"));
        }
        if self.tau_values.is_empty() {
            return Err(Error::config("sweep.tau_values", "must not be empty"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("sweep.policies", "must not be empty"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.base.seed.is_none() {
            return Err(Error::config("seed", "is required"));
        }
        Ok(())
    }
}

/// One row per `(policy, N, tau)`, in that sort order.
pub fn sweep(spec: &SweepSpec, exec: Execution) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let mut policies = spec.policies.clone();
    policies.sort();
    policies.dedup();
    let mut ns = spec.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut taus = spec.tau_values.clone();
    taus.sort_unstable();
    taus.dedup();
    let mut rows = Vec::new();
    for &policy in &policies {
        for &n in &ns {
            for &tau in &taus {
                rows.push(evaluate_cell(
                    &spec.base,
                    policy,
                    n,
                    tau,
                    spec.trials,
                    exec,
                )?);
            }
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SWEEP_HEADER: &str =
    "policy,N,tau_ms,trials,P_det,P_early,mean_T_det_s,ci_halfwidth,status";

/// Writes sweep rows as CSV. Absent values are empty cells.
pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[CellResult]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        let ok = r.status == CellStatus::Ok;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.policy.as_str(),
            r.n_devices,
            r.tau as f64 * r.tti_duration * 1000.0,
            r.trials,
            opt(r.p_det()),
            opt(r.p_early()),
            opt(r.mean_t_det_s()),
            if ok {
                r.ci_halfwidth().to_string()
            } else {
                String::new()
            },
            if ok { "ok" } else { "infeasible" },
        )?;
    }
    Ok(())
}

/// Outcome of a minimum-density search at one duty-cycle period.
#[derive(Debug, Clone, PartialEq)]
pub struct NminResult {
    pub policy: PolicyKind,
    pub tau: u64,
    pub target: f64,
    pub trials: u32,
    pub n_min: Option<usize>,
    /// Every probed cell, in ascending N.
    pub probes: Vec<CellResult>,
}

impl NminResult {
    pub fn probe(&self, n: usize) -> Option<&CellResult> {
        self.probes.iter().find(|c| c.n_devices == n)
    }
}

/// Smallest candidate N whose lower 95% bound on the detection rate meets
/// `target`. Candidates are probed by an exponential ramp over the sorted
/// list, then bisected between the last miss and the first hit.
pub fn find_nmin(
    base: &SimConfig,
    policy: PolicyKind,
    tau: u64,
    target: f64,
    candidates: &[usize],
    trials: u32,
    exec: Execution,
) -> Result<NminResult> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::config("target", "must lie in [0, 1)"));
    }
    let needed = (10.0 / (1.0 - target)).ceil() as u32;
    if trials < needed {
        return Err(Error::config(
            "trials",
            format!("target {target} needs at least {needed} trials per probe"),
        ));
    }
    let mut ns = candidates.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() {
        return Err(Error::config("n_values", "must not be empty"));
    }
    let mut probed: BTreeMap<usize, CellResult> = BTreeMap::new();
    let meets = |i: usize, probed: &mut BTreeMap<usize, CellResult>| -> Result<bool> {
        let n = ns[i];
        if let std::collections::btree_map::Entry::Vacant(e) = probed.entry(n) {
            e.insert(evaluate_cell(base, policy, n, tau, trials, exec)?);
        }
        let c = &probed[&n];
        Ok(c.status == CellStatus::Ok && c.ci().0 >= target)
    };
    // ramp over indices 0, 1, 3, 7, ...
    let mut lo = 0usize;
    let mut hit = None;
    let mut step = 1usize;
    let mut i = 0usize;
    loop {
        if meets(i, &mut probed)? {
            hit = Some(i);
            break;
        }
        lo = i + 1;
        if i == ns.len() - 1 {
            break;
        }
        i = (i + step).min(ns.len() - 1);
        step *= 2;
    }
    let n_min = match hit {
        None => None,
        Some(mut hi) => {
            while lo < hi {
                let mid = (lo + hi) / 2;
                if meets(mid, &mut probed)? {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            Some(ns[hi])
        }
    };
    Ok(NminResult {
        policy,
        tau,
        target,
        trials,
        n_min,
        probes: probed.into_values().collect(),
    })
}

pub const NMIN_HEADER: &str = "policy,tau_ms,target,trials,N_min,P_det_at_N_min,ci_low_at_N_min";

pub fn write_nmin_csv<W: Write>(
    mut out: W,
    rows: &[NminResult],
    tti_duration: f64,
) -> std::io::Result<()> {
    writeln!(out, "{NMIN_HEADER}")?;
    for r in rows {
        let cell = r.n_min.and_then(|n| r.probe(n));
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.policy.as_str(),
            r.tau as f64 * tti_duration * 1000.0,
            r.target,
            r.trials,
            r.n_min.map(|n| n.to_string()).unwrap_or_default(),
            opt(cell.and_then(|c| c.p_det())),
            opt(cell.map(|c| c.ci().0)),
        )?;
    }
    Ok(())
}

/// Configuration of the day-long energy comparison: 20 cameras, a slow duty
/// cycle and a per-TTI sensing cost so that activity shows up in the
/// battery levels.
pub fn energy_table_preset(seed: u64) -> SimConfig {
    SimConfig {
        n_devices: 20,
        tau: 1024,
        energy: EnergyParams {
            p_sense: 0.002,
            initial_fraction: 0.5,
            ..EnergyParams::default()
        },
        // at 20 devices the default coverage weight leaves the learned policy asleep
        weights: OutcomeWeights {
            mu2: 4.0,
            ..OutcomeWeights::default()
        },
        ..SimConfig::with_seed(seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub label: String,
    pub grid: EnergySnapshot,
    pub rl: EnergySnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    pub n_devices: usize,
    pub rows: Vec<EnergyRow>,
    pub grid_p_det: Option<f64>,
    pub rl_p_det: Option<f64>,
}

/// Runs both policies over the configured horizon with the same seed and
/// pairs their snapshots.
pub fn emit_energy_table(base: &SimConfig, exec: Execution) -> Result<EnergyTable> {
    let grid = run_exec(
        &SimConfig {
            policy: PolicyKind::Grid,
            ..base.clone()
        },
        exec,
    )?;
    let rl = run_exec(
        &SimConfig {
            policy: PolicyKind::Rl,
            ..base.clone()
        },
        exec,
    )?;
    let rows = grid
        .metrics
        .snapshots
        .iter()
        .zip(&rl.metrics.snapshots)
        .map(|(g, r)| EnergyRow {
            label: g.label.clone(),
            grid: g.clone(),
            rl: r.clone(),
        })
        .collect();
    Ok(EnergyTable {
        n_devices: base.n_devices,
        rows,
        grid_p_det: grid.metrics.p_det,
        rl_p_det: rl.metrics.p_det,
    })
}

pub const ENERGY_HEADER: &str =
    "time,grid_avg_energy_pct,grid_available,grid_depleted,rl_avg_energy_pct,rl_available,rl_depleted";

pub fn write_energy_csv<W: Write>(mut out: W, table: &EnergyTable) -> std::io::Result<()> {
    writeln!(out, "{ENERGY_HEADER}")?;
    for r in &table.rows {
        writeln!(
            out,
            "{},{:.2},{},{},{:.2},{},{}",
            r.label,
            r.grid.average_percent,
            r.grid.available,
            r.grid.depleted,
            r.rl.average_percent,
            r.rl.available,
            r.rl.depleted
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SimConfig {
        SimConfig::with_seed(21)
    }

    #[test]
    fn wilson_basics() {
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let (lo, hi) = wilson_interval(100, 100, Z95);
        assert!(hi == 1.0 && lo > 0.96);
        assert_eq!(wilson_interval(0, 0, Z95), (0.0, 1.0));
    }

    #[test]
    fn one_cell_one_row() {
        let spec = SweepSpec {
            base: base(),
            n_values: vec![8],
            tau_values: vec![8],
            trials: 1,
            policies: vec![PolicyKind::Grid],
        };
        let rows = sweep(&spec, Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 1);
        let mut csv = Vec::new();
        write_sweep_csv(&mut csv, &rows).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(SWEEP_HEADER));
    }

    #[test]
    fn sweep_is_reproducible_and_order_free() {
        let spec = SweepSpec {
            base: base(),
            n_values: vec![16, 8],
            tau_values: vec![64, 4],
            trials: 30,
            policies: vec![PolicyKind::Grid],
        };
        let a = sweep(&spec, Execution::Parallel).unwrap();
        let b = sweep(&spec, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let order: Vec<(usize, u64)> = a.iter().map(|r| (r.n_devices, r.tau)).collect();
        assert_eq!(order, vec![(8, 4), (8, 64), (16, 4), (16, 64)]);
    }

    #[test]
    fn infeasible_cell_is_flagged() {
        let r = evaluate_cell(&base(), PolicyKind::Grid, 0, 8, 5, Execution::Sequential).unwrap();
        assert_eq!(r.status, CellStatus::Infeasible);
        let mut csv = Vec::new();
        write_sweep_csv(&mut csv, &[r]).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains("infeasible"));
    }

    #[test]
    fn nmin_target_zero_is_smallest() {
        let r = find_nmin(
            &base(),
            PolicyKind::Grid,
            8,
            0.0,
            &[16, 4, 8],
            10,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(r.n_min, Some(4));
        assert!(find_nmin(
            &base(),
            PolicyKind::Grid,
            8,
            0.99,
            &[4],
            100,
            Execution::Sequential
        )
        .is_err());
    }
}

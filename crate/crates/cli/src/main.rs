//! `geofence`: runs single simulations, (N, tau) sweeps, minimum-density
//! searches and the day-long energy comparison, writing CSV/JSON into an
//! output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use geofence_core::experiment::{
    emit_energy_table, energy_table_preset, find_nmin, sweep, write_energy_csv, write_nmin_csv,
    write_sweep_csv, SweepSpec,
};
use geofence_core::par::{configure_workers, Execution};
use geofence_core::policy::write_placement_csv;
use geofence_core::sim::{run_exec, PolicyKind, SimConfig};

#[derive(Parser)]
#[command(
    name = "geofence",
    version,
    about = "Energy-aware geofencing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run of the configured policy over the configured horizon.
    RunOne(Common),
    /// Detection statistics over a grid of (N, tau) cells.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Device counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Duty-cycle periods in TTIs, comma separated.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<u64>>,
    },
    /// Smallest N reaching a detection target, per duty-cycle period.
    Nmin {
        #[command(flatten)]
        common: Common,
        /// Candidate device counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', default_values_t = [4u64, 64, 1024])]
        tau: Vec<u64>,
    },
    /// Snapshot table of battery levels for both policies over one day.
    EnergyTable(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; unspecified fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// `grid` or `rl`. Sweeps and searches cover both when omitted.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<u32>,
    /// Detection target for `nmin`.
    #[arg(long)]
    target: Option<f64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    parallel: Option<usize>,
}

impl Common {
    /// Loads the config (or `fallback` when no file is given) and applies the
    /// flag overrides.
    fn config(&self, fallback: impl FnOnce(u64) -> SimConfig) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::load(path)?,
            None => fallback(self.seed.unwrap_or(1)),
        };
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        if cfg.seed.is_none() {
            cfg.seed = Some(1);
        }
        if let Some(p) = self.policy {
            cfg.policy = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn policies(&self) -> Vec<PolicyKind> {
        match self.policy {
            Some(p) => vec![p],
            None => vec![PolicyKind::Grid, PolicyKind::Rl],
        }
    }

    fn execution(&self) -> Result<Execution> {
        match self.parallel {
            None => Ok(Execution::default()),
            Some(0) => bail!("--parallel must be at least 1"),
            Some(1) => Ok(Execution::Sequential),
            Some(w) => {
                if cfg!(not(feature = "parallel")) {
                    eprintln!(
                        "warning: built without the `parallel` feature; running sequentially"
                    );
                    return Ok(Execution::Sequential);
                }
                configure_workers(w)?;
                Ok(Execution::Parallel)
            }
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn run_one(c: &Common) -> Result<()> {
    let mut cfg = c.config(SimConfig::with_seed)?;
    cfg.record_events = true;
    let exec = c.execution()?;
    let dir = c.out_dir()?;
    let run = run_exec(&cfg, exec)?;
    write_text(dir, "metrics.json", &(run.metrics.to_json() + "\n"))?;
    let mut w = create(dir, "events.jsonl")?;
    run.events.write_jsonl(&mut w)?;
    w.flush()?;
    let mut w = create(dir, "placement.csv")?;
    write_placement_csv(&mut w, &run.placement)?;
    w.flush()?;
    if let Some(q) = &run.policy {
        write_text(dir, "qtable.txt", &q.to_text())?;
    }
    write_text(dir, "config.toml", &cfg.to_toml_string())?;
    let m = &run.metrics;
    println!(
        "{} N={} tau={} intruders={} detected={} early={}",
        m.policy.as_str(),
        m.n_devices,
        m.tau,
        m.intruders,
        m.detected,
        m.early
    );
    Ok(())
}

fn run_sweep(c: &Common, n: Option<Vec<usize>>, tau: Option<Vec<u64>>) -> Result<()> {
    let base = c.config(SimConfig::with_seed)?;
    let exec = c.execution()?;
    let spec = SweepSpec {
        base,
        n_values: n.unwrap_or_else(SweepSpec::default_n_values),
        tau_values: tau.unwrap_or_else(SweepSpec::default_tau_values),
        trials: c.trials.unwrap_or(100),
        policies: c.policies(),
    };
    spec.validate()?;
    let dir = c.out_dir()?;
    let rows = sweep(&spec, exec)?;
    let mut w = create(dir, "sweep.csv")?;
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    println!(
        "{} cells written to {}",
        rows.len(),
        dir.join("sweep.csv").display()
    );
    Ok(())
}

fn run_nmin(c: &Common, n: Option<Vec<usize>>, taus: Vec<u64>) -> Result<()> {
    let base = c.config(SimConfig::with_seed)?;
    let exec = c.execution()?;
    let target = c.target.unwrap_or(0.99);
    let trials = c.trials.unwrap_or(1000);
    let candidates = n.unwrap_or_else(SweepSpec::default_n_values);
    if taus.is_empty() {
        bail!("--tau must name at least one period");
    }
    let dir = c.out_dir()?;
    let mut results = Vec::new();
    let mut probes = Vec::new();
    for policy in c.policies() {
        for &tau in &taus {
            let r = find_nmin(&base, policy, tau, target, &candidates, trials, exec)?;
            println!(
                "{} tau={} N_min={}",
                policy.as_str(),
                tau,
                r.n_min
                    .map(|n| n.to_string())
                    .unwrap_or_else(|| "absent".into())
            );
            probes.extend(r.probes.iter().cloned());
            results.push(r);
        }
    }
    let mut w = create(dir, "nmin.csv")?;
    write_nmin_csv(&mut w, &results, base.tti_duration)?;
    w.flush()?;
    let mut w = create(dir, "nmin_probes.csv")?;
    write_sweep_csv(&mut w, &probes)?;
    w.flush()?;
    Ok(())
}

fn run_energy(c: &Common) -> Result<()> {
    let cfg = c.config(energy_table_preset)?;
    let exec = c.execution()?;
    let dir = c.out_dir()?;
    let table = emit_energy_table(&cfg, exec)?;
    let mut w = create(dir, "energy_table.csv")?;
    write_energy_csv(&mut w, &table)?;
    w.flush()?;
    let fmt = |p: Option<f64>| p.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
    println!(
        "N={} detection rate grid {} rl {}",
        table.n_devices,
        fmt(table.grid_p_det),
        fmt(table.rl_p_det)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::RunOne(c) => run_one(&c),
        Command::Sweep { common, n, tau } => run_sweep(&common, n, tau),
        Command::Nmin { common, n, tau } => run_nmin(&common, n, tau),
        Command::EnergyTable(c) => run_energy(&c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

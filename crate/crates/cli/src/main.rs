//! `qnet`: run, sweep, validate and cross-check circuit-QED network simulations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qnet_core::config::{Engine, Overrides, RunConfig};
use qnet_core::io;
use qnet_core::sweep::{self, SweepPlan};
use qnet_core::{oracle, runner, Error};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "qnet", version, about = "Localization dynamics in circuit-QED networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory and write CSV + summary JSON.
    Run(Common),
    /// Run a parameter grid described by a sweep plan.
    Sweep(Common),
    /// Resolve and check a configuration without running it.
    Validate(Common),
    /// Run the cross-check suites.
    Oracle {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON configuration (a sweep plan for `sweep`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// Sampling intervals over the window.
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads for sweeps.
    #[arg(long, env = "QNET_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "qnet-out")]
    out: PathBuf,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "Np")]
    np: Option<u32>,
    #[arg(long = "J")]
    j: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long = "U")]
    u: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "gamma-phi")]
    gamma_phi: Option<f64>,
    /// Finite-range coupling with D neighbours per side.
    #[arg(long = "D", conflicts_with = "all_to_all")]
    d: Option<usize>,
    #[arg(long = "all-to-all")]
    all_to_all: bool,
    #[arg(long = "delta-omega")]
    delta_omega: Option<f64>,
    #[arg(long = "delta-J")]
    delta_j: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Result<Overrides, Error> {
        Ok(Overrides {
            engine: self.engine.as_deref().map(str::parse::<Engine>).transpose()?,
            seed: self.seed,
            t_max: self.t_max,
            samples: self.samples,
            n: self.n,
            np: self.np,
            j: self.j,
            g: self.g,
            u: self.u,
            kappa: self.kappa,
            gamma: self.gamma,
            gamma_phi: self.gamma_phi,
            d: self.d,
            all_to_all: self.all_to_all,
            delta_omega: self.delta_omega,
            delta_j: self.delta_j,
        })
    }

    fn run_config(&self) -> Result<RunConfig, Error> {
        RunConfig::load(self.config.as_deref(), &self.overrides()?)
    }

    fn sweep_plan(&self) -> anyhow::Result<SweepPlan> {
        let path = self.config.as_deref().context("sweep needs --config PLAN.json")?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut plan = SweepPlan::from_json(&text).map_err(anyhow::Error::from)?;
        let mut o = self.overrides()?;
        if let Some(e) = o.engine.take() {
            plan.engine = Some(e);
        }
        if let Some(s) = o.seed.take() {
            plan.seed = Some(s);
        }
        plan.base.apply(&o);
        Ok(plan)
    }
}

/// Report a failure as JSON on stderr and, when possible, in the output directory.
fn fail(err: &anyhow::Error, out: Option<&Path>, config: Option<&RunConfig>) -> ExitCode {
    let value = match err.downcast_ref::<Error>() {
        Some(e) => io::error_json(e, config),
        None => json!({"version": io::VERSION, "error": {"kind": "other", "message": format!("{err:#}")}}),
    };
    eprintln!("{value}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = io::write_json(&dir.join(io::ERROR_FILE), &value);
        }
    }
    let config_error = err
        .downcast_ref::<Error>()
        .is_some_and(|e| matches!(e, Error::InvalidParameter { .. } | Error::Json(_)));
    ExitCode::from(if config_error { 2 } else { 1 })
}

fn cmd_run(c: &Common) -> ExitCode {
    let cfg = match c.run_config() {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e.into(), Some(&c.out), None),
    };
    log::info!("running {} with N={} Np={}", cfg.engine.name(), cfg.network.n, cfg.np);
    let result = runner::run(&cfg).map_err(anyhow::Error::from).and_then(|out| {
        io::write_run_artifacts(&c.out, &out)?;
        Ok(io::summary_json(&out)?)
    });
    match result {
        Ok(summary) => {
            println!("{}", json!({"eta": summary["eta"], "P_min": summary["P_min"], "out": c.out}));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, Some(&c.out), Some(&cfg)),
    }
}

fn cmd_sweep(c: &Common) -> ExitCode {
    let result = c.sweep_plan().and_then(|plan| {
        let res = match c.threads {
            Some(t) => sweep::run_sweep_on(&plan, t)?,
            None => sweep::run_sweep(&plan)?,
        };
        io::write_sweep_artifacts(&c.out, &res)?;
        Ok(res)
    });
    match result {
        Ok(res) => {
            println!("{}", json!({"points": res.points.len(), "failures": res.n_failures(), "out": c.out}));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, Some(&c.out), None),
    }
}

fn cmd_validate(c: &Common) -> ExitCode {
    // a sweep plan validates every grid point; anything else is a run config
    let is_plan = c
        .config
        .as_deref()
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .is_some_and(|v| v.get("axes").is_some());
    let result: anyhow::Result<serde_json::Value> = if is_plan {
        c.sweep_plan().and_then(|plan| {
            plan.validate()?;
            Ok(json!({"valid": true, "points": plan.n_points(), "plan": plan}))
        })
    } else {
        c.run_config().map(|cfg| json!({"valid": true, "config": cfg})).map_err(Into::into)
    };
    match result {
        Ok(v) => {
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, None, None),
    }
}

fn cmd_oracle(out: Option<&Path>) -> ExitCode {
    match oracle::run_all() {
        Ok(report) => {
            for c in &report.checks {
                println!(
                    "{} {:<20} {:<40} err={:.3e} tol={:.1e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.suite,
                    c.name,
                    c.max_error,
                    c.tolerance
                );
            }
            if let Some(dir) = out {
                let written = std::fs::create_dir_all(dir)
                    .map_err(Error::from)
                    .and_then(|_| io::write_json(&dir.join("oracle.json"), &json!({"version": io::VERSION, "report": report})));
                if let Err(e) = written {
                    return fail(&e.into(), None, None);
                }
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&e.into(), out, None),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Validate(c) => cmd_validate(c),
        Command::Oracle { out } => cmd_oracle(out.as_deref()),
    }
}

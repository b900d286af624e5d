use std::path::PathBuf;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};

use holosim::model::Frame;
use holosim_cli::config::{Experiment, ScenarioConfig};
use holosim_cli::experiments as ex;
use holosim_cli::output::{self as out, OutputDir, RunInfo};

#[derive(Parser)]
#[command(name = "holosim", version, about = "Two-tone holonomic transfer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-tone Stark, Rabi and cross-Stark calibration; writes a table.
    Calibrate(Common),
    /// Tomography of the θ = π/4 Bell state.
    Bell(Common),
    /// Transfer populations and fidelity against θ.
    ThetaSweep(Common),
    /// Set versus measured relative phase.
    PhaseSweep(Common),
    /// Final populations at θ = π/2 for the unitary, T1 and noise rows.
    Table1(Common),
    /// Population time series during one pulse.
    Timeseries(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML file; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// "rwa" or "lab".
    #[arg(long)]
    frame: Option<Frame>,
    /// Shots per tomography setting (0 = exact).
    #[arg(long)]
    shots: Option<usize>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Calibrate(a) => (Experiment::Calibrate, a),
        Command::Bell(a) => (Experiment::Bell, a),
        Command::ThetaSweep(a) => (Experiment::ThetaSweep, a),
        Command::PhaseSweep(a) => (Experiment::PhaseSweep, a),
        Command::Table1(a) => (Experiment::Table1, a),
        Command::Timeseries(a) => (Experiment::Timeseries, a),
    };

    let (mut cfg, text) = match &args.config {
        Some(p) => (ScenarioConfig::load(p)?, std::fs::read_to_string(p)?),
        None => (ScenarioConfig::reference(experiment), String::new()),
    };
    cfg.experiment = experiment;
    let mut overrides = Vec::new();
    if let Some(v) = &args.out {
        cfg.output = v.clone();
        overrides.push(format!("out={}", v.display()));
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
        overrides.push(format!("seed={v}"));
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
        overrides.push(format!("workers={v}"));
    }
    if let Some(v) = args.frame {
        cfg.frame = v;
        overrides.push(format!("frame={v:?}"));
    }
    if let Some(v) = args.shots {
        cfg.shots = v;
        overrides.push(format!("shots={v}"));
    }
    cfg.validate()?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().context("building worker pool")?;
    pool.install(|| run(&cfg, &text, overrides))
}

fn run(cfg: &ScenarioConfig, text: &str, overrides: Vec<String>) -> Result<()> {
    let prepared = ex::prepare(cfg)?;
    for w in &prepared.warnings {
        eprintln!("warning: {w}");
    }
    let mut dir = OutputDir::create(&cfg.output)?;
    if let Some(t) = &prepared.table {
        dir.write("calibration_table.toml", &t.to_text())?;
    }
    let name = match cfg.experiment {
        Experiment::Calibrate => {
            if let Some(r) = &prepared.report {
                dir.write("stark.csv", &out::calibration_csv(r))?;
                if let Some(c) = out::cross_stark_csv(r) {
                    dir.write("cross_stark.csv", &c)?;
                }
                for (q, rb) in r.rabi.iter().enumerate() {
                    println!("qubit {}: Rabi amplitude {:.4} V, rate {:.4} MHz", q + 1, rb.amplitude, rb.fitted_rate * 1e3);
                }
            }
            "calibrate"
        }
        Experiment::Bell => {
            let r = ex::run_bell(cfg, &prepared)?;
            dir.write("pauli.csv", &out::bell_csv(&r))?;
            let summary = out::bell_summary(&r);
            dir.write("bell.toml", &summary)?;
            print!("{summary}");
            "bell"
        }
        Experiment::ThetaSweep => {
            let pts = ex::run_theta_sweep(cfg, &prepared)?;
            dir.write("theta_sweep.csv", &out::theta_sweep_csv(&pts))?;
            "theta_sweep"
        }
        Experiment::PhaseSweep => {
            let s = ex::run_phase_sweep(cfg, &prepared)?;
            dir.write("phase_sweep.csv", &out::phase_sweep_csv(&s))?;
            println!("phase error: mean {:.3e} rad, std {:.3e} rad", s.mean, s.std);
            "phase_sweep"
        }
        Experiment::Table1 => {
            let t = ex::run_table1(cfg, &prepared)?;
            let csv = out::table1_csv(&t);
            dir.write("table1.csv", &csv)?;
            print!("{csv}");
            "table1"
        }
        Experiment::Timeseries => {
            let t = ex::run_timeseries(cfg, &prepared)?;
            dir.write("timeseries.csv", &out::timeseries_output(&t)?)?;
            "timeseries"
        }
    };
    let hash_input = format!("{text}\n{}", overrides.join("\n"));
    let info = RunInfo {
        experiment: name.into(),
        config_hash: out::sha256_hex(hash_input.as_bytes()),
        seed: cfg.seed,
        shots: cfg.shots,
        frame: format!("{:?}", cfg.frame).to_lowercase(),
        overrides,
        warnings: prepared.warnings.clone(),
    };
    let manifest = dir.finish(&info)?;
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

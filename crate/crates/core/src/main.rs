//! Command-line front end: closed-loop simulation, stability certificates
//! and comparative variant runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spmsm_lab::config::{load_config, ControllerVariant, GainSet, MotorParams, Scenario};
use spmsm_lab::harness::{compare_runs, compute_metrics, csv_string, run_scenario};
use spmsm_lab::stability::{gamma_star, LoopKind, Matrix2, StabilityQuery};

#[derive(Parser)]
#[command(
    name = "spmsm-lab",
    about = "Closed-loop SPMSM simulation with nonlinear-PI disturbance observers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop scenario and write the trajectory log as CSV.
    Simulate {
        /// Path to the JSON config document.
        #[arg(long)]
        config: PathBuf,
        /// Controller variant override (full | outer-only | no-dob).
        #[arg(long)]
        variant: Option<ControllerVariant>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Reserved for stochastic disturbance models; current models are
        /// deterministic and ignore it.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute a stability certificate for one estimation loop.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Which estimation loop to certify (inner | outer).
        #[arg(long = "loop")]
        loop_kind: LoopKind,
        /// Scalar q0 of Q0 = q0·I.
        #[arg(long)]
        q0: f64,
        /// Residual ball radius ε.
        #[arg(long)]
        epsilon: f64,
        /// Disturbance-derivative bound δ.
        #[arg(long)]
        delta: f64,
    },
    /// Run every controller variant on one scenario and emit a metrics
    /// report with variant ratios.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the per-variant CSV logs and metrics.json.
        #[arg(long)]
        out: PathBuf,
        /// Ball radius used by the occupancy metric (A).
        #[arg(long, default_value_t = 0.1)]
        ball_radius: f64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Simulate { config, variant, out, seed } => {
            let _ = seed;
            let (p, g, mut scenario) = read_config(&config)?;
            if let Some(v) = variant {
                scenario.variant = v;
            }
            let log = run_scenario(&p, &g, &scenario)?;
            fs::write(&out, csv_string(&log))?;
            eprintln!(
                "wrote {} ticks ({}s of {} variant) to {}",
                log.len(),
                scenario.timing.duration,
                scenario.variant,
                out.display()
            );
        }
        Command::Certify { config, loop_kind, q0, epsilon, delta } => {
            let (p, g, _) = read_config(&config)?;
            let report = gamma_star(
                &StabilityQuery { loop_kind, q0: Matrix2::scaled_identity(q0), epsilon, delta },
                &p,
                &g,
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { config, out, ball_radius } => {
            let (p, g, scenario) = read_config(&config)?;
            fs::create_dir_all(&out)?;

            let variants =
                [ControllerVariant::Full, ControllerVariant::OuterOnly, ControllerVariant::NoDob];
            let mut logs = Vec::new();
            for v in variants {
                let mut s = scenario.clone();
                s.variant = v;
                let log = run_scenario(&p, &g, &s)?;
                fs::write(out.join(format!("{v}.csv")), csv_string(&log))?;
                logs.push(log);
            }

            let windows = analysis_windows(&scenario);
            let mut report = serde_json::Map::new();
            report.insert("ball_radius".into(), ball_radius.into());
            report.insert(
                "windows".into(),
                serde_json::to_value(
                    windows.iter().map(|w| [w.0, w.1]).collect::<Vec<_>>(),
                )?,
            );
            for (v, log) in variants.iter().zip(&logs) {
                report.insert(
                    format!("metrics_{v}"),
                    serde_json::to_value(compute_metrics(log, &windows, ball_radius)?)?,
                );
            }
            report.insert(
                "ratio_full_vs_outer_only".into(),
                serde_json::to_value(compare_runs(&logs[0], &logs[1], &windows, ball_radius)?)?,
            );
            report.insert(
                "ratio_full_vs_no_dob".into(),
                serde_json::to_value(compare_runs(&logs[0], &logs[2], &windows, ball_radius)?)?,
            );
            let path = out.join("metrics.json");
            fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            eprintln!("wrote comparison report to {}", path.display());
        }
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<(MotorParams, GainSet, Scenario), Box<dyn std::error::Error>> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Ok(load_config(&text)?)
}

/// Split the scenario span into steady windows between events and transient
/// windows covering reference ramps. Events are load-step times and ramp
/// intervals; steady windows start 0.5 s after the preceding event.
fn analysis_windows(scenario: &Scenario) -> Vec<(f64, f64)> {
    let duration = scenario.timing.duration;
    let guard = 0.5;
    let min_len = 0.2;

    // event intervals: load steps are instants, ramps have width
    let mut events: Vec<(f64, f64)> = Vec::new();
    for &(t, _) in &scenario.load.steps {
        if t > 0.0 {
            events.push((t, t));
        }
    }
    let mut w_prev = scenario.reference.segments.first().map_or(0.0, |s| s.1);
    for &(t, w) in scenario.reference.segments.iter().skip(1) {
        let ramp = (w - w_prev).abs() / scenario.reference.slew;
        events.push((t, t + ramp));
        w_prev = w;
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut windows = Vec::new();
    let mut cursor = 0.0;
    for &(start, end) in &events {
        let open = cursor + guard;
        if start - open >= min_len {
            windows.push((open, start.min(duration)));
        }
        if end > start {
            // transient window around the ramp
            windows.push((start, end.min(duration)));
        }
        cursor = end;
    }
    let open = cursor + guard;
    if duration - open >= min_len {
        windows.push((open, duration));
    }
    if windows.is_empty() {
        windows.push((0.0, duration));
    }
    windows
}

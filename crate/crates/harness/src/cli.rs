//! Subcommand implementations. Each returns what it wrote so callers
//! (and tests) can inspect it.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use flexbeam::narx::NetRole;

use crate::config::ScenarioConfig;
use crate::experiment::{
    run_comparison, run_with_reference, EpisodeOutcome, FORWARD_MODEL_FILE, INVERSE_MODEL_FILE,
    TRAINING_SUMMARY_FILE,
};
use crate::output::{atomic_write, metrics_csv, rank_by_settling, trajectory_csv, tracking_csv};
use crate::plot::{figure, Panel, Series};
use crate::train::{fit, prepare_episodes, TrainOutcome};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(
    name = "flexbeam",
    version,
    about = "Vibration control experiments on a PZT-instrumented cantilever appendage",
    after_help = "Settling time is the time after the metrics start (the impulse, by default) from \
which the tip displacement stays within 2% of its peak magnitude; runs still outside the band at \
the end are reported as not-settled.\n\nExit codes: 0 ok, 1 I/O error, 2 config error or refusal, \
3 numeric failure."
)]
pub struct Cli {
    /// Output directory (default: the config's output_dir, relative to the config file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sampling interval override (s).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write trajectory.csv, metrics.csv and plots.
    Run { config: PathBuf },
    /// Run several configs on a shared plant and rank them by settling time.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
    },
    /// Generate identification data and train the NARX forward and inverse nets.
    Train { config: PathBuf },
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
}

impl From<&Cli> for Overrides {
    fn from(c: &Cli) -> Self {
        Self {
            out: c.out.clone(),
            seed: c.seed,
            dt: c.dt,
        }
    }
}

/// Config plus the directory relative paths resolve against.
pub fn load_config(path: &Path, ov: &Overrides) -> Result<(ScenarioConfig, PathBuf), HarnessError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = ov.seed {
        cfg.override_seed(seed);
    }
    if let Some(dt) = ov.dt {
        cfg.simulation.dt = dt;
        cfg.validate()?;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn out_dir(cfg: &ScenarioConfig, base: &Path, ov: &Overrides) -> PathBuf {
    ov.out.clone().unwrap_or_else(|| base.join(&cfg.output_dir))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, HarnessError> {
    let p = dir.join(name);
    atomic_write(&p, text.as_bytes())?;
    Ok(p)
}

/// Modal coefficients and modal control force, one panel per mode.
pub fn run_plots(runs: &[&EpisodeOutcome], array: &flexbeam::pzt::PztArray<f64>) -> (String, String) {
    let modes = runs.first().map_or(0, |r| r.metrics.rms_modal_amplitude.len());
    let forces: Vec<Vec<_>> = runs.iter().map(|r| r.trajectory.control_forces(array)).collect();
    let mut coeff = Vec::new();
    let mut force = Vec::new();
    for i in 0..modes {
        coeff.push(Panel {
            title: format!("Mode {}", i + 1),
            y_label: format!("W_{} (m)", i + 1),
            series: runs
                .iter()
                .map(|r| Series {
                    name: &r.label,
                    xs: &r.trajectory.times,
                    ys: r.trajectory.states.iter().map(|s| s.coords[i]).collect(),
                })
                .collect(),
        });
        force.push(Panel {
            title: format!("Mode {}", i + 1),
            y_label: format!("F_c,{} (N)", i + 1),
            series: runs
                .iter()
                .zip(&forces)
                .map(|(r, f)| Series {
                    name: &r.label,
                    xs: &r.trajectory.times,
                    ys: f.iter().map(|v| v[i]).collect(),
                })
                .collect(),
        });
    }
    (
        figure("Modal coefficients", "time (s)", &coeff),
        figure("PZT modal control force", "time (s)", &force),
    )
}

#[derive(Debug)]
pub struct RunReport {
    pub outcome: EpisodeOutcome,
    pub open_loop: Option<EpisodeOutcome>,
    pub files: Vec<PathBuf>,
}

/// `run <config>`. A diverged episode still writes its partial outputs
/// before the error is returned.
pub fn run(path: &Path, ov: &Overrides) -> Result<RunReport, HarnessError> {
    let (cfg, base) = load_config(path, ov)?;
    let dir = out_dir(&cfg, &base, ov);
    let (outcome, open_loop) = run_with_reference(&cfg, &base)?;
    let plant = crate::experiment::BuiltPlant::new(&cfg)?;
    let mut files = vec![write(&dir, "trajectory.csv", &trajectory_csv(&outcome.trajectory))?];
    let mut rows = vec![&outcome];
    if let Some(o) = &open_loop {
        files.push(write(&dir, "open_loop_trajectory.csv", &trajectory_csv(&o.trajectory))?);
        rows.push(o);
    }
    files.push(write(&dir, "metrics.csv", &metrics_csv(&rows))?);
    if let Some(log) = &outcome.tracking {
        files.push(write(&dir, "narx_tracking.csv", &tracking_csv(log))?);
    }
    let (coeff, force) = run_plots(&[&outcome], &plant.array);
    files.push(write(&dir, "modal_coefficients.svg", &coeff)?);
    files.push(write(&dir, "control_force.svg", &force)?);
    if let Some(e) = &outcome.failure {
        return Err(HarnessError::Numeric(format!(
            "episode stopped after {} samples ({e}); partial trajectory written to {}",
            outcome.trajectory.len(),
            dir.join("trajectory.csv").display()
        )));
    }
    Ok(RunReport {
        outcome,
        open_loop,
        files,
    })
}

#[derive(Debug)]
pub struct CompareReport {
    /// In input order.
    pub outcomes: Vec<EpisodeOutcome>,
    pub open_loop: EpisodeOutcome,
    pub files: Vec<PathBuf>,
}

/// `compare <configs...>`. Output goes to `--out` or the first config's
/// output directory.
pub fn compare(paths: &[PathBuf], ov: &Overrides) -> Result<CompareReport, HarnessError> {
    let configs = paths
        .iter()
        .map(|p| load_config(p, ov))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(&configs[0].0, &configs[0].1, ov);
    let (outcomes, open_loop) = run_comparison(&configs)?;
    let plant = crate::experiment::BuiltPlant::new(&configs[0].0)?;
    let mut files = Vec::new();
    for (k, o) in outcomes.iter().enumerate() {
        files.push(write(&dir, &format!("trajectory_{}_{}.csv", k + 1, o.label), &trajectory_csv(&o.trajectory))?);
    }
    let mut ranked: Vec<&EpisodeOutcome> = outcomes.iter().collect();
    rank_by_settling(&mut ranked);
    files.push(write(&dir, "metrics.csv", &metrics_csv(&ranked))?);

    let refs: Vec<&EpisodeOutcome> = outcomes.iter().collect();
    let len = refs.iter().map(|o| o.trajectory.len()).min().unwrap_or(0);
    let modes = plant.modes();
    for i in 0..modes {
        let panel = Panel {
            title: format!("Mode {}", i + 1),
            y_label: format!("W_{} (m)", i + 1),
            series: refs
                .iter()
                .map(|r| Series {
                    name: &r.label,
                    xs: &r.trajectory.times[..len],
                    ys: r.trajectory.states[..len].iter().map(|s| s.coords[i]).collect(),
                })
                .collect(),
        };
        let svg = figure(&format!("Modal coefficient {}", i + 1), "time (s)", &[panel]);
        files.push(write(&dir, &format!("mode_{}.svg", i + 1), &svg)?);
    }
    let (_, force) = run_plots(&refs, &plant.array);
    files.push(write(&dir, "control_force.svg", &force)?);
    if let Some((k, o)) = outcomes.iter().enumerate().find(|(_, o)| o.failure.is_some()) {
        return Err(HarnessError::Numeric(format!(
            "config {} ({}) stopped after {} samples: {}",
            k + 1,
            o.label,
            o.trajectory.len(),
            o.failure.as_ref().expect("checked")
        )));
    }
    Ok(CompareReport {
        outcomes,
        open_loop,
        files,
    })
}

#[derive(Debug)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub files: Vec<PathBuf>,
}

/// `train <config>`. The forward net's files are written before the
/// inverse net is trained, so a failure there keeps them.
pub fn train(path: &Path, ov: &Overrides) -> Result<TrainReport, HarnessError> {
    let (cfg, base) = load_config(path, ov)?;
    let dir = out_dir(&cfg, &base, ov);
    let t = cfg.training.clone().unwrap_or_default();
    let start = std::time::Instant::now();
    let episodes = prepare_episodes(&cfg)?;
    let mut files = Vec::new();

    let (forward, rows) = fit(NetRole::Forward, &t, &episodes, t.seed)?;
    let mut buf = Vec::new();
    forward.report.write_csv(&mut buf).expect("in-memory write");
    files.push(write(&dir, "training_report.csv", &String::from_utf8_lossy(&buf))?);
    let p = dir.join(FORWARD_MODEL_FILE);
    atomic_write(&p, &forward.net.to_bytes())?;
    files.push(p);

    let (inverse, _) = fit(NetRole::Inverse, &t, &episodes, t.seed.wrapping_add(1))?;
    let mut buf = Vec::new();
    inverse.report.write_csv(&mut buf).expect("in-memory write");
    files.push(write(&dir, "inverse_training_report.csv", &String::from_utf8_lossy(&buf))?);
    let p = dir.join(INVERSE_MODEL_FILE);
    atomic_write(&p, &inverse.net.to_bytes())?;
    files.push(p);

    let outcome = TrainOutcome {
        forward,
        inverse,
        rows,
        elapsed: start.elapsed(),
    };
    files.push(write(&dir, TRAINING_SUMMARY_FILE, &outcome.summary_csv())?);
    Ok(TrainReport { outcome, files })
}

fn describe(o: &EpisodeOutcome) -> String {
    let m = &o.metrics;
    let ts = m
        .settling_time
        .map(|t| format!("{t:.2} s"))
        .unwrap_or_else(|| "not settled".into());
    let rms: Vec<String> = m.rms_modal_amplitude.iter().map(|v| format!("{v:.4}")).collect();
    format!(
        "{:<10} settling {ts:>11}  rms [{}]  tip rms {:.4}  reduction {}",
        o.label,
        rms.join(", "),
        m.rms_tip,
        m.amplitude_reduction.map_or("-".into(), |r| format!("{:.1}%", 100.0 * r))
    )
}

/// Entry point shared by the binary; returns the exit code.
pub fn main_with(cli: Cli) -> i32 {
    let ov = Overrides::from(&cli);
    let quiet = cli.quiet;
    let result = match &cli.command {
        Command::Run { config } => run(config, &ov).map(|r| {
            if !quiet {
                println!("{}", describe(&r.outcome));
                for f in &r.files {
                    println!("wrote {}", f.display());
                }
            }
        }),
        Command::Compare { configs } => compare(configs, &ov).map(|r| {
            if !quiet {
                let mut ranked: Vec<&EpisodeOutcome> = r.outcomes.iter().collect();
                rank_by_settling(&mut ranked);
                for o in ranked {
                    println!("{}", describe(o));
                }
                for f in &r.files {
                    println!("wrote {}", f.display());
                }
            }
        }),
        Command::Train { config } => train(config, &ov).map(|r| {
            if !quiet {
                let o = &r.outcome;
                println!("{} regression rows, {:.1} s", o.rows, o.elapsed.as_secs_f64());
                for (name, t) in [("forward", &o.forward), ("inverse", &o.inverse)] {
                    println!(
                        "{name:<8} epochs {:>3} (best {:>3})  mse train {:.3e} val {:.3e} test {:.3e}",
                        t.report.epochs.len() - 1,
                        t.report.best_epoch,
                        t.mse[0],
                        t.mse[1],
                        t.mse[2]
                    );
                }
                for f in &r.files {
                    println!("wrote {}", f.display());
                }
            }
        }),
    };
    match result {
        Ok(()) => crate::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

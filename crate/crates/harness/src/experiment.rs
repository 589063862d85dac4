//! Builds plants and controllers from a scenario and runs episodes.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flexbeam::metrics::MetricsReport;
use flexbeam::modal::{ModalSystem, ModeBasis};
use flexbeam::narx::{DesiredOutput, NarxController, NarxNet, NndAdaptor};
use flexbeam::nmpc::{discretize, NmpcConfig, NmpcController};
use flexbeam::pd::{PdController, PdGains};
use flexbeam::plant::{
    run_episode, ControlAction, Controller, Observation, Trajectory, ZeroController,
};
use flexbeam::pzt::PztArray;
use nalgebra::DMatrix;

use crate::config::{ControllerType, DesiredType, NmpcSection, ScenarioConfig};
use crate::HarnessError;

pub const FORWARD_MODEL_FILE: &str = "forward.narx";
pub const INVERSE_MODEL_FILE: &str = "inverse.narx";
pub const TRAINING_SUMMARY_FILE: &str = "training_summary.csv";

/// Assembled plant for one scenario.
#[derive(Debug, Clone)]
pub struct BuiltPlant {
    pub system: ModalSystem<f64>,
    pub array: PztArray<f64>,
}

impl BuiltPlant {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, HarnessError> {
        let beam = cfg.beam.properties();
        let basis = ModeBasis::new(beam.length, cfg.beam.mode_count)?;
        let system = ModalSystem::assemble(&beam, &basis)?;
        let patches = cfg.patches.iter().map(|p| p.patch()).collect();
        let array = PztArray::new(&basis, &beam, patches)?;
        Ok(Self { system, array })
    }

    pub fn modes(&self) -> usize {
        self.system.mode_count()
    }
}

pub fn nmpc_controller(
    section: &NmpcSection,
    plant: &BuiltPlant,
    dt: f64,
) -> Result<NmpcController<f64>, HarnessError> {
    let n = plant.modes();
    let model = discretize(&plant.system, &plant.array, dt)?;
    let mut cfg = NmpcConfig::new(n, &plant.array.voltage_limits());
    cfg.prediction_horizon = section.prediction_horizon;
    cfg.control_horizon = section.control_horizon;
    let mut ky = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        ky[(i, i)] = section.displacement_weight;
        ky[(n + i, n + i)] = section.velocity_weight;
    }
    cfg.state_weight = ky;
    let m = plant.array.len();
    cfg.control_weight = DMatrix::identity(m, m) * section.control_weight;
    cfg.tolerance = section.tolerance;
    cfg.max_iter = section.max_sweeps;
    Ok(NmpcController::new(model, cfg)?)
}

/// Loads a model file, naming the path on failure.
pub fn load_net(path: &Path) -> Result<NarxNet<f64>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    NarxNet::read_from(std::io::BufReader::new(file))
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Resolves `controller.narx.model_dir` against the config's directory.
pub fn model_dir(cfg: &ScenarioConfig, base: &Path) -> PathBuf {
    base.join(&cfg.controller.narx.model_dir)
}

/// Reads `net,best_epoch,train_mse,val_mse,test_mse,...` and returns the
/// inverse net's row as the controller's MSE triple.
pub fn read_training_summary(dir: &Path) -> Option<[f64; 3]> {
    let text = std::fs::read_to_string(dir.join(TRAINING_SUMMARY_FILE)).ok()?;
    text.lines().skip(1).find_map(|line| {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.first() != Some(&"inverse") || cols.len() < 5 {
            return None;
        }
        Some([cols[2].parse().ok()?, cols[3].parse().ok()?, cols[4].parse().ok()?])
    })
}

/// Concrete controllers, kept typed so NARX logs stay reachable.
#[derive(Debug, Clone)]
pub enum AnyController {
    OpenLoop(ZeroController),
    Pd(PdController<f64>),
    Nmpc(Box<NmpcController<f64>>),
    Narx(Box<NarxController<f64>>),
}

impl AnyController {
    pub fn build(cfg: &ScenarioConfig, plant: &BuiltPlant, base: &Path) -> Result<Self, HarnessError> {
        let c = &cfg.controller;
        let dt = cfg.simulation.dt;
        Ok(match c.kind {
            ControllerType::OpenLoop => Self::OpenLoop(ZeroController::new(plant.array.len())),
            ControllerType::Pd => {
                let mut gains = PdGains::collocated(plant.array.len(), c.pd.proportional, c.pd.derivative);
                gains.derivative_filter_cutoff = c.pd.derivative_cutoff;
                Self::Pd(PdController::new(gains, plant.array.voltage_limits(), dt)?)
            }
            ControllerType::Nmpc => Self::Nmpc(Box::new(nmpc_controller(&c.nmpc, plant, dt)?)),
            ControllerType::Narx => {
                let x = &c.narx;
                let dir = model_dir(cfg, base);
                let inverse = load_net(&dir.join(INVERSE_MODEL_FILE))?;
                let forward = load_net(&dir.join(FORWARD_MODEL_FILE))?;
                let (ny, m) = (inverse.output_channels, inverse.input_channels);
                if ny != plant.array.len() || m != plant.array.len() {
                    return Err(HarnessError::Config(format!(
                        "controller.narx.model_dir: nets have {ny} outputs / {m} inputs, plant has {} patches",
                        plant.array.len()
                    )));
                }
                let desired = match x.desired {
                    DesiredType::Zero => DesiredOutput::Zero,
                    DesiredType::ScaledPrediction => DesiredOutput::ScaledPrediction(x.prediction_factor),
                };
                let cutoff = (x.filter_cutoff > 0.0).then_some(x.filter_cutoff);
                let a = &x.adaptation;
                let adaptor = |on: bool| -> Result<Option<NndAdaptor<f64>>, HarnessError> {
                    Ok(if on {
                        Some(NndAdaptor::new(a.error_threshold, a.rate, a.window)?)
                    } else {
                        None
                    })
                };
                let ctl = NarxController::new(
                    inverse,
                    Some(forward),
                    desired,
                    plant.array.voltage_limits(),
                    cutoff,
                    dt,
                )?
                .with_adaptation(adaptor(a.forward)?, adaptor(a.inverse)?);
                Self::Narx(Box::new(ctl))
            }
        })
    }

    fn inner(&mut self) -> &mut dyn Controller<f64> {
        match self {
            Self::OpenLoop(c) => c,
            Self::Pd(c) => c,
            Self::Nmpc(c) => c.as_mut(),
            Self::Narx(c) => c.as_mut(),
        }
    }
}

impl Controller<f64> for AnyController {
    fn name(&self) -> &str {
        match self {
            Self::OpenLoop(c) => Controller::<f64>::name(c),
            Self::Pd(c) => c.name(),
            Self::Nmpc(c) => c.name(),
            Self::Narx(c) => c.name(),
        }
    }

    fn control(&mut self, obs: &Observation<'_, f64>) -> flexbeam::Result<ControlAction<f64>> {
        self.inner().control(obs)
    }

    fn applied(&mut self, voltages: &nalgebra::DVector<f64>) {
        self.inner().applied(voltages)
    }
}

/// One finished (or stopped) episode with its metrics.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub label: String,
    pub trajectory: Trajectory<f64>,
    pub metrics: MetricsReport,
    /// `(t, ‖y − y_des‖² / n_y)` for NARX runs.
    pub tracking: Option<Vec<(f64, f64)>>,
    pub tracking_mse: Option<f64>,
    pub failure: Option<flexbeam::Error>,
    pub elapsed: Duration,
}

/// Mean of the tracking errors with `t ≥ start`.
pub fn tracking_mse_since(tracking: &[(f64, f64)], start: f64) -> f64 {
    let tail: Vec<f64> = tracking.iter().filter(|(t, _)| *t >= start).map(|e| e.1).collect();
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Runs the configured controller on the configured plant.
pub fn run_configured(cfg: &ScenarioConfig, base: &Path) -> Result<EpisodeOutcome, HarnessError> {
    let plant = BuiltPlant::new(cfg)?;
    run_with_plant(cfg, &plant, base)
}

pub fn run_with_plant(
    cfg: &ScenarioConfig,
    plant: &BuiltPlant,
    base: &Path,
) -> Result<EpisodeOutcome, HarnessError> {
    let mut controller = AnyController::build(cfg, plant, base)?;
    let scenario = cfg.disturbance.scenario();
    let spec = cfg.episode_spec();
    let start = Instant::now();
    let result = run_episode(&plant.system, &plant.array, &scenario, &mut controller, &spec);
    let elapsed = start.elapsed();
    let (trajectory, failure) = match result {
        Ok(t) => (t, None),
        Err(f) => (f.trajectory, Some(f.error)),
    };
    let from = cfg.metrics_start();
    let mut metrics = MetricsReport::compute(&trajectory, &plant.system, &plant.array, from)?;
    let (tracking, tracking_mse) = match &controller {
        AnyController::Narx(c) => {
            metrics.narx_mse = read_training_summary(&model_dir(cfg, base));
            let log = c.tracking_errors().to_vec();
            let mse = tracking_mse_since(&log, from);
            (Some(log), Some(mse))
        }
        _ => (None, None),
    };
    Ok(EpisodeOutcome {
        label: cfg.controller.kind.label().to_string(),
        trajectory,
        metrics,
        tracking,
        tracking_mse,
        failure,
        elapsed,
    })
}

/// Open-loop companion of `cfg` on the same plant and seeds.
pub fn open_loop_companion(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.controller.kind = ControllerType::OpenLoop;
    c
}

/// Runs `cfg` and its open-loop companion and fills the reduction.
pub fn run_with_reference(
    cfg: &ScenarioConfig,
    base: &Path,
) -> Result<(EpisodeOutcome, Option<EpisodeOutcome>), HarnessError> {
    let plant = BuiltPlant::new(cfg)?;
    let mut main = run_with_plant(cfg, &plant, base)?;
    if cfg.controller.kind == ControllerType::OpenLoop {
        main.metrics = main.metrics.clone().with_open_loop(&main.metrics);
        return Ok((main, None));
    }
    let mut open = run_with_plant(&open_loop_companion(cfg), &plant, base)?;
    open.metrics = open.metrics.clone().with_open_loop(&open.metrics);
    main.metrics = main.metrics.clone().with_open_loop(&open.metrics);
    Ok((main, Some(open)))
}

/// Runs every config in its own thread. All must share plant and seeds.
pub fn run_comparison(
    configs: &[(ScenarioConfig, PathBuf)],
) -> Result<(Vec<EpisodeOutcome>, EpisodeOutcome), HarnessError> {
    if configs.len() < 2 {
        return Err(HarnessError::Refused("compare needs at least two configs".into()));
    }
    let first = &configs[0].0;
    for (i, (c, _)) in configs.iter().enumerate().skip(1) {
        if let Some(section) = first.plant_mismatch(c) {
            return Err(HarnessError::Refused(format!(
                "config {} differs from config 1 in [{section}]; compared runs must share plant, disturbance and seeds",
                i + 1
            )));
        }
    }
    let plant = BuiltPlant::new(first)?;
    let open_cfg = open_loop_companion(first);
    let (runs, open) = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(c, base)| {
                let plant = &plant;
                s.spawn(move || run_with_plant(c, plant, base))
            })
            .collect();
        let open = run_with_plant(&open_cfg, &plant, Path::new("."));
        let runs: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("episode thread panicked"))
            .collect();
        (runs, open)
    });
    let mut open = open?;
    open.metrics = open.metrics.clone().with_open_loop(&open.metrics);
    let mut out = Vec::with_capacity(runs.len());
    for r in runs {
        let mut r = r?;
        r.metrics = r.metrics.clone().with_open_loop(&open.metrics);
        out.push(r);
    }
    Ok((out, open))
}

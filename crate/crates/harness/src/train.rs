//! Identification episodes and NARX training.

use std::time::{Duration, Instant};

use flexbeam::narx::{
    mse, train_lm, EpisodeRecord, ExcitationController, NarxNet, NetRole, StopReason,
    TrainingDataset, TrainingOptions, TrainingReport,
};
use flexbeam::plant::{run_episode, DisturbanceKind, DisturbanceScenario, EpisodeSpec};
use flexbeam::plant::format_sig17;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{ScenarioConfig, TrainingPlant, TrainingSection};
use crate::experiment::{nmpc_controller, BuiltPlant};
use crate::HarnessError;

/// Spans of the application points cycled through by the impulse episodes,
/// as fractions of the beam length.
const IMPULSE_POINTS: [f64; 4] = [1.0, 0.8, 0.6, 0.9];

#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub net: NarxNet<f64>,
    pub report: TrainingReport,
    /// Train, validation and test MSE in signal units.
    pub mse: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub forward: TrainedNet,
    pub inverse: TrainedNet,
    pub rows: usize,
    pub elapsed: Duration,
}

impl TrainOutcome {
    /// `net,best_epoch,train_mse,val_mse,test_mse,stop`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("net,best_epoch,train_mse,val_mse,test_mse,stop\n");
        for (name, t) in [("forward", &self.forward), ("inverse", &self.inverse)] {
            s.push_str(&format!(
                "{name},{},{},{},{},{}\n",
                t.report.best_epoch,
                format_sig17(t.mse[0]),
                format_sig17(t.mse[1]),
                format_sig17(t.mse[2]),
                stop_name(t.report.stop)
            ));
        }
        s
    }
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::MaxEpochs => "max-epochs",
        StopReason::EarlyStopping => "early-stopping",
        StopReason::Goal => "goal",
        StopReason::LambdaLimit => "lambda-limit",
    }
}

/// Seeds for episode `k` of a stream, shifted per training seed.
fn episode_seed(t: &TrainingSection, stream: u64, k: u64) -> u64 {
    t.seed.wrapping_sub(1).wrapping_mul(10_000).wrapping_add(stream + k)
}

/// Refuses configurations that cannot excite the plant.
pub fn check_excitation(t: &TrainingSection) -> Result<(), HarnessError> {
    let excited = match t.plant {
        TrainingPlant::Scalar => t.scalar_samples > 0 && t.excitation_std > 0.0,
        TrainingPlant::Beam => {
            (t.nmpc_episodes > 0 && t.impulse_max > 0.0)
                || (t.excitation_episodes > 0 && (t.excitation_std > 0.0 || t.background_std > 0.0))
        }
    };
    if excited {
        Ok(())
    } else {
        Err(HarnessError::Refused(
            "training: zero excitation, the identification dataset would be degenerate \
             (set nmpc_episodes with impulse_max > 0, or excitation_episodes with excitation_std > 0)"
                .into(),
        ))
    }
}

/// NMPC-damped impulse episodes followed by random-voltage episodes on
/// the configured beam.
pub fn beam_episodes(cfg: &ScenarioConfig, filter: Option<f64>) -> Result<Vec<EpisodeRecord<f64>>, HarnessError> {
    let t = cfg.training.clone().unwrap_or_default();
    let plant = BuiltPlant::new(cfg)?;
    let dt = cfg.simulation.dt;
    let length = cfg.beam.length;
    let mut episodes = Vec::new();
    let spec = |sensor_seed| {
        let mut s = EpisodeSpec::new(t.episode_duration, dt);
        s.sensor_noise_std = cfg.simulation.sensor_noise_std;
        s.sensor_seed = sensor_seed;
        s
    };
    let n = t.nmpc_episodes;
    for k in 0..n as u64 {
        let frac = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
        let scenario = DisturbanceScenario {
            kind: DisturbanceKind::Impulse {
                magnitude: t.impulse_min + (t.impulse_max - t.impulse_min) * frac,
                time: 0.5 + 0.1 * (k % 16) as f64,
            },
            application_point: IMPULSE_POINTS[k as usize % IMPULSE_POINTS.len()] * length,
            seed: episode_seed(&t, 100, k),
        };
        let mut ctl = nmpc_controller(&cfg.controller.nmpc, &plant, dt)?;
        let traj = run_episode(&plant.system, &plant.array, &scenario, &mut ctl, &spec(episode_seed(&t, 1000, k)))
            .map_err(|f| HarnessError::Numeric(format!("identification episode {k}: {f}")))?;
        episodes.push(EpisodeRecord::from_trajectory(&traj, filter));
    }
    for k in 0..t.excitation_episodes as u64 {
        let scenario = DisturbanceScenario {
            kind: DisturbanceKind::RandomVibration {
                std: t.background_std,
                bandwidth: t.excitation_bandwidth,
            },
            application_point: length,
            seed: episode_seed(&t, 200, k),
        };
        let mut ctl = ExcitationController::new(
            plant.array.len(),
            t.excitation_std,
            t.excitation_bandwidth,
            dt,
            episode_seed(&t, 300, k),
        );
        let traj = run_episode(&plant.system, &plant.array, &scenario, &mut ctl, &spec(episode_seed(&t, 2000, k)))
            .map_err(|f| HarnessError::Numeric(format!("excitation episode {k}: {f}")))?;
        episodes.push(EpisodeRecord::from_trajectory(&traj, filter));
    }
    Ok(episodes)
}

/// `y(t+1) = 0.5 y(t) + u(t)` under Gaussian input of std `excitation_std`.
pub fn scalar_episode(t: &TrainingSection) -> EpisodeRecord<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
    let mut y = 0.0;
    let mut outputs = Vec::with_capacity(t.scalar_samples);
    let mut inputs = Vec::with_capacity(t.scalar_samples);
    for _ in 0..t.scalar_samples {
        let w: f64 = StandardNormal.sample(&mut rng);
        let u = t.excitation_std * w;
        outputs.push(DVector::from_element(1, y));
        inputs.push(DVector::from_element(1, u));
        y = 0.5 * y + u;
    }
    EpisodeRecord { outputs, inputs }
}

/// Builds the dataset for `role` and trains one net from `seed`.
pub fn fit(
    role: NetRole,
    t: &TrainingSection,
    episodes: &[EpisodeRecord<f64>],
    seed: u64,
) -> Result<(TrainedNet, usize), HarnessError> {
    let [a, b, c] = t.split;
    let data = TrainingDataset::build(role, t.feedback_taps, t.input_taps, episodes, (a, b, c), t.seed)
        .map_err(|e| HarnessError::Refused(format!("training: {e}")))?;
    let ny = episodes[0].outputs[0].len();
    let m = episodes[0].inputs[0].len();
    let init = NarxNet::new(role, ny, m, t.feedback_taps, t.input_taps, t.hidden_width, seed)?;
    let options = TrainingOptions {
        max_epochs: t.max_epochs,
        lambda_init: t.lambda_init,
        lambda_factor: t.lambda_factor,
        patience: t.patience,
        ..TrainingOptions::default()
    };
    let (net, report) = train_lm(&init, &data, &options)?;
    let mse = [
        mse(&net, &data, &data.train)?,
        mse(&net, &data, &data.validation)?,
        mse(&net, &data, &data.test)?,
    ];
    Ok((TrainedNet { net, report, mse }, data.rows()))
}

/// Identification data for the configured training plant.
pub fn prepare_episodes(cfg: &ScenarioConfig) -> Result<Vec<EpisodeRecord<f64>>, HarnessError> {
    let t = cfg.training.clone().unwrap_or_default();
    check_excitation(&t)?;
    match t.plant {
        TrainingPlant::Scalar => Ok(vec![scalar_episode(&t)]),
        TrainingPlant::Beam => {
            let cutoff = cfg.controller.narx.filter_cutoff;
            beam_episodes(cfg, (cutoff > 0.0).then_some(cutoff))
        }
    }
}

/// Generates data and trains the forward and inverse nets.
pub fn train(cfg: &ScenarioConfig) -> Result<TrainOutcome, HarnessError> {
    let t = cfg.training.clone().unwrap_or_default();
    let start = Instant::now();
    let episodes = prepare_episodes(cfg)?;
    let (forward, rows) = fit(NetRole::Forward, &t, &episodes, t.seed)?;
    let (inverse, _) = fit(NetRole::Inverse, &t, &episodes, t.seed.wrapping_add(1))?;
    Ok(TrainOutcome {
        forward,
        inverse,
        rows,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_excitation_refused() {
        let mut t = TrainingSection {
            nmpc_episodes: 0,
            excitation_std: 0.0,
            background_std: 0.0,
            ..TrainingSection::default()
        };
        assert!(check_excitation(&t).is_err());
        t.excitation_episodes = 0;
        t.excitation_std = 60.0;
        assert!(check_excitation(&t).is_err());
        t.nmpc_episodes = 1;
        assert!(check_excitation(&t).is_ok());
        t.plant = TrainingPlant::Scalar;
        t.excitation_std = 0.0;
        assert!(check_excitation(&t).is_err());
    }

    #[test]
    fn scalar_episode_follows_recursion() {
        let t = TrainingSection {
            scalar_samples: 50,
            excitation_std: 1.0,
            ..TrainingSection::default()
        };
        let e = scalar_episode(&t);
        for k in 0..49 {
            let lhs = e.outputs[k + 1][0];
            let rhs = 0.5 * e.outputs[k][0] + e.inputs[k][0];
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }
}

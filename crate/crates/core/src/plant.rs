//! Time-domain simulation of the modal plant under PZT control and external
//! disturbances.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::modal::{project_distributed_load, ModalSystem};
use crate::pzt::PztArray;
use crate::{Error, Real, Result};

/// Default sampling period (s).
pub const DEFAULT_DT: f64 = 0.01;
/// Largest `ω·h` taken by one RK4 sub-step.
pub const DEFAULT_MAX_PHASE_STEP: f64 = 0.025;

/// Modal coordinates and rates at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState<T: Real> {
    pub coords: DVector<T>,
    pub rates: DVector<T>,
    pub time: T,
}

impl<T: Real> PlantState<T> {
    pub fn zeros(modes: usize) -> Self {
        Self {
            coords: DVector::zeros(modes),
            rates: DVector::zeros(modes),
            time: T::zero(),
        }
    }

    /// Stacked `[W; Ẇ]`.
    pub fn stacked(&self) -> DVector<T> {
        let n = self.coords.len();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.coords[i]
            } else {
                self.rates[i - n]
            }
        })
    }

    pub fn from_stacked(y: &DVector<T>, time: T) -> Self {
        let n = y.len() / 2;
        Self {
            coords: y.rows(0, n).into_owned(),
            rates: y.rows(n, n).into_owned(),
            time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().chain(self.rates.iter()).all(|v| v.is_finite())
    }

    /// Kinetic plus strain energy `½(ẆᵀMẆ + WᵀKW)`.
    pub fn energy(&self, system: &ModalSystem<T>) -> T {
        let ke = self.rates.dot(&(&system.mass * &self.rates));
        let pe = self.coords.dot(&(&system.stiffness * &self.coords));
        T::lit(0.5) * (ke + pe)
    }
}

/// Modal plant with a cached mass inverse and RK4 sub-step policy.
#[derive(Debug, Clone)]
pub struct Plant<T: Real> {
    system: ModalSystem<T>,
    mass_inv: DMatrix<T>,
    max_frequency: T,
    max_phase_step: T,
}

impl<T: Real> Plant<T> {
    pub fn new(system: ModalSystem<T>) -> Result<Self> {
        let mass_inv = system
            .mass
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("modal mass matrix"))?
            .inverse();
        let max_frequency = system
            .natural_frequencies()?
            .last()
            .copied()
            .unwrap_or_else(T::zero);
        Ok(Self {
            system,
            mass_inv,
            max_frequency,
            max_phase_step: T::lit(DEFAULT_MAX_PHASE_STEP),
        })
    }

    pub fn with_max_phase_step(mut self, phase: T) -> Self {
        self.max_phase_step = phase;
        self
    }

    pub fn system(&self) -> &ModalSystem<T> {
        &self.system
    }

    pub fn mode_count(&self) -> usize {
        self.system.mode_count()
    }

    /// Number of RK4 sub-steps used to cover `dt`.
    pub fn substeps(&self, dt: T) -> usize {
        let ratio = (self.max_frequency * dt / self.max_phase_step).ceil();
        ratio.as_f64().max(1.0) as usize
    }

    fn accel(&self, w: &DVector<T>, wd: &DVector<T>, force: &DVector<T>) -> DVector<T> {
        let rhs = force - &self.system.damping * wd - &self.system.stiffness * w;
        &self.mass_inv * rhs
    }

    /// Advances `M Ẅ + D Ẇ + K W = F` by `dt` with `F` held constant, using
    /// classical fourth-order Runge–Kutta sub-steps.
    pub fn step(&self, state: &PlantState<T>, force: &DVector<T>, dt: T) -> Result<PlantState<T>> {
        if !(dt > T::zero()) {
            return Err(Error::Precondition("time step must be positive".into()));
        }
        let n = self.mode_count();
        if force.len() != n {
            return Err(Error::Dimension {
                context: "modal force",
                expected: n,
                actual: force.len(),
            });
        }
        let subs = self.substeps(dt);
        let h = dt / T::from_count(subs);
        let half = h * T::lit(0.5);
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        let mut w = state.coords.clone();
        let mut v = state.rates.clone();
        for _ in 0..subs {
            let a1 = self.accel(&w, &v, force);
            let w2 = &w + &v * half;
            let v2 = &v + &a1 * half;
            let a2 = self.accel(&w2, &v2, force);
            let w3 = &w + &v2 * half;
            let v3 = &v + &a2 * half;
            let a3 = self.accel(&w3, &v3, force);
            let w4 = &w + &v3 * h;
            let v4 = &v + &a3 * h;
            let a4 = self.accel(&w4, &v4, force);
            w += (&v + &v2 * two + &v3 * two + &v4) * sixth;
            v += (a1 + a2 * two + a3 * two + a4) * sixth;
        }
        let next = PlantState {
            coords: w,
            rates: v,
            time: state.time + dt,
        };
        if !next.is_finite() {
            let step = (state.time / dt).round().as_f64().max(0.0) as usize;
            return Err(Error::Divergence { step });
        }
        Ok(next)
    }
}

/// Disturbance classes applied as a point force on the beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisturbanceKind<T> {
    None,
    /// White Gaussian force of standard deviation `std` (N), band-limited by a
    /// first-order low-pass at `bandwidth` (Hz).
    RandomVibration { std: T, bandwidth: T },
    /// Impulse of `magnitude` (N·s) delivered in the step containing `time`.
    Impulse { magnitude: T, time: T },
    /// `amplitude · sin(2π frequency t)` (N).
    Sinusoid { amplitude: T, frequency: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceScenario<T> {
    pub kind: DisturbanceKind<T>,
    /// Span-wise application point (m).
    pub application_point: T,
    pub seed: u64,
}

impl<T: Real> DisturbanceScenario<T> {
    pub fn none() -> Self {
        Self {
            kind: DisturbanceKind::None,
            application_point: T::lit(1.0),
            seed: 0,
        }
    }

    pub fn tip_impulse(magnitude: T, time: T, length: T) -> Self {
        Self {
            kind: DisturbanceKind::Impulse { magnitude, time },
            application_point: length,
            seed: 0,
        }
    }

    /// Checks parameters against the modelled disturbance envelopes.
    pub fn validate(&self, beam_length: T) -> Result<()> {
        let range = |what: &'static str, v: T, lo: f64, hi: f64| -> Result<()> {
            if v >= T::lit(lo) && v <= T::lit(hi) {
                Ok(())
            } else {
                Err(Error::Domain {
                    what,
                    value: v.as_f64(),
                    domain: format!("[{lo}, {hi}]"),
                })
            }
        };
        if !(self.application_point >= T::zero() && self.application_point <= beam_length) {
            return Err(Error::Domain {
                what: "application_point",
                value: self.application_point.as_f64(),
                domain: format!("[0, {beam_length}]"),
            });
        }
        match self.kind {
            DisturbanceKind::None => Ok(()),
            DisturbanceKind::RandomVibration { std, bandwidth } => {
                if !(std >= T::zero()) {
                    return Err(Error::Domain {
                        what: "white_noise_std",
                        value: std.as_f64(),
                        domain: "[0, inf)".into(),
                    });
                }
                if !(bandwidth > T::zero()) {
                    return Err(Error::Domain {
                        what: "bandwidth",
                        value: bandwidth.as_f64(),
                        domain: "(0, inf)".into(),
                    });
                }
                Ok(())
            }
            DisturbanceKind::Impulse { magnitude, time } => {
                range("impulse_magnitude", magnitude, 5.0, 20.0)?;
                if !(time >= T::zero()) {
                    return Err(Error::Domain {
                        what: "impulse_time",
                        value: time.as_f64(),
                        domain: "[0, inf)".into(),
                    });
                }
                Ok(())
            }
            DisturbanceKind::Sinusoid {
                amplitude,
                frequency,
            } => {
                range("sinusoid_amplitude", amplitude, 0.2, 1.0)?;
                range("sinusoid_frequency", frequency, 0.5, 2.0)
            }
        }
    }
}

/// Random stream and filter memory behind a disturbance scenario.
#[derive(Debug, Clone)]
pub struct DisturbanceState<T> {
    rng: ChaCha8Rng,
    filtered: T,
}

impl<T: Real> DisturbanceState<T> {
    pub fn new(scenario: &DisturbanceScenario<T>) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            filtered: T::zero(),
        }
    }
}

/// Index of the sampling interval `[k dt, (k+1) dt)` containing `t`.
fn step_index<T: Real>(t: T, dt: T) -> i64 {
    (t / dt + T::lit(1e-6)).floor().as_f64() as i64
}

/// Point-force value (N) held over the step starting at `t`.
pub fn disturbance_force<T: Real>(
    scenario: &DisturbanceScenario<T>,
    t: T,
    dt: T,
    state: &mut DisturbanceState<T>,
) -> T {
    match scenario.kind {
        DisturbanceKind::None => T::zero(),
        DisturbanceKind::RandomVibration { std, bandwidth } => {
            let draw: f64 = StandardNormal.sample(&mut state.rng);
            let alpha = T::one() - (-T::lit(2.0 * PI) * bandwidth * dt).exp();
            let x = std * T::lit(draw);
            state.filtered += alpha * (x - state.filtered);
            state.filtered
        }
        DisturbanceKind::Impulse { magnitude, time } => {
            if step_index(t, dt) == step_index(time, dt) {
                magnitude / dt
            } else {
                T::zero()
            }
        }
        DisturbanceKind::Sinusoid {
            amplitude,
            frequency,
        } => amplitude * (T::lit(2.0 * PI) * frequency * t).sin(),
    }
}

/// Per-sample solver diagnostics reported by optimizing controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub cost: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Set when the controller fell back to a previous move.
    pub fallback: bool,
}

/// What a controller sees at one sample.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a, T: Real> {
    pub step: usize,
    pub time: T,
    /// True plant state, for full-state controllers.
    pub state: &'a PlantState<T>,
    /// Noisy strain readings.
    pub readings: &'a DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction<T: Real> {
    pub voltages: DVector<T>,
    pub diagnostics: Option<Diagnostics>,
}

impl<T: Real> ControlAction<T> {
    pub fn plain(voltages: DVector<T>) -> Self {
        Self {
            voltages,
            diagnostics: None,
        }
    }
}

/// A sampled-data controller driving the patch voltages.
pub trait Controller<T: Real> {
    fn name(&self) -> &str;

    fn control(&mut self, obs: &Observation<'_, T>) -> Result<ControlAction<T>>;

    /// Applied (clipped) voltages for the sample just computed.
    fn applied(&mut self, _voltages: &DVector<T>) {}
}

/// Open loop: all patches at 0 V.
#[derive(Debug, Clone)]
pub struct ZeroController {
    patches: usize,
}

impl ZeroController {
    pub fn new(patches: usize) -> Self {
        Self { patches }
    }
}

impl<T: Real> Controller<T> for ZeroController {
    fn name(&self) -> &str {
        "open-loop"
    }

    fn control(&mut self, _obs: &Observation<'_, T>) -> Result<ControlAction<T>> {
        Ok(ControlAction::plain(DVector::zeros(self.patches)))
    }
}

/// Step change of the plant mass during an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassChange<T> {
    pub time: T,
    pub factor: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec<T: Real> {
    pub duration: T,
    pub dt: T,
    pub sensor_noise_std: T,
    pub sensor_seed: u64,
    pub initial_state: Option<PlantState<T>>,
    pub mass_change: Option<MassChange<T>>,
}

impl<T: Real> EpisodeSpec<T> {
    pub fn new(duration: T, dt: T) -> Self {
        Self {
            duration,
            dt,
            sensor_noise_std: T::lit(0.05),
            sensor_seed: 0,
            initial_state: None,
            mass_change: None,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round().as_f64().max(0.0) as usize
    }
}

/// Uniformly sampled record of one episode. Row `k` holds the state and
/// readings at `t_k` and the voltages/disturbance held over `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub controller: String,
    pub dt: T,
    pub times: Vec<T>,
    pub states: Vec<PlantState<T>>,
    pub controls: Vec<DVector<T>>,
    pub readings: Vec<DVector<T>>,
    pub disturbance: Vec<T>,
    pub diagnostics: Vec<Option<Diagnostics>>,
    pub clipped: Vec<bool>,
    pub final_state: Option<PlantState<T>>,
}

impl<T: Real> Trajectory<T> {
    fn new(controller: &str, dt: T) -> Self {
        Self {
            controller: controller.to_string(),
            dt,
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
            readings: Vec::new(),
            disturbance: Vec::new(),
            diagnostics: Vec::new(),
            clipped: Vec::new(),
            final_state: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn has_diagnostics(&self) -> bool {
        self.diagnostics.iter().any(Option::is_some)
    }

    /// Physical displacement at `y` for every sample.
    pub fn displacement_at(&self, system: &ModalSystem<T>, y: T) -> Result<Vec<T>> {
        let psi = system.basis.shapes_at(y, 0)?;
        Ok(self.states.iter().map(|s| psi.dot(&s.coords)).collect())
    }

    /// Modal control force `F_c` for every sample.
    pub fn control_forces(&self, array: &PztArray<T>) -> Vec<DVector<T>> {
        self.controls
            .iter()
            .map(|v| array.influence_matrix() * v)
            .collect()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.states.first().map_or(0, |s| s.coords.len());
        let m = self.controls.first().map_or(0, |v| v.len());
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("W_{i}")));
        cols.extend((1..=n).map(|i| format!("Wdot_{i}")));
        cols.extend((1..=m).map(|i| format!("V_{i}")));
        cols.extend((1..=m).map(|i| format!("z_{i}")));
        cols.push("Fd".into());
        if self.has_diagnostics() {
            cols.extend(["qp_cost", "qp_iters", "qp_residual"].map(String::from));
        }
        cols
    }

    /// Writes the trajectory as CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header().join(","))?;
        let diag = self.has_diagnostics();
        let mut row = String::new();
        for k in 0..self.len() {
            row.clear();
            push_num(&mut row, self.times[k].as_f64());
            let s = &self.states[k];
            for v in s.coords.iter().chain(s.rates.iter()) {
                push_num(&mut row, v.as_f64());
            }
            for v in self.controls[k].iter().chain(self.readings[k].iter()) {
                push_num(&mut row, v.as_f64());
            }
            push_num(&mut row, self.disturbance[k].as_f64());
            if diag {
                match self.diagnostics[k] {
                    Some(d) => {
                        push_num(&mut row, d.cost);
                        row.push_str(&format!(",{}", d.iterations));
                        push_num(&mut row, d.residual);
                    }
                    None => row.push_str(",,,"),
                }
            }
            writeln!(out, "{}", &row[1..])?;
        }
        Ok(())
    }
}

fn push_num(row: &mut String, v: f64) {
    row.push(',');
    row.push_str(&format_sig17(v));
}

/// Scientific notation with 17 significant digits.
pub fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Episode that stopped early; the partial trajectory is kept.
#[derive(Debug)]
pub struct EpisodeFailure<T: Real> {
    pub trajectory: Trajectory<T>,
    pub error: Error,
}

impl<T: Real> std::fmt::Display for EpisodeFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "episode stopped after {} samples: {}",
            self.trajectory.len(),
            self.error
        )
    }
}

impl<T: Real> std::error::Error for EpisodeFailure<T> {}

/// Closed-loop simulation: sense, control, clip, force, integrate.
pub fn run_episode<T: Real, C: Controller<T> + ?Sized>(
    system: &ModalSystem<T>,
    array: &PztArray<T>,
    scenario: &DisturbanceScenario<T>,
    controller: &mut C,
    spec: &EpisodeSpec<T>,
) -> std::result::Result<Trajectory<T>, EpisodeFailure<T>> {
    let mut traj = Trajectory::new(controller.name(), spec.dt);
    let fail = |traj: Trajectory<T>, error| EpisodeFailure {
        trajectory: traj,
        error,
    };
    if !(spec.duration > T::zero()) || !(spec.dt > T::zero()) {
        return Err(fail(
            traj,
            Error::Precondition("duration and dt must be positive".into()),
        ));
    }
    let mut plant = match Plant::new(system.clone()) {
        Ok(p) => p,
        Err(e) => return Err(fail(traj, e)),
    };
    let disturbance_shape = match project_distributed_load(
        &system.basis,
        |_| T::zero(),
        &[(T::one(), scenario.application_point)],
    ) {
        Ok(v) => v,
        Err(e) => return Err(fail(traj, e)),
    };
    let n = system.mode_count();
    let mut state = spec
        .initial_state
        .clone()
        .unwrap_or_else(|| PlantState::zeros(n));
    let mut dist_state = DisturbanceState::new(scenario);
    let mut sensor_rng = ChaCha8Rng::seed_from_u64(spec.sensor_seed);
    let mut mass_changed = false;

    for k in 0..spec.steps() {
        let t = T::from_count(k) * spec.dt;
        state.time = t;
        if let Some(change) = spec.mass_change {
            if !mass_changed && step_index(t, spec.dt) >= step_index(change.time, spec.dt) {
                plant = match Plant::new(system.with_mass_scaled(change.factor)) {
                    Ok(p) => p,
                    Err(e) => return Err(fail(traj, e)),
                };
                mass_changed = true;
            }
        }
        let readings = array.sensor_reading(&state.coords, spec.sensor_noise_std, &mut sensor_rng);
        let obs = Observation {
            step: k,
            time: t,
            state: &state,
            readings: &readings,
        };
        let action = match controller.control(&obs) {
            Ok(a) => a,
            Err(e) => return Err(fail(traj, e)),
        };
        let mut voltages = action.voltages;
        if voltages.len() != array.len() {
            let e = Error::Dimension {
                context: "controller output",
                expected: array.len(),
                actual: voltages.len(),
            };
            return Err(fail(traj, e));
        }
        let clipped = array.clip(&mut voltages);
        controller.applied(&voltages);
        let fc = match array.control_force(&voltages) {
            Ok(f) => f,
            Err(e) => return Err(fail(traj, e)),
        };
        let fd = disturbance_force(scenario, t, spec.dt, &mut dist_state);
        let total = fc + &disturbance_shape * fd;

        traj.times.push(t);
        traj.states.push(state.clone());
        traj.controls.push(voltages);
        traj.readings.push(readings);
        traj.disturbance.push(fd);
        traj.diagnostics.push(action.diagnostics);
        traj.clipped.push(clipped);

        state = match plant.step(&state, &total, spec.dt) {
            Ok(s) => s,
            Err(Error::Divergence { .. }) => return Err(fail(traj, Error::Divergence { step: k })),
            Err(e) => return Err(fail(traj, e)),
        };
    }
    traj.final_state = Some(state);
    Ok(traj)
}

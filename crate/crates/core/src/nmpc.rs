//! Receding-horizon predictive control on the discretized modal plant.
//!
//! The state is `y = [W; Ẇ]`. Predictions over `N_r` steps use move blocking
//! after `N_c` moves, and the stage cost
//! `½ Σ_{j=1}^{N_r} (y_j − r_j)ᵀ K_y (y_j − r_j) + S_{j−1}ᵀ K_s S_{j−1}`
//! is condensed into a dense box QP in the stacked moves.

use nalgebra::{DMatrix, DVector};

use crate::modal::ModalSystem;
use crate::plant::{ControlAction, Controller, Diagnostics, Observation};
use crate::pzt::PztArray;
use crate::qp::{self, QpProblem, QpSolution, WarmStart};
use crate::{Error, Real, Result};

pub const DEFAULT_PREDICTION_HORIZON: usize = 10;
pub const DEFAULT_CONTROL_HORIZON: usize = 5;
pub const DEFAULT_STATE_WEIGHT_DISPLACEMENT: f64 = 10.0;
pub const DEFAULT_STATE_WEIGHT_VELOCITY: f64 = 1.0;
pub const DEFAULT_CONTROL_WEIGHT: f64 = 1e-5;

/// `exp(M)` by scaling and squaring with a Taylor kernel.
pub fn expm<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension {
            context: "matrix exponential",
            expected: n,
            actual: m.ncols(),
        });
    }
    let norm = (0..n)
        .map(|j| m.column(j).iter().fold(T::zero(), |a, v| a + v.abs()))
        .fold(T::zero(), |a, b| a.max(b));
    if !norm.is_finite() {
        return Err(Error::Numeric("matrix exponential of non-finite matrix".into()));
    }
    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm > T::lit(0.5) {
        scaled_norm *= T::lit(0.5);
        squarings += 1;
    }
    let scaled = m / T::lit(2f64.powi(squarings as i32));
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    let eps = T::default_epsilon();
    let mut converged = false;
    for k in 1..=40 {
        term = &term * &scaled / T::from_count(k);
        sum += &term;
        if term.amax() <= eps * sum.amax() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric("matrix exponential series did not converge".into()));
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Continuous state-space blocks `ẏ = A y + L S`, `z = C y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel<T: Real> {
    pub a: DMatrix<T>,
    pub l: DMatrix<T>,
    pub c: DMatrix<T>,
}

impl<T: Real> ContinuousModel<T> {
    pub fn new(system: &ModalSystem<T>, array: &PztArray<T>) -> Result<Self> {
        let n = system.mode_count();
        let m = array.len();
        if array.influence_matrix().nrows() != n {
            return Err(Error::Dimension {
                context: "PZT influence rows vs modes",
                expected: n,
                actual: array.influence_matrix().nrows(),
            });
        }
        let minv = system
            .mass
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("modal mass matrix"))?
            .inverse();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).fill_with_identity();
        a.view_mut((n, 0), (n, n))
            .copy_from(&(-(&minv * &system.stiffness)));
        a.view_mut((n, n), (n, n))
            .copy_from(&(-(&minv * &system.damping)));
        let mut l = DMatrix::zeros(2 * n, m);
        l.view_mut((n, 0), (n, m))
            .copy_from(&(&minv * array.influence_matrix()));
        let mut c = DMatrix::zeros(m, 2 * n);
        c.view_mut((0, 0), (m, n)).copy_from(array.sensing_matrix());
        Ok(Self { a, l, c })
    }
}

/// Zero-order-hold discretization `y⁺ = Â y + B̂ S`, `z = Ĉ y + D̂ S`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub dt: T,
}

impl<T: Real> DiscreteModel<T> {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Model scheduled at `state`. The modal plant is linear, so the
    /// matrices do not depend on it.
    pub fn scheduled(&self, _state: &DVector<T>) -> &Self {
        self
    }

    pub fn predict(&self, state: &DVector<T>, input: &DVector<T>) -> DVector<T> {
        &self.a * state + &self.b * input
    }

    pub fn output(&self, state: &DVector<T>, input: &DVector<T>) -> DVector<T> {
        &self.c * state + &self.d * input
    }
}

/// Exact ZOH discretization through the augmented matrix exponential.
pub fn discretize<T: Real>(
    system: &ModalSystem<T>,
    array: &PztArray<T>,
    dt: T,
) -> Result<DiscreteModel<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Precondition("time step must be positive".into()));
    }
    let cont = ContinuousModel::new(system, array)?;
    discretize_continuous(&cont, dt)
}

pub fn discretize_continuous<T: Real>(
    cont: &ContinuousModel<T>,
    dt: T,
) -> Result<DiscreteModel<T>> {
    let ns = cont.a.nrows();
    let m = cont.l.ncols();
    let mut aug = DMatrix::zeros(ns + m, ns + m);
    aug.view_mut((0, 0), (ns, ns)).copy_from(&(&cont.a * dt));
    aug.view_mut((0, ns), (ns, m)).copy_from(&(&cont.l * dt));
    let e = expm(&aug)?;
    Ok(DiscreteModel {
        a: e.view((0, 0), (ns, ns)).into_owned(),
        b: e.view((0, ns), (ns, m)).into_owned(),
        c: cont.c.clone(),
        d: DMatrix::zeros(cont.c.nrows(), m),
        dt,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmpcConfig<T: Real> {
    pub prediction_horizon: usize,
    pub control_horizon: usize,
    /// `K_y`, `2n × 2n`.
    pub state_weight: DMatrix<T>,
    /// `K_s`, `m × m`.
    pub control_weight: DMatrix<T>,
    /// Bounds on `Λ S` per patch.
    pub lower: DVector<T>,
    pub upper: DVector<T>,
    /// Diagonal of `Λ`.
    pub scaling: DVector<T>,
    pub tolerance: T,
    /// Sweep cap; `None` means `500 · d`.
    pub max_iter: Option<usize>,
}

impl<T: Real> NmpcConfig<T> {
    /// Default weights: `K_y = diag(10 I, I)`, `K_s = 10⁻⁵ I`, symmetric
    /// bounds at the patch limits. At `10⁻³` the input penalty dominates
    /// `B̂ᵀK_yB̂` by two orders and the loop barely acts.
    pub fn new(modes: usize, limits: &DVector<T>) -> Self {
        let m = limits.len();
        let mut ky = DMatrix::zeros(2 * modes, 2 * modes);
        for i in 0..modes {
            ky[(i, i)] = T::lit(DEFAULT_STATE_WEIGHT_DISPLACEMENT);
            ky[(modes + i, modes + i)] = T::lit(DEFAULT_STATE_WEIGHT_VELOCITY);
        }
        Self {
            prediction_horizon: DEFAULT_PREDICTION_HORIZON,
            control_horizon: DEFAULT_CONTROL_HORIZON,
            state_weight: ky,
            control_weight: DMatrix::identity(m, m) * T::lit(DEFAULT_CONTROL_WEIGHT),
            lower: -limits.clone(),
            upper: limits.clone(),
            scaling: DVector::from_element(m, T::one()),
            tolerance: T::lit(qp::DEFAULT_TOLERANCE),
            max_iter: None,
        }
    }

    pub fn validate(&self, model: &DiscreteModel<T>) -> Result<()> {
        if self.control_horizon == 0 || self.control_horizon > self.prediction_horizon {
            return Err(Error::Precondition(format!(
                "need 1 <= control horizon ({}) <= prediction horizon ({})",
                self.control_horizon, self.prediction_horizon
            )));
        }
        let (ns, m) = (model.state_dim(), model.input_dim());
        for (context, expected, actual) in [
            ("state weight rows", ns, self.state_weight.nrows()),
            ("state weight cols", ns, self.state_weight.ncols()),
            ("control weight rows", m, self.control_weight.nrows()),
            ("control weight cols", m, self.control_weight.ncols()),
            ("lower bounds", m, self.lower.len()),
            ("upper bounds", m, self.upper.len()),
            ("scaling", m, self.scaling.len()),
        ] {
            if expected != actual {
                return Err(Error::Dimension {
                    context,
                    expected,
                    actual,
                });
            }
        }
        if self.control_weight.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("control weight"));
        }
        let sym = (&self.state_weight + self.state_weight.transpose()) * T::lit(0.5);
        let min_eig = sym
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(T::lit(f64::INFINITY), |a, &b| a.min(b));
        if min_eig < -T::lit(1e-12) * self.state_weight.amax().max(T::one()) {
            return Err(Error::Precondition(
                "state weight must be positive semidefinite".into(),
            ));
        }
        Ok(())
    }

    fn sweep_cap(&self) -> usize {
        self.max_iter
            .unwrap_or(500 * self.control_horizon * self.lower.len())
    }
}

/// Condensed QP plus the constant that completes the horizon cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp<T: Real> {
    pub problem: QpProblem<T>,
    pub offset: T,
    /// `Φ y(k)`: stacked free response.
    pub free_response: DVector<T>,
    /// `Γ`: stacked response to the blocked moves.
    pub prediction: DMatrix<T>,
}

impl<T: Real> CondensedQp<T> {
    /// Horizon cost of the stacked moves `U`.
    pub fn cost(&self, moves: &DVector<T>) -> T {
        self.problem.objective(moves) + self.offset
    }

    /// Predicted states `y(k+1) … y(k+N_r)` stacked.
    pub fn predicted_states(&self, moves: &DVector<T>) -> DVector<T> {
        &self.free_response + &self.prediction * moves
    }
}

/// Expands blocked moves `[S_0 … S_{N_c−1}]` to one input per prediction step.
pub fn expand_moves<T: Real>(
    moves: &DVector<T>,
    inputs: usize,
    prediction_horizon: usize,
) -> Vec<DVector<T>> {
    let blocks = moves.len() / inputs;
    (0..prediction_horizon)
        .map(|t| moves.rows(t.min(blocks - 1) * inputs, inputs).into_owned())
        .collect()
}

/// Builds the condensed QP for the current state and a reference trajectory
/// (`reference[j]` is `r(k+j+1)`; empty means zero).
pub fn build_condensed_qp<T: Real>(
    model: &DiscreteModel<T>,
    config: &NmpcConfig<T>,
    state: &DVector<T>,
    reference: &[DVector<T>],
) -> Result<CondensedQp<T>> {
    config.validate(model)?;
    let ns = model.state_dim();
    let m = model.input_dim();
    let nr = config.prediction_horizon;
    let nc = config.control_horizon;
    if state.len() != ns {
        return Err(Error::Dimension {
            context: "NMPC state",
            expected: ns,
            actual: state.len(),
        });
    }
    if !reference.is_empty() && reference.len() != nr {
        return Err(Error::Dimension {
            context: "reference horizon",
            expected: nr,
            actual: reference.len(),
        });
    }
    if let Some(r) = reference.iter().find(|r| r.len() != ns) {
        return Err(Error::Dimension {
            context: "reference state",
            expected: ns,
            actual: r.len(),
        });
    }
    let model = model.scheduled(state);

    // Â^k B̂ for k < N_r, and the free response Â^j y.
    let mut a_pow_b = Vec::with_capacity(nr);
    a_pow_b.push(model.b.clone());
    for k in 1..nr {
        a_pow_b.push(&model.a * &a_pow_b[k - 1]);
    }
    let mut free = DVector::zeros(nr * ns);
    let mut y = state.clone();
    for j in 0..nr {
        y = &model.a * y;
        free.rows_mut(j * ns, ns).copy_from(&y);
    }

    let mut gamma = DMatrix::zeros(nr * ns, nc * m);
    for j in 1..=nr {
        for i in 0..nc.min(j) {
            let block = if i + 1 < nc {
                a_pow_b[j - 1 - i].clone()
            } else {
                // last move held from step N_c − 1 through j − 1
                (0..=(j - nc)).fold(DMatrix::zeros(ns, m), |acc, k| acc + &a_pow_b[k])
            };
            gamma
                .view_mut(((j - 1) * ns, i * m), (ns, m))
                .copy_from(&block);
        }
    }

    let mut deviation = free.clone();
    for (j, r) in reference.iter().enumerate() {
        let mut rows = deviation.rows_mut(j * ns, ns);
        rows -= r;
    }
    // Q̄ = blockdiag(K_y) applied blockwise
    let weighted = |v: &DMatrix<T>| -> DMatrix<T> {
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for j in 0..nr {
            out.view_mut((j * ns, 0), (ns, v.ncols()))
                .copy_from(&(&config.state_weight * v.view((j * ns, 0), (ns, v.ncols()))));
        }
        out
    };
    let q_gamma = weighted(&gamma);
    let mut hessian = gamma.transpose() * &q_gamma;
    for i in 0..nc {
        let repeats = if i + 1 < nc { 1 } else { nr - nc + 1 };
        let mut blk = hessian.view_mut((i * m, i * m), (m, m));
        blk += &config.control_weight * T::from_count(repeats);
    }
    let hessian = (&hessian + hessian.transpose()) * T::lit(0.5);
    let dev_mat = DMatrix::from_column_slice(deviation.len(), 1, deviation.as_slice());
    let q_dev = weighted(&dev_mat);
    let linear = q_gamma.transpose() * &deviation;
    let offset = T::lit(0.5) * deviation.dot(&q_dev.column(0));

    let tile = |v: &DVector<T>| DVector::from_fn(nc * m, |i, _| v[i % m]);
    let problem = QpProblem {
        hessian,
        linear,
        lower: tile(&config.lower),
        upper: tile(&config.upper),
        scaling: tile(&config.scaling),
    };
    Ok(CondensedQp {
        problem,
        offset,
        free_response: free,
        prediction: gamma,
    })
}

/// One receding-horizon solve: the first move plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlStep<T: Real> {
    pub voltages: DVector<T>,
    pub diagnostics: Diagnostics,
    pub solution: Option<QpSolution<T>>,
}

/// Solves the condensed QP and returns the first move. On solver failure
/// the clipped `fallback` move is returned and flagged.
pub fn compute_control<T: Real>(
    model: &DiscreteModel<T>,
    config: &NmpcConfig<T>,
    state: &DVector<T>,
    reference: &[DVector<T>],
    warm: &WarmStart<T>,
    fallback: &DVector<T>,
) -> Result<ControlStep<T>> {
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("NMPC state must be finite".into()));
    }
    let qp = build_condensed_qp(model, config, state, reference)?;
    let m = model.input_dim();
    match qp::solve_box_qp_warm(&qp.problem, config.tolerance, config.sweep_cap(), warm) {
        Ok(sol) => Ok(ControlStep {
            voltages: sol.minimizer.rows(0, m).into_owned(),
            diagnostics: Diagnostics {
                cost: qp.cost(&sol.minimizer).as_f64(),
                iterations: sol.iterations,
                residual: sol.kkt_residual.as_f64(),
                fallback: false,
            },
            solution: Some(sol),
        }),
        Err(Error::QpNonConvergence {
            iterations,
            residual,
            ..
        }) => {
            let mut v = fallback.clone();
            for i in 0..m {
                let lo = config.lower[i] / config.scaling[i];
                let hi = config.upper[i] / config.scaling[i];
                v[i] = v[i].max(lo).min(hi);
            }
            Ok(ControlStep {
                voltages: v,
                diagnostics: Diagnostics {
                    cost: f64::NAN,
                    iterations,
                    residual,
                    fallback: true,
                },
                solution: None,
            })
        }
        Err(e) => Err(e),
    }
}

/// Full-state NMPC controller with shifted warm starts.
#[derive(Debug, Clone)]
pub struct NmpcController<T: Real> {
    model: DiscreteModel<T>,
    config: NmpcConfig<T>,
    reference: Vec<DVector<T>>,
    previous: Option<QpSolution<T>>,
    last_move: DVector<T>,
    name: String,
}

impl<T: Real> NmpcController<T> {
    pub fn new(model: DiscreteModel<T>, config: NmpcConfig<T>) -> Result<Self> {
        config.validate(&model)?;
        let m = model.input_dim();
        Ok(Self {
            model,
            config,
            reference: Vec::new(),
            previous: None,
            last_move: DVector::zeros(m),
            name: "nmpc".into(),
        })
    }

    pub fn with_reference(mut self, reference: Vec<DVector<T>>) -> Self {
        self.reference = reference;
        self
    }

    pub fn model(&self) -> &DiscreteModel<T> {
        &self.model
    }

    pub fn config(&self) -> &NmpcConfig<T> {
        &self.config
    }

    fn warm_start(&self) -> WarmStart<T> {
        let Some(prev) = &self.previous else {
            return WarmStart::default();
        };
        let m = self.model.input_dim();
        let d = prev.minimizer.len();
        let shift = |v: &DVector<T>| {
            DVector::from_fn(v.len(), |i, _| v[(i + m).min(v.len() - m + i % m)])
        };
        let duals = prev.stacked_multipliers();
        let upper = shift(&duals.rows(0, d).into_owned());
        let lower = shift(&duals.rows(d, d).into_owned());
        WarmStart {
            primal: Some(shift(&prev.minimizer)),
            dual: Some(DVector::from_fn(2 * d, |i, _| {
                if i < d {
                    upper[i]
                } else {
                    lower[i - d]
                }
            })),
        }
    }

    pub fn step(&mut self, state: &DVector<T>) -> Result<ControlStep<T>> {
        let warm = self.warm_start();
        let out = compute_control(
            &self.model,
            &self.config,
            state,
            &self.reference,
            &warm,
            &self.last_move,
        )?;
        self.previous = out.solution.clone();
        self.last_move = out.voltages.clone();
        Ok(out)
    }
}

impl<T: Real> Controller<T> for NmpcController<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn control(&mut self, obs: &Observation<'_, T>) -> Result<ControlAction<T>> {
        let out = self.step(&obs.state.stacked())?;
        Ok(ControlAction {
            voltages: out.voltages,
            diagnostics: Some(out.diagnostics),
        })
    }
}

//! Strictly convex quadratic programs with scaled box constraints,
//!
//! ```text
//! minimize   ½ Sᵀ P S + gᵀ S
//! subject to lower ≤ Λ S ≤ upper      (Λ positive diagonal)
//! ```
//!
//! solved by Hildreth's dual coordinate ascent. Each sweep, the multiplier
//! support is used as an active-set guess and the reduced equality system is
//! solved exactly; the first guess that satisfies the KKT conditions to
//! tolerance terminates the solve.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Real, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T: Real> {
    pub hessian: DMatrix<T>,
    pub linear: DVector<T>,
    /// Bounds on `Λ S`.
    pub lower: DVector<T>,
    pub upper: DVector<T>,
    /// Diagonal of `Λ`.
    pub scaling: DVector<T>,
}

impl<T: Real> QpProblem<T> {
    /// Problem with identity scaling.
    pub fn new(
        hessian: DMatrix<T>,
        linear: DVector<T>,
        lower: DVector<T>,
        upper: DVector<T>,
    ) -> Self {
        let d = linear.len();
        Self {
            hessian,
            linear,
            lower,
            upper,
            scaling: DVector::from_element(d, T::one()),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (context, len) in [
            ("hessian rows", self.hessian.nrows()),
            ("hessian cols", self.hessian.ncols()),
            ("lower bounds", self.lower.len()),
            ("upper bounds", self.upper.len()),
            ("scaling", self.scaling.len()),
        ] {
            if len != d {
                return Err(Error::Dimension {
                    context,
                    expected: d,
                    actual: len,
                });
            }
        }
        let scale = self.hessian.amax().max(T::one());
        for i in 0..d {
            for j in 0..i {
                if (self.hessian[(i, j)] - self.hessian[(j, i)]).abs() > T::lit(1e-10) * scale {
                    return Err(Error::Precondition("QP hessian is not symmetric".into()));
                }
            }
            if !(self.lower[i] < self.upper[i]) {
                return Err(Error::Precondition(format!(
                    "bound {i}: lower {} not below upper {}",
                    self.lower[i], self.upper[i]
                )));
            }
            if !(self.scaling[i] > T::zero()) {
                return Err(Error::Precondition(format!(
                    "scaling entry {i} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn objective(&self, s: &DVector<T>) -> T {
        T::lit(0.5) * s.dot(&(&self.hessian * s)) + self.linear.dot(s)
    }

    pub fn gradient(&self, s: &DVector<T>) -> DVector<T> {
        &self.hessian * s + &self.linear
    }

    /// Box on `S` itself: `lower / Λ ≤ S ≤ upper / Λ`.
    pub fn unscaled_bounds(&self) -> (DVector<T>, DVector<T>) {
        (
            self.lower.component_div(&self.scaling),
            self.upper.component_div(&self.scaling),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Real> {
    pub minimizer: DVector<T>,
    /// Multipliers of `lower ≤ Λ S`.
    pub lower_multipliers: DVector<T>,
    /// Multipliers of `Λ S ≤ upper`.
    pub upper_multipliers: DVector<T>,
    pub kkt_residual: T,
    /// Hildreth sweeps performed (0 when the unconstrained optimum is feasible).
    pub iterations: usize,
    /// Dual objective after each sweep.
    pub dual_objective: Vec<T>,
}

impl<T: Real> QpSolution<T> {
    /// Multipliers stacked as `[upper; lower]`, the layout accepted by
    /// [`WarmStart::dual`].
    pub fn stacked_multipliers(&self) -> DVector<T> {
        let d = self.minimizer.len();
        DVector::from_fn(2 * d, |i, _| {
            if i < d {
                self.upper_multipliers[i]
            } else {
                self.lower_multipliers[i - d]
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart<T: Real> {
    pub primal: Option<DVector<T>>,
    /// Hildreth multipliers, `[upper; lower]`.
    pub dual: Option<DVector<T>>,
}

impl<T: Real> Default for WarmStart<T> {
    fn default() -> Self {
        Self {
            primal: None,
            dual: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Solves the box QP to KKT residual `tol` within `max_iter` sweeps.
pub fn solve_box_qp<T: Real>(
    problem: &QpProblem<T>,
    tol: T,
    max_iter: usize,
) -> Result<QpSolution<T>> {
    solve_box_qp_warm(problem, tol, max_iter, &WarmStart::default())
}

pub fn solve_box_qp_warm<T: Real>(
    problem: &QpProblem<T>,
    tol: T,
    max_iter: usize,
    warm: &WarmStart<T>,
) -> Result<QpSolution<T>> {
    problem.validate()?;
    if !(tol > T::zero()) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let d = problem.dim();
    let chol = problem
        .hessian
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("QP hessian"))?;
    let unconstrained = -chol.solve(&problem.linear);
    let (lo, hi) = problem.unscaled_bounds();

    if (0..d).all(|i| unconstrained[i] >= lo[i] && unconstrained[i] <= hi[i]) {
        let residual = kkt_residual(problem, &unconstrained)?;
        return Ok(QpSolution {
            minimizer: unconstrained,
            lower_multipliers: DVector::zeros(d),
            upper_multipliers: DVector::zeros(d),
            kkt_residual: residual,
            iterations: 0,
            dual_objective: Vec::new(),
        });
    }

    let mut tried: Vec<Vec<Bound>> = Vec::new();
    if let Some(p) = &warm.primal {
        if p.len() == d {
            let guess = classify(p, &lo, &hi);
            if let Some(sol) = polish(problem, &guess, tol, 0, Vec::new()) {
                return Ok(sol);
            }
            tried.push(guess);
        }
    }

    // Dual data: rows 0..d are Λ S ≤ upper, rows d..2d are −Λ S ≤ −lower.
    let p_inv = chol.inverse();
    let lam = &problem.scaling;
    let m = 2 * d;
    let sign = |i: usize| if i < d { T::one() } else { -T::one() };
    let idx = |i: usize| if i < d { i } else { i - d };
    let h = DMatrix::from_fn(m, m, |i, j| {
        let (a, b) = (idx(i), idx(j));
        sign(i) * sign(j) * lam[a] * lam[b] * p_inv[(a, b)]
    });
    let k = DVector::from_fn(m, |i, _| {
        let a = idx(i);
        if i < d {
            problem.upper[a] - lam[a] * unconstrained[a]
        } else {
            -problem.lower[a] + lam[a] * unconstrained[a]
        }
    });

    let mut mult = match &warm.dual {
        Some(w) if w.len() == m => w.map(|v| v.max(T::zero())),
        _ => DVector::zeros(m),
    };
    let mut hl = &h * &mult;
    let dual_value = |mult: &DVector<T>, hl: &DVector<T>| -> T {
        -(T::lit(0.5) * mult.dot(hl) + mult.dot(&k))
    };
    let mut history = Vec::new();
    let mut best: Option<(T, DVector<T>)> = None;

    for sweep in 1..=max_iter {
        for i in 0..m {
            let hii = h[(i, i)];
            let w = -(k[i] + hl[i] - hii * mult[i]) / hii;
            let new = w.max(T::zero());
            let delta = new - mult[i];
            if delta != T::zero() {
                mult[i] = new;
                hl.axpy(delta, &h.column(i), T::one());
            }
        }
        history.push(dual_value(&mult, &hl));

        let guess: Vec<Bound> = (0..d)
            .map(|a| {
                if mult[a] > T::zero() {
                    Bound::Upper
                } else if mult[a + d] > T::zero() {
                    Bound::Lower
                } else {
                    Bound::Free
                }
            })
            .collect();
        if !tried.contains(&guess) {
            if let Some(sol) = polish(problem, &guess, tol, sweep, history.clone()) {
                return Ok(sol);
            }
            tried.push(guess);
        }

        // primal iterate S = S_u − P⁻¹ Aᵀ λ
        let at_l = DVector::from_fn(d, |a, _| lam[a] * (mult[a] - mult[a + d]));
        let s = &unconstrained - &p_inv * at_l;
        let clipped = s.zip_zip_map(&lo, &hi, |v, l, u| v.max(l).min(u));
        let guess = classify(&clipped, &lo, &hi);
        if !tried.contains(&guess) {
            if let Some(sol) = polish(problem, &guess, tol, sweep, history.clone()) {
                return Ok(sol);
            }
            tried.push(guess);
        }
        let r = kkt_residual(problem, &clipped)?;
        if best.as_ref().is_none_or(|(br, _)| r < *br) {
            best = Some((r, clipped));
        }
        if tried.len() > 64 {
            tried.drain(..32);
        }
    }
    let (residual, best) = best.unwrap_or((T::lit(f64::INFINITY), unconstrained));
    Err(Error::QpNonConvergence {
        iterations: max_iter,
        residual: residual.as_f64(),
        best: best.iter().map(|v| v.as_f64()).collect(),
    })
}

fn classify<T: Real>(s: &DVector<T>, lo: &DVector<T>, hi: &DVector<T>) -> Vec<Bound> {
    (0..s.len())
        .map(|i| {
            let scale = T::lit(1e-9) * (T::one() + lo[i].abs().max(hi[i].abs()));
            if s[i] <= lo[i] + scale {
                Bound::Lower
            } else if s[i] >= hi[i] - scale {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect()
}

/// Solves the equality-constrained subproblem for an active-set guess and
/// returns it if it satisfies the KKT conditions to `tol`.
fn polish<T: Real>(
    problem: &QpProblem<T>,
    guess: &[Bound],
    tol: T,
    iterations: usize,
    history: Vec<T>,
) -> Option<QpSolution<T>> {
    let d = problem.dim();
    let (lo, hi) = problem.unscaled_bounds();
    let mut s = DVector::zeros(d);
    let free: Vec<usize> = (0..d).filter(|&i| guess[i] == Bound::Free).collect();
    for i in 0..d {
        match guess[i] {
            Bound::Lower => s[i] = lo[i],
            Bound::Upper => s[i] = hi[i],
            Bound::Free => {}
        }
    }
    if !free.is_empty() {
        let nf = free.len();
        let pff = DMatrix::from_fn(nf, nf, |a, b| problem.hessian[(free[a], free[b])]);
        let rhs = DVector::from_fn(nf, |a, _| {
            let i = free[a];
            let mut v = -problem.linear[i];
            for j in 0..d {
                if guess[j] != Bound::Free {
                    v -= problem.hessian[(i, j)] * s[j];
                }
            }
            v
        });
        let sf = pff.cholesky()?.solve(&rhs);
        for (a, &i) in free.iter().enumerate() {
            if sf[a] < lo[i] || sf[a] > hi[i] {
                return None;
            }
            s[i] = sf[a];
        }
    }
    let r = problem.gradient(&s);
    let mut lower = DVector::zeros(d);
    let mut upper = DVector::zeros(d);
    for i in 0..d {
        let l = problem.scaling[i];
        match guess[i] {
            Bound::Lower => lower[i] = r[i] / l,
            Bound::Upper => upper[i] = -r[i] / l,
            Bound::Free => {}
        }
        if lower[i] < -tol || upper[i] < -tol {
            return None;
        }
    }
    let residual = kkt_residual(problem, &s).ok()?;
    if residual >= tol {
        return None;
    }
    Some(QpSolution {
        minimizer: s,
        lower_multipliers: lower.map(|v| v.max(T::zero())),
        upper_multipliers: upper.map(|v| v.max(T::zero())),
        kkt_residual: residual,
        iterations,
        dual_objective: history,
    })
}

/// KKT residual of a feasible candidate: the larger of the stationarity
/// violation (multipliers recovered from the gradient at active bounds) and
/// the complementarity products.
pub fn kkt_residual<T: Real>(problem: &QpProblem<T>, candidate: &DVector<T>) -> Result<T> {
    let d = problem.dim();
    if candidate.len() != d {
        return Err(Error::Dimension {
            context: "QP candidate",
            expected: d,
            actual: candidate.len(),
        });
    }
    let r = problem.gradient(candidate);
    let mut worst = T::zero();
    for i in 0..d {
        let (l, lo, hi) = (problem.scaling[i], problem.lower[i], problem.upper[i]);
        let v = l * candidate[i];
        let scale = T::one() + lo.abs().max(hi.abs());
        let slack = T::lit(1e-12) * scale;
        if v < lo - slack || v > hi + slack || !v.is_finite() {
            return Err(Error::Infeasible {
                index: i,
                value: v.as_f64(),
                lower: lo.as_f64(),
                upper: hi.as_f64(),
            });
        }
        let active = T::lit(1e-10) * scale;
        let (stationarity, complementarity) = if v - lo <= active {
            let mult = r[i].max(T::zero()) / l;
            ((-r[i]).max(T::zero()), mult * (v - lo).abs())
        } else if hi - v <= active {
            let mult = (-r[i]).max(T::zero()) / l;
            (r[i].max(T::zero()), mult * (hi - v).abs())
        } else {
            (r[i].abs(), T::zero())
        };
        worst = worst.max(stationarity).max(complementarity);
    }
    Ok(worst)
}

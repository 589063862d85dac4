//! Clamped-free beam mode basis and modal mass/damping/stiffness assembly.
//!
//! Shapes use the classical cantilever eigenfunction
//! `ψ(y) = cosh βy − cos βy − σ (sinh βy − sin βy)`, evaluated through the
//! exponential form `((1−σ)e^{βy} + (1+σ)e^{−βy})/2 − cos βy + σ sin βy`
//! which avoids the cancellation between `cosh` and `σ sinh` at high modes.
//! Mode indices are zero-based in this API.

use nalgebra::{DMatrix, DVector};

use crate::quadrature::GaussLegendre;
use crate::{Error, Real, Result};

/// Default modal damping ratio applied to every mode.
pub const DEFAULT_DAMPING_RATIO: f64 = 0.005;
/// Default number of retained modes.
pub const DEFAULT_MODE_COUNT: usize = 3;

/// Physical properties of one rectangular appendage.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamProperties<T> {
    /// Width `a` (m).
    pub width: T,
    /// Length `b` (m), root to tip.
    pub length: T,
    /// Thickness `h` (m).
    pub thickness: T,
    /// Young's modulus (Pa).
    pub youngs_modulus: T,
    pub poisson_ratio: T,
    /// Density (kg/m³).
    pub density: T,
    /// Modal damping ratio per retained mode.
    pub damping_ratios: Vec<T>,
}

impl<T: Real> BeamProperties<T> {
    /// Aluminium appendage of the reference satellite: 0.3 × 1 × 0.002 m.
    pub fn reference(mode_count: usize) -> Self {
        Self {
            width: T::lit(0.3),
            length: T::lit(1.0),
            thickness: T::lit(2e-3),
            youngs_modulus: T::lit(6.9e10),
            poisson_ratio: T::lit(0.33),
            density: T::lit(2.7e3),
            damping_ratios: vec![T::lit(DEFAULT_DAMPING_RATIO); mode_count],
        }
    }

    pub fn mode_count(&self) -> usize {
        self.damping_ratios.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width", self.width),
            ("length", self.length),
            ("thickness", self.thickness),
            ("youngs_modulus", self.youngs_modulus),
            ("density", self.density),
        ];
        for (what, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Domain {
                    what,
                    value: v.as_f64(),
                    domain: "(0, inf)".into(),
                });
            }
        }
        if !(self.poisson_ratio > T::zero() && self.poisson_ratio < T::lit(0.5)) {
            return Err(Error::Domain {
                what: "poisson_ratio",
                value: self.poisson_ratio.as_f64(),
                domain: "(0, 0.5)".into(),
            });
        }
        if self.damping_ratios.is_empty() {
            return Err(Error::Precondition("at least one mode is required".into()));
        }
        if let Some(z) = self
            .damping_ratios
            .iter()
            .find(|z| !(**z >= T::zero()) || !z.is_finite())
        {
            return Err(Error::Domain {
                what: "damping_ratio",
                value: z.as_f64(),
                domain: "[0, inf)".into(),
            });
        }
        Ok(())
    }

    /// Mass per unit length `ρ a h`.
    pub fn mass_per_length(&self) -> T {
        self.density * self.width * self.thickness
    }

    /// Plate flexural rigidity `E h³ / (12 (1 − ν²))` per unit width.
    pub fn flexural_rigidity(&self) -> T {
        let h = self.thickness;
        self.youngs_modulus * h * h * h
            / (T::lit(12.0) * (T::one() - self.poisson_ratio * self.poisson_ratio))
    }

    /// Bending stiffness of the full cross-section: flexural rigidity × width.
    pub fn effective_rigidity(&self) -> T {
        self.flexural_rigidity() * self.width
    }
}

/// First `count` positive roots of `cos x · cosh x + 1 = 0`.
///
/// Each root is bracketed in `[(s−1)π, sπ]` and refined by safeguarded
/// Newton iteration on the equivalent `cos x + sech x`, which stays O(1)
/// where `cosh x` would amplify rounding.
pub fn solve_mode_roots<T: Real>(count: usize) -> Result<Vec<T>> {
    if count == 0 {
        return Err(Error::Precondition("requested zero mode roots".into()));
    }
    (1..=count).map(refine_root::<T>).collect()
}

fn refine_root<T: Real>(mode: usize) -> Result<T> {
    let pi = T::pi();
    let g = |x: T| x.cos() + T::one() / x.cosh();
    let dg = |x: T| -x.sin() - x.tanh() / x.cosh();
    let mut lo = pi * T::from_count(mode - 1);
    let mut hi = pi * T::from_count(mode);
    let mut g_lo = g(lo);
    // start from the large-x asymptote (2s − 1)π/2
    let mut x = (lo + hi) * T::lit(0.5);
    let eps = T::default_epsilon();
    for _ in 0..200 {
        let gx = g(x);
        if gx == T::zero() {
            return Ok(x);
        }
        if (gx > T::zero()) == (g_lo > T::zero()) {
            lo = x;
            g_lo = gx;
        } else {
            hi = x;
        }
        let d = dg(x);
        let newton = x - gx / d;
        let next = if d != T::zero() && newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) * T::lit(0.5)
        };
        let step = (next - x).abs();
        x = next;
        if step <= T::lit(2.0) * eps * x.abs() || hi - lo <= T::lit(2.0) * eps * x.abs() {
            let r = g(x).abs();
            if r <= T::lit(64.0) * eps {
                return Ok(x);
            }
        }
    }
    Err(Error::RootSolver {
        mode,
        residual: g(x).abs().as_f64(),
    })
}

/// Cantilever eigenfunctions on `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis<T> {
    length: T,
    roots: Vec<T>,
    betas: Vec<T>,
    sigmas: Vec<T>,
    one_minus_sigma: Vec<T>,
}

impl<T: Real> ModeBasis<T> {
    pub fn new(length: T, count: usize) -> Result<Self> {
        if !(length > T::zero()) {
            return Err(Error::Domain {
                what: "length",
                value: length.as_f64(),
                domain: "(0, inf)".into(),
            });
        }
        let roots = solve_mode_roots::<T>(count)?;
        let mut betas = Vec::with_capacity(count);
        let mut sigmas = Vec::with_capacity(count);
        let mut oms = Vec::with_capacity(count);
        for &r in &roots {
            let (s, c) = (r.sin(), r.cos());
            let den = r.sinh() + s;
            sigmas.push((r.cosh() + c) / den);
            // 1 − σ = (sin − cos − e^{−x}) / (sinh + sin), free of cancellation
            oms.push((s - c - (-r).exp()) / den);
            betas.push(r / length);
        }
        Ok(Self {
            length,
            roots,
            betas,
            sigmas,
            one_minus_sigma: oms,
        })
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn mode_count(&self) -> usize {
        self.roots.len()
    }

    /// Dimensionless roots `β_s L`.
    pub fn roots(&self) -> &[T] {
        &self.roots
    }

    pub fn sigma(&self, mode: usize) -> T {
        self.sigmas[mode]
    }

    pub fn beta(&self, mode: usize) -> T {
        self.betas[mode]
    }

    /// `ψ_s(y)` or its first/second derivative in `y`.
    pub fn shape(&self, mode: usize, y: T, derivative_order: u8) -> Result<T> {
        if mode >= self.mode_count() {
            return Err(Error::Domain {
                what: "mode index",
                value: mode as f64,
                domain: format!("[0, {})", self.mode_count()),
            });
        }
        if !(y >= T::zero() && y <= self.length) {
            return Err(Error::Domain {
                what: "y",
                value: y.as_f64(),
                domain: format!("[0, {}]", self.length),
            });
        }
        if derivative_order > 2 {
            return Err(Error::Precondition(format!(
                "derivative order {derivative_order} not supported"
            )));
        }
        Ok(self.eval(mode, y, derivative_order))
    }

    /// Unchecked evaluation; callers guarantee `mode` and `y` are in range.
    pub(crate) fn eval(&self, mode: usize, y: T, order: u8) -> T {
        let beta = self.betas[mode];
        let sigma = self.sigmas[mode];
        let oms = self.one_minus_sigma[mode];
        let z = beta * y;
        let half = T::lit(0.5);
        let ep = oms * z.exp();
        let em = (T::one() + sigma) * (-z).exp();
        match order {
            0 => half * (ep + em) - z.cos() + sigma * z.sin(),
            1 => beta * (half * (ep - em) + z.sin() + sigma * z.cos()),
            _ => beta * beta * (half * (ep + em) + z.cos() - sigma * z.sin()),
        }
    }

    /// All shapes at `y`, as a vector over modes.
    pub fn shapes_at(&self, y: T, order: u8) -> Result<DVector<T>> {
        (0..self.mode_count())
            .map(|s| self.shape(s, y, order))
            .collect::<Result<Vec<_>>>()
            .map(DVector::from_vec)
    }

    /// Transverse displacement `u(y) = Σ W_s ψ_s(y)`.
    pub fn displacement(&self, modal_coords: &DVector<T>, y: T) -> Result<T> {
        Ok(self.shapes_at(y, 0)?.dot(modal_coords))
    }

    /// Smallest quadrature rule that resolves products of these shapes.
    pub fn min_quadrature_nodes(&self) -> usize {
        10 * self.mode_count()
    }

    pub fn default_quadrature_nodes(&self) -> usize {
        64.max(12 * self.mode_count())
    }
}

/// Assembled modal equations `M Ẅ + D Ẇ + K W = F` for one beam.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSystem<T: Real> {
    pub mass: DMatrix<T>,
    pub damping: DMatrix<T>,
    pub stiffness: DMatrix<T>,
    /// Plate flexural rigidity `D` (N·m).
    pub flexural_rigidity: T,
    /// `D · width` (N·m²).
    pub effective_rigidity: T,
    /// `ρ a h` (kg/m).
    pub mass_per_length: T,
    pub basis: ModeBasis<T>,
}

impl<T: Real> ModalSystem<T> {
    pub fn assemble(beam: &BeamProperties<T>, basis: &ModeBasis<T>) -> Result<Self> {
        Self::assemble_with_nodes(beam, basis, basis.default_quadrature_nodes())
    }

    pub fn assemble_with_nodes(
        beam: &BeamProperties<T>,
        basis: &ModeBasis<T>,
        nodes: usize,
    ) -> Result<Self> {
        beam.validate()?;
        let n = basis.mode_count();
        if beam.mode_count() != n {
            return Err(Error::Dimension {
                context: "damping ratios vs mode basis",
                expected: n,
                actual: beam.mode_count(),
            });
        }
        let tol = T::lit(1e-12) * beam.length;
        if (basis.length() - beam.length).abs() > tol {
            return Err(Error::Config(format!(
                "mode basis length {} differs from beam length {}",
                basis.length(),
                beam.length
            )));
        }
        if nodes < basis.min_quadrature_nodes() {
            return Err(Error::Config(format!(
                "{nodes} quadrature nodes undersample {n} modes (need at least {})",
                basis.min_quadrature_nodes()
            )));
        }

        let mu = beam.mass_per_length();
        let rigidity = beam.flexural_rigidity();
        let ei = beam.effective_rigidity();
        let rule = GaussLegendre::new(nodes);
        let mut mass = DMatrix::<T>::zeros(n, n);
        let mut stiffness = DMatrix::<T>::zeros(n, n);
        let mut psi = vec![T::zero(); n];
        let mut curv = vec![T::zero(); n];
        for (y, w) in rule.mapped(T::zero(), basis.length()) {
            for s in 0..n {
                psi[s] = basis.eval(s, y, 0);
                curv[s] = basis.eval(s, y, 2);
            }
            for r in 0..n {
                for s in r..n {
                    mass[(r, s)] += w * psi[r] * psi[s];
                    stiffness[(r, s)] += w * curv[r] * curv[s];
                }
            }
        }
        for r in 0..n {
            for s in r..n {
                mass[(r, s)] *= mu;
                stiffness[(r, s)] *= ei;
                mass[(s, r)] = mass[(r, s)];
                stiffness[(s, r)] = stiffness[(r, s)];
            }
        }
        let mut damping = DMatrix::zeros(n, n);
        for s in 0..n {
            let omega = (stiffness[(s, s)] / mass[(s, s)]).sqrt();
            damping[(s, s)] = T::lit(2.0) * beam.damping_ratios[s] * omega * mass[(s, s)];
        }
        Ok(Self {
            mass,
            damping,
            stiffness,
            flexural_rigidity: rigidity,
            effective_rigidity: ei,
            mass_per_length: mu,
            basis: basis.clone(),
        })
    }

    pub fn mode_count(&self) -> usize {
        self.mass.nrows()
    }

    /// `ω_s = sqrt(K_ss / M_ss)` (rad/s).
    pub fn diagonal_frequencies(&self) -> Vec<T> {
        (0..self.mode_count())
            .map(|s| (self.stiffness[(s, s)] / self.mass[(s, s)]).sqrt())
            .collect()
    }

    /// Natural frequencies `sqrt(eig(M⁻¹K))` in ascending order (rad/s).
    pub fn natural_frequencies(&self) -> Result<Vec<T>> {
        let chol = self
            .mass
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("modal mass matrix"))?;
        let l = chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite("modal mass factor"))?;
        let sym = &linv * &self.stiffness * linv.transpose();
        let sym = (&sym + sym.transpose()) * T::lit(0.5);
        let mut eig: Vec<T> = sym
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|&l| l.max(T::zero()).sqrt())
            .collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        Ok(eig)
    }

    /// Copy with the modal mass matrix scaled by `factor` (used to inject
    /// plant-parameter changes).
    pub fn with_mass_scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.mass *= factor;
        out.mass_per_length *= factor;
        out
    }
}

/// Generalized modal force of a distributed load `p(y)` plus point forces
/// `(τ_r, y_r)`: `F_s = ∫ p ψ_s dy + Σ τ_r ψ_s(y_r)`.
pub fn project_distributed_load<T: Real>(
    basis: &ModeBasis<T>,
    pressure: impl Fn(T) -> T,
    point_forces: &[(T, T)],
) -> Result<DVector<T>> {
    let n = basis.mode_count();
    for &(_, y) in point_forces {
        if !(y >= T::zero() && y <= basis.length()) {
            return Err(Error::Domain {
                what: "point force location",
                value: y.as_f64(),
                domain: format!("[0, {}]", basis.length()),
            });
        }
    }
    let rule = GaussLegendre::new(basis.default_quadrature_nodes());
    let mut out = DVector::zeros(n);
    for (y, w) in rule.mapped(T::zero(), basis.length()) {
        let p = pressure(y);
        if p != T::zero() {
            for s in 0..n {
                out[s] += w * p * basis.eval(s, y, 0);
            }
        }
    }
    for &(tau, y) in point_forces {
        for s in 0..n {
            out[s] += tau * basis.eval(s, y, 0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bisect(mut a: f64, mut b: f64) -> f64 {
        let f = |x: f64| x.cos() * x.cosh() + 1.0;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (f(a) > 0.0) == (f(m) > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn roots_match_bisection_oracle() {
        let roots: Vec<f64> = solve_mode_roots(3).unwrap();
        let oracle = [bisect(1.0, 3.0), bisect(4.0, 6.0), bisect(7.0, 9.0)];
        for (r, o) in roots.iter().zip(oracle) {
            assert!((r - o).abs() < 1e-12, "{r} vs {o}");
        }
        assert!((roots[0] - 1.87510407).abs() < 1e-8);
        assert!((roots[1] - 4.69409113).abs() < 1e-8);
        assert!((roots[2] - 7.85475744).abs() < 1e-8);
    }

    #[test]
    fn root_residuals_and_ordering() {
        let roots: Vec<f64> = solve_mode_roots(4).unwrap();
        for w in roots.windows(2) {
            assert!(w[0] < w[1]);
        }
        for r in &roots {
            assert!((r.cos() * r.cosh() + 1.0).abs() < 1e-10);
        }
        // high modes approach (2s − 1)π/2
        let many: Vec<f64> = solve_mode_roots(12).unwrap();
        let s = 12.0;
        assert!((many[11] - (2.0 * s - 1.0) * std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn zero_roots_rejected() {
        assert!(matches!(
            solve_mode_roots::<f64>(0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn f32_roots() {
        let roots: Vec<f32> = solve_mode_roots(3).unwrap();
        assert!((roots[0] - 1.875_104).abs() < 1e-5);
        assert!((roots[2] - 7.854_757).abs() < 1e-4);
    }

    #[test]
    fn clamped_and_free_boundary_conditions() {
        let basis = ModeBasis::<f64>::new(1.0, 6).unwrap();
        for s in 0..6 {
            assert!(basis.shape(s, 0.0, 0).unwrap().abs() < 1e-9);
            assert!(basis.shape(s, 0.0, 1).unwrap().abs() < 1e-9);
            let m = basis.shape(s, 1.0, 2).unwrap();
            let scale = basis.beta(s).powi(2);
            assert!(m.abs() < 1e-6 * scale, "mode {s}: {m}");
        }
        assert!((basis.shape(0, 1.0, 0).unwrap() - 2.0).abs() < 1e-6);
        assert!((basis.shape(1, 1.0, 0).unwrap() + 2.0).abs() < 1e-6);
    }

    #[test]
    fn stable_form_matches_textbook_form() {
        let basis = ModeBasis::<f64>::new(1.0, 3).unwrap();
        for s in 0..3 {
            let b = basis.beta(s);
            let sg = basis.sigma(s);
            for k in 0..=10 {
                let y = k as f64 / 10.0;
                let z = b * y;
                let textbook = z.cosh() - z.cos() - sg * (z.sinh() - z.sin());
                assert!((basis.shape(s, y, 0).unwrap() - textbook).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let basis = ModeBasis::<f64>::new(1.0, 2).unwrap();
        assert!(matches!(basis.shape(0, 1.0001, 0), Err(Error::Domain { .. })));
        assert!(matches!(basis.shape(0, -1e-9, 0), Err(Error::Domain { .. })));
        assert!(basis.shape(2, 0.5, 0).is_err());
        assert!(basis.shape(0, 0.5, 3).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let basis = ModeBasis::<f64>::new(1.0, 4).unwrap();
        let h = 1e-6;
        for s in 0..4 {
            for k in 1..20 {
                let y = k as f64 / 20.0;
                let f = |y| basis.shape(s, y, 0).unwrap();
                let d1 = (f(y + h) - f(y - h)) / (2.0 * h);
                let g = |y| basis.shape(s, y, 1).unwrap();
                let d2 = (g(y + h) - g(y - h)) / (2.0 * h);
                let a1 = basis.shape(s, y, 1).unwrap();
                let a2 = basis.shape(s, y, 2).unwrap();
                let sc1 = basis.beta(s);
                let sc2 = sc1 * sc1;
                assert!((d1 - a1).abs() < 1e-4 * sc1.max(a1.abs()), "s={s} y={y}");
                assert!((d2 - a2).abs() < 1e-4 * sc2.max(a2.abs()), "s={s} y={y}");
            }
        }
    }

    #[test]
    fn orthogonality_by_quadrature() {
        let basis = ModeBasis::<f64>::new(1.0, 5).unwrap();
        let rule = GaussLegendre::new(128);
        for r in 0..5 {
            let rr: f64 = rule.integrate(0.0, 1.0, |y| basis.eval(r, y, 0).powi(2));
            for s in (r + 1)..5 {
                let rs: f64 =
                    rule.integrate(0.0, 1.0, |y| basis.eval(r, y, 0) * basis.eval(s, y, 0));
                assert!(rs.abs() < 1e-6 * rr, "({r},{s}): {rs}");
            }
        }
    }

    #[test]
    fn reference_beam_constants() {
        let beam = BeamProperties::<f64>::reference(3);
        assert_relative_eq!(beam.mass_per_length(), 1.62, max_relative = 1e-12);
        let d = 6.9e10 * 8e-9 / (12.0 * (1.0 - 0.33f64 * 0.33));
        assert_relative_eq!(beam.flexural_rigidity(), d, max_relative = 1e-12);
        assert!((beam.flexural_rigidity() - 51.62).abs() < 0.01);
    }

    #[test]
    fn first_frequency_matches_closed_form() {
        let beam = BeamProperties::<f64>::reference(3);
        let basis = ModeBasis::new(1.0, 3).unwrap();
        let sys = ModalSystem::assemble(&beam, &basis).unwrap();
        let f1 = sys.natural_frequencies().unwrap()[0] / (2.0 * std::f64::consts::PI);
        let closed = 1.87510407f64.powi(2) * (beam.effective_rigidity() / 1.62).sqrt()
            / (2.0 * std::f64::consts::PI);
        assert!((f1 - closed).abs() / closed < 1e-6);
        assert!((f1 - 1.73).abs() < 0.01, "{f1}");
    }

    #[test]
    fn rayleigh_quotient_and_structure() {
        let beam = BeamProperties::<f64>::reference(5);
        let basis = ModeBasis::new(1.0, 5).unwrap();
        let sys = ModalSystem::assemble(&beam, &basis).unwrap();
        let ratio = beam.effective_rigidity() / beam.mass_per_length();
        for s in 0..5 {
            let rq = sys.stiffness[(s, s)] / sys.mass[(s, s)];
            let closed = basis.beta(s).powi(4) * ratio;
            assert!((rq - closed).abs() / closed < 1e-6, "mode {s}");
            // ∫ψ² = L for this normalization
            assert_relative_eq!(sys.mass[(s, s)], 1.62, max_relative = 1e-9);
        }
        assert_eq!(sys.mass, sys.mass.transpose());
        assert_eq!(sys.stiffness, sys.stiffness.transpose());
        for r in 0..5 {
            for s in 0..5 {
                if r != s {
                    assert_eq!(sys.damping[(r, s)], 0.0);
                }
            }
        }
        let w = sys.natural_frequencies().unwrap();
        for p in w.windows(2) {
            assert!(p[0] < p[1]);
        }
    }

    #[test]
    fn quadrature_converged() {
        let beam = BeamProperties::<f64>::reference(6);
        let basis = ModeBasis::new(1.0, 6).unwrap();
        let a = ModalSystem::assemble_with_nodes(&beam, &basis, 64).unwrap();
        let b = ModalSystem::assemble_with_nodes(&beam, &basis, 128).unwrap();
        let scale_m = a.mass.amax();
        let scale_k = a.stiffness.amax();
        for i in 0..36 {
            assert!((a.mass[i] - b.mass[i]).abs() < 1e-9 * scale_m);
            assert!((a.stiffness[i] - b.stiffness[i]).abs() < 1e-9 * scale_k);
        }
    }

    #[test]
    fn undersampled_quadrature_rejected() {
        let beam = BeamProperties::<f64>::reference(6);
        let basis = ModeBasis::new(1.0, 6).unwrap();
        assert!(matches!(
            ModalSystem::assemble_with_nodes(&beam, &basis, 20),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mismatched_length_rejected() {
        let beam = BeamProperties::<f64>::reference(3);
        let basis = ModeBasis::new(2.0, 3).unwrap();
        assert!(ModalSystem::assemble(&beam, &basis).is_err());
    }

    #[test]
    fn invalid_beam_rejected() {
        let mut beam = BeamProperties::<f64>::reference(3);
        beam.poisson_ratio = 0.5;
        assert!(beam.validate().is_err());
        let mut beam = BeamProperties::<f64>::reference(3);
        beam.thickness = -1.0;
        assert!(beam.validate().is_err());
        let mut beam = BeamProperties::<f64>::reference(3);
        beam.damping_ratios[1] = -0.1;
        assert!(beam.validate().is_err());
    }

    #[test]
    fn load_projection() {
        let basis = ModeBasis::<f64>::new(1.0, 3).unwrap();
        let zero = project_distributed_load(&basis, |_| 0.0, &[]).unwrap();
        assert_eq!(zero, DVector::zeros(3));

        let tip = project_distributed_load(&basis, |_| 0.0, &[(1.0, 1.0)]).unwrap();
        assert!((tip[0] - 2.0).abs() < 1e-6);

        // trapezoid oracle for ∫ψ₁
        let uniform = project_distributed_load(&basis, |_| 1.0, &[]).unwrap();
        let n = 10_000;
        let h = 1.0 / n as f64;
        let mut trap = 0.5 * (basis.eval(0, 0.0, 0) + basis.eval(0, 1.0, 0));
        for k in 1..n {
            trap += basis.eval(0, k as f64 * h, 0);
        }
        trap *= h;
        assert!((uniform[0] - trap).abs() / trap.abs() < 1e-8, "{} {}", uniform[0], trap);

        assert!(project_distributed_load(&basis, |_| 0.0, &[(1.0, 1.5)]).is_err());
    }
}

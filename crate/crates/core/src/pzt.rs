//! Piezoelectric patch actuation and strain sensing.
//!
//! A patch bonded at span-wise centre `y` produces a bending moment
//! `M = P_y V`. Its per-volt generalized modal force is
//! `½ P_y / (a_p b_p) · C_s`, where `C_s` integrates the mode curvature over
//! the patch in the normalized coordinate `ξ = y / L`. Since
//! `d²ψ/dξ² = L² ψ''(y)`, `C_s = L (ψ'(y_hi) − ψ'(y_lo))` exactly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::modal::{BeamProperties, ModeBasis};
use crate::{Error, Real, Result};

/// Default drive limit per patch (V).
pub const DEFAULT_VOLTAGE_LIMIT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PztPatch<T> {
    /// Chord-wise width `a_p` (m).
    pub width: T,
    /// Span-wise length `b_p` (m).
    pub span: T,
    /// Thickness `h_p` (m).
    pub thickness: T,
    pub youngs_modulus: T,
    /// Piezoelectric charge coefficient `d31` (m/V).
    pub d31: T,
    /// Chord-wise centre (m).
    pub x: T,
    /// Span-wise centre measured from the root (m).
    pub y: T,
    pub voltage_limit: T,
}

impl<T: Real> PztPatch<T> {
    /// 0.1 × 0.1 × 0.5 mm patch of the reference satellite centred at `y`.
    pub fn reference(y: T) -> Self {
        Self {
            width: T::lit(0.1),
            span: T::lit(0.1),
            thickness: T::lit(0.5e-3),
            youngs_modulus: T::lit(6.9e10),
            d31: T::lit(-1.75e-10),
            x: T::lit(0.1),
            y,
            voltage_limit: T::lit(DEFAULT_VOLTAGE_LIMIT),
        }
    }

    /// The reference layout: root, mid-span and outboard patches.
    pub fn reference_layout() -> Vec<Self> {
        [0.1, 0.5, 0.9]
            .into_iter()
            .map(|y| Self::reference(T::lit(y)))
            .collect()
    }

    pub fn validate(&self, beam_length: T) -> Result<()> {
        for (what, v) in [
            ("patch width", self.width),
            ("patch span", self.span),
            ("patch thickness", self.thickness),
            ("patch youngs_modulus", self.youngs_modulus),
            ("voltage_limit", self.voltage_limit),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Domain {
                    what,
                    value: v.as_f64(),
                    domain: "(0, inf)".into(),
                });
            }
        }
        let half = self.span * T::lit(0.5);
        if !(self.y >= half && self.y <= beam_length - half) {
            return Err(Error::Domain {
                what: "patch centre y",
                value: self.y.as_f64(),
                domain: format!("[{}, {}]", half, beam_length - half),
            });
        }
        Ok(())
    }

    /// Span-wise edges `(y_lo, y_hi)`.
    pub fn edges(&self) -> (T, T) {
        let half = self.span * T::lit(0.5);
        (self.y - half, self.y + half)
    }
}

/// Moment coefficient `P_y` (N·m/V) of a patch bonded to `beam`.
pub fn moment_coefficient<T: Real>(beam: &BeamProperties<T>, patch: &PztPatch<T>) -> T {
    let beam_axial = beam.youngs_modulus * beam.thickness;
    let patch_axial = patch.youngs_modulus * patch.thickness;
    let sum = beam_axial + patch_axial;
    patch.d31 * beam_axial * patch.youngs_modulus * (patch.thickness + beam.thickness)
        / (T::lit(2.0) * sum * sum)
        * (beam_axial * patch.width + patch_axial * beam.width)
}

/// `C_s = ∫ d²ψ_s/dξ² dξ` over the patch, for every mode.
pub fn curvature_integral<T: Real>(
    basis: &ModeBasis<T>,
    patch: &PztPatch<T>,
) -> Result<DVector<T>> {
    patch.validate(basis.length())?;
    let (lo, hi) = patch.edges();
    let length = basis.length();
    Ok(DVector::from_iterator(
        basis.mode_count(),
        (0..basis.mode_count()).map(|s| length * (basis.eval(s, hi, 1) - basis.eval(s, lo, 1))),
    ))
}

/// Per-volt generalized modal force of one patch.
pub fn actuation_influence<T: Real>(
    basis: &ModeBasis<T>,
    beam: &BeamProperties<T>,
    patch: &PztPatch<T>,
) -> Result<DVector<T>> {
    let c = curvature_integral(basis, patch)?;
    let scale = T::lit(0.5) * moment_coefficient(beam, patch) / (patch.width * patch.span);
    Ok(c * scale)
}

/// Patches on one beam with their precomputed actuation and sensing maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PztArray<T: Real> {
    patches: Vec<PztPatch<T>>,
    /// `n_modes × n_patches`, column j = influence of patch j.
    influence: DMatrix<T>,
    /// `n_patches × n_modes`, row j = curvature integral / patch span in ξ.
    sensing: DMatrix<T>,
}

impl<T: Real> PztArray<T> {
    pub fn new(
        basis: &ModeBasis<T>,
        beam: &BeamProperties<T>,
        patches: Vec<PztPatch<T>>,
    ) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::Precondition("at least one PZT patch".into()));
        }
        let n = basis.mode_count();
        let m = patches.len();
        let mut influence = DMatrix::zeros(n, m);
        let mut sensing = DMatrix::zeros(m, n);
        for (j, p) in patches.iter().enumerate() {
            influence.set_column(j, &actuation_influence(basis, beam, p)?);
            let c = curvature_integral(basis, p)?;
            let span_xi = p.span / basis.length();
            sensing.set_row(j, &(c / span_xi).transpose());
        }
        Ok(Self {
            patches,
            influence,
            sensing,
        })
    }

    pub fn patches(&self) -> &[PztPatch<T>] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn influence_matrix(&self) -> &DMatrix<T> {
        &self.influence
    }

    pub fn sensing_matrix(&self) -> &DMatrix<T> {
        &self.sensing
    }

    pub fn voltage_limits(&self) -> DVector<T> {
        DVector::from_iterator(self.len(), self.patches.iter().map(|p| p.voltage_limit))
    }

    /// Clamps each voltage to its patch limit. Returns whether any entry moved.
    pub fn clip(&self, voltages: &mut DVector<T>) -> bool {
        let mut clipped = false;
        for (v, p) in voltages.iter_mut().zip(&self.patches) {
            let lim = p.voltage_limit;
            if *v > lim {
                *v = lim;
                clipped = true;
            } else if *v < -lim {
                *v = -lim;
                clipped = true;
            } else if !v.is_finite() {
                *v = T::zero();
                clipped = true;
            }
        }
        clipped
    }

    /// Modal control force `F_c = C V`. Voltages must already respect the limits.
    pub fn control_force(&self, voltages: &DVector<T>) -> Result<DVector<T>> {
        if voltages.len() != self.len() {
            return Err(Error::Dimension {
                context: "patch voltages",
                expected: self.len(),
                actual: voltages.len(),
            });
        }
        for (j, (v, p)) in voltages.iter().zip(&self.patches).enumerate() {
            if !(v.abs() <= p.voltage_limit) {
                return Err(Error::Saturation {
                    patch: j,
                    value: v.as_f64(),
                    limit: p.voltage_limit.as_f64(),
                });
            }
        }
        Ok(&self.influence * voltages)
    }

    /// Noise-free strain readings for modal coordinates `W`.
    pub fn sense(&self, modal_coords: &DVector<T>) -> DVector<T> {
        &self.sensing * modal_coords
    }

    /// Strain readings with additive zero-mean Gaussian noise of `noise_std`.
    pub fn sensor_reading<R: Rng + ?Sized>(
        &self,
        modal_coords: &DVector<T>,
        noise_std: T,
        rng: &mut R,
    ) -> DVector<T> {
        let mut z = self.sense(modal_coords);
        if noise_std > T::zero() {
            for v in z.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += noise_std * T::lit(e);
            }
        }
        z
    }
}

/// Axial strain, stress and moment state of a patch under a given voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainCouplingState<T> {
    pub strain_pzt: T,
    pub strain_beam: T,
    pub stress: T,
    pub moment_coefficient: T,
    pub patch_moment: T,
    pub pzt_strain_energy: T,
}

impl<T: Real> StrainCouplingState<T> {
    /// Evaluates the patch state for `voltage`, with the beam deformed
    /// according to `modal_coords`.
    pub fn evaluate(
        beam: &BeamProperties<T>,
        basis: &ModeBasis<T>,
        patch: &PztPatch<T>,
        voltage: T,
        modal_coords: &DVector<T>,
    ) -> Result<Self> {
        patch.validate(basis.length())?;
        let strain_pzt = patch.d31 * voltage * patch.thickness / patch.span;
        let patch_stiff = patch.youngs_modulus * patch.thickness * patch.span;
        let beam_stiff = beam.youngs_modulus * beam.thickness * beam.length;
        let strain_beam = -patch_stiff * strain_pzt / (patch_stiff + beam_stiff);
        let stress = patch.youngs_modulus * (strain_beam + strain_pzt);
        let py = moment_coefficient(beam, patch);
        let (lo, hi) = patch.edges();
        let slope = |y: T| -> T {
            (0..basis.mode_count())
                .map(|s| modal_coords[s] * basis.eval(s, y, 1))
                .fold(T::zero(), |a, b| a + b)
        };
        // ∫_A u'' dx dy = a_p (u'(hi) − u'(lo))
        let curvature_area = patch.width * (slope(hi) - slope(lo));
        Ok(Self {
            strain_pzt,
            strain_beam,
            stress,
            moment_coefficient: py,
            patch_moment: py * voltage,
            pzt_strain_energy: -T::lit(0.5) * py * voltage * curvature_area,
        })
    }

    /// Relative residual of the axial force balance between patch and beam.
    pub fn force_balance_residual(&self, beam: &BeamProperties<T>, patch: &PztPatch<T>) -> T {
        let patch_stiff = patch.youngs_modulus * patch.thickness * patch.span;
        let beam_stiff = beam.youngs_modulus * beam.thickness * beam.length;
        let r = patch_stiff * (self.strain_pzt + self.strain_beam) + beam_stiff * self.strain_beam;
        let scale = (patch_stiff * self.strain_pzt).abs();
        if scale == T::zero() {
            r.abs()
        } else {
            r.abs() / scale
        }
    }
}

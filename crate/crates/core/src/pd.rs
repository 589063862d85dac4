//! Proportional-derivative baseline on the patch sensor readings.

use nalgebra::{DMatrix, DVector};

use crate::plant::{ControlAction, Controller, Observation};
use crate::{Error, Real, Result};

pub const DEFAULT_DERIVATIVE_CUTOFF: f64 = 50.0;

/// Gains acting as `V = −K_p z − K_d ż̂`.
///
/// The patches have `d31 < 0`, so collocated damping needs negative gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PdGains<T: Real> {
    pub proportional: DMatrix<T>,
    pub derivative: DMatrix<T>,
    pub derivative_filter_cutoff: T,
}

impl<T: Real> PdGains<T> {
    /// Diagonal gains, one patch per sensor.
    pub fn collocated(patches: usize, kp: T, kd: T) -> Self {
        Self {
            proportional: DMatrix::identity(patches, patches) * kp,
            derivative: DMatrix::identity(patches, patches) * kd,
            derivative_filter_cutoff: T::lit(DEFAULT_DERIVATIVE_CUTOFF),
        }
    }

    /// Frozen defaults from [`tune_collocated`] on the reference impulse case.
    pub fn reference(patches: usize) -> Self {
        Self::collocated(patches, T::lit(REFERENCE_KP), T::lit(REFERENCE_KD))
    }

    pub fn validate(&self) -> Result<()> {
        if self.proportional.shape() != self.derivative.shape() {
            return Err(Error::Dimension {
                context: "PD derivative gain rows",
                expected: self.proportional.nrows(),
                actual: self.derivative.nrows(),
            });
        }
        if self
            .proportional
            .iter()
            .chain(self.derivative.iter())
            .any(|g| !g.is_finite())
        {
            return Err(Error::Precondition("PD gains must be finite".into()));
        }
        if !(self.derivative_filter_cutoff > T::zero()) || !self.derivative_filter_cutoff.is_finite()
        {
            return Err(Error::Domain {
                what: "derivative filter cutoff",
                value: self.derivative_filter_cutoff.as_f64(),
                domain: "(0, inf) Hz".into(),
            });
        }
        Ok(())
    }
}

/// Grid optimum of `(settling time, tip RMS)` for the reference impulse
/// case over `k_p ∈ {0, ±log_grid(0.1, 1000, 9)}`,
/// `k_d ∈ {0, −log_grid(0.001, 100, 11)}`.
pub const REFERENCE_KP: f64 = 1000.0;
pub const REFERENCE_KD: f64 = -31.622776601683825;

/// `V = −K_p z − K_d ż̂`, clipped to `±limits`.
pub fn pd_control<T: Real>(
    gains: &PdGains<T>,
    reading: &DVector<T>,
    derivative: &DVector<T>,
    limits: &DVector<T>,
) -> Result<DVector<T>> {
    if reading.iter().any(|z| !z.is_finite()) {
        return Err(Error::Precondition("sensor reading must be finite".into()));
    }
    let n = gains.proportional.ncols();
    if reading.len() != n || derivative.len() != n {
        return Err(Error::Dimension {
            context: "PD sensor channels",
            expected: n,
            actual: reading.len().max(derivative.len()),
        });
    }
    let mut v = -(&gains.proportional * reading) - &gains.derivative * derivative;
    for (vi, &lim) in v.iter_mut().zip(limits.iter()) {
        *vi = vi.max(-lim).min(lim);
    }
    Ok(v)
}

/// First-order low-pass on the backward difference of a sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeFilter<T: Real> {
    alpha: T,
    dt: T,
    previous: Option<DVector<T>>,
    estimate: DVector<T>,
}

impl<T: Real> DerivativeFilter<T> {
    pub fn new(channels: usize, cutoff: T, dt: T) -> Self {
        let alpha = T::one() - (-T::two_pi() * cutoff * dt).exp();
        Self {
            alpha,
            dt,
            previous: None,
            estimate: DVector::zeros(channels),
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Feeds one sample and returns the filtered derivative. The first
    /// sample yields zero.
    pub fn update(&mut self, z: &DVector<T>) -> &DVector<T> {
        if let Some(prev) = &self.previous {
            let raw = (z - prev) / self.dt;
            self.estimate += (raw - &self.estimate) * self.alpha;
        }
        self.previous = Some(z.clone());
        &self.estimate
    }

    pub fn reset(&mut self) {
        self.previous = None;
        self.estimate.fill(T::zero());
    }
}

#[derive(Debug, Clone)]
pub struct PdController<T: Real> {
    gains: PdGains<T>,
    limits: DVector<T>,
    filter: DerivativeFilter<T>,
}

impl<T: Real> PdController<T> {
    pub fn new(gains: PdGains<T>, limits: DVector<T>, dt: T) -> Result<Self> {
        gains.validate()?;
        if limits.len() != gains.proportional.nrows() {
            return Err(Error::Dimension {
                context: "PD voltage limits",
                expected: gains.proportional.nrows(),
                actual: limits.len(),
            });
        }
        let filter = DerivativeFilter::new(
            gains.proportional.ncols(),
            gains.derivative_filter_cutoff,
            dt,
        );
        Ok(Self {
            gains,
            limits,
            filter,
        })
    }

    pub fn gains(&self) -> &PdGains<T> {
        &self.gains
    }
}

impl<T: Real> Controller<T> for PdController<T> {
    fn name(&self) -> &str {
        "pd"
    }

    fn control(&mut self, obs: &Observation<'_, T>) -> Result<ControlAction<T>> {
        let zdot = self.filter.update(obs.readings).clone();
        let v = pd_control(&self.gains, obs.readings, &zdot, &self.limits)?;
        Ok(ControlAction::plain(v))
    }
}

/// Logarithmic grid `start · ratio^k` for `k < count`.
pub fn log_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![start];
    }
    let ratio = (stop / start).powf(1.0 / (count - 1) as f64);
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

/// Exhaustive search over `(k_p, k_d)` pairs. `score` returns the quantity
/// to minimize, or `None` to skip the pair; ties keep the first pair found.
pub fn tune_collocated<S, F>(kp_grid: &[f64], kd_grid: &[f64], mut score: F) -> Result<(f64, f64, S)>
where
    S: PartialOrd,
    F: FnMut(f64, f64) -> Result<Option<S>>,
{
    let mut best: Option<(f64, f64, S)> = None;
    for &kp in kp_grid {
        for &kd in kd_grid {
            let Some(s) = score(kp, kd)? else { continue };
            if best.as_ref().is_none_or(|(_, _, b)| s < *b) {
                best = Some((kp, kd, s));
            }
        }
    }
    best.ok_or_else(|| Error::Numeric("no PD gain pair produced a score".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_inputs_give_zero_voltage() {
        let g = PdGains::collocated(3, -5.0, -0.3);
        let v = pd_control(
            &g,
            &DVector::zeros(3),
            &DVector::zeros(3),
            &DVector::from_element(3, 100.0),
        )
        .unwrap();
        assert_eq!(v, DVector::zeros(3));
    }

    #[test]
    fn proportional_only_returns_negated_column() {
        let mut g = PdGains::collocated(3, 0.0, 0.0);
        g.proportional = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 + 1.0);
        let z = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let v = pd_control(&g, &z, &DVector::zeros(3), &DVector::from_element(3, 1e3)).unwrap();
        assert_eq!(v, -g.proportional.column(0));
    }

    #[test]
    fn output_is_clipped_and_linear_below_limits() {
        let g = PdGains::collocated(2, 3.0, 0.5);
        let lim = DVector::from_element(2, 100.0);
        let z = DVector::from_vec(vec![1.0, -2.0]);
        let zd = DVector::from_vec(vec![4.0, 1.0]);
        let v1 = pd_control(&g, &z, &zd, &lim).unwrap();
        let v2 = pd_control(&g, &(&z * 2.0), &(&zd * 2.0), &lim).unwrap();
        assert!((v2 - v1 * 2.0).amax() < 1e-14);
        let big = pd_control(&g, &(&z * 100.0), &zd, &lim).unwrap();
        assert_eq!(big.as_slice(), &[-100.0, 100.0]);
        assert!(pd_control(&g, &DVector::from_vec(vec![f64::NAN, 0.0]), &zd, &lim).is_err());
    }

    #[test]
    fn filter_tracks_a_ramp() {
        let mut f = DerivativeFilter::new(1, 50.0, 0.01);
        assert!((f.alpha() - (1.0 - (-std::f64::consts::PI).exp())).abs() < 1e-15);
        let mut last = 0.0;
        for k in 0..50 {
            last = f.update(&DVector::from_element(1, 3.0 * k as f64 * 0.01))[0];
        }
        assert!((last - 3.0).abs() < 1e-12);
        f.reset();
        assert_eq!(f.update(&DVector::from_element(1, 7.0))[0], 0.0);
    }

    #[test]
    fn grid_search_finds_minimum() {
        let kp = log_grid(0.1, 10.0, 5);
        assert!((kp[2] - 1.0).abs() < 1e-12);
        let (a, b, s) = tune_collocated(&kp, &kp, |p, d| Ok(Some((p - 1.0).powi(2) + (d - 10.0).abs()))).unwrap();
        assert_eq!((a, b), (kp[2], kp[4]));
        assert!(s < 1e-12);
        let (a, b, _) = tune_collocated(&kp, &kp, |p, d| Ok((p < 5.0).then_some((p.round(), -d)))).unwrap();
        assert_eq!((a, b), (kp[0], kp[4]));
    }

    #[test]
    fn invalid_gains_rejected() {
        let mut g = PdGains::collocated(2, 1.0, 1.0);
        g.derivative_filter_cutoff = 0.0;
        assert!(g.validate().is_err());
        let mut g = PdGains::collocated(2, 1.0, 1.0);
        g.derivative[(0, 1)] = f64::INFINITY;
        assert!(g.validate().is_err());
    }
}

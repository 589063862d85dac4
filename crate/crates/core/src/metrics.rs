//! Episode metrics. These work on `f64` series regardless of the scalar
//! used for simulation.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::modal::ModalSystem;
use crate::plant::Trajectory;
use crate::pzt::PztArray;
use crate::{Real, Result};

pub const SETTLING_BAND: f64 = 0.02;
pub const HIGH_FREQUENCY_CUTOFF: f64 = 10.0;

/// Time from `start` until `|x|` stays within `band · peak`, where the peak
/// is taken over `t ≥ start`. `None` when the last sample is outside.
pub fn settling_time(times: &[f64], signal: &[f64], start: f64, band: f64) -> Option<f64> {
    let first = times.iter().position(|&t| t >= start - 1e-12)?;
    let peak = signal[first..].iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if peak == 0.0 {
        return Some(0.0);
    }
    let limit = band * peak;
    match signal[first..].iter().rposition(|x| x.abs() > limit) {
        None => Some(0.0),
        Some(k) if first + k + 1 >= signal.len() => None,
        Some(k) => Some(times[first + k + 1] - times[first]),
    }
}

pub fn rms(signal: &[f64]) -> f64 {
    if signal.is_empty() {
        return 0.0;
    }
    (signal.iter().map(|x| x * x).sum::<f64>() / signal.len() as f64).sqrt()
}

/// One-sided periodogram power of `signal` (mean removed) above `cutoff` Hz.
pub fn power_above(signal: &[f64], dt: f64, cutoff: f64) -> f64 {
    let n = signal.len();
    if n < 2 {
        return 0.0;
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    let norm = 1.0 / (n as f64 * n as f64);
    (1..=n / 2)
        .filter(|&k| k as f64 * df > cutoff)
        .map(|k| {
            let p = buf[k].norm_sqr() * norm;
            if 2 * k == n {
                p
            } else {
                2.0 * p
            }
        })
        .sum()
}

/// Per-step `ΣV²Δt`.
pub fn control_energy(voltages: &[Vec<f64>], dt: f64) -> f64 {
    voltages.iter().flatten().map(|v| v * v).sum::<f64>() * dt
}

/// RMS of a 1 s moving window, decreasing after `start` up to `slack`
/// relative, and bounded.
pub fn is_stable(times: &[f64], signal: &[f64], start: f64, dt: f64, slack: f64) -> bool {
    if signal.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let w = ((1.0 / dt).round() as usize).max(1);
    let first = match times.iter().position(|&t| t >= start) {
        Some(i) => i,
        None => return true,
    };
    let windows: Vec<f64> = signal[first..]
        .chunks(w)
        .filter(|c| c.len() == w)
        .map(rms)
        .collect();
    windows
        .windows(2)
        .all(|p| p[1] <= p[0] * (1.0 + slack) + 1e-12)
}

/// Summary of one episode, all in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub controller: String,
    pub rms_modal_amplitude: Vec<f64>,
    pub rms_tip: f64,
    pub peak_tip: f64,
    pub settling_time: Option<f64>,
    pub control_energy: f64,
    pub force_power_above_cutoff: f64,
    pub amplitude_reduction: Option<f64>,
    pub max_kkt_residual: Option<f64>,
    pub stable: bool,
    pub narx_mse: Option<[f64; 3]>,
}

impl MetricsReport {
    /// Metrics over `t ≥ start` (normally the disturbance time).
    pub fn compute<T: Real>(
        trajectory: &Trajectory<T>,
        system: &ModalSystem<T>,
        array: &PztArray<T>,
        start: f64,
    ) -> Result<Self> {
        let times: Vec<f64> = trajectory.times.iter().map(|t| t.as_f64()).collect();
        let first = times
            .iter()
            .position(|&t| t >= start - 1e-12)
            .unwrap_or(times.len());
        let tip: Vec<f64> = trajectory
            .displacement_at(system, system.basis.length())?
            .iter()
            .map(|x| x.as_f64())
            .collect();
        let n = system.mode_count();
        let rms_modal_amplitude = (0..n)
            .map(|s| {
                let series: Vec<f64> = trajectory.states[first..]
                    .iter()
                    .map(|st| st.coords[s].as_f64())
                    .collect();
                rms(&series)
            })
            .collect();
        let dt = trajectory.dt.as_f64();
        let forces = trajectory.control_forces(array);
        let force_power_above_cutoff = (0..n)
            .map(|s| {
                let series: Vec<f64> = forces[first..].iter().map(|f| f[s].as_f64()).collect();
                power_above(&series, dt, HIGH_FREQUENCY_CUTOFF)
            })
            .sum();
        let volts: Vec<Vec<f64>> = trajectory
            .controls
            .iter()
            .map(|v| v.iter().map(|x| x.as_f64()).collect())
            .collect();
        let max_kkt_residual = trajectory
            .has_diagnostics()
            .then(|| {
                trajectory
                    .diagnostics
                    .iter()
                    .flatten()
                    .map(|d| d.residual)
                    .fold(0.0, f64::max)
            });
        Ok(Self {
            controller: trajectory.controller.clone(),
            rms_modal_amplitude,
            rms_tip: rms(&tip[first..]),
            peak_tip: tip[first..].iter().fold(0.0f64, |a, x| a.max(x.abs())),
            settling_time: settling_time(&times, &tip, start, SETTLING_BAND),
            control_energy: control_energy(&volts, dt),
            force_power_above_cutoff,
            amplitude_reduction: None,
            max_kkt_residual,
            stable: is_stable(&times, &tip, start, dt, 0.05),
            narx_mse: None,
        })
    }

    /// Fills `1 − rms_tip / rms_tip(open loop)`.
    pub fn with_open_loop(mut self, open_loop: &MetricsReport) -> Self {
        self.amplitude_reduction = Some(if open_loop.rms_tip > 0.0 {
            1.0 - self.rms_tip / open_loop.rms_tip
        } else {
            0.0
        });
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settling_of_exponential_decay() {
        let dt = 0.001;
        let times: Vec<f64> = (0..10_000).map(|k| k as f64 * dt).collect();
        let x: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let ts = settling_time(&times, &x, 0.0, 0.02).unwrap();
        assert!((ts - 50f64.ln()).abs() < 2.0 * dt);
        assert_eq!(settling_time(&times, &vec![0.0; times.len()], 0.0, 0.02), Some(0.0));
        let growing: Vec<f64> = times.iter().map(|t| *t).collect();
        assert_eq!(settling_time(&times, &growing, 0.0, 0.02), None);
    }

    #[test]
    fn power_split_by_frequency() {
        let dt = 0.01;
        let n = 1000;
        let s: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                (2.0 * std::f64::consts::PI * 2.0 * t).sin()
                    + 0.5 * (2.0 * std::f64::consts::PI * 20.0 * t).sin()
            })
            .collect();
        // Parseval: a sine of amplitude a has mean power a²/2
        assert!((power_above(&s, dt, 10.0) - 0.125).abs() < 1e-10);
        assert!((power_above(&s, dt, 1.0) - 0.625).abs() < 1e-10);
        assert_eq!(power_above(&s, dt, 60.0), 0.0);
    }

    #[test]
    fn rms_and_energy() {
        assert!((rms(&[3.0, -4.0, 3.0, -4.0]) - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(control_energy(&[vec![1.0, 2.0], vec![3.0, 0.0]], 0.5), 7.0);
    }

    #[test]
    fn stability_flags_growth() {
        let dt = 0.01;
        let times: Vec<f64> = (0..500).map(|k| k as f64 * dt).collect();
        let decay: Vec<f64> = times.iter().map(|t| (-t).exp() * (10.0 * t).sin()).collect();
        let grow: Vec<f64> = times.iter().map(|t| t.exp() * (10.0 * t).sin()).collect();
        assert!(is_stable(&times, &decay, 0.0, dt, 0.05));
        assert!(!is_stable(&times, &grow, 0.0, dt, 0.05));
    }
}

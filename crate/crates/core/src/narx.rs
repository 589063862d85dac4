//! Tapped-delay neural models: one hidden rectifier layer, per-channel
//! affine normalization, Levenberg–Marquardt training, inverse-model
//! control and gated online adaptation.
//!
//! Regressor layouts, with `F` feedback taps and `I` input taps:
//!
//! * forward: `[y(t), …, y(t−F+1), S(t), …, S(t−I+1)]`, target `y(t+1)`
//! * inverse: `[y(t+1), y(t), …, y(t−F+1), S(t−1), …, S(t−I)]`, target `S(t)`

use std::collections::VecDeque;
use std::io::{self, Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::plant::{ControlAction, Controller, Observation, Trajectory};
use crate::{Error, Real, Result};

pub const DEFAULT_HIDDEN_WIDTH: usize = 10;
pub const DEFAULT_TAPS: usize = 2;
pub const MODEL_MAGIC: &[u8; 8] = b"FBNARX\0\0";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetRole {
    Forward,
    Inverse,
}

impl NetRole {
    fn code(self) -> u8 {
        match self {
            NetRole::Forward => 0,
            NetRole::Inverse => 1,
        }
    }
}

/// Per-channel map `x ↦ (x − offset) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<T: Real> {
    pub offset: DVector<T>,
    pub scale: DVector<T>,
}

impl<T: Real> AffineMap<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            offset: DVector::zeros(n),
            scale: DVector::from_element(n, T::one()),
        }
    }

    /// Mean and standard deviation of the selected rows; constant channels
    /// get unit scale.
    pub fn fit(data: &DMatrix<T>, rows: &[usize]) -> Self {
        let n = data.ncols();
        let count = T::from_count(rows.len().max(1));
        let mut offset = DVector::zeros(n);
        let mut scale = DVector::from_element(n, T::one());
        for c in 0..n {
            let mean = rows.iter().fold(T::zero(), |a, &r| a + data[(r, c)]) / count;
            let var = rows
                .iter()
                .fold(T::zero(), |a, &r| a + (data[(r, c)] - mean).powi(2))
                / count;
            offset[c] = mean;
            let sd = var.sqrt();
            if sd > T::lit(1e-12) * (T::one() + mean.abs()) {
                scale[c] = sd;
            }
        }
        Self { offset, scale }
    }

    pub fn len(&self) -> usize {
        self.offset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset.is_empty()
    }

    pub fn normalize(&self, x: &DVector<T>) -> DVector<T> {
        (x - &self.offset).component_div(&self.scale)
    }

    pub fn denormalize(&self, x: &DVector<T>) -> DVector<T> {
        x.component_mul(&self.scale) + &self.offset
    }

    fn validate(&self) -> Result<()> {
        if self
            .scale
            .iter()
            .any(|s| *s == T::zero() || !s.is_finite())
            || self.offset.iter().any(|o| !o.is_finite())
        {
            return Err(Error::Precondition(
                "normalization scales must be finite and nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Single-hidden-layer rectifier network with normalized inputs/outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NarxNet<T: Real> {
    pub role: NetRole,
    pub output_channels: usize,
    pub input_channels: usize,
    pub feedback_taps: usize,
    pub input_taps: usize,
    pub w1: DMatrix<T>,
    pub b1: DVector<T>,
    pub w2: DMatrix<T>,
    pub b2: DVector<T>,
    pub input_map: AffineMap<T>,
    pub output_map: AffineMap<T>,
}

fn check_taps(feedback: usize, input: usize) -> Result<()> {
    for (what, taps) in [("feedback taps", feedback), ("input taps", input)] {
        if !(1..=2).contains(&taps) {
            return Err(Error::Domain {
                what,
                value: taps as f64,
                domain: "{1, 2}".into(),
            });
        }
    }
    Ok(())
}

impl<T: Real> NarxNet<T> {
    /// All-zero network of the given shape.
    pub fn zeros(
        role: NetRole,
        output_channels: usize,
        input_channels: usize,
        feedback_taps: usize,
        input_taps: usize,
        hidden: usize,
    ) -> Result<Self> {
        check_taps(feedback_taps, input_taps)?;
        if output_channels == 0 || input_channels == 0 || hidden == 0 {
            return Err(Error::Precondition(
                "channel counts and hidden width must be positive".into(),
            ));
        }
        let d = regressor_dim(role, output_channels, input_channels, feedback_taps, input_taps);
        let o = match role {
            NetRole::Forward => output_channels,
            NetRole::Inverse => input_channels,
        };
        Ok(Self {
            role,
            output_channels,
            input_channels,
            feedback_taps,
            input_taps,
            w1: DMatrix::zeros(hidden, d),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(o, hidden),
            b2: DVector::zeros(o),
            input_map: AffineMap::identity(d),
            output_map: AffineMap::identity(o),
        })
    }

    /// Seeded uniform initialization in `±1/√fan_in` for each layer.
    pub fn new(
        role: NetRole,
        output_channels: usize,
        input_channels: usize,
        feedback_taps: usize,
        input_taps: usize,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(role, output_channels, input_channels, feedback_taps, input_taps, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = 1.0 / (net.regressor_dim() as f64).sqrt();
        let r2 = 1.0 / (hidden as f64).sqrt();
        for v in net.w1.iter_mut().chain(net.b1.iter_mut()) {
            *v = T::lit(rng.random_range(-r1..r1));
        }
        for v in net.w2.iter_mut().chain(net.b2.iter_mut()) {
            *v = T::lit(rng.random_range(-r2..r2));
        }
        Ok(net)
    }

    pub fn regressor_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn hidden_width(&self) -> usize {
        self.w1.nrows()
    }

    pub fn param_count(&self) -> usize {
        let (h, d, o) = (self.hidden_width(), self.regressor_dim(), self.output_dim());
        h * d + h + o * h + o
    }

    /// Parameters as `[W1 row-major, b1, W2 row-major, b2]`.
    pub fn params(&self) -> DVector<T> {
        let mut p = Vec::with_capacity(self.param_count());
        for i in 0..self.w1.nrows() {
            p.extend(self.w1.row(i).iter().copied());
        }
        p.extend(self.b1.iter().copied());
        for i in 0..self.w2.nrows() {
            p.extend(self.w2.row(i).iter().copied());
        }
        p.extend(self.b2.iter().copied());
        DVector::from_vec(p)
    }

    pub fn set_params(&mut self, p: &DVector<T>) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "network parameter vector",
                expected: self.param_count(),
                actual: p.len(),
            });
        }
        let (h, d, o) = (self.hidden_width(), self.regressor_dim(), self.output_dim());
        let mut k = 0;
        for i in 0..h {
            for j in 0..d {
                self.w1[(i, j)] = p[k];
                k += 1;
            }
        }
        for i in 0..h {
            self.b1[i] = p[k];
            k += 1;
        }
        for i in 0..o {
            for j in 0..h {
                self.w2[(i, j)] = p[k];
                k += 1;
            }
        }
        for i in 0..o {
            self.b2[i] = p[k];
            k += 1;
        }
        Ok(())
    }

    fn check_regressor(&self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.regressor_dim() {
            return Err(Error::Dimension {
                context: "NARX regressor",
                expected: self.regressor_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn preactivation(&self, xn: &DVector<T>) -> DVector<T> {
        &self.w1 * xn + &self.b1
    }

    fn forward_normalized(&self, xn: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let a = self.preactivation(xn);
        let h = a.map(|v| v.max(T::zero()));
        let on = &self.w2 * h + &self.b2;
        (a, on)
    }

    pub fn forward(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.check_regressor(x)?;
        let (_, on) = self.forward_normalized(&self.input_map.normalize(x));
        Ok(self.output_map.denormalize(&on))
    }

    /// Smallest `|pre-activation|` at `x`; near zero means a rectifier kink.
    pub fn kink_margin(&self, x: &DVector<T>) -> Result<T> {
        self.check_regressor(x)?;
        let a = self.preactivation(&self.input_map.normalize(x));
        Ok(a.iter().fold(T::lit(f64::INFINITY), |m, v| m.min(v.abs())))
    }

    /// `∂ output / ∂ regressor` in original units. The rectifier slope at 0
    /// is taken as 0.
    pub fn input_jacobian(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        self.check_regressor(x)?;
        let a = self.preactivation(&self.input_map.normalize(x));
        let mut inner = self.w1.clone();
        for i in 0..inner.nrows() {
            if a[i] <= T::zero() {
                inner.row_mut(i).fill(T::zero());
            }
        }
        let mut j = &self.w2 * inner;
        for r in 0..j.nrows() {
            for c in 0..j.ncols() {
                j[(r, c)] *= self.output_map.scale[r] / self.input_map.scale[c];
            }
        }
        Ok(j)
    }

    /// Normalized output and `∂ normalized output / ∂ params` at a
    /// normalized regressor, written into `jac` rows starting at `row`.
    fn param_jacobian_into(&self, xn: &DVector<T>, jac: &mut DMatrix<T>, row: usize) -> DVector<T> {
        let (h, d, o) = (self.hidden_width(), self.regressor_dim(), self.output_dim());
        let (a, on) = self.forward_normalized(xn);
        let w2_off = h * d + h;
        let b2_off = w2_off + o * h;
        for c in 0..o {
            let r = row + c;
            for i in 0..h {
                if a[i] > T::zero() {
                    let g = self.w2[(c, i)];
                    for j in 0..d {
                        jac[(r, i * d + j)] = g * xn[j];
                    }
                    jac[(r, h * d + i)] = g;
                    jac[(r, w2_off + c * h + i)] = a[i];
                } else {
                    for j in 0..d {
                        jac[(r, i * d + j)] = T::zero();
                    }
                    jac[(r, h * d + i)] = T::zero();
                    jac[(r, w2_off + c * h + i)] = T::zero();
                }
                for c2 in 0..o {
                    if c2 != c {
                        jac[(r, w2_off + c2 * h + i)] = T::zero();
                    }
                }
            }
            for c2 in 0..o {
                jac[(r, b2_off + c2)] = if c2 == c { T::one() } else { T::zero() };
            }
        }
        on
    }

    /// `∂ normalized output / ∂ params` at an original-units regressor.
    pub fn param_jacobian(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        self.check_regressor(x)?;
        let mut jac = DMatrix::zeros(self.output_dim(), self.param_count());
        self.param_jacobian_into(&self.input_map.normalize(x), &mut jac, 0);
        Ok(jac)
    }

    pub fn validate(&self) -> Result<()> {
        check_taps(self.feedback_taps, self.input_taps)?;
        let d = regressor_dim(
            self.role,
            self.output_channels,
            self.input_channels,
            self.feedback_taps,
            self.input_taps,
        );
        let o = match self.role {
            NetRole::Forward => self.output_channels,
            NetRole::Inverse => self.input_channels,
        };
        let h = self.w1.nrows();
        for (context, expected, actual) in [
            ("W1 columns", d, self.w1.ncols()),
            ("b1", h, self.b1.len()),
            ("W2 rows", o, self.w2.nrows()),
            ("W2 columns", h, self.w2.ncols()),
            ("b2", o, self.b2.len()),
            ("input normalization", d, self.input_map.len()),
            ("output normalization", o, self.output_map.len()),
        ] {
            if expected != actual {
                return Err(Error::Dimension {
                    context,
                    expected,
                    actual,
                });
            }
        }
        self.input_map.validate()?;
        self.output_map.validate()
    }

    /// Binary model file, little-endian:
    ///
    /// ```text
    /// magic[8] "FBNARX\0\0" | version u32 | role u8 (0 forward, 1 inverse)
    /// output_channels u32 | input_channels u32 | feedback_taps u32 | input_taps u32
    /// regressor_dim u32 | hidden u32 | output_dim u32
    /// input offset[d] | input scale[d] | output offset[o] | output scale[o]
    /// W1[h×d] row-major | b1[h] | W2[o×h] row-major | b2[o]        (all f64)
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&[self.role.code()])?;
        for v in [
            self.output_channels,
            self.input_channels,
            self.feedback_taps,
            self.input_taps,
            self.regressor_dim(),
            self.hidden_width(),
            self.output_dim(),
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        let maps = [
            &self.input_map.offset,
            &self.input_map.scale,
            &self.output_map.offset,
            &self.output_map.scale,
        ];
        for m in maps {
            for v in m.iter() {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        for v in self.params().iter() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io_err = |e: io::Error| Error::Format(format!("model file: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("model file: bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io_err)?;
        let version = u32::from_le_bytes(b4);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("model file: unsupported version {version}")));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1).map_err(io_err)?;
        let role = match b1[0] {
            0 => NetRole::Forward,
            1 => NetRole::Inverse,
            x => return Err(Error::Format(format!("model file: unknown role {x}"))),
        };
        let mut dims = [0usize; 7];
        for d in dims.iter_mut() {
            r.read_exact(&mut b4).map_err(io_err)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        let [ny, ns, fb, it, d, h, o] = dims;
        let mut net = Self::zeros(role, ny, ns, fb, it, h)?;
        if net.regressor_dim() != d || net.output_dim() != o {
            return Err(Error::Format("model file: inconsistent layer dimensions".into()));
        }
        let mut read_vec = |n: usize| -> Result<DVector<T>> {
            let mut v = DVector::zeros(n);
            let mut b8 = [0u8; 8];
            for x in v.iter_mut() {
                r.read_exact(&mut b8).map_err(io_err)?;
                *x = T::lit(f64::from_le_bytes(b8));
            }
            Ok(v)
        };
        net.input_map.offset = read_vec(d)?;
        net.input_map.scale = read_vec(d)?;
        net.output_map.offset = read_vec(o)?;
        net.output_map.scale = read_vec(o)?;
        let p = read_vec(net.param_count())?;
        net.set_params(&p)?;
        net.validate()?;
        Ok(net)
    }
}

fn regressor_dim(role: NetRole, ny: usize, ns: usize, fb: usize, it: usize) -> usize {
    match role {
        NetRole::Forward => ny * fb + ns * it,
        NetRole::Inverse => ny + ny * fb + ns * it,
    }
}

/// Builds a forward regressor from newest-first histories.
pub fn forward_regressor<T: Real>(
    net: &NarxNet<T>,
    outputs: &[&DVector<T>],
    inputs: &[&DVector<T>],
) -> DVector<T> {
    let mut x = Vec::with_capacity(net.regressor_dim());
    for y in outputs.iter().take(net.feedback_taps) {
        x.extend(y.iter().copied());
    }
    for s in inputs.iter().take(net.input_taps) {
        x.extend(s.iter().copied());
    }
    DVector::from_vec(x)
}

/// Builds an inverse regressor: desired next output, then newest-first
/// output history `y(t), y(t−1), …` and input history `S(t−1), S(t−2), …`.
pub fn inverse_regressor<T: Real>(
    net: &NarxNet<T>,
    desired: &DVector<T>,
    outputs: &[&DVector<T>],
    past_inputs: &[&DVector<T>],
) -> DVector<T> {
    let mut x = Vec::with_capacity(net.regressor_dim());
    x.extend(desired.iter().copied());
    for y in outputs.iter().take(net.feedback_taps) {
        x.extend(y.iter().copied());
    }
    for s in past_inputs.iter().take(net.input_taps) {
        x.extend(s.iter().copied());
    }
    DVector::from_vec(x)
}

/// Outputs `y(t)` and applied inputs `S(t)` of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord<T: Real> {
    pub outputs: Vec<DVector<T>>,
    pub inputs: Vec<DVector<T>>,
}

impl<T: Real> EpisodeRecord<T> {
    /// Sensor readings (optionally low-passed) and applied voltages.
    pub fn from_trajectory(traj: &Trajectory<T>, filter_cutoff: Option<T>) -> Self {
        let mut filter = ReadingFilter::new(filter_cutoff, traj.dt);
        Self {
            outputs: traj.readings.iter().map(|z| filter.apply(z)).collect(),
            inputs: traj.controls.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.outputs.len().min(self.inputs.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Regression rows built episode by episode, with a seeded 70/15/15 split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDataset<T: Real> {
    pub role: NetRole,
    pub regressors: DMatrix<T>,
    pub targets: DMatrix<T>,
    pub episode_of_row: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.70, 0.15, 0.15);

impl<T: Real> TrainingDataset<T> {
    pub fn build(
        role: NetRole,
        feedback_taps: usize,
        input_taps: usize,
        episodes: &[EpisodeRecord<T>],
        split: (f64, f64, f64),
        seed: u64,
    ) -> Result<Self> {
        check_taps(feedback_taps, input_taps)?;
        let first = episodes
            .iter()
            .find(|e| !e.is_empty())
            .ok_or_else(|| Error::Precondition("dataset has no samples".into()))?;
        let ny = first.outputs[0].len();
        let ns = first.inputs[0].len();
        let d = regressor_dim(role, ny, ns, feedback_taps, input_taps);
        let o = match role {
            NetRole::Forward => ny,
            NetRole::Inverse => ns,
        };
        let mut xs: Vec<T> = Vec::new();
        let mut ts: Vec<T> = Vec::new();
        let mut owner = Vec::new();
        for (e, ep) in episodes.iter().enumerate() {
            if ep.outputs.iter().any(|y| y.len() != ny) || ep.inputs.iter().any(|s| s.len() != ns) {
                return Err(Error::Dimension {
                    context: "episode channel count",
                    expected: ny,
                    actual: ep.outputs.iter().map(|y| y.len()).find(|&l| l != ny).unwrap_or(ns),
                });
            }
            let len = ep.len();
            let start = match role {
                NetRole::Forward => (feedback_taps - 1).max(input_taps - 1),
                NetRole::Inverse => (feedback_taps - 1).max(input_taps),
            };
            for t in start..len.saturating_sub(1) {
                match role {
                    NetRole::Forward => {
                        for k in 0..feedback_taps {
                            xs.extend(ep.outputs[t - k].iter().copied());
                        }
                        for k in 0..input_taps {
                            xs.extend(ep.inputs[t - k].iter().copied());
                        }
                        ts.extend(ep.outputs[t + 1].iter().copied());
                    }
                    NetRole::Inverse => {
                        xs.extend(ep.outputs[t + 1].iter().copied());
                        for k in 0..feedback_taps {
                            xs.extend(ep.outputs[t - k].iter().copied());
                        }
                        for k in 1..=input_taps {
                            xs.extend(ep.inputs[t - k].iter().copied());
                        }
                        ts.extend(ep.inputs[t].iter().copied());
                    }
                }
                owner.push(e);
            }
        }
        let rows = owner.len();
        if rows < 3 {
            return Err(Error::Precondition(format!(
                "dataset has {rows} rows; at least 3 are needed for a split"
            )));
        }
        let regressors = DMatrix::from_row_slice(rows, d, &xs);
        let targets = DMatrix::from_row_slice(rows, o, &ts);
        if regressors.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Precondition("dataset contains non-finite values".into()));
        }
        let all: Vec<usize> = (0..rows).collect();
        let varying = |m: &DMatrix<T>| {
            let map = AffineMap::fit(m, &all);
            (0..m.ncols()).any(|c| {
                (0..rows).any(|r| (m[(r, c)] - map.offset[c]).abs() > T::lit(1e-12) * (T::one() + map.offset[c].abs()))
            })
        };
        if !varying(&regressors) {
            return Err(Error::Precondition(
                "degenerate dataset: regressors are constant".into(),
            ));
        }

        let (ftr, fva, fte) = split;
        if ftr <= 0.0 || fva < 0.0 || fte < 0.0 || ((ftr + fva + fte) - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(
                "split fractions must be non-negative, train > 0, and sum to 1".into(),
            ));
        }
        let mut perm = all;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((rows as f64) * ftr).round().max(1.0) as usize;
        let n_val = (((rows as f64) * fva).round() as usize).min(rows - n_train);
        let mut train = perm[..n_train].to_vec();
        let mut validation = perm[n_train..n_train + n_val].to_vec();
        let mut test = perm[n_train + n_val..].to_vec();
        train.sort_unstable();
        validation.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            role,
            regressors,
            targets,
            episode_of_row: owner,
            train,
            validation,
            test,
        })
    }

    pub fn rows(&self) -> usize {
        self.regressors.nrows()
    }

    pub fn regressor(&self, row: usize) -> DVector<T> {
        self.regressors.row(row).transpose()
    }

    pub fn target(&self, row: usize) -> DVector<T> {
        self.targets.row(row).transpose()
    }
}

/// Mean squared error in original units over `rows`, averaged over
/// channels.
pub fn mse<T: Real>(net: &NarxNet<T>, data: &TrainingDataset<T>, rows: &[usize]) -> Result<T> {
    if rows.is_empty() {
        return Ok(T::zero());
    }
    let mut acc = T::zero();
    for &r in rows {
        let e = net.forward(&data.regressor(r))? - data.target(r);
        acc += e.norm_squared();
    }
    Ok(acc / T::from_count(rows.len() * net.output_dim()))
}

fn normalized_mse<T: Real>(net: &NarxNet<T>, data: &TrainingDataset<T>, rows: &[usize]) -> T {
    if rows.is_empty() {
        return T::zero();
    }
    let mut acc = T::zero();
    for &r in rows {
        let xn = net.input_map.normalize(&data.regressor(r));
        let tn = net.output_map.normalize(&data.target(r));
        let (_, on) = net.forward_normalized(&xn);
        acc += (on - tn).norm_squared();
    }
    acc / T::from_count(rows.len() * net.output_dim())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOptions {
    pub max_epochs: usize,
    pub lambda_init: f64,
    /// λ is divided by this on an accepted step and multiplied on a rejected one.
    pub lambda_factor: f64,
    pub lambda_max: f64,
    /// Consecutive validation increases tolerated before stopping.
    pub patience: usize,
    /// Stop once the training MSE (normalized) falls below this.
    pub goal: f64,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            lambda_init: 1e-3,
            lambda_factor: 10.0,
            lambda_max: 1e10,
            patience: 6,
            goal: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    Goal,
    LambdaLimit,
}

/// Per-epoch MSEs are in normalized units (the quantity LM minimizes).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop: StopReason,
    pub test_mse: f64,
}

impl TrainingReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epoch,lambda,train_mse,val_mse")?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{},{},{}",
                e.epoch,
                crate::plant::format_sig17(e.lambda),
                crate::plant::format_sig17(e.train_mse),
                crate::plant::format_sig17(e.val_mse)
            )?;
        }
        Ok(())
    }
}

/// Levenberg–Marquardt on the normalized squared error over the training
/// split. Normalization is fitted on the training rows first. Returns the
/// weights with the lowest validation MSE.
pub fn train_lm<T: Real>(
    net: &NarxNet<T>,
    data: &TrainingDataset<T>,
    options: &TrainingOptions,
) -> Result<(NarxNet<T>, TrainingReport)> {
    if data.train.is_empty() {
        return Err(Error::Precondition("training split is empty".into()));
    }
    if data.role != net.role || data.regressors.ncols() != net.regressor_dim() {
        return Err(Error::Dimension {
            context: "dataset regressor width",
            expected: net.regressor_dim(),
            actual: data.regressors.ncols(),
        });
    }
    if data.targets.ncols() != net.output_dim() {
        return Err(Error::Dimension {
            context: "dataset target width",
            expected: net.output_dim(),
            actual: data.targets.ncols(),
        });
    }
    let mut net = net.clone();
    net.input_map = AffineMap::fit(&data.regressors, &data.train);
    net.output_map = AffineMap::fit(&data.targets, &data.train);

    let o = net.output_dim();
    let p = net.param_count();
    let n = data.train.len();
    let xn: Vec<DVector<T>> = data
        .train
        .iter()
        .map(|&r| net.input_map.normalize(&data.regressor(r)))
        .collect();
    let tn: Vec<DVector<T>> = data
        .train
        .iter()
        .map(|&r| net.output_map.normalize(&data.target(r)))
        .collect();
    let scale = T::from_count(n * o);
    let sse = |net: &NarxNet<T>| -> T {
        xn.iter()
            .zip(&tn)
            .fold(T::zero(), |a, (x, t)| a + (net.forward_normalized(x).1 - t).norm_squared())
    };

    let mut lambda = T::lit(options.lambda_init);
    let factor = T::lit(options.lambda_factor);
    let mut current = sse(&net);
    if !current.is_finite() {
        return Err(Error::TrainingDivergence { epoch: 0 });
    }
    let val0 = normalized_mse(&net, data, &data.validation);
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        lambda: lambda.as_f64(),
        train_mse: (current / scale).as_f64(),
        val_mse: val0.as_f64(),
    }];
    let mut best_val = val0;
    let mut best_epoch = 0;
    let mut best_net = net.clone();
    let mut rising = 0;
    let mut stop = StopReason::MaxEpochs;
    let mut jac = DMatrix::zeros(n * o, p);
    let mut resid = DVector::zeros(n * o);

    for epoch in 1..=options.max_epochs {
        if (current / scale).as_f64() <= options.goal {
            stop = StopReason::Goal;
            break;
        }
        for (k, (x, t)) in xn.iter().zip(&tn).enumerate() {
            let on = net.param_jacobian_into(x, &mut jac, k * o);
            resid.rows_mut(k * o, o).copy_from(&(on - t));
        }
        let jt = jac.transpose();
        let hess = &jt * &jac;
        let grad = &jt * &resid;
        let theta = net.params();
        let mut accepted = false;
        while lambda.as_f64() <= options.lambda_max {
            let mut damped = hess.clone();
            for i in 0..p {
                damped[(i, i)] += lambda;
            }
            let step = match damped.cholesky() {
                Some(c) => c.solve(&grad),
                None => {
                    lambda *= factor;
                    continue;
                }
            };
            let mut trial = net.clone();
            trial.set_params(&(&theta - step))?;
            let value = sse(&trial);
            if value.is_finite() && value < current {
                net = trial;
                current = value;
                lambda /= factor;
                accepted = true;
                break;
            }
            lambda *= factor;
        }
        if !accepted {
            if hess.iter().chain(grad.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(
                    "normal equations are not finite at the damping limit".into(),
                ));
            }
            stop = StopReason::LambdaLimit;
            break;
        }
        let val = normalized_mse(&net, data, &data.validation);
        let prev_val = epochs.last().map(|e| e.val_mse).unwrap_or(f64::INFINITY);
        epochs.push(EpochRecord {
            epoch,
            lambda: lambda.as_f64(),
            train_mse: (current / scale).as_f64(),
            val_mse: val.as_f64(),
        });
        if val < best_val || data.validation.is_empty() {
            best_val = val;
            best_epoch = epochs.len() - 1;
            best_net = net.clone();
        }
        if val.as_f64() > prev_val {
            rising += 1;
            if rising >= options.patience && !data.validation.is_empty() {
                stop = StopReason::EarlyStopping;
                break;
            }
        } else {
            rising = 0;
        }
    }
    let test_mse = mse(&best_net, data, &data.test)?.as_f64();
    Ok((
        best_net,
        TrainingReport {
            epochs,
            best_epoch,
            stop,
            test_mse,
        },
    ))
}

/// Affine local model `ŷ = y₀ + Ā δY + B̄ δS` of a forward net, with
/// `C̄ = I` and `D̄ = 0` on the predicted outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedNarx<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub operating_point: DVector<T>,
    pub output: DVector<T>,
}

impl<T: Real> LinearizedNarx<T> {
    pub fn predict(&self, x: &DVector<T>) -> DVector<T> {
        let ny = self.a.ncols();
        let dx = x - &self.operating_point;
        &self.output + &self.a * dx.rows(0, ny) + &self.b * dx.rows(ny, dx.len() - ny)
    }
}

/// Splits the regressor Jacobian into output-channel (`Ā`) and
/// input-channel (`B̄`) blocks.
pub fn linearize<T: Real>(net: &NarxNet<T>, x: &DVector<T>) -> Result<LinearizedNarx<T>> {
    let j = net.input_jacobian(x)?;
    let ny_cols = match net.role {
        NetRole::Forward => net.output_channels * net.feedback_taps,
        NetRole::Inverse => net.output_channels * (1 + net.feedback_taps),
    };
    let o = net.output_dim();
    Ok(LinearizedNarx {
        a: j.columns(0, ny_cols).into_owned(),
        b: j.columns(ny_cols, j.ncols() - ny_cols).into_owned(),
        c: DMatrix::identity(o, o),
        d: DMatrix::zeros(o, net.input_channels),
        operating_point: x.clone(),
        output: net.forward(x)?,
    })
}

/// Inverse-model control law: the inverse net evaluated at the desired
/// next output and the newest-first histories, clipped to `±limits`.
/// Returns the voltages and whether any channel was clipped.
pub fn inverse_control<T: Real>(
    net: &NarxNet<T>,
    desired: &DVector<T>,
    outputs: &[&DVector<T>],
    past_inputs: &[&DVector<T>],
    limits: &DVector<T>,
) -> Result<(DVector<T>, bool)> {
    if outputs.len() < net.feedback_taps || past_inputs.len() < net.input_taps {
        return Err(Error::WarmUp {
            needed: net.feedback_taps.max(net.input_taps + 1),
            available: outputs.len().min(past_inputs.len() + 1),
        });
    }
    let x = inverse_regressor(net, desired, outputs, past_inputs);
    let mut v = net.forward(&x)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("inverse model produced a non-finite voltage".into()));
    }
    let mut clipped = false;
    for (vi, &l) in v.iter_mut().zip(limits.iter()) {
        let c = vi.max(-l).min(l);
        clipped |= c != *vi;
        *vi = c;
    }
    Ok((v, clipped))
}

/// Prediction-error gate with one damped gradient step per accepted pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NndAdaptor<T: Real> {
    pub error_threshold: T,
    pub adaptation_rate: T,
    /// Number of recent pair errors averaged by the gate.
    pub window: usize,
    accepted: u64,
    rejected: u64,
    recent: VecDeque<T>,
}

impl<T: Real> NndAdaptor<T> {
    pub fn new(error_threshold: T, adaptation_rate: T, window: usize) -> Result<Self> {
        if !(adaptation_rate >= T::zero()) || !adaptation_rate.is_finite() {
            return Err(Error::Domain {
                what: "adaptation rate",
                value: adaptation_rate.as_f64(),
                domain: "[0, inf)".into(),
            });
        }
        if error_threshold.as_f64().is_nan() || window == 0 {
            return Err(Error::Precondition(
                "error threshold must not be NaN and window must be positive".into(),
            ));
        }
        Ok(Self {
            error_threshold,
            adaptation_rate,
            window,
            accepted: 0,
            rejected: 0,
            recent: VecDeque::with_capacity(window),
        })
    }

    /// Gate that never opens.
    pub fn closed() -> Self {
        Self::new(T::lit(f64::INFINITY), T::zero(), 1).expect("valid constants")
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Scores one observed pair and adapts `net` if the gate opens.
    pub fn update(
        &mut self,
        net: &mut NarxNet<T>,
        regressor: &DVector<T>,
        target: &DVector<T>,
    ) -> Result<bool> {
        if regressor.len() != net.regressor_dim() || target.len() != net.output_dim() {
            return Err(Error::Dimension {
                context: "NND pair",
                expected: net.regressor_dim() + net.output_dim(),
                actual: regressor.len() + target.len(),
            });
        }
        if regressor.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            self.rejected += 1;
            return Ok(false);
        }
        let xn = net.input_map.normalize(regressor);
        let tn = net.output_map.normalize(target);
        let (_, on) = net.forward_normalized(&xn);
        let err = on - tn;
        let score = (err.norm_squared() / T::from_count(err.len())).sqrt();
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(score);
        let gate = self.recent.iter().fold(T::zero(), |a, &b| a + b)
            / T::from_count(self.recent.len());
        if !(gate > self.error_threshold) {
            self.rejected += 1;
            return Ok(false);
        }
        let mut jac = DMatrix::zeros(net.output_dim(), net.param_count());
        net.param_jacobian_into(&xn, &mut jac, 0);
        let grad = jac.tr_mul(&err);
        let damping = T::one() + jac.norm_squared();
        let theta = net.params() - grad * (self.adaptation_rate / damping);
        net.set_params(&theta)?;
        self.accepted += 1;
        Ok(true)
    }
}

/// First-order low-pass on sensor readings; passthrough without a cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadingFilter<T: Real> {
    alpha: Option<T>,
    state: Option<DVector<T>>,
}

impl<T: Real> ReadingFilter<T> {
    pub fn new(cutoff: Option<T>, dt: T) -> Self {
        Self {
            alpha: cutoff.map(|fc| T::one() - (-T::two_pi() * fc * dt).exp()),
            state: None,
        }
    }

    pub fn apply(&mut self, z: &DVector<T>) -> DVector<T> {
        let Some(alpha) = self.alpha else {
            return z.clone();
        };
        let next = match &self.state {
            Some(s) => s + (z - s) * alpha,
            None => z.clone(),
        };
        self.state = Some(next.clone());
        next
    }
}

/// How the desired next output is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesiredOutput<T> {
    Zero,
    /// `factor ·` forward-net prediction with `S(t) = 0`.
    ScaledPrediction(T),
}

/// Inverse-model controller with optional forward model and NND adaptation.
#[derive(Debug, Clone)]
pub struct NarxController<T: Real> {
    inverse: NarxNet<T>,
    forward: Option<NarxNet<T>>,
    desired: DesiredOutput<T>,
    limits: DVector<T>,
    filter: ReadingFilter<T>,
    outputs: VecDeque<DVector<T>>,
    inputs: VecDeque<DVector<T>>,
    inverse_adaptor: Option<NndAdaptor<T>>,
    forward_adaptor: Option<NndAdaptor<T>>,
    last_desired: Option<DVector<T>>,
    tracking: Vec<(T, T)>,
    clipped_steps: usize,
}

impl<T: Real> NarxController<T> {
    pub fn new(
        inverse: NarxNet<T>,
        forward: Option<NarxNet<T>>,
        desired: DesiredOutput<T>,
        limits: DVector<T>,
        filter_cutoff: Option<T>,
        dt: T,
    ) -> Result<Self> {
        inverse.validate()?;
        if inverse.role != NetRole::Inverse {
            return Err(Error::Precondition("controller needs an inverse-role net".into()));
        }
        if let Some(f) = &forward {
            f.validate()?;
            if f.role != NetRole::Forward
                || f.output_channels != inverse.output_channels
                || f.input_channels != inverse.input_channels
            {
                return Err(Error::Precondition(
                    "forward net must match the inverse net's channels".into(),
                ));
            }
        } else if matches!(desired, DesiredOutput::ScaledPrediction(_)) {
            return Err(Error::Precondition(
                "predicted desired output needs a forward net".into(),
            ));
        }
        if limits.len() != inverse.input_channels {
            return Err(Error::Dimension {
                context: "NARX voltage limits",
                expected: inverse.input_channels,
                actual: limits.len(),
            });
        }
        Ok(Self {
            inverse,
            forward,
            desired,
            limits,
            filter: ReadingFilter::new(filter_cutoff, dt),
            outputs: VecDeque::new(),
            inputs: VecDeque::new(),
            inverse_adaptor: None,
            forward_adaptor: None,
            last_desired: None,
            tracking: Vec::new(),
            clipped_steps: 0,
        })
    }

    pub fn with_adaptation(
        mut self,
        forward: Option<NndAdaptor<T>>,
        inverse: Option<NndAdaptor<T>>,
    ) -> Self {
        self.forward_adaptor = forward;
        self.inverse_adaptor = inverse;
        self
    }

    pub fn inverse_net(&self) -> &NarxNet<T> {
        &self.inverse
    }

    pub fn forward_net(&self) -> Option<&NarxNet<T>> {
        self.forward.as_ref()
    }

    pub fn forward_adaptor(&self) -> Option<&NndAdaptor<T>> {
        self.forward_adaptor.as_ref()
    }

    pub fn inverse_adaptor(&self) -> Option<&NndAdaptor<T>> {
        self.inverse_adaptor.as_ref()
    }

    pub fn clipped_steps(&self) -> usize {
        self.clipped_steps
    }

    /// `(t, ‖y(t) − y_des(t)‖² / n_y)` for every step with a prior target.
    pub fn tracking_errors(&self) -> &[(T, T)] {
        &self.tracking
    }

    pub fn tracking_mse_since(&self, start: T) -> T {
        let tail: Vec<T> = self
            .tracking
            .iter()
            .filter(|(t, _)| *t >= start)
            .map(|&(_, e)| e)
            .collect();
        if tail.is_empty() {
            return T::zero();
        }
        tail.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(tail.len())
    }

    fn history_depth(&self) -> usize {
        self.inverse.feedback_taps.max(self.inverse.input_taps) + 2
    }

    /// Adapts on the pairs completed by the newest output `y(t)`.
    fn adapt(&mut self) -> Result<()> {
        let ys: Vec<&DVector<T>> = self.outputs.iter().collect();
        let ss: Vec<&DVector<T>> = self.inputs.iter().collect();
        if let (Some(ad), Some(net)) = (self.forward_adaptor.as_mut(), self.forward.as_mut()) {
            if ys.len() > net.feedback_taps && ss.len() >= net.input_taps {
                let x = forward_regressor(net, &ys[1..], &ss);
                ad.update(net, &x, ys[0])?;
            }
        }
        if let Some(ad) = self.inverse_adaptor.as_mut() {
            let net = &mut self.inverse;
            if ys.len() > net.feedback_taps && ss.len() > net.input_taps {
                let x = inverse_regressor(net, ys[0], &ys[1..], &ss[1..]);
                ad.update(net, &x, ss[0])?;
            }
        }
        Ok(())
    }
}

impl<T: Real> Controller<T> for NarxController<T> {
    fn name(&self) -> &str {
        "narx"
    }

    fn control(&mut self, obs: &Observation<'_, T>) -> Result<ControlAction<T>> {
        let y = self.filter.apply(obs.readings);
        if let Some(prev) = self.last_desired.take() {
            let e = (&y - prev).norm_squared() / T::from_count(y.len());
            self.tracking.push((obs.time, e));
        }
        self.outputs.push_front(y);
        self.outputs.truncate(self.history_depth());
        self.adapt()?;

        let ys: Vec<&DVector<T>> = self.outputs.iter().collect();
        let ss: Vec<&DVector<T>> = self.inputs.iter().collect();
        let m = self.inverse.input_channels;
        if ys.len() < self.inverse.feedback_taps || ss.len() < self.inverse.input_taps {
            return Ok(ControlAction::plain(DVector::zeros(m)));
        }
        let desired = match (self.desired, &self.forward) {
            (DesiredOutput::Zero, _) => DVector::zeros(self.inverse.output_channels),
            (DesiredOutput::ScaledPrediction(k), Some(f)) => {
                let zero = DVector::zeros(m);
                let mut inputs: Vec<&DVector<T>> = vec![&zero];
                inputs.extend(ss.iter().copied());
                f.forward(&forward_regressor(f, &ys, &inputs))? * k
            }
            (DesiredOutput::ScaledPrediction(_), None) => unreachable!("checked in new"),
        };
        let (v, clipped) = inverse_control(&self.inverse, &desired, &ys, &ss, &self.limits)?;
        self.clipped_steps += clipped as usize;
        self.last_desired = Some(desired);
        Ok(ControlAction::plain(v))
    }

    fn applied(&mut self, voltages: &DVector<T>) {
        self.inputs.push_front(voltages.clone());
        self.inputs.truncate(self.history_depth());
    }
}

/// Band-limited Gaussian voltage excitation for identification runs.
#[derive(Debug, Clone)]
pub struct ExcitationController<T: Real> {
    std: T,
    alpha: T,
    state: DVector<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> ExcitationController<T> {
    pub fn new(patches: usize, std: T, bandwidth: T, dt: T, seed: u64) -> Self {
        Self {
            std,
            alpha: T::one() - (-T::two_pi() * bandwidth * dt).exp(),
            state: DVector::zeros(patches),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<T: Real> Controller<T> for ExcitationController<T> {
    fn name(&self) -> &str {
        "excitation"
    }

    fn control(&mut self, _obs: &Observation<'_, T>) -> Result<ControlAction<T>> {
        for s in self.state.iter_mut() {
            let w: f64 = self.rng.sample(StandardNormal);
            *s += (T::lit(w) * self.std - *s) * self.alpha;
        }
        Ok(ControlAction::plain(self.state.clone()))
    }
}

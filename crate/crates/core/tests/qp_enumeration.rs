//! Box QP solutions checked against exhaustive active-set enumeration.

use flexbeam::qp::{solve_box_qp, QpProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tries every free/lower/upper assignment and keeps the best feasible point.
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
        let free: Vec<usize> = (0..d).filter(|&i| state[i] == 0).collect();
        for i in 0..d {
            match state[i] {
                1 => x[i] = lo[i],
                2 => x[i] = hi[i],
                _ => {}
            }
        }
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
        if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.unwrap().1
}

#[test]
fn random_six_dimensional_problems_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut active_total = 0;
    for _ in 0..200 {
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let h = a.transpose() * &a + DMatrix::identity(6, 6);
        let g = DVector::from_fn(6, |_, _| rng.random_range(-4.0..4.0));
        let lo = DVector::from_fn(6, |_, _| -rng.random_range(0.1..1.0));
        let hi = DVector::from_fn(6, |_, _| rng.random_range(0.1..1.0));
        let p = QpProblem::new(h, g, lo, hi);
        let sol = solve_box_qp(&p, 1e-8, 3000).unwrap();
        let oracle = enumerate(&p);
        assert!((&sol.minimizer - &oracle).amax() < 1e-8);
        assert!(sol.kkt_residual < 1e-8);
        active_total += (0..6)
            .filter(|&i| sol.lower_multipliers[i] > 0.0 || sol.upper_multipliers[i] > 0.0)
            .count();
    }
    // the generator must exercise constrained cases
    assert!(active_total > 200);
}

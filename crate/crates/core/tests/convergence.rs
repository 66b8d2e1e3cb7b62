//! Manufactured-solution and Fourier-mode convergence studies.

use std::f64::consts::PI;

use mfglab::coupling::make_kernel;
use mfglab::fp::{fp_residual_forced, solve_fp_forced};
use mfglab::grid::{gradient, laplacian, spectral_diffusion_step, DiffusionScheme};
use mfglab::hamiltonian::{make_nonconvex_sine, HamiltonianModel};
use mfglab::hjb::{hjb_residual_forced, solve_hjb, solve_hjb_forced};
use mfglab::{Field, MfgProblem, SpaceTimeField, TorusGrid};

const TAU: f64 = 2.0 * PI;

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

#[test]
fn stencil_operators_are_second_order() {
    let mut grad_err = Vec::new();
    let mut lap_err = Vec::new();
    for n in [32, 64, 128] {
        let g = TorusGrid::new(1, n, 1.0, 1).unwrap();
        let f = Field::from_fn(g, |x| (TAU * x[0]).sin() + 0.3 * (2.0 * TAU * x[0]).cos());
        let df = Field::from_fn(g, |x| TAU * (TAU * x[0]).cos() - 0.6 * TAU * (2.0 * TAU * x[0]).sin());
        let d2f = Field::from_fn(g, |x| {
            -TAU * TAU * (TAU * x[0]).sin() - 1.2 * TAU * TAU * (2.0 * TAU * x[0]).cos()
        });
        let gr = Field::new(g, gradient(&f).component(0).to_vec()).unwrap();
        grad_err.push(gr.sub(&df).max_abs());
        lap_err.push(laplacian(&f).sub(&d2f).max_abs());
    }
    for errs in [&grad_err, &lap_err] {
        for w in errs.windows(2) {
            let p = order(w[0], w[1]);
            assert!((1.8..=2.2).contains(&p), "order {p} from {errs:?}");
        }
    }
}

#[test]
fn two_dimensional_laplacian_order() {
    let mut errs = Vec::new();
    for n in [16, 32, 64] {
        let g = TorusGrid::new(2, n, 1.0, 1).unwrap();
        let f = Field::from_fn(g, |x| (TAU * x[0]).sin() * (TAU * x[1]).cos());
        let exact = f.scale(-2.0 * TAU * TAU);
        errs.push(laplacian(&f).sub(&exact).max_abs());
    }
    for w in errs.windows(2) {
        let p = order(w[0], w[1]);
        assert!((1.8..=2.2).contains(&p), "order {p}");
    }
}

#[test]
fn heat_step_schemes_agree_on_a_mode() {
    let g = TorusGrid::new(1, 64, 1.0, 1).unwrap();
    let f = Field::from_fn(g, |x| (TAU * x[0]).sin());
    let dt = 1e-3;
    let exact = f.scale((-TAU * TAU * dt).exp());
    let spectral = spectral_diffusion_step(&f, 1.0, dt).unwrap();
    assert!(spectral.sub(&exact).max_abs() < 1e-14);
    let op = mfglab::grid::DiffusionOperator::new(g, 1.0, dt, DiffusionScheme::CrankNicolson).unwrap();
    // CN on the stencil symbol: O(h²) in space
    assert!(op.apply(&f).sub(&exact).max_abs() < 1e-4);
}

/// `u*(x,t) = t + 0.2(1+t) sin 2πx` with `m ≡ 1` and the sine Hamiltonian:
/// returns the problem, density, forcing and exact solution.
fn hjb_mms_setup(n: usize, nt: usize) -> (MfgProblem, SpaceTimeField, SpaceTimeField, SpaceTimeField) {
    let c = 0.5;
    let g = TorusGrid::new(1, n, 0.2, nt).unwrap();
    let exact = |x: f64, t: f64| t + 0.2 * (1.0 + t) * (TAU * x).sin();
    let forcing = SpaceTimeField::from_fn(g, |x, t| {
        let x = x[0];
        let ut = 1.0 + 0.2 * (TAU * x).sin();
        let ux = 0.2 * (1.0 + t) * TAU * (TAU * x).cos();
        let uxx = -0.2 * (1.0 + t) * TAU * TAU * (TAU * x).sin();
        // minus the coupling of m ≡ 1, which is 1 for any unit-mass kernel
        ut + 0.5 * c * ux.sin() - uxx - 1.0
    });
    let p = MfgProblem::new(
        g,
        make_nonconvex_sine(c, 1).unwrap(),
        Some(make_kernel(g, 0.25).unwrap()),
        Field::from_fn(g, |x| exact(x[0], 0.0)),
        Field::constant(g, 1.0),
    )
    .unwrap();
    let m = SpaceTimeField::constant_in_time(&Field::constant(g, 1.0), g);
    let truth = SpaceTimeField::from_fn(g, |x, t| exact(x[0], t));
    (p, m, forcing, truth)
}

#[test]
fn hjb_manufactured_solution_converges_first_order_in_time() {
    let mut errs = Vec::new();
    let mut resids = Vec::new();
    for (n, nt) in [(32, 50), (64, 100), (128, 200)] {
        let (p, m, forcing, truth) = hjb_mms_setup(n, nt);
        let u = solve_hjb_forced(&p, &m, Some(&forcing)).unwrap();
        errs.push(u.sup_distance(&truth));
        resids.push(hjb_residual_forced(&p, &m, &truth, &forcing).unwrap());
    }
    for w in errs.windows(2) {
        let p = order(w[0], w[1]);
        assert!(p >= 0.9, "observed order {p} from {errs:?}");
    }
    assert!(errs[2] < 5e-3, "{errs:?}");
    // the exact solution's residual is the truncation error of the stencils
    for w in resids.windows(2) {
        let p = order(w[0], w[1]);
        assert!(p >= 1.8, "residual order {p} from {resids:?}");
    }
}

/// `m*(x,t) = 1 + 0.3(1 + t) cos 2πx` transported by `u(x,t) = 0.2 sin 2πx`.
fn fp_mms(n: usize, nt: usize) -> (f64, f64) {
    let t_final = 0.2;
    let c = 1.0;
    let g = TorusGrid::new(1, n, t_final, nt).unwrap();
    let exact = |x: f64, t: f64| 1.0 + 0.3 * (1.0 + t) * (TAU * x).cos();
    let h = make_nonconvex_sine(c, 1).unwrap();
    let u = SpaceTimeField::from_fn(g, |x, _| 0.2 * (TAU * x[0]).sin());
    // −m_t − (DH(u_x) m)_x − m_xx = g
    let forcing = SpaceTimeField::from_fn(g, |x, t| {
        let x = x[0];
        let m = exact(x, t);
        let mt = 0.3 * (TAU * x).cos();
        let mx = -0.3 * (1.0 + t) * TAU * (TAU * x).sin();
        let mxx = -0.3 * (1.0 + t) * TAU * TAU * (TAU * x).cos();
        let ux = 0.2 * TAU * (TAU * x).cos();
        let uxx = -0.2 * TAU * TAU * (TAU * x).sin();
        let dh = 0.5 * c * ux.cos();
        let dh_x = -0.5 * c * ux.sin() * uxx;
        -mt - (dh_x * m + dh * mx) - mxx
    });
    let m_t = Field::from_fn(g, |x| exact(x[0], t_final));
    let p = MfgProblem::new(g, h, None, Field::zeros(g), m_t.scale(1.0 / m_t.integral())).unwrap();
    let m = solve_fp_forced(&p, &u, &forcing).unwrap();
    let truth = SpaceTimeField::from_fn(g, |x, t| exact(x[0], t));
    let resid = fp_residual_forced(&p, &u, &truth, &forcing).unwrap();
    (m.sup_distance(&truth), resid)
}

#[test]
fn fp_manufactured_solution_converges() {
    let (errs, resids): (Vec<f64>, Vec<f64>) = [(32, 50), (64, 100), (128, 200)]
        .into_iter()
        .map(|(n, nt)| fp_mms(n, nt))
        .unzip();
    for w in errs.windows(2) {
        let p = order(w[0], w[1]);
        assert!(p >= 0.9, "observed order {p} from {errs:?}");
    }
    // the exact solution's residual is the h² truncation error of the stencils
    for w in resids.windows(2) {
        let p = order(w[0], w[1]);
        assert!((1.8..=2.2).contains(&p), "residual order {p} from {resids:?}");
    }
}

#[test]
fn halving_dt_changes_hjb_by_first_order() {
    let run = |nt: usize| {
        let p = mfglab::presets::sine(0.5, 64, nt).unwrap();
        let g = *p.grid();
        let m = SpaceTimeField::from_fn(g, |x, t| 1.0 + 0.5 * (TAU * (x[0] - t)).cos());
        solve_hjb(&p, &m).unwrap().last().clone()
    };
    let (a, b, c) = (run(50), run(100), run(200));
    let d1 = a.sub(&b).max_abs();
    let d2 = b.sub(&c).max_abs();
    let p = order(d1, d2);
    assert!((0.8..=1.3).contains(&p), "{d1} {d2} order {p}");
}

#[test]
fn heat_decay_in_two_dimensions() {
    let g = TorusGrid::new(2, 32, 0.01, 40).unwrap();
    let u0 = Field::from_fn(g, |x| (TAU * x[0]).sin() * (TAU * x[1]).sin());
    let p = MfgProblem::new(g, HamiltonianModel::zero(2), None, u0.clone(), Field::constant(g, 1.0)).unwrap();
    let m = SpaceTimeField::constant_in_time(&Field::constant(g, 1.0), g);
    let u = solve_hjb(&p, &m).unwrap();
    let exact = u0.scale((-2.0 * TAU * TAU * 0.01_f64).exp());
    assert!(u.last().sub(&exact).max_abs() / exact.max_abs() < 1e-12);
}

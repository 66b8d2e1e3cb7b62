//! Checks of the a priori estimates on computed solutions: the admissible set,
//! the gradient bound, the adjoint representation of `DU`, the energy
//! inequalities and the monotone uniqueness functional.

use serde::{Deserialize, Serialize};

use crate::coupling::{bump_field, half_convolve, validate_mollifier};
use crate::error::{MfgError, Result};
use crate::fixed_point::XSetCheck;
use crate::fp::{fp_residual, solve_fp, transport_in_s, FluxScheme};
use crate::grid::{face_gradient, gradient, Field, SpaceTimeField, VectorField};
use crate::hamiltonian::check_a4;
use crate::hjb::{hjb_residual, midpoint, solve_hjb};
use crate::problem::MfgProblem;

/// Lower bound on `m` for membership in X.
pub const X_MIN_TOL: f64 = -1e-10;
/// Mass error allowed for membership in X.
pub const X_MASS_TOL: f64 = 1e-9;
/// Relative slack in the gradient bound.
pub const GRADIENT_SLACK: f64 = 1.05;
/// Multiple of the scheme-order estimate accepted as a near-solution residual.
pub const RESIDUAL_FACTOR: f64 = 10.0;

pub fn x_set_check(m: &SpaceTimeField, m_cap: f64) -> XSetCheck {
    let min_m = m.min();
    let max_m = m.max();
    let mass_err = m
        .slices()
        .iter()
        .map(|s| (s.integral() - 1.0).abs())
        .fold(0.0, f64::max);
    XSetCheck {
        min_m,
        max_m,
        mass_err,
        m_cap,
        overshoot: max_m / m_cap - 1.0,
        holds: min_m >= X_MIN_TOL && mass_err <= X_MASS_TOL,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBoundReport {
    /// `max_{k,x,i} |∂_i u|`.
    pub lhs: f64,
    /// `T·M·‖Dρ‖_∞ + ‖Du₀‖_∞`.
    pub rhs: f64,
    pub holds: bool,
    /// Observed `max |D²u|` (monitored only).
    pub d2u_sup: f64,
}

fn second_derivative_sup(u: &Field) -> f64 {
    let g = gradient(u);
    let grid = *u.grid();
    (0..grid.dim())
        .map(|i| gradient(&Field::from_raw(grid, g.component(i).to_vec())).max_component_abs())
        .fold(0.0, f64::max)
}

pub fn gradient_bound_check(u: &SpaceTimeField, problem: &MfgProblem) -> Result<GradientBoundReport> {
    problem.check_field(u)?;
    let lhs = u
        .slices()
        .iter()
        .map(|s| gradient(s).max_component_abs())
        .fold(0.0, f64::max);
    let rhs = problem.grid().t_final() * problem.m_cap() * problem.d_rho_sup()
        + gradient(problem.u0()).max_component_abs();
    let d2u_sup = u.slices().iter().map(second_derivative_sup).fold(0.0, f64::max);
    Ok(GradientBoundReport {
        lhs,
        rhs,
        holds: lhs <= GRADIENT_SLACK * rhs,
        d2u_sup,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointReport {
    pub x0: usize,
    pub t0: usize,
    pub mollify_width: f64,
    /// `⟨∂_i U(·,t₀), σ(·,t₀)⟩` per component.
    pub lhs: Vec<f64>,
    /// `Σ_k dt ⟨∂_i F^{k+½}, Sσ^{k+1}⟩ + ⟨∂_i u₀, σ(·,0)⟩` per component.
    pub rhs: Vec<f64>,
    /// `max_i |lhs_i − rhs_i|`.
    pub gap: f64,
    pub sigma_mass_err: f64,
    pub sigma_min: f64,
}

/// Compares the derivative of the HJB solution at `(x0, t0)` with its
/// representation through the adjoint density `σ`, started from a mollified
/// delta at `x0` and transported backward to `t = 0` with drift `DH(DU)`.
pub fn adjoint_representation_check(
    problem: &MfgProblem,
    m: &SpaceTimeField,
    x0: usize,
    t0: usize,
    mollify_width: f64,
) -> Result<AdjointReport> {
    let grid = *problem.grid();
    validate_mollifier(&grid, mollify_width)?;
    if t0 == 0 || t0 > grid.nt() {
        return Err(MfgError::param("t0", format!("time index must lie in 1..={}", grid.nt())));
    }
    if x0 >= grid.len() {
        return Err(MfgError::param("x0", "node index out of range"));
    }
    let u = solve_hjb(problem, m)?;
    let hm = problem.hamiltonian();
    let heat = problem.diffusion_operator();
    let delta = bump_field(grid, grid.coords(x0), mollify_width);

    // s-index j holds t-index t0 − j
    let sigma_s = transport_in_s(
        grid,
        &heat,
        t0,
        delta.clone(),
        FluxScheme::Central,
        |j| {
            let dh = hm.grad_field(&gradient(u.slice(t0 - j - 1)));
            VectorField::from_raw(
                grid,
                dh.components().iter().map(|c| c.iter().map(|x| -x).collect()).collect(),
            )
        },
        |_| None,
    )?;
    let sigma = |k: usize| &sigma_s[t0 - k];

    let source = problem.coupling_slices(m)?;
    let dim = grid.dim();
    let du_t0 = gradient(u.slice(t0));
    let lhs: Vec<f64> = (0..dim)
        .map(|i| Field::from_raw(grid, du_t0.component(i).to_vec()).dot(&delta))
        .collect();
    let du0 = gradient(problem.u0());
    let mut rhs: Vec<f64> = (0..dim)
        .map(|i| Field::from_raw(grid, du0.component(i).to_vec()).dot(sigma(0)))
        .collect();
    for k in 0..t0 {
        let df = gradient(&midpoint(&source[k], &source[k + 1]));
        let smoothed = heat.apply(sigma(k + 1));
        for (i, r) in rhs.iter_mut().enumerate() {
            *r += grid.dt() * Field::from_raw(grid, df.component(i).to_vec()).dot(&smoothed);
        }
    }
    let gap = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let sigma_mass_err = sigma_s
        .iter()
        .map(|s| (s.integral() - 1.0).abs())
        .fold(0.0, f64::max);
    let sigma_min = sigma_s.iter().map(Field::min).fold(f64::INFINITY, f64::min);
    Ok(AdjointReport {
        x0,
        t0,
        mollify_width,
        lhs,
        rhs,
        gap,
        sigma_mass_err,
        sigma_min,
    })
}

/// A computed pair `(u, m)` together with the problem it should solve.
#[derive(Clone, Copy, Debug)]
pub struct Trajectory<'a> {
    pub problem: &'a MfgProblem,
    pub u: &'a SpaceTimeField,
    pub m: &'a SpaceTimeField,
}

/// Tolerance on the boundary data `u(·,0) = u₀`, `m(·,T) = m_T`, relative to `1 + ‖data‖_∞`.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// Floor for the scheme-order residual estimate.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub hjb: f64,
    pub fp: f64,
    /// `10·` the HJB residual reached by the solver itself for the given `m`.
    pub hjb_budget: f64,
    /// `10·` the FP residual reached by the solver itself for the given `u`.
    pub fp_budget: f64,
    /// `max(‖u(·,0) − u₀‖_∞, ‖m(·,T) − m_T‖_∞)`.
    pub boundary_err: f64,
    pub holds: bool,
}

/// Residuals of `(u, m)` against a scheme-order budget. The budget for each
/// equation is [`RESIDUAL_FACTOR`] times the residual of the discrete solution
/// of that equation with the same partner field, so it measures what the
/// discretization attains on this data rather than a generic constant.
pub fn residual_check(t: Trajectory<'_>) -> Result<ResidualCheck> {
    let p = t.problem;
    let hjb = hjb_residual(p, t.m, t.u)?;
    let fp = fp_residual(p, t.u, t.m)?;
    let hjb_ref = hjb_residual(p, t.m, &solve_hjb(p, t.m)?)?;
    let fp_ref = fp_residual(p, t.u, &solve_fp(p, t.u)?)?;
    let hjb_budget = RESIDUAL_FACTOR * hjb_ref.max(RESIDUAL_FLOOR);
    let fp_budget = RESIDUAL_FACTOR * fp_ref.max(RESIDUAL_FLOOR);
    let init = t.u.slice(0).sub(p.u0()).max_abs() / (1.0 + p.u0().max_abs());
    let term = t.m.last().sub(p.m_t()).max_abs() / (1.0 + p.m_t().max_abs());
    let boundary_err = init.max(term);
    Ok(ResidualCheck {
        hjb,
        fp,
        hjb_budget,
        fp_budget,
        boundary_err,
        holds: hjb <= hjb_budget && fp <= fp_budget && boundary_err <= BOUNDARY_TOL,
    })
}

fn require_near_solution(t: Trajectory<'_>) -> Result<()> {
    let r = residual_check(t)?;
    if r.boundary_err > BOUNDARY_TOL {
        return Err(MfgError::ResidualTooLarge { which: "boundary data", residual: r.boundary_err, budget: BOUNDARY_TOL });
    }
    if r.hjb > r.hjb_budget {
        return Err(MfgError::ResidualTooLarge { which: "hjb", residual: r.hjb, budget: r.hjb_budget });
    }
    if r.fp > r.fp_budget {
        return Err(MfgError::ResidualTooLarge { which: "fokker-planck", residual: r.fp, budget: r.fp_budget });
    }
    Ok(())
}

fn check_pair(a: Trajectory<'_>, b: Trajectory<'_>) -> Result<()> {
    let grid = a.problem.grid();
    if grid != b.problem.grid() {
        return Err(MfgError::GridMismatch);
    }
    for t in [a, b] {
        t.problem.check_field(t.u)?;
        t.problem.check_field(t.m)?;
    }
    require_near_solution(a)?;
    require_near_solution(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiSeries {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    /// `max_k (e^{−t_{k+1}/2}φ_{k+1} − e^{−t_k/2}φ_k)⁺`.
    pub decay_violation: f64,
}

/// `φ(t) = ∫ (u¹−u²)(m²−m¹) + (u¹−u²)²/4 − (m¹−m²)²` per slice, without the residual gate.
pub fn phi_series(
    u1: &SpaceTimeField,
    m1: &SpaceTimeField,
    u2: &SpaceTimeField,
    m2: &SpaceTimeField,
) -> Result<PhiSeries> {
    let grid = *u1.grid();
    if [u2.grid(), m1.grid(), m2.grid()].iter().any(|g| **g != grid) {
        return Err(MfgError::GridMismatch);
    }
    let phi: Vec<f64> = (0..=grid.nt())
        .map(|k| {
            let w = u1.slice(k).sub(u2.slice(k));
            let mu = m1.slice(k).sub(m2.slice(k));
            -w.dot(&mu) + 0.25 * w.dot(&w) - mu.dot(&mu)
        })
        .collect();
    let times: Vec<f64> = (0..=grid.nt()).map(|k| grid.time(k)).collect();
    let decay_violation = (0..grid.nt())
        .map(|k| (-0.5 * times[k + 1]).exp() * phi[k + 1] - (-0.5 * times[k]).exp() * phi[k])
        .fold(0.0, f64::max);
    Ok(PhiSeries {
        times,
        phi,
        decay_violation,
    })
}

/// [`phi_series`] for two near-solutions; fails with
/// [`MfgError::ResidualTooLarge`] if either pair misses its PDE residual budget.
pub fn phi_functional(a: Trajectory<'_>, b: Trajectory<'_>) -> Result<PhiSeries> {
    check_pair(a, b)?;
    phi_series(a.u, a.m, b.u, b.m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstants {
    pub c0: f64,
    pub m_cap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub imp1_viol: f64,
    pub imp2_viol: f64,
    pub imp3_viol: f64,
    pub constants_used: EnergyConstants,
    /// `max_t ∫|ρ*μ|²`. All three inequalities are quadratic in the
    /// differences, so violations are best read relative to this.
    pub difference_scale: f64,
}

/// `∫|D_h f|²` with forward differences, whose discrete Poincaré constant
/// on the unit torus is at least 16.
pub fn dirichlet_energy(f: &Field) -> f64 {
    face_gradient(f).squared_norm_integral()
}

/// Largest clipped violations of the three differential inequalities for
/// `w = u¹−u²`, `μ = m¹−m²`, with `d/dt` by centred differences at interior times:
///
/// * `d/dt ∫w(m²−m¹) ≤ −∫|ρ*μ|² + 2c₀M∫|Dw|²`
/// * `d/dt ∫w² ≤ −∫|Dw|² + (1/4 + c₀²)∫w² + 4∫|ρ*μ|²`
/// * `d/dt ∫−μ² ≤ −(2 − c₀(2+M))∫μ² + c₀M∫|Dw|²`
pub fn energy_inequalities(a: Trajectory<'_>, b: Trajectory<'_>) -> Result<EnergyReport> {
    check_pair(a, b)?;
    let grid = *a.problem.grid();
    let c0 = check_a4(a.problem.hamiltonian(), 1.0)?.c0;
    let m_cap = a.problem.m_cap().max(b.problem.m_cap());
    let nt = grid.nt();

    let mut cross = Vec::with_capacity(nt + 1);
    let mut w_sq = Vec::with_capacity(nt + 1);
    let mut mu_sq = Vec::with_capacity(nt + 1);
    let mut dw_sq = Vec::with_capacity(nt + 1);
    let mut rho_mu_sq = Vec::with_capacity(nt + 1);
    for k in 0..=nt {
        let w = a.u.slice(k).sub(b.u.slice(k));
        let mu = a.m.slice(k).sub(b.m.slice(k));
        cross.push(-w.dot(&mu));
        w_sq.push(w.dot(&w));
        mu_sq.push(mu.dot(&mu));
        dw_sq.push(dirichlet_energy(&w));
        let rm = match a.problem.kernel() {
            Some(kernel) => half_convolve(kernel, &mu)?,
            None => Field::zeros(grid),
        };
        rho_mu_sq.push(rm.dot(&rm));
    }
    let ddt = |s: &[f64], k: usize| (s[k + 1] - s[k - 1]) / (2.0 * grid.dt());
    let (mut v1, mut v2, mut v3) = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in 1..nt {
        let b1 = -rho_mu_sq[k] + 2.0 * c0 * m_cap * dw_sq[k];
        let b2 = -dw_sq[k] + (0.25 + c0 * c0) * w_sq[k] + 4.0 * rho_mu_sq[k];
        let b3 = -(2.0 - c0 * (2.0 + m_cap)) * mu_sq[k] + c0 * m_cap * dw_sq[k];
        v1 = v1.max(ddt(&cross, k) - b1);
        v2 = v2.max(ddt(&w_sq, k) - b2);
        v3 = v3.max(-ddt(&mu_sq, k) - b3);
    }
    Ok(EnergyReport {
        imp1_viol: v1,
        imp2_viol: v2,
        imp3_viol: v3,
        constants_used: EnergyConstants { c0, m_cap },
        difference_scale: rho_mu_sq.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::{solve_mfg, SolverConfig};
    use crate::grid::TorusGrid;
    use crate::presets;
    use std::f64::consts::PI;

    #[test]
    fn x_set_of_uniform_density() {
        let g = TorusGrid::new(1, 32, 1.0, 10).unwrap();
        let m = SpaceTimeField::constant_in_time(&Field::constant(g, 1.0), g);
        let c = x_set_check(&m, 1.0);
        assert_eq!((c.min_m, c.max_m), (1.0, 1.0));
        assert!(c.mass_err <= 1e-14 && c.holds);
        let dipped = {
            let mut slices = m.clone().into_slices();
            let mut v = slices[3].clone().into_values();
            v[5] = -0.01;
            slices[3] = Field::new(g, v).unwrap();
            SpaceTimeField::from_raw(g, slices)
        };
        assert!(!x_set_check(&dipped, 1.0).holds);
    }

    #[test]
    fn gradient_bound_trivial_and_flat() {
        let p = presets::trivial(1, 64, 100, 1.0).unwrap();
        let sol = solve_mfg(&p, &SolverConfig::default()).unwrap();
        let r = gradient_bound_check(&sol.u, &p).unwrap();
        assert!(r.lhs <= 1e-10 && r.holds);
    }

    #[test]
    fn adjoint_without_hamiltonian_or_structure() {
        // H ≡ 0 and uniform coupling: the representation is exact up to rounding
        let p = presets::trivial(1, 64, 50, 0.2).unwrap();
        let g = *p.grid();
        let p = p.with_initial_value(Field::from_fn(g, |x| (2.0 * PI * x[0]).sin())).unwrap();
        let m = SpaceTimeField::constant_in_time(&Field::constant(g, 1.0), g);
        let r = adjoint_representation_check(&p, &m, 10, 30, 0.125).unwrap();
        assert!(r.gap <= 1e-8, "{r:?}");
        assert!(r.sigma_mass_err <= 1e-10);
        assert!(matches!(
            adjoint_representation_check(&p, &m, 10, 30, 0.03),
            Err(MfgError::UnderResolved { .. })
        ));
        assert!(adjoint_representation_check(&p, &m, 10, 0, 0.125).is_err());
    }

    #[test]
    fn identical_pairs_have_zero_energies() {
        let p = presets::sine_a4(32, 40).unwrap();
        let sol = solve_mfg(&p, &SolverConfig::default()).unwrap();
        let t = Trajectory { problem: &p, u: &sol.u, m: &sol.m };
        let phi = phi_functional(t, t).unwrap();
        assert!(phi.phi.iter().all(|&v| v == 0.0));
        assert_eq!(phi.decay_violation, 0.0);
        let e = energy_inequalities(t, t).unwrap();
        assert_eq!((e.imp1_viol, e.imp2_viol, e.imp3_viol), (0.0, 0.0, 0.0));
    }

    #[test]
    fn gate_rejects_noise() {
        let p = presets::sine_a4(32, 40).unwrap();
        let sol = solve_mfg(&p, &SolverConfig::default()).unwrap();
        let g = *p.grid();
        let noise = SpaceTimeField::from_fn(g, |x, t| ((x[0] * 911.0 + t * 37.0).sin() * 1e4).fract() * 0.1);
        let bad_u = SpaceTimeField::from_raw(
            g,
            sol.u.slices().iter().zip(noise.slices()).map(|(a, b)| a.add(b)).collect(),
        );
        let good = Trajectory { problem: &p, u: &sol.u, m: &sol.m };
        let bad = Trajectory { problem: &p, u: &bad_u, m: &sol.m };
        let r = residual_check(good).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(matches!(phi_functional(good, bad), Err(MfgError::ResidualTooLarge { .. })));
        assert!(matches!(energy_inequalities(bad, good), Err(MfgError::ResidualTooLarge { .. })));
    }

    #[test]
    fn discrete_poincare() {
        let g = TorusGrid::new(1, 16, 1.0, 1).unwrap();
        // the Nyquist mode is the worst case for the central gradient, not for forward differences
        let w = Field::from_fn(g, |x| (PI * 16.0 * x[0]).cos());
        assert!(dirichlet_energy(&w) >= w.dot(&w) * (1.0 - 1e-10));
        assert!(gradient(&w).squared_norm_integral() < 1e-20);
    }
}

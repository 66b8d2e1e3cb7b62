//! Forward Hamilton–Jacobi–Bellman solve: `U_t + H(DU) = ΔU + ρ*(ρ*m)`, `U(·,0) = u₀`.
//!
//! Each step is explicit in the source and Hamiltonian and exact (or
//! Crank–Nicolson) in the diffusion:
//! `U^{k+1} = S_dt(U^k + dt·(F^{k+½} − H(DU^k)))`, where `F^{k+½}` is the
//! coupling of the density interpolated to the step midpoint.

use crate::error::{MfgError, Result};
use crate::grid::{gradient, laplacian, Field, SpaceTimeField};
use crate::problem::MfgProblem;

/// Magnitude beyond which a slice is treated as a blow-up.
pub const BLOW_UP_LIMIT: f64 = 1e10;

/// Midpoint average of two slices.
pub(crate) fn midpoint(a: &Field, b: &Field) -> Field {
    a.zip_map(b, |x, y| 0.5 * (x + y))
}

pub fn solve_hjb(problem: &MfgProblem, m: &SpaceTimeField) -> Result<SpaceTimeField> {
    solve_hjb_forced(problem, m, None)
}

/// [`solve_hjb`] with an additional right-hand side `g`, so that the solved
/// equation reads `U_t + H(DU) = ΔU + ρ*(ρ*m) + g`.
pub fn solve_hjb_forced(
    problem: &MfgProblem,
    m: &SpaceTimeField,
    forcing: Option<&SpaceTimeField>,
) -> Result<SpaceTimeField> {
    problem.check_field(m)?;
    if let Some(g) = forcing {
        problem.check_field(g)?;
    }
    let grid = *problem.grid();
    let dt = grid.dt();
    let heat = problem.diffusion_operator();
    let hm = problem.hamiltonian();
    let source = problem.coupling_slices(m)?;

    let mut slices = Vec::with_capacity(grid.nt() + 1);
    slices.push(problem.u0().clone());
    for k in 0..grid.nt() {
        let u = &slices[k];
        let ham = hm.eval_field(&gradient(u));
        let mut rhs = midpoint(&source[k], &source[k + 1]).sub(&ham);
        if let Some(g) = forcing {
            rhs = rhs.add(&midpoint(g.slice(k), g.slice(k + 1)));
        }
        let next = heat.apply(&u.axpy(dt, &rhs));
        let magnitude = next.max_abs();
        if !(magnitude <= BLOW_UP_LIMIT) {
            return Err(MfgError::BlowUp {
                time_index: k + 1,
                magnitude,
            });
        }
        slices.push(next);
    }
    Ok(SpaceTimeField::from_raw(grid, slices))
}

/// Per-time residual of the HJB equation with centred time differences, at
/// interior nodes `k = 1..nt−1` (entries `0` and `nt` are zero).
pub fn hjb_residual_series(
    problem: &MfgProblem,
    m: &SpaceTimeField,
    u: &SpaceTimeField,
    forcing: Option<&SpaceTimeField>,
) -> Result<Vec<f64>> {
    problem.check_field(m)?;
    problem.check_field(u)?;
    let grid = *problem.grid();
    let nt = grid.nt();
    let inv_2dt = 0.5 / grid.dt();
    let hm = problem.hamiltonian();
    let mut out = vec![0.0; nt + 1];
    for k in 1..nt {
        let uk = u.slice(k);
        let dudt = u.slice(k + 1).sub(u.slice(k - 1)).scale(inv_2dt);
        let mut r = dudt
            .add(&hm.eval_field(&gradient(uk)))
            .sub(&laplacian(uk))
            .sub(&problem.coupling(m.slice(k))?);
        if let Some(g) = forcing {
            r = r.sub(g.slice(k));
        }
        out[k] = r.max_abs();
    }
    Ok(out)
}

/// `max_k ‖(u_{k+1}−u_{k−1})/2dt + H(Du_k) − Δu_k − ρ*(ρ*m_k)‖_∞`.
pub fn hjb_residual(problem: &MfgProblem, m: &SpaceTimeField, u: &SpaceTimeField) -> Result<f64> {
    Ok(hjb_residual_series(problem, m, u, None)?
        .into_iter()
        .fold(0.0, f64::max))
}

pub fn hjb_residual_forced(
    problem: &MfgProblem,
    m: &SpaceTimeField,
    u: &SpaceTimeField,
    forcing: &SpaceTimeField,
) -> Result<f64> {
    Ok(hjb_residual_series(problem, m, u, Some(forcing))?
        .into_iter()
        .fold(0.0, f64::max))
}

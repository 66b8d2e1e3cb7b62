//! Backward Fokker–Planck solve: `−m_t − div(DH(DU)m) = Δm`, `m(·,T) = m_T`.
//!
//! With `s = T − t` the equation becomes the forward transport–diffusion
//! problem `μ_s + div(vμ) = Δμ`, `v = −DH(DU)`. One step in `s` diffuses
//! exactly and then advects with conservative face fluxes, using the drift of
//! the slice the step lands on. The flux divergence telescopes, so mass is
//! conserved up to rounding; the upwind flux is monotone under the CFL bound
//! enforced by sub-stepping the advection.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{
    central_divergence, divergence_flux, gradient, laplacian, to_faces, DiffusionOperator, Field,
    SpaceTimeField, TorusGrid, VectorField,
};
use crate::hjb::{midpoint, BLOW_UP_LIMIT};
use crate::problem::MfgProblem;

/// Relative slack on `max m ≤ M` before an overshoot warning is logged.
pub const UPPER_BOUND_SLACK: f64 = 0.1;

/// Largest advective Courant number per sub-step.
const MAX_COURANT: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    /// First-order upwinding on the sign of the face velocity; positivity preserving.
    #[default]
    Upwind,
    /// Average of the adjacent node fluxes; second order, the exact transpose
    /// of the central-difference advection in the HJB step.
    Central,
}

/// Face fluxes of `v·μ` for node velocities `v`.
pub fn face_flux(v: &VectorField, mu: &Field, scheme: FluxScheme) -> VectorField {
    let grid = *mu.grid();
    let m = mu.values();
    let comps = match scheme {
        FluxScheme::Upwind => to_faces(v)
            .components()
            .iter()
            .enumerate()
            .map(|(axis, vf)| {
                (0..grid.len())
                    .map(|j| {
                        let s = vf[j];
                        if s >= 0.0 {
                            s * m[j]
                        } else {
                            s * m[grid.forward(j, axis)]
                        }
                    })
                    .collect()
            })
            .collect(),
        FluxScheme::Central => return to_faces(&v.scale_by(mu)),
    };
    VectorField::from_raw(grid, comps)
}

/// One reversed-time step: diffuse over `dt`, then advect with velocity `v`
/// (sub-stepped if needed), then add `dt·forcing`.
fn transport_step(
    mu: &Field,
    v: &VectorField,
    heat: &DiffusionOperator,
    dt: f64,
    scheme: FluxScheme,
    forcing: Option<&Field>,
) -> Field {
    let grid = *mu.grid();
    let courant: f64 = dt / grid.h()
        * to_faces(v)
            .components()
            .iter()
            .map(|c| c.iter().fold(0.0_f64, |a, x| a.max(x.abs())))
            .sum::<f64>();
    let substeps = if courant > MAX_COURANT {
        (courant / MAX_COURANT).ceil() as usize
    } else {
        1
    };
    let sub_dt = dt / substeps as f64;
    let mut out = heat.apply(mu);
    for _ in 0..substeps {
        let div = divergence_flux(&face_flux(v, &out, scheme));
        out = out.axpy(-sub_dt, &div);
    }
    if let Some(g) = forcing {
        out = out.axpy(dt, g);
    }
    out
}

/// Forward-in-`s` transport from `start`. `velocity(j)` is the node velocity
/// for step `j → j+1`; `forcing(j)` an optional source for that step.
pub(crate) fn transport_in_s(
    grid: TorusGrid,
    heat: &DiffusionOperator,
    steps: usize,
    start: Field,
    scheme: FluxScheme,
    velocity: impl Fn(usize) -> VectorField,
    forcing: impl Fn(usize) -> Option<Field>,
) -> Result<Vec<Field>> {
    let dt = grid.dt();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start);
    for j in 0..steps {
        let next = transport_step(&out[j], &velocity(j), heat, dt, scheme, forcing(j).as_ref());
        let magnitude = next.max_abs();
        if !(magnitude <= BLOW_UP_LIMIT) {
            return Err(MfgError::BlowUp {
                time_index: steps - j - 1,
                magnitude,
            });
        }
        out.push(next);
    }
    Ok(out)
}

fn solve_reversed_impl(
    problem: &MfgProblem,
    u: &SpaceTimeField,
    forcing: Option<&SpaceTimeField>,
) -> Result<SpaceTimeField> {
    problem.check_field(u)?;
    if let Some(g) = forcing {
        problem.check_field(g)?;
    }
    let grid = *problem.grid();
    let nt = grid.nt();
    let hm = problem.hamiltonian();
    let heat = problem.diffusion_operator();
    let slices = transport_in_s(
        grid,
        &heat,
        nt,
        problem.m_t().clone(),
        problem.flux_scheme(),
        |j| {
            // the step s_j → s_{j+1} lands on t-index nt−j−1
            let k = nt - j - 1;
            let dh = hm.grad_field(&gradient(u.slice(k)));
            VectorField::from_raw(
                grid,
                dh.components().iter().map(|c| c.iter().map(|x| -x).collect()).collect(),
            )
        },
        |j| {
            let k = nt - j - 1;
            forcing.map(|g| midpoint(g.slice(k), g.slice(k + 1)))
        },
    )?;
    let out = SpaceTimeField::from_raw(grid, slices);
    let cap = problem.m_cap() * (1.0 + UPPER_BOUND_SLACK);
    let top = out.max();
    if top > cap {
        log::warn!("fokker-planck density reached {top:.6} above the cap {cap:.6}");
    }
    Ok(out)
}

/// The density in reversed time: slice `j` holds `s_j = j·dt`, i.e. `t = T − s_j`.
pub fn solve_fp_reversed(problem: &MfgProblem, u: &SpaceTimeField) -> Result<SpaceTimeField> {
    solve_reversed_impl(problem, u, None)
}

pub fn solve_fp(problem: &MfgProblem, u: &SpaceTimeField) -> Result<SpaceTimeField> {
    Ok(solve_fp_reversed(problem, u)?.reversed())
}

/// [`solve_fp`] with a right-hand side: `−m_t − div(DH(DU)m) − Δm = g`.
pub fn solve_fp_forced(
    problem: &MfgProblem,
    u: &SpaceTimeField,
    forcing: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    Ok(solve_reversed_impl(problem, u, Some(forcing))?.reversed())
}

/// Per-time residual `‖−(m_{k+1}−m_{k−1})/2dt − div(DH(Du_k)m_k) − Δm_k − g_k‖_∞`
/// at interior nodes, with the central divergence.
pub fn fp_residual_series(
    problem: &MfgProblem,
    u: &SpaceTimeField,
    m: &SpaceTimeField,
    forcing: Option<&SpaceTimeField>,
) -> Result<Vec<f64>> {
    problem.check_field(u)?;
    problem.check_field(m)?;
    let grid = *problem.grid();
    let nt = grid.nt();
    let inv_2dt = 0.5 / grid.dt();
    let hm = problem.hamiltonian();
    let mut out = vec![0.0; nt + 1];
    for k in 1..nt {
        let mk = m.slice(k);
        let flux = hm.grad_field(&gradient(u.slice(k))).scale_by(mk);
        let mut r = m
            .slice(k - 1)
            .sub(m.slice(k + 1))
            .scale(inv_2dt)
            .sub(&central_divergence(&flux))
            .sub(&laplacian(mk));
        if let Some(g) = forcing {
            r = r.sub(g.slice(k));
        }
        out[k] = r.max_abs();
    }
    Ok(out)
}

pub fn fp_residual(problem: &MfgProblem, u: &SpaceTimeField, m: &SpaceTimeField) -> Result<f64> {
    Ok(fp_residual_series(problem, u, m, None)?.into_iter().fold(0.0, f64::max))
}

pub fn fp_residual_forced(
    problem: &MfgProblem,
    u: &SpaceTimeField,
    m: &SpaceTimeField,
    forcing: &SpaceTimeField,
) -> Result<f64> {
    Ok(fp_residual_series(problem, u, m, Some(forcing))?.into_iter().fold(0.0, f64::max))
}

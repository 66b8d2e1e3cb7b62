//! Ready-made problems used by the examples, tests and command-line presets.

use std::f64::consts::PI;

use crate::coupling::{make_kernel, Kernel};
use crate::error::{MfgError, Result};
use crate::grid::{Field, TorusGrid};
use crate::hamiltonian::{make_drift_plus, make_nonconvex_sine, HamiltonianModel};
use crate::problem::MfgProblem;

pub const SINE_C: f64 = 0.02;
pub const KERNEL_WIDTH: f64 = 0.25;
pub const HORIZON: f64 = 0.5;
pub const DRIFT: f64 = 0.5;

pub const NAMES: [&str; 3] = ["trivial", "sine-a4", "drift"];

/// `H ≡ 0`, `u₀ ≡ 0`, `m_T ≡ 1`, with the uniform kernel. The solution is `u = t`, `m ≡ 1`.
pub fn trivial(dim: usize, n: usize, nt: usize, t_final: f64) -> Result<MfgProblem> {
    let grid = TorusGrid::new(dim, n, t_final, nt)?;
    MfgProblem::new(
        grid,
        HamiltonianModel::zero(dim),
        Some(Kernel::uniform(grid)),
        Field::zeros(grid),
        Field::constant(grid, 1.0),
    )
}

/// `0.1 sin 2πx + 0.05 cos 4πx`.
pub fn sine_initial_value(grid: TorusGrid) -> Field {
    Field::from_fn(grid, |x| 0.1 * (2.0 * PI * x[0]).sin() + 0.05 * (4.0 * PI * x[0]).cos())
}

fn von_mises(x: f64, center: f64, kappa: f64) -> f64 {
    (kappa * (2.0 * PI * (x - center)).cos()).exp()
}

/// `0.6 V₂(x−0.3) + 0.4 V₁(x−0.75)` with `V_κ ∝ exp(κ cos 2πx)` of unit mass; its maximum is about 2.1.
pub fn terminal_mixture(grid: TorusGrid) -> Field {
    let a = Field::from_fn(grid, |x| von_mises(x[0], 0.3, 2.0));
    let b = Field::from_fn(grid, |x| von_mises(x[0], 0.75, 1.0));
    let mix = a.scale(0.6 / a.integral()).add(&b.scale(0.4 / b.integral()));
    mix.scale(1.0 / mix.integral())
}

/// Relative modulation used for the perturbed terminal density.
pub const TERMINAL_PERTURBATION: f64 = 0.25;

/// `m_T·(1 + ε cos 2πx)`, renormalized to unit mass. Requires `|ε| < 1`.
pub fn perturbed_density(m_t: &Field, eps: f64) -> Result<Field> {
    if !(eps.abs() < 1.0) {
        return Err(MfgError::param("eps", "modulation must be below 1 in magnitude"));
    }
    let f = m_t.zip_map(&Field::from_fn(*m_t.grid(), |x| 1.0 + eps * (2.0 * PI * x[0]).cos()), |a, b| a * b);
    Ok(f.scale(1.0 / f.integral()))
}

/// `0.1 cos 2πx`, an alternative initial value.
pub fn cosine_initial_value(grid: TorusGrid) -> Field {
    Field::from_fn(grid, |x| 0.1 * (2.0 * PI * x[0]).cos())
}

/// One-dimensional problem on `[0, 1/2]` with Hamiltonian `hm`, kernel width 1/4,
/// the sine initial value and the mixture terminal density.
pub fn with_hamiltonian(hm: HamiltonianModel, n: usize, nt: usize) -> Result<MfgProblem> {
    if hm.dim() != 1 {
        return Err(MfgError::param("hamiltonian", "presets are one-dimensional"));
    }
    let grid = TorusGrid::new(1, n, HORIZON, nt)?;
    MfgProblem::new(
        grid,
        hm,
        Some(make_kernel(grid, KERNEL_WIDTH)?),
        sine_initial_value(grid),
        terminal_mixture(grid),
    )
}

/// `H(p) = (c/2) sin p` with the standard data.
pub fn sine(c: f64, n: usize, nt: usize) -> Result<MfgProblem> {
    with_hamiltonian(make_nonconvex_sine(c, 1)?, n, nt)
}

/// Sine Hamiltonian with `c₀ = 0.02`, inside the smallness region for the mixture cap.
pub fn sine_a4(n: usize, nt: usize) -> Result<MfgProblem> {
    sine(SINE_C, n, nt)
}

/// `H(p) = 0.5p + (0.02/2) sin p`.
pub fn drift(n: usize, nt: usize) -> Result<MfgProblem> {
    let hm = make_drift_plus(&[DRIFT], make_nonconvex_sine(SINE_C, 1)?)?;
    with_hamiltonian(hm, n, nt)
}

pub fn by_name(name: &str, n: usize, nt: usize) -> Result<MfgProblem> {
    match name {
        "trivial" => trivial(1, n, nt, 1.0),
        "sine-a4" => sine_a4(n, nt),
        "drift" => drift(n, nt),
        _ => Err(MfgError::param("preset", format!("unknown preset `{name}`"))),
    }
}

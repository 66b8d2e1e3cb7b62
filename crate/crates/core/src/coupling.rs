//! The nonlocal coupling `F(m) = ρ*(ρ*m)`: kernel construction and spectral convolution.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{forward_transform, inverse_transform, Field, TorusGrid};

/// Oversampling factor used when estimating the kernel's derivative sup-norms.
const SUP_OVERSAMPLE: usize = 16;

/// A nonnegative, symmetric, unit-mass convolution kernel sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    grid: TorusGrid,
    width: Option<f64>,
    rho: Field,
    // h^d · DFT(ρ); real because ρ is even
    rho_hat: Vec<f64>,
    d_rho_sup: f64,
    d2_rho_sup: f64,
}

/// Bump profile `exp(−1/(1−s²))`, `s = r/w`, and its first two r-derivatives.
fn bump(r: f64, w: f64) -> (f64, f64, f64) {
    let s = r / w;
    if s.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - s * s;
    let g = (-1.0 / q).exp();
    let a = -2.0 * s / (w * q * q);
    let da = -2.0 / (w * w * q * q) - 8.0 * s * s / (w * w * q * q * q);
    (g, g * a, g * (a * a + da))
}

/// Signed periodic offset of `x` from 0, in `[−1/2, 1/2]`.
fn signed_offset(x: f64) -> f64 {
    x - x.round()
}

/// Periodized normalized bump of the given width centred at `center`.
pub(crate) fn bump_field(grid: TorusGrid, center: [f64; 2], width: f64) -> Field {
    let raw = Field::from_fn(grid, |x| {
        x.iter()
            .zip(center)
            .map(|(xi, ci)| bump(signed_offset(xi - ci), width).0)
            .product()
    });
    let mass = raw.integral();
    raw.scale(1.0 / mass)
}

fn validate_width(grid: &TorusGrid, width: f64, name: &'static str) -> Result<()> {
    if !(width > 0.0 && width < 0.5) {
        return Err(MfgError::param(name, format!("width must lie in (0, 1/2), got {width}")));
    }
    if width < 4.0 * grid.h() {
        return Err(MfgError::UnderResolved {
            width,
            min_width: 4.0 * grid.h(),
        });
    }
    Ok(())
}

pub(crate) fn validate_mollifier(grid: &TorusGrid, width: f64) -> Result<()> {
    validate_width(grid, width, "mollify_width")
}

impl Kernel {
    fn from_rho(grid: TorusGrid, width: Option<f64>, rho: Field, sups: (f64, f64)) -> Self {
        let vol = grid.cell_volume();
        let rho_hat = forward_transform(&grid, rho.values())
            .into_iter()
            .map(|c| vol * c.re)
            .collect();
        Kernel {
            grid,
            width,
            rho,
            rho_hat,
            d_rho_sup: sups.0,
            d2_rho_sup: sups.1,
        }
    }

    /// `ρ ≡ 1`: then `ρ*(ρ*m)` is the spatial mean of `m`, and `Dρ = 0`.
    pub fn uniform(grid: TorusGrid) -> Self {
        Kernel::from_rho(grid, None, Field::constant(grid, 1.0), (0.0, 0.0))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn width(&self) -> Option<f64> {
        self.width
    }

    pub fn rho(&self) -> &Field {
        &self.rho
    }

    /// Estimate of `‖Dρ‖_∞`.
    pub fn d_rho_sup(&self) -> f64 {
        self.d_rho_sup
    }

    /// Estimate of `‖D²ρ‖_∞` (spectral norm of the Hessian).
    pub fn d2_rho_sup(&self) -> f64 {
        self.d2_rho_sup
    }

    fn check_grid(&self, m: &Field) -> Result<()> {
        if self.grid.same_space(m.grid()) {
            Ok(())
        } else {
            Err(MfgError::GridMismatch)
        }
    }

    fn apply_multiplier(&self, m: &Field, power: i32) -> Field {
        let mut coeffs = forward_transform(&self.grid, m.values());
        for (c, r) in coeffs.iter_mut().zip(&self.rho_hat) {
            *c *= r.powi(power);
        }
        Field::from_raw(*m.grid(), inverse_transform(&self.grid, coeffs))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&KernelDocument {
            n: self.grid.n(),
            dim: self.grid.dim(),
            width: self.width,
            values: self.rho.values().to_vec(),
        })
        .expect("kernel serializes")
    }

    /// Reads `{n, dim, width, values[]}` and re-validates the kernel invariants.
    pub fn from_json(text: &str, grid: TorusGrid) -> Result<Self> {
        let doc: KernelDocument = serde_json::from_str(text)?;
        if doc.n != grid.n() || doc.dim != grid.dim() {
            return Err(MfgError::GridMismatch);
        }
        let rho = Field::new(grid, doc.values)?;
        if rho.min() < 0.0 {
            return Err(MfgError::Format("kernel has negative values".into()));
        }
        let scale = rho.max_abs().max(1.0);
        for axis in 0..grid.dim() {
            let reflected = reflect(&rho, axis);
            if reflected.sub(&rho).max_abs() > 1e-14 * scale {
                return Err(MfgError::Format("kernel is not symmetric".into()));
            }
        }
        if (rho.integral() - 1.0).abs() > 1e-12 {
            return Err(MfgError::Format("kernel does not have unit mass".into()));
        }
        let sups = match doc.width {
            Some(w) => {
                validate_width(&grid, w, "kernel.width")?;
                bump_sup_norms(&grid, w, normalization(&grid, w))
            }
            None => finite_difference_sups(&rho),
        };
        Ok(Kernel::from_rho(grid, doc.width, rho, sups))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDocument {
    n: usize,
    dim: usize,
    width: Option<f64>,
    values: Vec<f64>,
}

/// `out[j] = f[−j]` along one axis.
fn reflect(f: &Field, axis: usize) -> Field {
    let grid = *f.grid();
    let n = grid.n();
    let vals = (0..grid.len())
        .map(|idx| {
            let mut mi = grid.multi_index(idx);
            mi[axis] = (n - mi[axis]) % n;
            f.values()[grid.flat_index(mi)]
        })
        .collect();
    Field::from_raw(grid, vals)
}

/// Discrete normalization constant `1 / (h^d Σ_j Π_i g(x_j,i))`.
fn normalization(grid: &TorusGrid, width: f64) -> f64 {
    let axis_sum: f64 = (0..grid.n())
        .map(|i| bump(signed_offset(i as f64 * grid.h()), width).0)
        .sum::<f64>()
        * grid.h();
    1.0 / axis_sum.powi(grid.dim() as i32)
}

/// Sup-norms of `Dρ` and `D²ρ` from the analytic bump derivatives, sampled on
/// a lattice `SUP_OVERSAMPLE` times finer than the grid.
fn bump_sup_norms(grid: &TorusGrid, width: f64, c: f64) -> (f64, f64) {
    let fine = grid.n() * SUP_OVERSAMPLE;
    let samples: Vec<(f64, f64, f64)> = (0..fine)
        .map(|i| bump(signed_offset(i as f64 / fine as f64), width))
        .collect();
    match grid.dim() {
        1 => samples.iter().fold((0.0_f64, 0.0_f64), |(d1, d2), &(_, g1, g2)| {
            (d1.max(c * g1.abs()), d2.max(c * g2.abs()))
        }),
        _ => {
            let support: Vec<&(f64, f64, f64)> = samples.iter().filter(|s| s.0 > 0.0).collect();
            let mut d1 = 0.0_f64;
            let mut d2 = 0.0_f64;
            for &&(gx, gx1, gx2) in &support {
                for &&(gy, gy1, gy2) in &support {
                    let grad = c * ((gx1 * gy).powi(2) + (gx * gy1).powi(2)).sqrt();
                    let (a, b, d) = (c * gx2 * gy, c * gx1 * gy1, c * gx * gy2);
                    let mean = 0.5 * (a + d);
                    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                    d1 = d1.max(grad);
                    d2 = d2.max((mean + r).abs().max((mean - r).abs()));
                }
            }
            (d1, d2)
        }
    }
}

fn finite_difference_sups(rho: &Field) -> (f64, f64) {
    let g = crate::grid::gradient(rho);
    let l = crate::grid::laplacian(rho);
    (g.magnitude().max_abs(), l.max_abs())
}

/// Periodized smooth bump `∝ Π_i exp(−1/(1 − (dist_i/w)²))`, normalized to unit mass.
pub fn make_kernel(grid: TorusGrid, width: f64) -> Result<Kernel> {
    validate_width(&grid, width, "kernel.width")?;
    let rho = bump_field(grid, [0.0, 0.0], width);
    let sups = bump_sup_norms(&grid, width, normalization(&grid, width));
    Ok(Kernel::from_rho(grid, Some(width), rho, sups))
}

/// `ρ*(ρ*m)`, computed spectrally.
pub fn double_convolve(k: &Kernel, m: &Field) -> Result<Field> {
    k.check_grid(m)?;
    Ok(k.apply_multiplier(m, 2))
}

/// `ρ*m`, computed spectrally.
pub fn half_convolve(k: &Kernel, m: &Field) -> Result<Field> {
    k.check_grid(m)?;
    Ok(k.apply_multiplier(m, 1))
}

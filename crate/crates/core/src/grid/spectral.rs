//! Real spectral transforms on the torus and the exact heat-semigroup step.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Field, TorusGrid};
use crate::error::{MfgError, Result};

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

static PLANS: Lazy<Mutex<HashMap<usize, PlanPair>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plans(n: usize) -> PlanPair {
    let mut cache = PLANS.lock().expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

fn transpose(buf: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); buf.len()];
    for r in 0..n {
        for c in 0..n {
            out[c * n + r] = buf[r * n + c];
        }
    }
    out
}

fn transform(grid: &TorusGrid, mut buf: Vec<Complex64>, fft: &Arc<dyn Fft<f64>>) -> Vec<Complex64> {
    fft.process(&mut buf);
    if grid.dim() == 2 {
        let mut t = transpose(&buf, grid.n());
        fft.process(&mut t);
        buf = transpose(&t, grid.n());
    }
    buf
}

/// Unnormalized DFT of real node values.
pub(crate) fn forward_transform(grid: &TorusGrid, values: &[f64]) -> Vec<Complex64> {
    let (fwd, _) = plans(grid.n());
    let buf = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(grid, buf, &fwd)
}

/// Inverse DFT (normalized by `1/N`), real part.
pub(crate) fn inverse_transform(grid: &TorusGrid, coeffs: Vec<Complex64>) -> Vec<f64> {
    let (_, inv) = plans(grid.n());
    let scale = 1.0 / grid.len() as f64;
    transform(grid, coeffs, &inv)
        .into_iter()
        .map(|c| c.re * scale)
        .collect()
}

/// Signed integer wavenumbers of a flat coefficient index.
pub(crate) fn wavenumber(grid: &TorusGrid, idx: usize) -> [f64; 2] {
    let n = grid.n();
    let signed = |i: usize| {
        if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    };
    let mi = grid.multi_index(idx);
    match grid.dim() {
        1 => [signed(mi[0]), 0.0],
        _ => [signed(mi[0]), signed(mi[1])],
    }
}

/// How the Laplacian in a diffusion step is integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionScheme {
    /// Exact exponential of the continuous symbol `−|2πk|²` on resolved modes.
    #[default]
    Spectral,
    /// Crank–Nicolson on the stencil Laplacian, diagonalized by the DFT.
    CrankNicolson,
}

/// Precomputed Fourier multiplier for `g_t = coef·Δg` over one step `dt`.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    grid: TorusGrid,
    multiplier: Vec<f64>,
}

impl DiffusionOperator {
    pub fn new(grid: TorusGrid, coef: f64, dt: f64, scheme: DiffusionScheme) -> Result<Self> {
        if !(coef >= 0.0 && coef.is_finite()) {
            return Err(MfgError::param("coef", "diffusion coefficient must be >= 0"));
        }
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(MfgError::param("dt", "step must be >= 0"));
        }
        let h = grid.h();
        let multiplier = (0..grid.len())
            .map(|idx| {
                let k = wavenumber(&grid, idx);
                match scheme {
                    DiffusionScheme::Spectral => {
                        let k2: f64 = k[..grid.dim()].iter().map(|ki| ki * ki).sum();
                        (-coef * dt * 4.0 * PI * PI * k2).exp()
                    }
                    DiffusionScheme::CrankNicolson => {
                        let lambda: f64 = k[..grid.dim()]
                            .iter()
                            .map(|ki| 2.0 / (h * h) * (1.0 - (2.0 * PI * ki * h).cos()))
                            .sum();
                        let a = 0.5 * coef * dt * lambda;
                        (1.0 - a) / (1.0 + a)
                    }
                }
            })
            .collect();
        Ok(DiffusionOperator { grid, multiplier })
    }

    pub fn apply(&self, f: &Field) -> Field {
        self.apply_values(f.values(), *f.grid())
    }

    pub(crate) fn apply_values(&self, values: &[f64], grid: TorusGrid) -> Field {
        debug_assert!(self.grid.same_space(&grid));
        let mut coeffs = forward_transform(&self.grid, values);
        for (c, m) in coeffs.iter_mut().zip(&self.multiplier) {
            *c *= *m;
        }
        // restore the zero mode bit-for-bit so the mean is carried through untouched
        coeffs[0] = Complex64::new(values.iter().sum::<f64>(), 0.0);
        Field::from_raw(grid, inverse_transform(&self.grid, coeffs))
    }
}

/// Solution at time `dt` of `g_t = coef·Δg`, `g(0) = f`, with the spectral scheme.
pub fn spectral_diffusion_step(f: &Field, coef: f64, dt: f64) -> Result<Field> {
    Ok(DiffusionOperator::new(*f.grid(), coef, dt, DiffusionScheme::Spectral)?.apply(f))
}

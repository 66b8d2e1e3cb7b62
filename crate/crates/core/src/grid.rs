//! Periodic discrete calculus on the flat unit torus 𝕋ᵈ, d ∈ {1, 2}.
//!
//! Nodes sit at `x = i·h`, `h = 1/n`, and are stored with axis 0 varying fastest.
//! Vector fields handed to [`divergence_flux`] are face-centred: component `i`
//! at node `j` lives on the face between `j` and `j + e_i`.

mod spectral;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};

pub use spectral::{spectral_diffusion_step, DiffusionOperator, DiffusionScheme};
pub(crate) use spectral::{forward_transform, inverse_transform};

/// Uniform periodic discretization of 𝕋ᵈ × [0, T].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    t_final: f64,
    nt: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, t_final: f64, nt: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(MfgError::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(MfgError::InvalidGrid(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(MfgError::InvalidGrid(format!("t_final must be positive, got {t_final}")));
        }
        if nt == 0 {
            return Err(MfgError::InvalidGrid("nt must be at least 1".into()));
        }
        Ok(TorusGrid { dim, n, t_final, nt })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Time of slice `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Number of spatial nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Same spatial lattice with a different time discretization.
    pub fn with_time(&self, t_final: f64, nt: usize) -> Result<Self> {
        TorusGrid::new(self.dim, self.n, t_final, nt)
    }

    pub fn same_space(&self, other: &TorusGrid) -> bool {
        self.dim == other.dim && self.n == other.n
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    /// Integer coordinates of a flat node index.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx % self.n, idx / self.n],
        }
    }

    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        match self.dim {
            1 => multi[0] % self.n,
            _ => (multi[1] % self.n) * self.n + multi[0] % self.n,
        }
    }

    /// Physical coordinates of a node; entries past `dim` are zero.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let h = self.h();
        [mi[0] as f64 * h, mi[1] as f64 * h]
    }

    #[inline]
    pub(crate) fn forward(&self, idx: usize, axis: usize) -> usize {
        let stride = self.stride(axis);
        if (idx / stride) % self.n == self.n - 1 {
            idx + stride - self.n * stride
        } else {
            idx + stride
        }
    }

    #[inline]
    pub(crate) fn backward(&self, idx: usize, axis: usize) -> usize {
        let stride = self.stride(axis);
        if (idx / stride) % self.n == 0 {
            idx + self.n * stride - stride
        } else {
            idx - stride
        }
    }

    /// Periodic distance from `x` to 0 along one axis of the unit torus.
    pub fn periodic_distance(x: f64) -> f64 {
        let r = x.rem_euclid(1.0);
        r.min(1.0 - r)
    }
}

/// Real samples on the nodes of one time slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(MfgError::Format(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("field"));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Field {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at node coordinates (slice of length `dim`).
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|idx| {
                let x = grid.coords(idx);
                f(&x[..dim])
            })
            .collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(self.grid.same_space(&other.grid));
        Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self + a·other`
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        self.zip_map(other, |x, y| x + a * y)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        integrate(self)
    }

    /// Quadrature of the pointwise product.
    pub fn dot(&self, other: &Field) -> f64 {
        self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Periodic translation by `offset` nodes along `axis`: `out[j] = self[j - offset·e_axis]`.
    pub fn shifted(&self, axis: usize, offset: isize) -> Field {
        let n = self.grid.n() as isize;
        let mut out = vec![0.0; self.values.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut mi = self.grid.multi_index(idx);
            mi[axis] = (mi[axis] as isize - offset).rem_euclid(n) as usize;
            *slot = self.values[self.grid.flat_index(mi)];
        }
        Field::from_raw(self.grid, out)
    }
}

/// `dim` real component arrays on the nodes (or faces) of one slice.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: TorusGrid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(MfgError::Format("vector field shape does not match grid".into()));
        }
        if components.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("vector field"));
        }
        Ok(VectorField { grid, components })
    }

    pub(crate) fn from_raw(grid: TorusGrid, components: Vec<Vec<f64>>) -> Self {
        VectorField { grid, components }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        VectorField {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    /// Same constant vector at every node.
    pub fn constant(grid: TorusGrid, v: &[f64]) -> Self {
        VectorField {
            grid,
            components: (0..grid.dim()).map(|i| vec![v[i]; grid.len()]).collect(),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Euclidean length at each node.
    pub fn magnitude(&self) -> Field {
        let vals = (0..self.grid.len())
            .map(|j| {
                self.components
                    .iter()
                    .map(|c| c[j] * c[j])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Field::from_raw(self.grid, vals)
    }

    /// Largest per-component absolute value.
    pub fn max_component_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Quadrature of |v|².
    pub fn squared_norm_integral(&self) -> f64 {
        self.grid.cell_volume() * self.components.iter().flatten().map(|v| v * v).sum::<f64>()
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField::from_raw(
            self.grid,
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        )
    }

    /// Multiplies every component pointwise by a scalar field.
    pub fn scale_by(&self, f: &Field) -> VectorField {
        VectorField::from_raw(
            self.grid,
            self.components
                .iter()
                .map(|c| c.iter().zip(f.values()).map(|(a, b)| a * b).collect())
                .collect(),
        )
    }
}

/// Time-indexed family of fields; slice `k` holds `t_k = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    grid: TorusGrid,
    slices: Vec<Field>,
}

impl SpaceTimeField {
    pub fn new(grid: TorusGrid, slices: Vec<Field>) -> Result<Self> {
        if slices.len() != grid.nt() + 1 {
            return Err(MfgError::Format(format!(
                "expected {} slices, got {}",
                grid.nt() + 1,
                slices.len()
            )));
        }
        if slices.iter().any(|s| !s.grid.same_space(&grid)) {
            return Err(MfgError::GridMismatch);
        }
        if slices.iter().any(|s| !s.is_finite()) {
            return Err(MfgError::NonFinite("space-time field"));
        }
        let slices = slices.into_iter().map(|s| Field::from_raw(grid, s.values)).collect();
        Ok(SpaceTimeField { grid, slices })
    }

    pub(crate) fn from_raw(grid: TorusGrid, slices: Vec<Field>) -> Self {
        debug_assert_eq!(slices.len(), grid.nt() + 1);
        SpaceTimeField { grid, slices }
    }

    /// The same field at every time.
    pub fn constant_in_time(field: &Field, grid: TorusGrid) -> Self {
        SpaceTimeField {
            grid,
            slices: vec![Field::from_raw(grid, field.values.clone()); grid.nt() + 1],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let slices = (0..=grid.nt())
            .map(|k| {
                let t = grid.time(k);
                Field::from_fn(grid, |x| f(x, t))
            })
            .collect();
        SpaceTimeField { grid, slices }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &Field {
        &self.slices[k]
    }

    pub fn last(&self) -> &Field {
        &self.slices[self.grid.nt()]
    }

    pub fn into_slices(self) -> Vec<Field> {
        self.slices
    }

    pub fn max(&self) -> f64 {
        self.slices.iter().map(Field::max).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.slices.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().map(Field::max_abs).fold(0.0, f64::max)
    }

    /// sup over nodes and times of |self − other|.
    pub fn sup_distance(&self, other: &SpaceTimeField) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.sub(b).max_abs())
            .fold(0.0, f64::max)
    }

    /// sup over times of the spatial L² distance.
    pub fn sup_l2_distance(&self, other: &SpaceTimeField) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.sub(b).l2_norm())
            .fold(0.0, f64::max)
    }

    /// `(1−θ)·self + θ·other`
    pub fn blend(&self, other: &SpaceTimeField, theta: f64) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.grid,
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a.zip_map(b, |x, y| (1.0 - theta) * x + theta * y))
                .collect(),
        }
    }

    pub fn shifted(&self, axis: usize, offset: isize) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.grid,
            slices: self.slices.iter().map(|s| s.shifted(axis, offset)).collect(),
        }
    }

    /// Slices listed in reverse time order.
    pub fn reversed(&self) -> SpaceTimeField {
        let mut slices = self.slices.clone();
        slices.reverse();
        SpaceTimeField { grid: self.grid, slices }
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(Field::is_finite)
    }
}

/// Central differences with periodic wrap: `(f[j+e_i] − f[j−e_i]) / 2h`.
pub fn gradient(f: &Field) -> VectorField {
    let grid = f.grid;
    let inv = 0.5 / grid.h();
    let v = &f.values;
    let components = (0..grid.dim())
        .map(|axis| {
            (0..grid.len())
                .map(|j| (v[grid.forward(j, axis)] - v[grid.backward(j, axis)]) * inv)
                .collect()
        })
        .collect();
    VectorField::from_raw(grid, components)
}

/// `(2·dim + 1)`-point Laplacian.
pub fn laplacian(f: &Field) -> Field {
    let grid = f.grid;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let v = &f.values;
    let diag = 2.0 * grid.dim() as f64;
    let out = (0..grid.len())
        .map(|j| {
            let mut acc = -diag * v[j];
            for axis in 0..grid.dim() {
                acc += v[grid.forward(j, axis)] + v[grid.backward(j, axis)];
            }
            acc * inv_h2
        })
        .collect();
    Field::from_raw(grid, out)
}

/// Conservative divergence of face fluxes: `Σ_i (v_i[j] − v_i[j−e_i]) / h`.
pub fn divergence_flux(v_at_faces: &VectorField) -> Field {
    let grid = v_at_faces.grid;
    let inv_h = 1.0 / grid.h();
    let mut out = vec![0.0; grid.len()];
    for (axis, comp) in v_at_faces.components.iter().enumerate() {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot += (comp[j] - comp[grid.backward(j, axis)]) * inv_h;
        }
    }
    Field::from_raw(grid, out)
}

/// One-sided differences onto faces: `(f[j+e_i] − f[j]) / h`.
pub fn face_gradient(f: &Field) -> VectorField {
    let grid = f.grid;
    let inv_h = 1.0 / grid.h();
    let v = &f.values;
    let components = (0..grid.dim())
        .map(|axis| {
            (0..grid.len())
                .map(|j| (v[grid.forward(j, axis)] - v[j]) * inv_h)
                .collect()
        })
        .collect();
    VectorField::from_raw(grid, components)
}

/// Arithmetic average of node values onto the face between `j` and `j + e_i`.
pub fn to_faces(v: &VectorField) -> VectorField {
    let grid = v.grid;
    let components = v
        .components
        .iter()
        .enumerate()
        .map(|(axis, c)| {
            (0..grid.len())
                .map(|j| 0.5 * (c[j] + c[grid.forward(j, axis)]))
                .collect()
        })
        .collect();
    VectorField::from_raw(grid, components)
}

/// Central divergence of a node-centred vector field.
pub fn central_divergence(v: &VectorField) -> Field {
    divergence_flux(&to_faces(v))
}

/// Rectangle rule `h^d · Σ_j f[j]`.
pub fn integrate(f: &Field) -> f64 {
    f.grid.cell_volume() * f.values.iter().sum::<f64>()
}

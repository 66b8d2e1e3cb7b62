//! Problem data for the coupled system: grid, Hamiltonian, kernel and boundary data.

use crate::coupling::{double_convolve, Kernel};
use crate::error::{MfgError, Result};
use crate::fp::FluxScheme;
use crate::grid::{DiffusionOperator, DiffusionScheme, Field, SpaceTimeField, TorusGrid};
use crate::hamiltonian::HamiltonianModel;

/// Tolerance on the unit mass of the terminal density.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct MfgProblem {
    grid: TorusGrid,
    hamiltonian: HamiltonianModel,
    kernel: Option<Kernel>,
    u0: Field,
    m_t: Field,
    diffusion: DiffusionScheme,
    flux: FluxScheme,
}

impl MfgProblem {
    /// `kernel = None` switches the coupling off (`F ≡ 0`).
    pub fn new(
        grid: TorusGrid,
        hamiltonian: HamiltonianModel,
        kernel: Option<Kernel>,
        u0: Field,
        m_t: Field,
    ) -> Result<Self> {
        if hamiltonian.dim() != grid.dim() {
            return Err(MfgError::param("hamiltonian", "dimension does not match the grid"));
        }
        if let Some(k) = &kernel {
            if !k.grid().same_space(&grid) {
                return Err(MfgError::GridMismatch);
            }
        }
        if !u0.grid().same_space(&grid) || !m_t.grid().same_space(&grid) {
            return Err(MfgError::GridMismatch);
        }
        if !u0.is_finite() || !m_t.is_finite() {
            return Err(MfgError::NonFinite("boundary data"));
        }
        validate_density(&m_t)?;
        Ok(MfgProblem {
            grid,
            hamiltonian,
            kernel,
            u0: Field::from_raw(grid, u0.into_values()),
            m_t: Field::from_raw(grid, m_t.into_values()),
            diffusion: DiffusionScheme::default(),
            flux: FluxScheme::default(),
        })
    }

    pub fn with_diffusion(mut self, scheme: DiffusionScheme) -> Self {
        self.diffusion = scheme;
        self
    }

    pub fn with_flux(mut self, flux: FluxScheme) -> Self {
        self.flux = flux;
        self
    }

    pub fn with_terminal_density(&self, m_t: Field) -> Result<Self> {
        MfgProblem::new(self.grid, self.hamiltonian.clone(), self.kernel.clone(), self.u0.clone(), m_t)
            .map(|p| p.with_diffusion(self.diffusion).with_flux(self.flux))
    }

    pub fn with_initial_value(&self, u0: Field) -> Result<Self> {
        MfgProblem::new(self.grid, self.hamiltonian.clone(), self.kernel.clone(), u0, self.m_t.clone())
            .map(|p| p.with_diffusion(self.diffusion).with_flux(self.flux))
    }

    pub fn with_hamiltonian(&self, hamiltonian: HamiltonianModel) -> Result<Self> {
        MfgProblem::new(self.grid, hamiltonian, self.kernel.clone(), self.u0.clone(), self.m_t.clone())
            .map(|p| p.with_diffusion(self.diffusion).with_flux(self.flux))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn hamiltonian(&self) -> &HamiltonianModel {
        &self.hamiltonian
    }

    pub fn kernel(&self) -> Option<&Kernel> {
        self.kernel.as_ref()
    }

    pub fn u0(&self) -> &Field {
        &self.u0
    }

    pub fn m_t(&self) -> &Field {
        &self.m_t
    }

    pub fn diffusion_scheme(&self) -> DiffusionScheme {
        self.diffusion
    }

    pub fn flux_scheme(&self) -> FluxScheme {
        self.flux
    }

    /// `M = max m_T`.
    pub fn m_cap(&self) -> f64 {
        self.m_t.max()
    }

    /// `‖Dρ‖_∞`, zero when the coupling is off.
    pub fn d_rho_sup(&self) -> f64 {
        self.kernel.as_ref().map_or(0.0, Kernel::d_rho_sup)
    }

    /// `ρ*(ρ*m)` for one slice.
    pub fn coupling(&self, m: &Field) -> Result<Field> {
        match &self.kernel {
            Some(k) => double_convolve(k, m),
            None if m.grid().same_space(&self.grid) => Ok(Field::zeros(self.grid)),
            None => Err(MfgError::GridMismatch),
        }
    }

    pub fn coupling_slices(&self, m: &SpaceTimeField) -> Result<Vec<Field>> {
        m.slices().iter().map(|s| self.coupling(s)).collect()
    }

    pub(crate) fn diffusion_operator(&self) -> DiffusionOperator {
        DiffusionOperator::new(self.grid, 1.0, self.grid.dt(), self.diffusion)
            .expect("unit coefficient and positive dt are valid")
    }

    /// The step bound `h / (4·c + 1)`, with `c` the larger of `c0` and the drift speed.
    pub fn max_stable_dt(&self) -> f64 {
        let c = self.hamiltonian.c0().max(self.hamiltonian.speed_bound());
        self.grid.h() / (4.0 * c + 1.0)
    }

    /// Smallest step count that respects [`MfgProblem::max_stable_dt`].
    pub fn recommended_nt(&self) -> usize {
        (self.grid.t_final() / self.max_stable_dt()).ceil().max(1.0) as usize
    }

    pub(crate) fn check_field(&self, f: &SpaceTimeField) -> Result<()> {
        if f.grid().same_space(&self.grid) && f.grid().nt() == self.grid.nt() {
            Ok(())
        } else {
            Err(MfgError::GridMismatch)
        }
    }
}

/// Nonnegative with unit mass.
pub fn validate_density(m: &Field) -> Result<()> {
    if m.min() < 0.0 {
        return Err(MfgError::param("m_t", "terminal density must be nonnegative"));
    }
    let mass = m.integral();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(MfgError::param("m_t", format!("terminal density must have unit mass, got {mass}")));
    }
    Ok(())
}

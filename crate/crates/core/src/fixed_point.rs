//! Damped Picard iteration of `Φ(m) = FP(HJB(m))` and multi-start uniqueness probing.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::x_set_check;
use crate::error::{MfgError, Result};
use crate::fp::solve_fp;
use crate::grid::{Field, SpaceTimeField, TorusGrid};
use crate::hamiltonian::{check_a4, A4Report};
use crate::hjb::solve_hjb;
use crate::problem::MfgProblem;

/// Largest supported Anderson history.
pub const MAX_ANDERSON_DEPTH: usize = 5;

/// Dispersion bound for multi-start runs, in units of the solver tolerance.
pub const DISPERSION_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialGuess {
    /// `m ≡ 1`.
    Uniform,
    /// `m(·,t) = m_T` for every t.
    TerminalConstant,
    Custom(SpaceTimeField),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Damping θ ∈ (0, 1]: `m ← (1−θ)m + θΦ(m)`.
    pub theta: f64,
    /// Threshold on `sup_t ‖m_{k+1}(·,t) − m_k(·,t)‖_{L²}`.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_guess: InitialGuess,
    pub record_history: bool,
    /// Anderson mixing depth, 0 disables it.
    pub anderson_depth: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            theta: 0.5,
            tol: 1e-8,
            max_iter: 50,
            initial_guess: InitialGuess::Uniform,
            record_history: true,
            anderson_depth: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(MfgError::param("theta", "damping must lie in (0, 1]"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(MfgError::param("tol", "tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(MfgError::param("max_iter", "need at least one iteration"));
        }
        if self.anderson_depth > MAX_ANDERSON_DEPTH {
            return Err(MfgError::param("anderson_depth", format!("at most {MAX_ANDERSON_DEPTH}")));
        }
        Ok(())
    }
}

/// Extrema and mass error of a density trajectory against the cap `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XSetCheck {
    pub min_m: f64,
    pub max_m: f64,
    pub mass_err: f64,
    pub m_cap: f64,
    /// `max_m / m_cap − 1`, reported only.
    pub overshoot: f64,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct MfgSolution {
    pub u: SpaceTimeField,
    pub m: SpaceTimeField,
    /// Number of applications of Φ.
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Smallness report for the problem; `None` only if `M < 1` could not be tested.
    pub a4: Option<A4Report>,
    last_residual: f64,
}

impl MfgSolution {
    pub fn final_residual(&self) -> f64 {
        self.last_residual
    }

    /// False when the smallness condition fails or its constant is not certified,
    /// so that agreement across starts says nothing about uniqueness.
    pub fn uniqueness_guarded(&self) -> bool {
        self.a4.as_ref().is_some_and(A4Report::guards_uniqueness)
    }
}

pub(crate) fn require_x(m: &SpaceTimeField, m_cap: f64) -> Result<()> {
    let check = x_set_check(m, m_cap);
    if check.holds {
        Ok(())
    } else {
        Err(MfgError::XViolation(format!(
            "min {:e}, mass error {:e}",
            check.min_m, check.mass_err
        )))
    }
}

/// `Φ(m)`: solve the HJB equation with `m`, then the Fokker–Planck equation with its solution.
pub fn phi_map(problem: &MfgProblem, m: &SpaceTimeField) -> Result<SpaceTimeField> {
    problem.check_field(m)?;
    require_x(m, problem.m_cap())?;
    let u = solve_hjb(problem, m)?;
    solve_fp(problem, &u)
}

pub fn initial_density(problem: &MfgProblem, guess: &InitialGuess) -> Result<SpaceTimeField> {
    let grid = *problem.grid();
    let m = match guess {
        InitialGuess::Uniform => SpaceTimeField::constant_in_time(&Field::constant(grid, 1.0), grid),
        InitialGuess::TerminalConstant => SpaceTimeField::constant_in_time(problem.m_t(), grid),
        InitialGuess::Custom(m) => {
            problem.check_field(m)?;
            m.clone()
        }
    };
    Ok(m)
}

fn flatten(m: &SpaceTimeField) -> DVector<f64> {
    DVector::from_iterator(
        m.grid().len() * m.slices().len(),
        m.slices().iter().flat_map(|s| s.values().iter().copied()),
    )
}

fn unflatten(v: &DVector<f64>, grid: TorusGrid) -> SpaceTimeField {
    let len = grid.len();
    let slices = (0..=grid.nt())
        .map(|k| Field::from_raw(grid, v.as_slice()[k * len..(k + 1) * len].to_vec()))
        .collect();
    SpaceTimeField::from_raw(grid, slices)
}

/// Type-II Anderson mixing on the damped map `G`.
struct Anderson {
    depth: usize,
    prev: Option<(DVector<f64>, DVector<f64>)>,
    d_res: Vec<DVector<f64>>,
    d_map: Vec<DVector<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson {
            depth,
            prev: None,
            d_res: Vec::new(),
            d_map: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.d_res.clear();
        self.d_map.clear();
    }

    /// Given `x_k` and `G(x_k)`, returns the mixed next iterate.
    fn mix(&mut self, x: &DVector<f64>, gx: &DVector<f64>) -> DVector<f64> {
        let f = gx - x;
        if let Some((f_prev, g_prev)) = self.prev.take() {
            self.d_res.push(&f - f_prev);
            self.d_map.push(gx - g_prev);
            if self.d_res.len() > self.depth {
                self.d_res.remove(0);
                self.d_map.remove(0);
            }
        }
        self.prev = Some((f.clone(), gx.clone()));
        if self.d_res.is_empty() {
            return gx.clone();
        }
        let df = DMatrix::from_columns(&self.d_res);
        let dg = DMatrix::from_columns(&self.d_map);
        match df.svd(true, true).solve(&f, 1e-12) {
            Ok(gamma) => gx - dg * gamma,
            Err(_) => gx.clone(),
        }
    }
}

/// Damped fixed-point iteration from the configured initial guess.
///
/// Returns [`MfgError::NotConverged`] carrying the best iterate when the
/// residual stays above `tol` for `max_iter` iterations.
pub fn solve_mfg(problem: &MfgProblem, config: &SolverConfig) -> Result<MfgSolution> {
    config.validate()?;
    let grid = *problem.grid();
    let m_cap = problem.m_cap();
    let a4 = check_a4(problem.hamiltonian(), m_cap.max(1.0)).ok();
    if !a4.as_ref().is_some_and(A4Report::guards_uniqueness) {
        log::info!("smallness condition not certified: solution is uniqueness-unguarded");
    }

    let mut m = initial_density(problem, &config.initial_guess)?;
    require_x(&m, m_cap)?;
    let mut anderson = (config.anderson_depth > 0).then(|| Anderson::new(config.anderson_depth));
    let mut history = Vec::new();
    let mut best: Option<(f64, SpaceTimeField)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut last = f64::INFINITY;

    while iterations < config.max_iter {
        iterations += 1;
        let phi = phi_map(problem, &m)?;
        let damped = m.blend(&phi, config.theta);
        let next = match anderson.as_mut() {
            Some(acc) => {
                let mixed = unflatten(&acc.mix(&flatten(&m), &flatten(&damped)), grid);
                if x_set_check(&mixed, m_cap).holds {
                    mixed
                } else {
                    acc.reset();
                    damped
                }
            }
            None => damped,
        };
        last = next.sup_l2_distance(&m);
        log::debug!("fixed-point iteration {iterations}: residual {last:e}");
        if config.record_history {
            history.push(last);
        }
        m = next;
        if best.as_ref().is_none_or(|(r, _)| last < *r) {
            best = Some((last, m.clone()));
        }
        if last <= config.tol {
            converged = true;
            break;
        }
    }

    if !converged {
        let (best_residual, best_m) = best.expect("at least one iteration ran");
        let u = solve_hjb(problem, &best_m)?;
        return Err(MfgError::NotConverged {
            best: Box::new(MfgSolution {
                u,
                m: best_m,
                iterations,
                residual_history: history,
                converged: false,
                a4,
                last_residual: best_residual,
            }),
        });
    }
    let u = solve_hjb(problem, &m)?;
    Ok(MfgSolution {
        u,
        m,
        iterations,
        residual_history: history,
        converged,
        a4,
        last_residual: last,
    })
}

/// Pairwise dispersion of multi-start solutions against the bound `10·tol`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub max_pairwise_u_diff: f64,
    pub max_pairwise_m_diff: f64,
    pub tol: f64,
    pub bound: f64,
    pub a4: Option<A4Report>,
    /// Differences are within the bound. Only meaningful when `a4` guards uniqueness.
    pub within_bound: bool,
    pub iterations: Vec<usize>,
    pub branches_completed: usize,
}

/// Largest pairwise sup-norm differences `(u, m)` over a set of solutions.
pub fn pairwise_dispersion(solutions: &[MfgSolution]) -> (f64, f64) {
    let mut du = 0.0_f64;
    let mut dm = 0.0_f64;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            du = du.max(a.u.sup_distance(&b.u));
            dm = dm.max(a.m.sup_distance(&b.m));
        }
    }
    (du, dm)
}

pub fn uniqueness_report(problem: &MfgProblem, tol: f64, solutions: &[MfgSolution]) -> UniquenessReport {
    let (du, dm) = pairwise_dispersion(solutions);
    let bound = DISPERSION_FACTOR * tol;
    UniquenessReport {
        max_pairwise_u_diff: du,
        max_pairwise_m_diff: dm,
        tol,
        bound,
        a4: check_a4(problem.hamiltonian(), problem.m_cap().max(1.0)).ok(),
        within_bound: du <= bound && dm <= bound,
        iterations: solutions.iter().map(|s| s.iterations).collect(),
        branches_completed: solutions.len(),
    }
}

/// Runs [`solve_mfg`] from each guess and compares the converged solutions.
pub fn uniqueness_probe(
    problem: &MfgProblem,
    config: &SolverConfig,
    guesses: &[SpaceTimeField],
) -> Result<UniquenessReport> {
    if guesses.len() < 2 {
        return Err(MfgError::param("guesses", "need at least two initial guesses"));
    }
    let mut solutions = Vec::with_capacity(guesses.len());
    for (branch, guess) in guesses.iter().enumerate() {
        let cfg = SolverConfig {
            initial_guess: InitialGuess::Custom(guess.clone()),
            ..config.clone()
        };
        match solve_mfg(problem, &cfg) {
            Ok(sol) => solutions.push(sol),
            Err(MfgError::NotConverged { .. }) => {
                return Err(MfgError::ProbeAborted {
                    branch,
                    partial: Box::new(uniqueness_report(problem, config.tol, &solutions)),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(uniqueness_report(problem, config.tol, &solutions))
}

/// One cosine term `amplitude·cos(2π(k·x) + phase)` of an initial guess.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub mode: [i32; 2],
    pub amplitude: f64,
    pub phase: f64,
}

/// `1 + Σ_i a_i cos(2π k_i·x + φ_i)`, constant in time. Nonzero modes keep the
/// unit mass; `Σ|a_i| < 1` keeps it positive.
pub fn fourier_guess(grid: TorusGrid, terms: &[FourierTerm]) -> Result<SpaceTimeField> {
    if terms.iter().any(|t| t.mode == [0, 0]) {
        return Err(MfgError::param("mode", "the zero mode would change the mass"));
    }
    if terms.iter().map(|t| t.amplitude.abs()).sum::<f64>() >= 1.0 {
        return Err(MfgError::param("amplitude", "sum of |amplitudes| must stay below 1"));
    }
    let f = Field::from_fn(grid, |x| {
        1.0 + terms
            .iter()
            .map(|t| {
                let kx: f64 = x.iter().zip(t.mode).map(|(xi, ki)| xi * ki as f64).sum();
                t.amplitude * (2.0 * PI * kx + t.phase).cos()
            })
            .sum::<f64>()
    });
    Ok(SpaceTimeField::constant_in_time(&f, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn validates_config() {
        let bad = [
            SolverConfig { theta: 0.0, ..Default::default() },
            SolverConfig { theta: 1.5, ..Default::default() },
            SolverConfig { tol: 0.0, ..Default::default() },
            SolverConfig { max_iter: 0, ..Default::default() },
            SolverConfig { anderson_depth: 6, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn trivial_problem_is_a_fixed_point() {
        let p = presets::trivial(1, 64, 100, 1.0).unwrap();
        let m = initial_density(&p, &InitialGuess::Uniform).unwrap();
        let phi = phi_map(&p, &m).unwrap();
        assert!(phi.sup_distance(&m) < 1e-12);
        let sol = solve_mfg(&p, &SolverConfig::default()).unwrap();
        assert!(sol.converged && sol.iterations <= 2);
        assert!(sol.final_residual() <= 1e-12);
    }

    #[test]
    fn phi_rejects_inputs_outside_x() {
        let p = presets::trivial(1, 32, 10, 1.0).unwrap();
        let g = *p.grid();
        let neg = SpaceTimeField::from_fn(g, |x, _| 1.0 + 1.5 * (2.0 * PI * x[0]).cos());
        assert!(matches!(phi_map(&p, &neg), Err(MfgError::XViolation(_))));
        let heavy = SpaceTimeField::constant_in_time(&Field::constant(g, 2.0), g);
        assert!(matches!(phi_map(&p, &heavy), Err(MfgError::XViolation(_))));
    }

    #[test]
    fn phi_conserves_mass() {
        let p = presets::sine_a4(64, 50).unwrap();
        let g = *p.grid();
        let guess = fourier_guess(
            g,
            &[FourierTerm { mode: [2, 0], amplitude: 0.4, phase: 0.3 }],
        )
        .unwrap();
        let out = phi_map(&p, &guess).unwrap();
        for s in out.slices() {
            assert!((s.integral() - 1.0).abs() < 1e-12);
        }
        assert!(out.min() >= -1e-12);
    }

    #[test]
    fn anderson_converges_on_sine_problem() {
        let p = presets::sine_a4(32, 40).unwrap();
        let plain = solve_mfg(&p, &SolverConfig::default()).unwrap();
        let acc = solve_mfg(&p, &SolverConfig { anderson_depth: 3, ..Default::default() }).unwrap();
        assert!(acc.iterations < plain.iterations);
        assert!(acc.m.sup_distance(&plain.m) < 1e-7);
    }

    #[test]
    fn not_converged_returns_best_iterate() {
        let p = presets::sine_a4(32, 20).unwrap();
        let cfg = SolverConfig { max_iter: 3, ..Default::default() };
        match solve_mfg(&p, &cfg) {
            Err(MfgError::NotConverged { best }) => {
                assert!(!best.converged);
                assert_eq!(best.iterations, 3);
                assert_eq!(best.residual_history.len(), 3);
                let min = best.residual_history.iter().copied().fold(f64::INFINITY, f64::min);
                assert_eq!(best.final_residual(), min);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn probe_needs_two_guesses() {
        let p = presets::trivial(1, 16, 4, 1.0).unwrap();
        let m = initial_density(&p, &InitialGuess::Uniform).unwrap();
        assert!(uniqueness_probe(&p, &SolverConfig::default(), &[m]).is_err());
    }

    #[test]
    fn fourier_guess_validation() {
        let g = TorusGrid::new(1, 16, 1.0, 2).unwrap();
        assert!(fourier_guess(g, &[FourierTerm { mode: [0, 0], amplitude: 0.1, phase: 0.0 }]).is_err());
        assert!(fourier_guess(g, &[FourierTerm { mode: [1, 0], amplitude: 1.0, phase: 0.0 }]).is_err());
    }
}

//! The solve, verify, probe and sweep experiments.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use log::{info, warn};
use mfglab::diagnostics::{
    energy_inequalities, gradient_bound_check, phi_functional, residual_check, x_set_check, EnergyReport,
    GradientBoundReport, ResidualCheck, Trajectory,
};
use mfglab::export::read_solution;
use mfglab::fixed_point::{
    pairwise_dispersion, solve_mfg, uniqueness_report, InitialGuess, MfgSolution, SolverConfig, UniquenessReport,
    XSetCheck,
};
use mfglab::hamiltonian::A4Report;
use mfglab::{MfgError, MfgProblem, SpaceTimeField, TorusGrid};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::output::{header, num, OutDir};

/// Tolerance on the φ decay and energy-inequality violations in `verify`.
pub const PAIR_TOL: f64 = 1e-3;

fn numerical(e: MfgError) -> CliError {
    match e {
        MfgError::BlowUp { .. } => CliError::Config { key: "grid.nt".into(), msg: e.to_string() },
        other => CliError::Config { key: "solver".into(), msg: other.to_string() },
    }
}

/// Solves from one guess; a non-converged run still returns its best iterate.
fn solve_from(problem: &MfgProblem, base: &SolverConfig, guess: InitialGuess) -> Result<MfgSolution, CliError> {
    let cfg = SolverConfig { initial_guess: guess, ..base.clone() };
    match solve_mfg(problem, &cfg) {
        Ok(s) => Ok(s),
        Err(MfgError::NotConverged { best }) => Ok(*best),
        Err(e) => Err(numerical(e)),
    }
}

#[derive(Serialize)]
struct SolveSummary {
    converged: bool,
    iterations: usize,
    final_residual: f64,
    tol: f64,
    uniqueness_guarded: bool,
    a4: Option<A4Report>,
    hamiltonian: &'static str,
    grid: TorusGrid,
}

pub fn solve(cfg: &LoadedConfig, out: &OutDir, seed: u64) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let solver = cfg.solver_config()?;
    let guess = cfg.guesses(*problem.grid(), seed)?.remove(0);
    let sol = solve_from(&problem, &solver, guess)?;

    out.solution(&sol.u, &sol.m)?;
    let rows: Vec<Vec<String>> = sol
        .residual_history
        .iter()
        .enumerate()
        .map(|(i, r)| vec![(i + 1).to_string(), num(*r)])
        .collect();
    out.csv("residual_history.csv", &header(&["iteration", "residual"]), &rows)?;
    out.json("x_set.json", &x_set_check(&sol.m, problem.m_cap()))?;
    out.json("gradient_bound.json", &gradient_bound_check(&sol.u, &problem).map_err(numerical)?)?;
    let summary = SolveSummary {
        converged: sol.converged,
        iterations: sol.iterations,
        final_residual: sol.final_residual(),
        tol: solver.tol,
        uniqueness_guarded: sol.uniqueness_guarded(),
        a4: sol.a4.clone(),
        hamiltonian: problem.hamiltonian().family_name(),
        grid: *problem.grid(),
    };
    out.json("summary.json", &summary)?;
    if sol.converged {
        info!("converged in {} iterations", sol.iterations);
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "residual {:e} after {} iterations",
            sol.final_residual(),
            sol.iterations
        )))
    }
}

fn load_solution(path: &Path, problem: &MfgProblem) -> Result<(SpaceTimeField, SpaceTimeField), CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let (u, m) = read_solution(BufReader::new(f)).map_err(|e| CliError::io(path, e))?;
    if u.grid() != problem.grid() {
        return Err(CliError::Io(format!("{}: grid does not match the configuration", path.display())));
    }
    Ok((u, m))
}

#[derive(Serialize)]
struct SolutionChecks {
    label: &'static str,
    x_set_check: XSetCheck,
    gradient_bound_check: Option<GradientBoundReport>,
    residual_check: Option<ResidualCheck>,
    errors: Vec<String>,
}

#[derive(Serialize)]
struct PhiSummary {
    decay_violation: f64,
    phi_initial: f64,
    phi_final: f64,
}

#[derive(Serialize)]
struct PairChecks {
    tol: f64,
    phi_functional: Option<PhiSummary>,
    energy_inequalities: Option<EnergyReport>,
    errors: Vec<String>,
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    failing: Vec<String>,
    solutions: Vec<SolutionChecks>,
    pair: Option<PairChecks>,
}

fn check_solution(
    label: &'static str,
    problem: &MfgProblem,
    u: &SpaceTimeField,
    m: &SpaceTimeField,
    failing: &mut Vec<String>,
) -> SolutionChecks {
    let mut errors = Vec::new();
    let mut fail = |name: &str| failing.push(format!("{name}[{label}]"));
    let x = x_set_check(m, problem.m_cap());
    if !x.holds {
        fail("x_set_check");
    }
    let gb = match gradient_bound_check(u, problem) {
        Ok(r) => {
            if !r.holds {
                fail("gradient_bound_check");
            }
            Some(r)
        }
        Err(e) => {
            fail("gradient_bound_check");
            errors.push(e.to_string());
            None
        }
    };
    let res = match residual_check(Trajectory { problem, u, m }) {
        Ok(r) => {
            if !r.holds {
                fail("residual_check");
            }
            Some(r)
        }
        Err(e) => {
            fail("residual_check");
            errors.push(e.to_string());
            None
        }
    };
    SolutionChecks { label, x_set_check: x, gradient_bound_check: gb, residual_check: res, errors }
}

pub struct PairInput<'a> {
    pub config: &'a LoadedConfig,
    pub solution: &'a Path,
}

pub fn verify(cfg: &LoadedConfig, solution: &Path, pair: Option<PairInput<'_>>, out: &OutDir) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let (u, m) = load_solution(solution, &problem)?;
    let mut failing = Vec::new();
    let mut solutions = vec![check_solution("primary", &problem, &u, &m, &mut failing)];

    let pair = match pair {
        None => None,
        Some(p) => {
            let problem2 = p.config.problem()?;
            let (u2, m2) = load_solution(p.solution, &problem2)?;
            solutions.push(check_solution("pair", &problem2, &u2, &m2, &mut failing));
            let a = Trajectory { problem: &problem, u: &u, m: &m };
            let b = Trajectory { problem: &problem2, u: &u2, m: &m2 };
            let mut errors = Vec::new();
            let phi = match phi_functional(a, b) {
                Ok(s) => {
                    let rows: Vec<Vec<String>> = s
                        .times
                        .iter()
                        .zip(&s.phi)
                        .map(|(t, f)| vec![num(*t), num(*f), num((-0.5 * t).exp() * f)])
                        .collect();
                    out.csv("phi.csv", &header(&["t", "phi", "weighted_phi"]), &rows)?;
                    if s.decay_violation > PAIR_TOL {
                        failing.push("phi_functional".into());
                    }
                    Some(PhiSummary {
                        decay_violation: s.decay_violation,
                        phi_initial: s.phi[0],
                        phi_final: *s.phi.last().expect("at least two slices"),
                    })
                }
                Err(e) => {
                    failing.push("phi_functional".into());
                    errors.push(e.to_string());
                    None
                }
            };
            let energy = match energy_inequalities(a, b) {
                Ok(r) => {
                    if r.imp1_viol.max(r.imp2_viol).max(r.imp3_viol) > PAIR_TOL {
                        failing.push("energy_inequalities".into());
                    }
                    Some(r)
                }
                Err(e) => {
                    failing.push("energy_inequalities".into());
                    errors.push(e.to_string());
                    None
                }
            };
            Some(PairChecks { tol: PAIR_TOL, phi_functional: phi, energy_inequalities: energy, errors })
        }
    };

    let report = VerifyReport { passed: failing.is_empty(), failing: failing.clone(), solutions, pair };
    out.json("verify.json", &report)?;
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failing))
    }
}

#[derive(Serialize)]
struct ProbeReport {
    guarded: bool,
    failed_branches: Vec<usize>,
    report: UniquenessReport,
}

fn multi_start(
    pool: &ThreadPool,
    problem: &MfgProblem,
    solver: &SolverConfig,
    guesses: Vec<InitialGuess>,
) -> Result<Vec<MfgSolution>, CliError> {
    pool.install(|| guesses.into_par_iter().map(|g| solve_from(problem, solver, g)).collect())
}

pub fn probe(cfg: &LoadedConfig, out: &OutDir, pool: &ThreadPool, seed: u64) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let solver = cfg.solver_config()?;
    let guesses = cfg.guesses(*problem.grid(), seed)?;
    if guesses.len() < 2 {
        return Err(CliError::Config { key: "solver.guesses".into(), msg: "a probe needs at least two guesses".into() });
    }
    let sols = multi_start(pool, &problem, &solver, guesses)?;
    let failed: Vec<usize> = sols.iter().enumerate().filter(|(_, s)| !s.converged).map(|(i, _)| i).collect();
    let converged: Vec<MfgSolution> = sols.into_iter().filter(|s| s.converged).collect();
    let report = uniqueness_report(&problem, solver.tol, &converged);
    let guarded = report.a4.as_ref().is_some_and(A4Report::guards_uniqueness);
    if !guarded {
        warn!("smallness condition not certified: agreement says nothing about uniqueness");
    }
    let within = report.within_bound;
    out.json("uniqueness.json", &ProbeReport { guarded, failed_branches: failed.clone(), report })?;
    if !failed.is_empty() {
        Err(CliError::NotConverged(format!("branches {failed:?}")))
    } else if !within {
        Err(CliError::Verification(vec!["uniqueness_probe".into()]))
    } else {
        Ok(())
    }
}

struct SweepRow {
    c0: f64,
    threshold: f64,
    converged: bool,
    iters: usize,
    dispersion: f64,
}

fn sweep_row(cfg: &LoadedConfig, c0: f64, seed: u64) -> Result<SweepRow, CliError> {
    let grid = cfg.grid()?;
    let hm = cfg.hamiltonian_with_c0(grid.dim(), c0)?;
    let mut problem = cfg.problem_with(grid, hm.clone())?;
    if problem.recommended_nt() > grid.nt() {
        let nt = problem.recommended_nt();
        info!("c0 = {c0}: raising nt from {} to {nt} for stability", grid.nt());
        let g = grid.with_time(grid.t_final(), nt).map_err(|e| CliError::Config { key: "grid".into(), msg: e.to_string() })?;
        problem = cfg.problem_with(g, hm)?;
    }
    let solver = cfg.solver_config()?;
    let sols: Vec<MfgSolution> = cfg
        .guesses(*problem.grid(), seed)?
        .into_iter()
        .map(|g| solve_from(&problem, &solver, g))
        .collect::<Result<_, _>>()?;
    let converged = sols.iter().all(|s| s.converged);
    let iters = sols.iter().map(|s| s.iterations).max().unwrap_or(0);
    let dispersion = if converged {
        let (du, dm) = pairwise_dispersion(&sols);
        du.max(dm)
    } else {
        f64::NAN
    };
    Ok(SweepRow { c0, threshold: 1.0 / (12.0 * problem.m_cap().max(1.0)), converged, iters, dispersion })
}

pub fn sweep(cfg: &LoadedConfig, out: &OutDir, pool: &ThreadPool, seed: u64) -> Result<(), CliError> {
    let values = match &cfg.config.sweep {
        Some(s) => s.c0.clone(),
        None => return Err(CliError::Config { key: "sweep".into(), msg: "missing sweep section".into() }),
    };
    let rows: Vec<SweepRow> = pool.install(|| values.par_iter().map(|&c0| sweep_row(cfg, c0, seed)).collect::<Result<_, _>>())?;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.c0), num(r.threshold), r.converged.to_string(), r.iters.to_string(), num(r.dispersion)])
        .collect();
    let cols = header(&["c0", "threshold_1_over_12M", "converged", "iters", "dispersion"]);
    out.csv("sweep.csv", &cols, &cells)?;
    for r in rows.iter().filter(|r| !r.converged) {
        warn!("c0 = {}: not converged after {} iterations", r.c0, r.iters);
    }
    Ok(())
}

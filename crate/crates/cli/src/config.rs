//! Run configuration: a single JSON document, validated before any compute.

use std::fs;
use std::path::{Path, PathBuf};

use mfglab::coupling::{make_kernel, Kernel};
use mfglab::fixed_point::{fourier_guess, FourierTerm, InitialGuess, SolverConfig};
use mfglab::fp::FluxScheme;
use mfglab::grid::DiffusionScheme;
use mfglab::hamiltonian::{game_hamiltonian, make_drift_plus, make_nonconvex_sine, p_lattice, DiscreteGame};
use mfglab::{presets, Field, HamiltonianModel, MfgProblem, SpaceTimeField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Solve,
    Verify,
    Probe,
    Sweep,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub grid: GridConfig,
    pub hamiltonian: HamiltonianConfig,
    pub kernel: KernelConfig,
    pub u0: DataSource,
    pub m_t: DataSource,
    #[serde(default)]
    pub schemes: SchemeConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub nt: usize,
    pub t_final: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianConfig {
    Zero,
    /// `(c/2) Σ sin p_i`.
    Sine { c: f64 },
    /// `b·p + (c/2) Σ sin p_i`.
    Drift { b: Vec<f64>, c: f64 },
    /// Value of a discrete zero-sum game, checked on a lattice.
    Game { game: PathBuf, lattice: LatticeConfig },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Bump,
    Uniform,
    None,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub kind: KernelKind,
    #[serde(default)]
    pub width: Option<f64>,
}

/// A named preset or a JSON array of nodal values (path relative to the config file).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Preset(String),
    File(PathBuf),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default)]
    pub diffusion: DiffusionScheme,
    #[serde(default)]
    pub flux: FluxScheme,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GuessConfig {
    Uniform,
    Terminal,
    Fourier(Vec<FourierTerm>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "defaults::theta")]
    pub theta: f64,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub anderson_depth: usize,
    /// The first guess starts `solve`; all of them start `probe` and `sweep`.
    #[serde(default)]
    pub guesses: Vec<GuessConfig>,
    /// Extra random Fourier guesses drawn from the seed.
    #[serde(default)]
    pub random_guesses: usize,
}

mod defaults {
    use mfglab::fixed_point::SolverConfig;

    pub fn theta() -> f64 {
        SolverConfig::default().theta
    }
    pub fn tol() -> f64 {
        SolverConfig::default().tol
    }
    pub fn max_iter() -> usize {
        SolverConfig::default().max_iter
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            theta: defaults::theta(),
            tol: defaults::tol(),
            max_iter: defaults::max_iter(),
            anderson_depth: 0,
            guesses: Vec::new(),
            random_guesses: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub c0: Vec<f64>,
}

/// A configuration with its file location, for resolving relative paths.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

fn bad(key: impl Into<String>, msg: impl ToString) -> CliError {
    CliError::Config { key: key.into(), msg: msg.to_string() }
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        bad(if key == "." { "<root>".to_string() } else { key }, e.inner())
    })
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config = parse(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = LoadedConfig { config, base };
    loaded.validate()?;
    Ok(loaded)
}

fn check_positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

impl LoadedConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Checks everything that can be checked without solving, including
    /// building the problem and the initial guesses.
    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        check_positive("grid.t_final", c.grid.t_final)?;
        match &c.hamiltonian {
            HamiltonianConfig::Sine { c } => check_positive("hamiltonian.c", *c)?,
            HamiltonianConfig::Drift { c, .. } => check_positive("hamiltonian.c", *c)?,
            _ => {}
        }
        match c.kernel.kind {
            KernelKind::Bump => check_positive("kernel.width", c.kernel.width.ok_or_else(|| bad("kernel.width", "required for a bump kernel"))?)?,
            _ if c.kernel.width.is_some() => return Err(bad("kernel.width", "only a bump kernel takes a width")),
            _ => {}
        }
        self.solver_config()?;
        if let Some(s) = &c.sweep {
            if s.c0.is_empty() {
                return Err(bad("sweep.c0", "the c0 range is empty"));
            }
            if let Some(v) = s.c0.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(bad("sweep.c0", format!("values must be nonnegative, got {v}")));
            }
            if !matches!(c.hamiltonian, HamiltonianConfig::Sine { .. } | HamiltonianConfig::Drift { .. }) {
                return Err(bad("hamiltonian.family", "a sweep varies the sine part, so the family must be sine or drift"));
            }
        }
        let problem = self.problem()?;
        self.guesses(*problem.grid(), c.seed.unwrap_or(0))?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TorusGrid, CliError> {
        let g = &self.config.grid;
        TorusGrid::new(g.dim, g.n, g.t_final, g.nt).map_err(|e| bad("grid", e))
    }

    pub fn hamiltonian(&self, dim: usize) -> Result<HamiltonianModel, CliError> {
        match &self.config.hamiltonian {
            HamiltonianConfig::Zero => Ok(HamiltonianModel::zero(dim)),
            HamiltonianConfig::Sine { c } => make_nonconvex_sine(*c, dim).map_err(|e| bad("hamiltonian.c", e)),
            HamiltonianConfig::Drift { b, c } => {
                if b.len() != dim {
                    return Err(bad("hamiltonian.b", format!("needs {dim} components")));
                }
                let k = make_nonconvex_sine(*c, dim).map_err(|e| bad("hamiltonian.c", e))?;
                make_drift_plus(b, k).map_err(|e| bad("hamiltonian.b", e))
            }
            HamiltonianConfig::Game { game, lattice } => {
                let path = self.resolve(game);
                let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                let g = DiscreteGame::from_json(&text).map_err(|e| bad("hamiltonian.game", e))?;
                if g.dim() != dim {
                    return Err(bad("hamiltonian.game", "game dimension does not match the grid"));
                }
                if lattice.points == 0 || !(lattice.min < lattice.max) {
                    return Err(bad("hamiltonian.lattice", "needs min < max and at least one point"));
                }
                let samples = p_lattice(dim, lattice.min, lattice.max, lattice.points);
                game_hamiltonian(&g, &samples).map_err(|e| bad("hamiltonian.game", e))
            }
        }
    }

    /// The sine/drift Hamiltonian with its sine constant replaced by `c0`; `c0 = 0` drops the sine part.
    pub fn hamiltonian_with_c0(&self, dim: usize, c0: f64) -> Result<HamiltonianModel, CliError> {
        let inner = if c0 == 0.0 {
            HamiltonianModel::zero(dim)
        } else {
            make_nonconvex_sine(c0, dim).map_err(|e| bad("sweep.c0", e))?
        };
        match &self.config.hamiltonian {
            HamiltonianConfig::Sine { .. } => Ok(inner),
            HamiltonianConfig::Drift { b, .. } => make_drift_plus(b, inner).map_err(|e| bad("hamiltonian.b", e)),
            _ => Err(bad("hamiltonian.family", "a sweep needs the sine or drift family")),
        }
    }

    fn kernel(&self, grid: TorusGrid) -> Result<Option<Kernel>, CliError> {
        match self.config.kernel.kind {
            KernelKind::None => Ok(None),
            KernelKind::Uniform => Ok(Some(Kernel::uniform(grid))),
            KernelKind::Bump => {
                let w = self.config.kernel.width.unwrap_or_default();
                make_kernel(grid, w).map(Some).map_err(|e| bad("kernel.width", e))
            }
        }
    }

    fn data(&self, key: &str, src: &DataSource, grid: TorusGrid) -> Result<Field, CliError> {
        match src {
            DataSource::Preset(name) => preset_field(name, grid).ok_or_else(|| {
                bad(
                    format!("{key}.preset"),
                    format!("unknown preset `{name}` (expected one of {})", PRESET_FIELDS.join(", ")),
                )
            }),
            DataSource::File(p) => {
                let path = self.resolve(p);
                let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                let values: Vec<f64> = serde_json::from_str(&text).map_err(|e| bad(format!("{key}.file"), e))?;
                Field::new(grid, values).map_err(|e| bad(format!("{key}.file"), e))
            }
        }
    }

    pub fn problem(&self) -> Result<MfgProblem, CliError> {
        let grid = self.grid()?;
        self.problem_with(grid, self.hamiltonian(grid.dim())?)
    }

    pub fn problem_with(&self, grid: TorusGrid, hamiltonian: HamiltonianModel) -> Result<MfgProblem, CliError> {
        let kernel = self.kernel(grid)?;
        let u0 = self.data("u0", &self.config.u0, grid)?;
        let m_t = self.data("m_t", &self.config.m_t, grid)?;
        let p = MfgProblem::new(grid, hamiltonian, kernel, u0, m_t).map_err(|e| match e {
            mfglab::MfgError::InvalidParameter { name: "hamiltonian", .. } => bad("hamiltonian", e),
            _ => bad("m_t", e),
        })?;
        Ok(p.with_diffusion(self.config.schemes.diffusion).with_flux(self.config.schemes.flux))
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.config.solver;
        let cfg = SolverConfig {
            theta: s.theta,
            tol: s.tol,
            max_iter: s.max_iter,
            initial_guess: InitialGuess::Uniform,
            record_history: true,
            anderson_depth: s.anderson_depth,
        };
        cfg.validate().map_err(|e| match e {
            mfglab::MfgError::InvalidParameter { name, reason } => bad(format!("solver.{name}"), reason),
            other => bad("solver", other),
        })?;
        Ok(cfg)
    }

    /// Configured guesses followed by `random_guesses` seeded Fourier guesses.
    /// Defaults to `[uniform, terminal]` when nothing is configured.
    pub fn guesses(&self, grid: TorusGrid, seed: u64) -> Result<Vec<InitialGuess>, CliError> {
        let s = &self.config.solver;
        let mut out = Vec::new();
        for (i, g) in s.guesses.iter().enumerate() {
            out.push(match g {
                GuessConfig::Uniform => InitialGuess::Uniform,
                GuessConfig::Terminal => InitialGuess::TerminalConstant,
                GuessConfig::Fourier(terms) => InitialGuess::Custom(
                    fourier_guess(grid, terms).map_err(|e| bad(format!("solver.guesses[{i}]"), e))?,
                ),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..s.random_guesses {
            out.push(InitialGuess::Custom(random_guess(grid, &mut rng)));
        }
        if out.is_empty() {
            out = vec![InitialGuess::Uniform, InitialGuess::TerminalConstant];
        }
        Ok(out)
    }
}

/// Two or three random cosine modes with total amplitude below 0.8.
fn random_guess(grid: TorusGrid, rng: &mut ChaCha8Rng) -> SpaceTimeField {
    let count = rng.random_range(2..=3);
    let terms: Vec<FourierTerm> = (0..count)
        .map(|_| {
            let mut mode = [rng.random_range(1..=4), 0];
            if grid.dim() == 2 {
                mode[1] = rng.random_range(-2..=2);
            }
            FourierTerm {
                mode,
                amplitude: rng.random_range(-0.25..0.25),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect();
    fourier_guess(grid, &terms).expect("amplitudes and modes are in range")
}

pub const PRESET_FIELDS: [&str; 6] = ["zero", "sine", "cosine", "uniform", "mixture", "mixture_perturbed"];

fn preset_field(name: &str, grid: TorusGrid) -> Option<Field> {
    Some(match name {
        "zero" => Field::zeros(grid),
        "sine" => presets::sine_initial_value(grid),
        "cosine" => presets::cosine_initial_value(grid),
        "uniform" => Field::constant(grid, 1.0),
        "mixture" => presets::terminal_mixture(grid),
        "mixture_perturbed" => {
            presets::perturbed_density(&presets::terminal_mixture(grid), presets::TERMINAL_PERTURBATION).ok()?
        }
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "grid": {"dim": 1, "n": 32, "nt": 20, "t_final": 0.5},
        "hamiltonian": {"family": "sine", "c": 0.02},
        "kernel": {"width": 0.25},
        "u0": {"preset": "sine"},
        "m_t": {"preset": "mixture"}
    }"#;

    fn loaded(text: &str) -> Result<LoadedConfig, CliError> {
        let l = LoadedConfig { config: parse(text)?, base: PathBuf::new() };
        l.validate()?;
        Ok(l)
    }

    fn key_of(r: Result<LoadedConfig, CliError>) -> String {
        match r {
            Err(CliError::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn base_config_builds() {
        let l = loaded(BASE).unwrap();
        assert_eq!(l.problem().unwrap().grid().n(), 32);
        assert_eq!(l.guesses(l.grid().unwrap(), 0).unwrap().len(), 2);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            (BASE.replace("\"width\": 0.25", "\"width\": -0.1"), "kernel.width"),
            (BASE.replace("\"width\": 0.25", "\"width\": \"wide\""), "kernel.width"),
            (BASE.replace("\"n\": 32", "\"n\": 32, \"m\": 3"), "grid.m"),
            (BASE.replace("\"c\": 0.02", "\"c\": -1"), "hamiltonian.c"),
            (BASE.replace("\"preset\": \"sine\"", "\"preset\": \"nope\""), "u0.preset"),
            (BASE.replace("\"t_final\": 0.5", "\"t_final\": 0"), "grid.t_final"),
        ];
        for (text, key) in cases {
            assert_eq!(key_of(loaded(&text)), key, "{text}");
        }
        let with_solver = BASE.replacen('{', r#"{"solver": {"theta": 2.0},"#, 1);
        assert_eq!(key_of(loaded(&with_solver)), "solver.theta");
        let sweep = BASE.replacen('{', r#"{"sweep": {"c0": []},"#, 1);
        assert_eq!(key_of(loaded(&sweep)), "sweep.c0");
    }

    #[test]
    fn seeded_guesses_are_reproducible() {
        let text = BASE.replacen('{', r#"{"solver": {"random_guesses": 3},"#, 1);
        let l = loaded(&text).unwrap();
        let g = l.grid().unwrap();
        let a = l.guesses(g, 7).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, l.guesses(g, 7).unwrap());
        assert_ne!(a, l.guesses(g, 8).unwrap());
    }
}

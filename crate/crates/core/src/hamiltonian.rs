//! Hamiltonians `H(p)` with a certified bound `c0 ≥ |DH| + |D²H|`, and the
//! min-max Hamiltonians of discretized zero-sum games.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{Field, VectorField};

/// Step used for finite-difference derivatives of game Hamiltonians.
const GAME_FD_STEP: f64 = 1e-6;
/// Tolerance on `H⁻ − H⁺` for a game to count as having a value.
pub const GAME_VALUE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
enum Family {
    Zero,
    NonconvexSine { c: f64 },
    DriftPlus { b: Vec<f64>, inner: Box<HamiltonianModel> },
    Game { game: DiscreteGame },
}

/// An evaluatable Hamiltonian with derivative bound `c0`.
///
/// `certified` is true when `c0` is proven analytically; game-derived models
/// carry an empirical estimate instead.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel {
    dim: usize,
    family: Family,
    c0: f64,
    certified: bool,
    drift: Vec<f64>,
}

impl HamiltonianModel {
    /// `H ≡ 0`. Its bound is `c0 = 0`.
    pub fn zero(dim: usize) -> Self {
        HamiltonianModel {
            dim,
            family: Family::Zero,
            c0: 0.0,
            certified: true,
            drift: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// Constant drift vector `b` (zero outside the drift family).
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// Short family label used in reports.
    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Zero => "zero",
            Family::NonconvexSine { .. } => "sine",
            Family::DriftPlus { .. } => "drift",
            Family::Game { .. } => "game",
        }
    }

    /// Upper bound on `|DH(p)|` over all p, used for CFL control.
    pub fn speed_bound(&self) -> f64 {
        match &self.family {
            Family::Zero => 0.0,
            Family::NonconvexSine { c } => 0.5 * c * (self.dim as f64).sqrt(),
            Family::DriftPlus { b, inner } => norm(b) + inner.speed_bound(),
            Family::Game { game } => game.max_speed(),
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match &self.family {
            Family::Zero => 0.0,
            Family::NonconvexSine { c } => 0.5 * c * p.iter().map(|x| x.sin()).sum::<f64>(),
            Family::DriftPlus { b, inner } => {
                b.iter().zip(p).map(|(bi, pi)| bi * pi).sum::<f64>() + inner.eval(p)
            }
            Family::Game { game } => isaacs_lower(game, p),
        }
    }

    /// Writes `DH(p)` into `out`.
    pub fn grad_into(&self, p: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Family::NonconvexSine { c } => {
                for (o, x) in out.iter_mut().zip(p) {
                    *o = 0.5 * c * x.cos();
                }
            }
            Family::DriftPlus { b, inner } => {
                inner.grad_into(p, out);
                for (o, bi) in out.iter_mut().zip(b) {
                    *o += bi;
                }
            }
            Family::Game { .. } => {
                let mut q = p.to_vec();
                for i in 0..self.dim {
                    q[i] = p[i] + GAME_FD_STEP;
                    let fp = self.eval(&q);
                    q[i] = p[i] - GAME_FD_STEP;
                    let fm = self.eval(&q);
                    q[i] = p[i];
                    out[i] = (fp - fm) / (2.0 * GAME_FD_STEP);
                }
            }
        }
    }

    pub fn grad(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.grad_into(p, &mut out);
        out
    }

    /// `H(Du)` at every node, given node gradients.
    pub fn eval_field(&self, du: &VectorField) -> Field {
        let grid = *du.grid();
        let mut p = vec![0.0; self.dim];
        let vals = (0..grid.len())
            .map(|j| {
                for (i, pi) in p.iter_mut().enumerate() {
                    *pi = du.component(i)[j];
                }
                self.eval(&p)
            })
            .collect();
        Field::from_raw(grid, vals)
    }

    /// `DH(Du)` at every node.
    pub fn grad_field(&self, du: &VectorField) -> VectorField {
        let grid = *du.grid();
        let mut comps = vec![vec![0.0; grid.len()]; self.dim];
        let mut p = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for j in 0..grid.len() {
            for (i, pi) in p.iter_mut().enumerate() {
                *pi = du.component(i)[j];
            }
            self.grad_into(&p, &mut g);
            for (c, gi) in comps.iter_mut().zip(&g) {
                c[j] = *gi;
            }
        }
        VectorField::from_raw(grid, comps)
    }

    /// Finite-difference Hessian of `eval` at `p`.
    pub fn fd_hessian(&self, p: &[f64], step: f64) -> Vec<Vec<f64>> {
        let d = self.dim;
        let mut hess = vec![vec![0.0; d]; d];
        let mut q = p.to_vec();
        let f0 = self.eval(p);
        for i in 0..d {
            for j in i..d {
                let val = if i == j {
                    q[i] = p[i] + step;
                    let fp = self.eval(&q);
                    q[i] = p[i] - step;
                    let fm = self.eval(&q);
                    q[i] = p[i];
                    (fp - 2.0 * f0 + fm) / (step * step)
                } else {
                    let mut corner = |si: f64, sj: f64| {
                        q[i] = p[i] + si * step;
                        q[j] = p[j] + sj * step;
                        let v = self.eval(&q);
                        q[i] = p[i];
                        q[j] = p[j];
                        v
                    };
                    (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                        / (4.0 * step * step)
                };
                hess[i][j] = val;
                hess[j][i] = val;
            }
        }
        hess
    }

    /// Largest observed `|DH(p)| + ‖D²H(p)‖` over the samples, Hessian by finite differences.
    pub fn sampled_bound(&self, samples: &[Vec<f64>], step: f64) -> f64 {
        samples
            .iter()
            .map(|p| {
                let g = norm(&self.grad(p));
                g + sym_operator_norm(&self.fd_hessian(p, step))
            })
            .fold(0.0, f64::max)
    }

    /// Bound that enters the smallness condition: for the drift family the
    /// constant drift is exempt, so this is the bound of the perturbation only.
    pub(crate) fn perturbation(&self) -> &HamiltonianModel {
        match &self.family {
            Family::DriftPlus { inner, .. } => inner.perturbation(),
            _ => self,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectral norm of a symmetric 1×1 or 2×2 matrix.
fn sym_operator_norm(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0].abs(),
        2 => {
            let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
            let mean = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            (mean + r).abs().max((mean - r).abs())
        }
        _ => unreachable!("dim is 1 or 2"),
    }
}

/// `H(p) = (c/2)·Σ_i sin(p_i)`, certified with `c0 = c` for dim ≤ 2.
pub fn make_nonconvex_sine(c: f64, dim: usize) -> Result<HamiltonianModel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(MfgError::param("c", "amplitude must be positive"));
    }
    if dim != 1 && dim != 2 {
        return Err(MfgError::param("dim", "must be 1 or 2"));
    }
    Ok(HamiltonianModel {
        dim,
        family: Family::NonconvexSine { c },
        c0: c,
        certified: true,
        drift: vec![0.0; dim],
    })
}

/// `H(p) = b·p + K(p)`. The bound `c0` is inherited from `k`.
pub fn make_drift_plus(b: &[f64], k: HamiltonianModel) -> Result<HamiltonianModel> {
    if b.len() != k.dim {
        return Err(MfgError::param("b", format!("expected {} components", k.dim)));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(MfgError::NonFinite("drift"));
    }
    let drift = b.iter().zip(k.drift()).map(|(bi, ki)| bi + ki).collect();
    Ok(HamiltonianModel {
        dim: k.dim,
        c0: k.c0,
        certified: k.certified,
        drift,
        family: Family::DriftPlus {
            b: b.to_vec(),
            inner: Box::new(k),
        },
    })
}

/// State-independent discretized zero-sum game: dynamics `f(a_i, b_j)` and
/// running payoff `h(a_i, b_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGame {
    dim: usize,
    f_table: Vec<Vec<Vec<f64>>>,
    h_table: Vec<Vec<f64>>,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum FEntry {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GameDocument {
    f: Vec<Vec<FEntry>>,
    h: Vec<Vec<f64>>,
    dim: usize,
}

impl DiscreteGame {
    pub fn new(dim: usize, f_table: Vec<Vec<Vec<f64>>>, h_table: Vec<Vec<f64>>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(MfgError::param("dim", "must be 1 or 2"));
        }
        let na = h_table.len();
        if na == 0 || f_table.len() != na {
            return Err(MfgError::Format("game needs at least one control for player I".into()));
        }
        let nb = h_table[0].len();
        if nb == 0 {
            return Err(MfgError::Format("game needs at least one control for player II".into()));
        }
        for (fa, ha) in f_table.iter().zip(&h_table) {
            if fa.len() != nb || ha.len() != nb {
                return Err(MfgError::Format("game tables must be rectangular".into()));
            }
            if fa.iter().any(|v| v.len() != dim) {
                return Err(MfgError::Format(format!("dynamics entries must have {dim} components")));
            }
        }
        if f_table.iter().flatten().flatten().chain(h_table.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(MfgError::NonFinite("game table"));
        }
        Ok(DiscreteGame { dim, f_table, h_table })
    }

    /// Parses `{"f": [[...]], "h": [[...]], "dim": d}`; in one dimension `f`
    /// entries may be bare numbers.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GameDocument = serde_json::from_str(text)?;
        let f_table = doc
            .f
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|e| match e {
                        FEntry::Scalar(v) => vec![v],
                        FEntry::Vector(v) => v,
                    })
                    .collect()
            })
            .collect();
        DiscreteGame::new(doc.dim, f_table, doc.h)
    }

    pub fn to_json(&self) -> String {
        let doc = GameDocument {
            f: self
                .f_table
                .iter()
                .map(|row| row.iter().map(|v| FEntry::Vector(v.clone())).collect())
                .collect(),
            h: self.h_table.clone(),
            dim: self.dim,
        };
        serde_json::to_string(&doc).expect("game serializes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn na(&self) -> usize {
        self.h_table.len()
    }

    pub fn nb(&self) -> usize {
        self.h_table[0].len()
    }

    pub fn dynamics(&self, a: usize, b: usize) -> &[f64] {
        &self.f_table[a][b]
    }

    pub fn payoff(&self, a: usize, b: usize) -> f64 {
        self.h_table[a][b]
    }

    /// `−f(a,b)·p − h(a,b)`
    pub fn entry(&self, a: usize, b: usize, p: &[f64]) -> f64 {
        let fp: f64 = self.f_table[a][b].iter().zip(p).map(|(f, q)| f * q).sum();
        -fp - self.h_table[a][b]
    }

    /// `max |f(a,b)|`, the Lipschitz constant of both Isaacs Hamiltonians in `p`.
    pub fn max_speed(&self) -> f64 {
        self.f_table.iter().flatten().map(|v| norm(v)).fold(0.0, f64::max)
    }
}

/// `H⁻(p) = min_a max_b {−f·p − h}`.
pub fn isaacs_lower(g: &DiscreteGame, p: &[f64]) -> f64 {
    (0..g.na())
        .map(|a| (0..g.nb()).map(|b| g.entry(a, b, p)).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// `H⁺(p) = max_b min_a {−f·p − h}`.
pub fn isaacs_upper(g: &DiscreteGame, p: &[f64]) -> f64 {
    (0..g.nb())
        .map(|b| (0..g.na()).map(|a| g.entry(a, b, p)).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Builds the Hamiltonian of a game that has a value on every sample point.
/// The resulting `c0` is an empirical sampling estimate and is flagged uncertified.
pub fn game_hamiltonian(g: &DiscreteGame, samples: &[Vec<f64>]) -> Result<HamiltonianModel> {
    if samples.is_empty() {
        return Err(MfgError::param("samples", "need at least one sample point"));
    }
    let mut worst = (0.0_f64, samples[0].clone());
    for p in samples {
        if p.len() != g.dim {
            return Err(MfgError::param("samples", format!("points must have {} components", g.dim)));
        }
        let gap = isaacs_lower(g, p) - isaacs_upper(g, p);
        if gap > worst.0 {
            worst = (gap, p.clone());
        }
    }
    if worst.0 > GAME_VALUE_TOL {
        return Err(MfgError::GameHasNoValue { gap: worst.0, p: worst.1 });
    }
    let mut model = HamiltonianModel {
        dim: g.dim,
        family: Family::Game { game: g.clone() },
        c0: 0.0,
        certified: false,
        drift: vec![0.0; g.dim],
    };
    model.c0 = model.sampled_bound(samples, 1e-4);
    Ok(model)
}

/// Outcome of the smallness test `c0 < 1/(12M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A4Report {
    pub holds: bool,
    pub c0: f64,
    pub threshold: f64,
    /// `min{1/(4(M+2)), 1/(2√5)}`, implied by the threshold.
    pub consequence_bound: f64,
    pub certified: bool,
    pub m_cap: f64,
}

impl A4Report {
    /// Holds with an analytically certified constant.
    pub fn guards_uniqueness(&self) -> bool {
        self.holds && self.certified
    }
}

pub fn check_a4(hm: &HamiltonianModel, m_cap: f64) -> Result<A4Report> {
    if !(m_cap >= 1.0) {
        return Err(MfgError::param("m_cap", "M = max m_T is at least 1 for a unit-mass density"));
    }
    let k = hm.perturbation();
    let threshold = 1.0 / (12.0 * m_cap);
    let consequence_bound = (1.0 / (4.0 * (m_cap + 2.0))).min(1.0 / (2.0 * 5f64.sqrt()));
    // equality only at M = 1
    debug_assert!(threshold <= consequence_bound * (1.0 + 1e-15));
    Ok(A4Report {
        holds: k.c0 < threshold,
        c0: k.c0,
        threshold,
        consequence_bound,
        certified: k.certified,
        m_cap,
    })
}

/// Points of a uniform lattice `[lo, hi]^dim` with `count` points per axis.
pub fn p_lattice(dim: usize, lo: f64, hi: f64, count: usize) -> Vec<Vec<f64>> {
    let step = if count > 1 { (hi - lo) / (count - 1) as f64 } else { 0.0 };
    let axis: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    match dim {
        1 => axis.iter().map(|&x| vec![x]).collect(),
        _ => axis
            .iter()
            .flat_map(|&y| axis.iter().map(move |&x| vec![x, y]))
            .collect(),
    }
}

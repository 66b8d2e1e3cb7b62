//! Tabulates the lower and upper values of a discrete game on a `p` lattice.

use std::fs;
use std::path::Path;

use log::warn;
use mfglab::hamiltonian::{game_hamiltonian, isaacs_lower, isaacs_upper, p_lattice, DiscreteGame, GAME_VALUE_TOL};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{num, OutDir};

pub struct Lattice {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Serialize)]
struct IsaacsSummary {
    dim: usize,
    points: usize,
    has_value: bool,
    value_tol: f64,
    max_gap: f64,
    argmax_p: Vec<f64>,
}

fn lattice_error(msg: &str) -> CliError {
    CliError::Config { key: "lattice".into(), msg: msg.into() }
}

pub fn run(game_path: &Path, lattice: &Lattice, export: bool, out: &OutDir) -> Result<(), CliError> {
    if lattice.points == 0 {
        return Err(lattice_error("needs at least one point"));
    }
    if !(lattice.min.is_finite() && lattice.max.is_finite() && lattice.min <= lattice.max) {
        return Err(lattice_error("needs finite bounds with min <= max"));
    }
    let text = fs::read_to_string(game_path).map_err(|e| CliError::io(game_path, e))?;
    let game = DiscreteGame::from_json(&text).map_err(|e| CliError::Config { key: "game".into(), msg: e.to_string() })?;
    let dim = game.dim();
    let samples = p_lattice(dim, lattice.min, lattice.max, lattice.points);

    let mut header: Vec<String> = (0..dim).map(|i| format!("p{i}")).collect();
    header.extend(["lower", "upper", "gap"].map(String::from));
    let mut rows = Vec::with_capacity(samples.len());
    let mut worst = (0.0_f64, samples[0].clone());
    for p in &samples {
        let lo = isaacs_lower(&game, p);
        let up = isaacs_upper(&game, p);
        let gap = lo - up;
        if gap > worst.0 {
            worst = (gap, p.clone());
        }
        let mut row: Vec<String> = p.iter().map(|v| num(*v)).collect();
        row.extend([num(lo), num(up), num(gap)]);
        rows.push(row);
    }
    out.csv("isaacs.csv", &header, &rows)?;
    let has_value = worst.0 <= GAME_VALUE_TOL;
    out.json(
        "isaacs.json",
        &IsaacsSummary {
            dim,
            points: samples.len(),
            has_value,
            value_tol: GAME_VALUE_TOL,
            max_gap: worst.0,
            argmax_p: worst.1,
        },
    )?;

    if export {
        match game_hamiltonian(&game, &samples) {
            Ok(hm) => {
                let mut header: Vec<String> = (0..dim).map(|i| format!("p{i}")).collect();
                header.push("H".into());
                let rows: Vec<Vec<String>> = samples
                    .iter()
                    .map(|p| {
                        let mut r: Vec<String> = p.iter().map(|v| num(*v)).collect();
                        r.push(num(hm.eval(p)));
                        r
                    })
                    .collect();
                out.csv("hamiltonian.csv", &header, &rows)?;
            }
            Err(e) => warn!("not exporting a Hamiltonian: {e}"),
        }
    }
    Ok(())
}

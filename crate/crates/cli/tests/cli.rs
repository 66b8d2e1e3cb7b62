use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfglab::export::{read_solution, write_solution};
use mfglab::{Field, SpaceTimeField};
use serde_json::Value;
use tempfile::TempDir;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn preset(name: &str) -> PathBuf {
    repo().join("configs").join(name)
}

fn mfglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfglab"))
        .args(args)
        .env("MFGLAB_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn solve(config: &Path, out: &Path) -> Output {
    mfglab(&["solve", "--config", p(config), "--out", p(out)])
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(doc: &Path, schema: &str) {
    let schema = read_json(&repo().join("schemas").join(schema));
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    let inst = read_json(doc);
    let errors: Vec<String> = v.iter_errors(&inst).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", doc.display());
}

/// Rows of a CSV file as numbers, without the header.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn trivial_solve_and_verify() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("trivial");
    let o = solve(&preset("trivial.json"), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&out.join("m.csv"));
    assert_eq!(header[0], "t");
    assert_eq!(rows.len(), 101);
    for r in &rows {
        for v in &r[1..] {
            let v: f64 = v.parse().unwrap();
            assert!((v - 1.0).abs() <= 1e-10);
        }
    }
    assert_schema(&out.join("summary.json"), "summary.schema.json");
    assert_schema(&out.join("x_set.json"), "x_set.schema.json");
    assert_schema(&out.join("gradient_bound.json"), "gradient_bound.schema.json");

    let vout = tmp.path().join("verify");
    let sol = out.join("solution.bin");
    let o = mfglab(&["verify", "--config", p(&preset("trivial.json")), "--solution", p(&sol), "--out", p(&vout)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_schema(&vout.join("verify.json"), "verify.schema.json");
    assert_eq!(read_json(&vout.join("verify.json"))["passed"], Value::Bool(true));
}

#[test]
fn corrupted_density_fails_verification() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("trivial");
    assert_eq!(code(&solve(&preset("trivial.json"), &out)), 0);
    let sol = out.join("solution.bin");
    let (u, m) = read_solution(fs::File::open(&sol).unwrap()).unwrap();
    let g = *m.grid();
    let mut slices = m.slices().to_vec();
    let mut vals = slices[10].values().to_vec();
    vals[5] = -0.5;
    slices[10] = Field::new(g, vals).unwrap();
    let bad = SpaceTimeField::new(g, slices).unwrap();
    let bad_path = tmp.path().join("bad.bin");
    write_solution(fs::File::create(&bad_path).unwrap(), &u, &bad).unwrap();

    let vout = tmp.path().join("verify");
    let o = mfglab(&["verify", "--config", p(&preset("trivial.json")), "--solution", p(&bad_path), "--out", p(&vout)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("x_set_check"), "{}", stderr(&o));
    let report = read_json(&vout.join("verify.json"));
    assert!(report["failing"].as_array().unwrap().iter().any(|v| v == "x_set_check[primary]"));
    assert_schema(&vout.join("verify.json"), "verify.schema.json");
}

#[test]
fn sine_solve_reaches_tolerance_and_pair_verifies() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = solve(&preset("sine-a4.json"), &a);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&solve(&preset("sine-a4-perturbed.json"), &b)), 0);

    let (_, hist) = csv_rows(&a.join("residual_history.csv"));
    let last: f64 = hist.last().unwrap()[1].parse().unwrap();
    let tol = read_json(&a.join("summary.json"))["tol"].as_f64().unwrap();
    assert!(last < tol);

    let vout = tmp.path().join("verify");
    let o = mfglab(&[
        "verify",
        "--config",
        p(&preset("sine-a4.json")),
        "--solution",
        p(&a.join("solution.bin")),
        "--pair-config",
        p(&preset("sine-a4-perturbed.json")),
        "--pair-solution",
        p(&b.join("solution.bin")),
        "--out",
        p(&vout),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(&vout.join("verify.json"));
    assert!(report["pair"]["phi_functional"]["decay_violation"].as_f64().unwrap() <= 1e-3);
    let (header, rows) = csv_rows(&vout.join("phi.csv"));
    assert_eq!(header, ["t", "phi", "weighted_phi"]);
    assert_eq!(rows.len(), 201);
    assert_schema(&vout.join("verify.json"), "verify.schema.json");
}

#[test]
fn config_errors_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(preset("sine-a4.json")).unwrap();
    let cases = [
        (text.replace("\"width\": 0.25", "\"width\": -0.25"), "kernel.width"),
        (text.replace("\"theta\": 0.5", "\"theta\": 0.5, \"damping\": 1"), "solver.damping"),
        (text.replace("\"mixture\"", "\"bump\""), "m_t.preset"),
    ];
    for (i, (body, key)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.json"), body);
        let o = solve(&cfg, &tmp.path().join("out"));
        assert_eq!(code(&o), 1);
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
    }
    let o = solve(&tmp.path().join("missing.json"), &tmp.path().join("out"));
    assert_eq!(code(&o), 1);
    // a config marked for another experiment is refused
    let o = mfglab(&["solve", "--config", p(&preset("sweep.json")), "--out", p(&tmp.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("experiment"));
}

#[test]
fn iteration_budget_exhaustion_exits_two() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(preset("sine-a4.json")).unwrap().replace("\"max_iter\": 100", "\"max_iter\": 2");
    let cfg = write_config(tmp.path(), "short.json", &text);
    let out = tmp.path().join("out");
    let o = solve(&cfg, &out);
    assert_eq!(code(&o), 2);
    // the best iterate is still exported
    assert!(out.join("solution.bin").exists());
    assert_eq!(read_json(&out.join("summary.json"))["converged"], Value::Bool(false));
}

#[test]
fn solve_output_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&solve(&preset("drift.json"), &a)), 0);
    assert_eq!(code(&solve(&preset("drift.json"), &b)), 0);
    for f in ["solution.bin", "u.csv", "m.csv", "residual_history.csv", "summary.json", "x_set.json", "gradient_bound.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn probe_agrees_across_starts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("probe");
    let o = mfglab(&["probe", "--config", p(&preset("drift.json")), "--out", p(&out), "--jobs", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = out.join("uniqueness.json");
    assert_schema(&doc, "uniqueness.schema.json");
    let r = read_json(&doc);
    assert_eq!(r["guarded"], Value::Bool(true));
    assert_eq!(r["report"]["branches_completed"], 3);
    assert_eq!(r["report"]["within_bound"], Value::Bool(true));
}

#[test]
fn sweep_table_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = preset("sweep.json");
    let o = mfglab(&["sweep", "--config", p(&cfg), "--out", p(&a), "--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&mfglab(&["sweep", "--config", p(&cfg), "--out", p(&b), "--jobs", "4"])), 0);
    assert_eq!(fs::read(a.join("sweep.csv")).unwrap(), fs::read(b.join("sweep.csv")).unwrap());

    let (header, rows) = csv_rows(&a.join("sweep.csv"));
    assert_eq!(header, ["c0", "threshold_1_over_12M", "converged", "iters", "dispersion"]);
    assert_eq!(rows.len(), 8);
    let tol = 1e-10;
    for r in &rows {
        let c0: f64 = r[0].parse().unwrap();
        let threshold: f64 = r[1].parse().unwrap();
        if c0 < threshold {
            assert_eq!(r[2], "true", "{r:?}");
            assert!(r[4].parse::<f64>().unwrap() <= 10.0 * tol, "{r:?}");
        }
        if c0 == 0.0 {
            assert!(r[3].parse::<usize>().unwrap() <= 3, "{r:?}");
        }
    }
    // the range straddles the threshold
    let t: f64 = rows[0][1].parse().unwrap();
    assert!(rows.iter().any(|r| r[0].parse::<f64>().unwrap() > t));

    let empty = fs::read_to_string(&cfg).unwrap().replace(
        "\"c0\": [0.0, 0.005, 0.01, 0.02, 0.03, 0.04, 0.06, 0.1]",
        "\"c0\": []",
    );
    let bad = write_config(tmp.path(), "empty.json", &empty);
    let o = mfglab(&["sweep", "--config", p(&bad), "--out", p(&a)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sweep.c0"));
}

fn isaacs(game: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["isaacs", "--game", p(game), "--out", p(out)];
    args.extend_from_slice(extra);
    mfglab(&args)
}

#[test]
fn isaacs_tables() {
    let tmp = TempDir::new().unwrap();
    let games = repo().join("configs/games");

    let out = tmp.path().join("separable");
    let o = isaacs(&games.join("separable.json"), &out, &["--export-hamiltonian"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&out.join("isaacs.csv"));
    assert_eq!(header, ["p0", "lower", "upper", "gap"]);
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() == 0.0));
    assert!(out.join("hamiltonian.csv").exists());
    assert_schema(&out.join("isaacs.json"), "isaacs.schema.json");
    assert_eq!(read_json(&out.join("isaacs.json"))["has_value"], Value::Bool(true));

    let out = tmp.path().join("singleton");
    assert_eq!(code(&isaacs(&games.join("singleton.json"), &out, &["--points", "5"])), 0);
    let (header, rows) = csv_rows(&out.join("isaacs.csv"));
    assert_eq!(header, ["p0", "p1", "lower", "upper", "gap"]);
    assert_eq!(rows.len(), 25);
    for r in &rows {
        let v: Vec<f64> = r.iter().map(|s| s.parse().unwrap()).collect();
        let expected = -(0.5 * v[0] - 1.0 * v[1]) - 0.25;
        assert!((v[2] - expected).abs() <= 1e-15 && v[2] == v[3], "{r:?}");
    }

    let out = tmp.path().join("pennies");
    let o = isaacs(&games.join("pennies.json"), &out, &["--p-min", "-1", "--p-max", "1", "--export-hamiltonian"]);
    assert_eq!(code(&o), 0);
    let s = read_json(&out.join("isaacs.json"));
    assert_eq!(s["has_value"], Value::Bool(false));
    assert!(s["max_gap"].as_f64().unwrap() > 0.0);
    assert!(!out.join("hamiltonian.csv").exists());

    let bad = write_config(tmp.path(), "bad_game.json", r#"{"dim": 1, "f": [[1.0, 2.0]], "h": [[0.0]]}"#);
    assert_eq!(code(&isaacs(&bad, &tmp.path().join("bad"), &[])), 1);
    assert_eq!(code(&isaacs(&games.join("pennies.json"), &tmp.path().join("bad"), &["--points", "0"])), 1);
}

#[test]
fn shipped_files_validate_against_schemas() {
    for entry in fs::read_dir(repo().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            assert_schema(&path, "run_config.schema.json");
        }
    }
    for entry in fs::read_dir(repo().join("configs/games")).unwrap() {
        assert_schema(&entry.unwrap().path(), "game.schema.json");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mfglab(&["solve"])), 1);
    assert_eq!(code(&mfglab(&["frobnicate"])), 1);
    assert_eq!(code(&mfglab(&["--help"])), 0);
}

mod common;

use common::*;
use proptest::prelude::*;
use std::path::{Path, PathBuf};
use std::process::Command;
use thermotop::app;
use thermotop::config::{parse_config, parse_config_str, Method, ProblemConfig};
use thermotop::material::{CharacteristicField, Conductivity, Phase};
use thermotop::mesh::Condition;
use thermotop::optimizer::{run_schedule, OptimizerState, StepResult};
use thermotop::output::{vtk_string, HISTORY_HEADER};
use thermotop::Error;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

const SMALL_RUN: &str = r#"
[mesh]
dims = [16, 16]
extent = [1.0, 1.0]

[[mesh.regions]]
name = "pad"
shape = { kind = "box", min = [0.0, 0.375, 0.0], max = [0.125, 0.625, 0.0] }

[materials.background]
kappa = 1.0

[materials.pad]
kappa = 1.0
optimizable = false

[[boundary]]
faces = { axis = 0, side = "min", patch = { kind = "rect", min = [0.0, 0.4, 0.0], max = [0.0, 0.6, 0.0] } }
condition = { kind = "dirichlet", value = 1.0 }

[[boundary]]
faces = { axis = 0, side = "max" }
condition = { kind = "dirichlet", value = 0.0 }

[functional]
kind = "compliance"

[optimizer]
time = { start = 0.0, end = 0.95, steps = 19 }

[output]
formats = ["vtk", "csv"]
snapshot_every = 5
"#;

#[test]
fn example_configs_round_trip() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = parse_config(&path).unwrap();
        let back = parse_config_str(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back, "{}", path.display());
        n += 1;
    }
    assert!(n >= 6);
}

#[test]
fn full_resolution_conductor_echo() {
    let cfg = parse_config(configs_dir().join("conductor_120.toml")).unwrap();
    assert_eq!(cfg.mesh.dims, Some(vec![120, 120, 120]));
    let h = cfg.spacing().unwrap();
    assert!(h.iter().all(|&v| (v - 1.0 / 120.0).abs() < 1e-15));
    let bg = &cfg.materials["background"];
    assert_eq!(bg.kappa, Conductivity::Scalar(1.0));
    assert_eq!((bg.alpha_kappa, bg.m_kappa, bg.source), (1e-3, 5.0, 0.0));
    assert_eq!(cfg.optimizer.tau, 1.0);
    assert_eq!(cfg.optimizer.method, Method::ClosedForm);
    let grid = cfg.time_grid();
    assert_eq!(grid.len(), 19);
    assert!((grid[18] - 0.95).abs() < 1e-15);
    let values: Vec<f64> = cfg
        .boundary
        .iter()
        .filter_map(|b| match b.condition {
            Condition::Dirichlet { value } => Some(value),
            _ => None,
        })
        .collect();
    assert_eq!(values.iter().filter(|&&v| v == 293.0).count(), 4);
    assert_eq!(values.iter().filter(|&&v| v == 278.0).count(), 9);
    assert_eq!(parse_config_str(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(parse_config_str(&cfg.to_toml()).unwrap().to_toml(), cfg.to_toml());
}

fn config_errors(text: &str) -> Vec<String> {
    match parse_config_str(text) {
        Err(Error::Config(v)) => v,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn validation_reports_every_problem() {
    let no_dims = SMALL_RUN.replace("dims = [16, 16]\n", "");
    let errs = config_errors(&no_dims);
    assert_eq!(errs.len(), 1, "{errs:?}");
    assert!(errs[0].contains("mesh.dims"));

    let bad_omega = TEMP_FD.replace("omega = 0.4", "omega = 1.5");
    let errs = config_errors(&bad_omega);
    assert!(errs.iter().any(|e| e.contains("omega")), "{errs:?}");

    let both = bad_omega.replace("dims = [8, 8, 8]\n", "");
    let errs = config_errors(&both);
    assert!(errs.len() >= 2, "{errs:?}");
    assert!(errs.iter().any(|e| e.contains("omega")) && errs.iter().any(|e| e.contains("mesh.dims")));

    let unknown = SMALL_RUN.replace("kind = \"compliance\"", "kind = \"entropy\"");
    assert!(!config_errors(&unknown).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_configs_round_trip(
        n in 1usize..40,
        kappa in 1e-3f64..500.0,
        alpha in 1e-5f64..0.5,
        end in 0.01f64..0.9,
        steps in 1usize..30,
        tol in 1e-4f64..0.5,
        omega in 0.0f64..=1.0,
        hot in 250.0f64..400.0,
        levelset in any::<bool>(),
    ) {
        let text = TEMP_FD
            .replace("dims = [8, 8, 8]", &format!("dims = [{n}, {n}, {n}]"))
            .replace("kappa = 1.5", &format!("kappa = {kappa:?}\nalpha_kappa = {alpha:?}"))
            .replace("omega = 0.4", &format!("omega = {omega:?}"))
            .replace("value = 310.0", &format!("value = {hot:?}"))
            + &format!(
                "\n[optimizer]\nmethod = \"{}\"\ntime = {{ start = 0.0, end = {end:?}, steps = {steps} }}\ntol_chi = {tol:?}\n",
                if levelset { "levelset" } else { "closed_form" }
            );
        let cfg = parse_config_str(&text).unwrap();
        let back: ProblemConfig = parse_config_str(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

fn small_run_steps() -> (thermotop::optimizer::Problem, Vec<StepResult>) {
    let cfg = parse_config_str(SMALL_RUN).unwrap();
    let p = cfg.build_problem(None).unwrap();
    let steps = run_schedule(&p, &cfg.optimizer_config(), |_| Ok(())).unwrap();
    (p, steps)
}

#[test]
fn history_is_ordered_and_feasible_and_frozen_stays() {
    let (p, steps) = small_run_steps();
    assert_eq!(steps.len(), 19);
    for w in steps.windows(2) {
        assert!(w[1].t > w[0].t);
    }
    for s in &steps {
        assert!(!s.converged || s.constraint_residual.abs() <= 1e-3, "t={} C={}", s.t, s.constraint_residual);
        for e in 0..p.mesh().n_elements() {
            if !p.optimizable[e] {
                assert_eq!(s.chi.phases[e], Phase::Hard);
            }
        }
    }
    let init = OptimizerState::initial(p.mesh());
    assert!(init.chi.phases.iter().all(|&ph| ph == Phase::Hard));
}

#[test]
fn two_element_snapshot_layout() {
    let text = slab_toml([2, 1, 1], [2.0, 1.0, 1.0], 1.0, 1.0, 0.0);
    let p = problem(&text);
    let chi = CharacteristicField::all_hard(p.mesh());
    let eval = p.functional.evaluate(&p.model, &chi).unwrap();
    let step = StepResult {
        t: 0.0,
        chi,
        psi: vec![1.0; p.mesh().n_nodes()],
        xi_hat: vec![0.5; p.mesh().n_nodes()],
        lambda: 0.0,
        cost: eval.cost,
        outer_iters: 0,
        bisect_iters: 0,
        constraint_residual: 0.0,
        hard_fraction: vec![1.0; 2],
        converged: true,
        theta: eval.theta,
        extras: vec![],
    };
    let vtk = vtk_string(p.mesh(), &step);
    assert!(vtk.contains("DATASET UNSTRUCTURED_GRID"));
    assert!(vtk.contains("POINTS 12 double"));
    assert!(vtk.contains("CELLS 2 18"));
    assert!(vtk.contains("CELL_TYPES 2"));
    assert!(vtk.contains("POINT_DATA 12"));
    assert!(vtk.contains("CELL_DATA 2"));
    for name in ["psi", "xi_hat", "theta1", "chi", "region", "hard_fraction"] {
        assert!(vtk.contains(&format!("SCALARS {name} double 1")), "{name}");
    }
    assert!(!vtk.contains("theta2"));
    let lines: Vec<&str> = vtk.lines().collect();
    let after = |key: &str| lines.iter().position(|l| l.starts_with(key)).unwrap();
    assert_eq!(after("CELL_TYPES") - after("CELLS"), 3);
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("problem.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn nineteen_step_history_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(SMALL_RUN).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    app::run(&cfg, &a).unwrap();
    app::run(&cfg, &b).unwrap();
    let ha = std::fs::read_to_string(a.join("history.csv")).unwrap();
    let hb = std::fs::read_to_string(b.join("history.csv")).unwrap();
    assert_eq!(ha, hb);
    let rows: Vec<&str> = ha.lines().collect();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[0], HISTORY_HEADER);
    let mut snaps: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".vtk"))
        .collect();
    snaps.sort();
    assert_eq!(snaps, ["step_000.vtk", "step_005.vtk", "step_010.vtk", "step_015.vtk", "step_018.vtk"]);
    for s in &snaps {
        assert_eq!(std::fs::read(a.join(s)).unwrap(), std::fs::read(b.join(s)).unwrap());
    }
}

fn cli(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_thermotop"))
        .args(args)
        .env(app::OUTPUT_DIR_ENV, out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let good = write_config(tmp.path(), SMALL_RUN);
    let good = good.to_str().unwrap();
    let (code, stdout) = cli(&["validate", good], &out);
    assert_eq!(code, 0);
    assert!(stdout.contains("ok"));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, SMALL_RUN.replace("dims = [16, 16]\n", "")).unwrap();
    assert_eq!(cli(&["validate", bad.to_str().unwrap()], &out).0, 1);
    assert_eq!(cli(&["run", bad.to_str().unwrap()], &out).0, 1);
    assert_eq!(cli(&["validate", "/nonexistent/problem.toml"], &out).0, 1);
    assert_eq!(cli(&["sweep-omega", good, "--values", "0.5"], &out).0, 1);

    // the pad is frozen, so a 99% soft target cannot be met
    let infeasible = tmp.path().join("infeasible.toml");
    std::fs::write(&infeasible, SMALL_RUN.replace("end = 0.95, steps = 19", "end = 0.99, steps = 1")).unwrap();
    assert_eq!(cli(&["run", infeasible.to_str().unwrap()], &out).0, 2);

    let (code, stdout) = cli(&["run", good], &out);
    assert_eq!(code, 0);
    assert!(stdout.contains("19 steps"));
    assert!(out.join("history.csv").exists());
}

#[test]
fn cli_sweep_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let temp = TEMP_FD.replace("dims = [8, 8, 8]", "dims = [6, 6, 6]")
        + "\n[optimizer]\ntime = { start = 0.0, end = 0.1, steps = 2 }\n\n[output]\nformats = [\"csv\"]\n";
    let path = write_config(tmp.path(), &temp);
    let (code, stdout) = cli(&["sweep-omega", path.to_str().unwrap(), "--values", "0,0.5,1"], &out);
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(stdout.lines().count(), 4);
    let pareto = std::fs::read_to_string(out.join("pareto.csv")).unwrap();
    assert_eq!(pareto.lines().count(), 4);

    let small = SMALL_RUN.replace("end = 0.95, steps = 19", "end = 0.2, steps = 2");
    let path = write_config(tmp.path(), &small);
    let (code, stdout) = cli(&["compare", path.to_str().unwrap()], &out);
    assert_eq!(code, 0);
    assert!(stdout.contains("ratio:"));
    assert!(out.join("closed_form_history.csv").exists() && out.join("levelset_history.csv").exists());
}

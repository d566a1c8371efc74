mod common;

use common::*;
use thermotop::app;
use thermotop::config::Format;
use thermotop::mesh::Side;

#[test]
fn cloak_examples_meet_the_volume_target() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["flux_cloak.toml", "temp_cloak.toml"] {
        let mut cfg = example_config(name);
        cfg.output.formats = vec![Format::Csv];
        let steps = app::run(&cfg, &tmp.path().join(name)).unwrap();
        assert_eq!(steps.len(), cfg.time_grid().len());
    }
    let rows = history_rows(tmp.path());
    // temp cloak: two normalization runs plus the weighted run
    assert_eq!(rows.len(), 8 + 3 * 10);
    for (file, t, c, converged) in rows {
        assert!(!converged || c <= 1e-3, "{file} t={t}: |C| = {c}");
    }
}

#[test]
fn conductor_connects_hot_and_cold_patches() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = example_config("conductor.toml");
    cfg.output.formats = vec![Format::Csv];
    let steps = app::run(&cfg, tmp.path()).unwrap();
    assert_eq!(steps.len(), 19);
    assert!((steps[18].t - 0.95).abs() < 1e-12);
    for s in &steps {
        assert!(s.converged && s.constraint_residual.abs() <= 1e-3, "t={}", s.t);
    }
    for w in steps.windows(2) {
        assert!(w[1].cost >= w[0].cost, "cost fell from {} to {} at t={}", w[0].cost, w[1].cost, w[1].t);
    }
    let p = cfg.build_problem(None).unwrap();
    let mesh = p.mesh();
    let hot = dirichlet_patch_elements(mesh, Side::Min);
    let cold = dirichlet_patch_elements(mesh, Side::Max);
    assert!(!hot.is_empty() && !cold.is_empty());
    assert!(hard_connected(mesh, &steps[18].chi, &hot, &cold));
}

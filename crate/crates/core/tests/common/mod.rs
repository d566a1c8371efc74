#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermotop::config::parse_config_str;
use thermotop::fem::PropertyScales;
use thermotop::functionals::CostFunctional;
use thermotop::material::{chi_value, exchange_function, CharacteristicField, Phase};
use thermotop::mesh::{Condition, Mesh, Side};
use thermotop::optimizer::Problem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn problem(toml: &str) -> Problem {
    parse_config_str(toml).unwrap().build_problem(None).unwrap()
}

/// Slab between two isothermal faces normal to x.
pub fn slab_toml(dims: [usize; 3], extent: [f64; 3], kappa: f64, hot: f64, cold: f64) -> String {
    format!(
        r#"
[mesh]
dims = [{}, {}, {}]
extent = [{}, {}, {}]

[materials.background]
kappa = {kappa}

[[boundary]]
faces = {{ axis = 0, side = "min" }}
condition = {{ kind = "dirichlet", value = {hot} }}

[[boundary]]
faces = {{ axis = 0, side = "max" }}
condition = {{ kind = "dirichlet", value = {cold} }}

[functional]
kind = "compliance"
"#,
        dims[0], dims[1], dims[2], extent[0], extent[1], extent[2]
    )
}

/// Compliance with a heated core, a patch heat sink, prescribed flux and convection.
pub const COMPLIANCE_FD: &str = r#"
[mesh]
dims = [8, 8, 8]
extent = [1.0, 1.0, 1.0]

[[mesh.regions]]
name = "core"
shape = { kind = "box", min = [0.25, 0.25, 0.25], max = [0.75, 0.75, 0.75] }

[materials.background]
kappa = 1.0

[materials.core]
kappa = 2.0
source = 50.0
alpha_source = 1e-3
m_source = 1

[[boundary]]
faces = { axis = 0, side = "min", patch = { kind = "rect", min = [0.0, 0.2, 0.2], max = [0.0, 0.8, 0.8] } }
condition = { kind = "dirichlet", value = 300.0 }

[[boundary]]
faces = { axis = 0, side = "max" }
condition = { kind = "dirichlet", value = 280.0 }

[[boundary]]
faces = { axis = 1, side = "max" }
condition = { kind = "flux", value = -4.0 }

[[boundary]]
faces = { axis = 2, side = "min" }
condition = { kind = "convection", h = 3.0, ambient = 283.15 }

[functional]
kind = "compliance"
"#;

/// Flux cloak around a conductive inclusion, a reduced version of the cloaking setup.
pub const FLUX_FD: &str = r#"
[mesh]
dims = [10, 8, 6]
extent = [0.09, 0.072, 0.054]

[[mesh.regions]]
name = "ring"
shape = { kind = "sphere", center = [0.045, 0.036, 0.027], radius = 0.03 }

[[mesh.regions]]
name = "object"
shape = { kind = "ellipsoid", center = [0.045, 0.036, 0.027], semi_axes = [0.016, 0.009, 0.009], rotation_deg = [0.0, 0.0, 45.0] }
priority = 1

[materials.background]
kappa = 0.57

[materials.ring]
kappa = 0.57

[materials.object]
kappa = 4.0
optimizable = false

[[boundary]]
faces = { axis = 0, side = "min" }
condition = { kind = "dirichlet", value = 321.85 }

[[boundary]]
faces = { axis = 0, side = "max" }
condition = { kind = "dirichlet", value = 283.15 }

[functional]
kind = "flux_cloak"
target_flux = [245.1, 0.0, 0.0]
mask_regions = ["background"]
"#;

/// Average/variance of the temperature on a port, with convection and a source.
pub const TEMP_FD: &str = r#"
[mesh]
dims = [8, 8, 8]
extent = [1.0, 1.0, 1.0]

[[mesh.regions]]
name = "heater"
shape = { kind = "box", min = [0.0, 0.0, 0.0], max = [0.3, 1.0, 1.0] }

[materials.background]
kappa = 1.0

[materials.heater]
kappa = 1.5
source = 20.0
m_source = 1

[[boundary]]
faces = { axis = 0, side = "min", patch = { kind = "rect", min = [0.0, 0.3, 0.3], max = [0.0, 0.7, 0.7] } }
condition = { kind = "dirichlet", value = 310.0 }

[[boundary]]
faces = { axis = 2, side = "max" }
condition = { kind = "convection", h = 5.0, ambient = 283.15 }

[functional]
kind = "temp_multi"
omega = 0.4
normalization = { av_utopia = 290.0, av_max = 320.0, vr_utopia = 0.0, vr_max = 4.0 }
port = [{ axis = 0, side = "max", patch = { kind = "rect", min = [1.0, 0.2, 0.0], max = [1.0, 0.8, 1.0] } }]
"#;

/// Random design with the given soft probability on optimizable elements.
pub fn random_design(p: &Problem, soft: f64, seed: u64) -> CharacteristicField {
    let mut r = rng(seed);
    let phases = (0..p.mesh().n_elements())
        .map(|e| if p.optimizable[e] && r.gen::<f64>() < soft { Phase::Soft } else { Phase::Hard })
        .collect();
    CharacteristicField { phases }
}

/// Cost as a function of a continuous move `s` of element `e` along its exchange direction.
pub fn cost_along(p: &Problem, chi: &CharacteristicField, e: usize, s: f64) -> f64 {
    let mesh = p.mesh();
    let mut scales: PropertyScales = p.model.scales(chi);
    let m = p.model.material.region(mesh.regions[e]);
    let ph = chi.phases[e];
    let (bk, br) = (m.beta_kappa(), m.beta_source());
    let ck = chi_value(ph, bk) + s * exchange_function(ph, bk);
    let cr = chi_value(ph, br) + s * exchange_function(ph, br);
    scales.kappa[e] = ck.powf(m.m_kappa);
    scales.source[e] = cr.powf(m.m_source);
    p.functional.cost_scaled(&p.model, &scales).unwrap()
}

/// Pseudo-energy from central differences with one Richardson extrapolation.
pub fn fd_pseudo_energy(p: &Problem, chi: &CharacteristicField, e: usize, h: f64) -> f64 {
    let d = |h: f64| (cost_along(p, chi, e, h) - cost_along(p, chi, e, -h)) / (2.0 * h);
    let djds = (4.0 * d(h / 2.0) - d(h)) / 3.0;
    let m = p.model.material.region(p.mesh().regions[e]);
    -exchange_function(chi.phases[e], m.beta_kappa()).signum() * djds / p.mesh().element_volume()
}

/// Worst relative FD mismatch over `count` random optimizable elements.
pub fn fd_check(p: &Problem, soft: f64, count: usize, seed: u64) -> (f64, usize) {
    let chi = random_design(p, soft, seed);
    let eval = p.functional.evaluate(&p.model, &chi).unwrap();
    let cand: Vec<usize> = (0..p.mesh().n_elements()).filter(|&e| p.optimizable[e]).collect();
    let mut r = rng(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let e = cand[r.gen_range(0..cand.len())];
        let fd = fd_pseudo_energy(p, &chi, e, 1e-2);
        let rel = (fd - eval.xi[e]).abs() / eval.xi[e].abs();
        worst = worst.max(rel);
    }
    (worst, count)
}

pub fn functional_kind(p: &Problem) -> &'static str {
    match p.functional {
        CostFunctional::Compliance => "compliance",
        CostFunctional::FluxCloak(_) => "flux_cloak",
        CostFunctional::TempMulti { .. } => "temp_multi",
    }
}

/// Elements owning a Dirichlet face on the given x side.
pub fn dirichlet_patch_elements(mesh: &Mesh, side: Side) -> Vec<usize> {
    let mut out: Vec<usize> = mesh
        .boundary_faces
        .iter()
        .filter(|f| f.axis == 0 && f.side == side)
        .filter(|f| mesh.face_nodes(f.element, f.axis, f.side).iter().all(|&n| mesh.dirichlet[n].is_some()))
        .map(|f| f.element)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Face-adjacent flood fill through hard elements from `from`; true when any of `to` is reached.
pub fn hard_connected(mesh: &Mesh, chi: &CharacteristicField, from: &[usize], to: &[usize]) -> bool {
    let hard = |e: usize| mesh.active[e] && chi.phases[e] == Phase::Hard;
    let mut seen = vec![false; mesh.n_elements()];
    let mut stack: Vec<usize> = from.iter().copied().filter(|&e| hard(e)).collect();
    for &e in &stack {
        seen[e] = true;
    }
    let d = mesh.dims;
    while let Some(e) = stack.pop() {
        let ijk = mesh.element_ijk(e);
        for axis in 0..mesh.dim {
            for step in [-1i64, 1] {
                let mut n = ijk;
                let v = n[axis] as i64 + step;
                if v < 0 || v >= d[axis] as i64 {
                    continue;
                }
                n[axis] = v as usize;
                let f = mesh.element_index(n[0], n[1], n[2]);
                if !seen[f] && hard(f) {
                    seen[f] = true;
                    stack.push(f);
                }
            }
        }
    }
    to.iter().any(|&e| seen[e])
}

pub fn is_dirichlet(c: &Condition) -> bool {
    matches!(c, Condition::Dirichlet { .. })
}

pub fn example_config(name: &str) -> thermotop::config::ProblemConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    thermotop::config::parse_config(path).unwrap()
}

/// (file, t, |C|, converged) for every row of every history file under `dir`.
pub fn history_rows(dir: &std::path::Path) -> Vec<(String, f64, f64, bool)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.to_string_lossy().ends_with("history.csv") {
                let text = std::fs::read_to_string(&p).unwrap();
                for line in text.lines().skip(1) {
                    let f: Vec<&str> = line.split(',').collect();
                    out.push((p.display().to_string(), f[0].parse::<f64>().unwrap(), f[5].parse::<f64>().unwrap(), f[6] == "true"));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    out
}

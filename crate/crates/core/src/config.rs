//! Problem configuration files (TOML).

use crate::error::{Error, Result};
use crate::fem::ThermalModel;
use crate::functionals::{CostFunctional, FluxTarget, MultiWeights, Port};
use crate::levelset::LevelSetParams;
use crate::material::{MaterialModel, RegionMaterial};
use crate::mesh::{build_structured_mesh, BoundaryRule, BoundaryTarget, Condition, FaceSelector, RegionDef};
use crate::optimizer::{uniform_grid, OptimizerConfig, Problem};
use crate::regularization::Smoother;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    /// Element edge lengths; alternatively give `extent`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub av_utopia: f64,
    pub av_max: f64,
    pub vr_utopia: f64,
    pub vr_max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_flux: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mask_regions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub port: Vec<FaceSelector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    /// Use 0 for the variance utopia value instead of the ω = 0 result.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub variance_utopia_zero: bool,
    /// File (relative to the output directory) caching utopia/max values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    ClosedForm,
    Levelset,
}

fn d_tol() -> f64 {
    1e-1
}
fn d_tol_c() -> f64 {
    1e-3
}
fn d_outer() -> usize {
    50
}
fn d_bisect() -> usize {
    100
}
fn d_tau() -> f64 {
    1.0
}
fn d_dt() -> f64 {
    0.1
}
fn d_rho() -> f64 {
    0.05
}
fn d_ls_iters() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default)]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default = "d_tol")]
    pub tol_chi: f64,
    #[serde(default = "d_tol")]
    pub tol_lambda: f64,
    #[serde(default = "d_tol_c")]
    pub tol_c: f64,
    #[serde(default = "d_outer")]
    pub max_outer_iters: usize,
    #[serde(default = "d_bisect")]
    pub max_bisection_iters: usize,
    #[serde(default = "d_tau")]
    pub tau: f64,
    /// Smoothing length in model units; overrides `tau` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "d_dt")]
    pub delta_t: f64,
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default = "d_ls_iters")]
    pub levelset_max_iters: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Vtk,
    Csv,
}

fn d_dir() -> String {
    "output".into()
}
fn d_every() -> usize {
    1
}
fn d_formats() -> Vec<Format> {
    vec![Format::Vtk, Format::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "d_dir")]
    pub directory: String,
    /// Write a field snapshot every n steps (0 disables snapshots; the final step is always written).
    #[serde(default = "d_every")]
    pub snapshot_every: usize,
    #[serde(default = "d_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub materials: BTreeMap<String, RegionMaterial>,
    #[serde(default)]
    pub boundary: Vec<BoundaryRule>,
    #[serde(default)]
    pub functional: FunctionalConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub output: OutputConfig,
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ProblemConfig> {
    let cfg: ProblemConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ProblemConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spacing(&self) -> Option<Vec<f64>> {
        let dims = self.mesh.dims.as_ref()?;
        match (&self.mesh.spacing, &self.mesh.extent) {
            (Some(s), None) => Some(s.clone()),
            (None, Some(e)) if e.len() == dims.len() => Some(e.iter().zip(dims).map(|(l, &n)| l / n as f64).collect()),
            _ => None,
        }
    }

    pub fn time_grid(&self) -> Vec<f64> {
        match (&self.optimizer.times, &self.optimizer.time) {
            (Some(t), _) => t.clone(),
            (None, Some(s)) => uniform_grid(s.start, s.end, s.steps),
            (None, None) => vec![0.0],
        }
    }

    /// Every problem found, not only the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let m = &self.mesh;
        let mut region_names = vec!["background".to_string()];
        region_names.extend(m.regions.iter().map(|r| r.name.clone()));
        match &m.dims {
            None => errs.push("mesh.dims is required".into()),
            Some(d) => {
                if !(d.len() == 2 || d.len() == 3) {
                    errs.push("mesh.dims must have 2 or 3 entries".into());
                }
                if d.contains(&0) {
                    errs.push("mesh.dims entries must be >= 1".into());
                }
                match (&m.spacing, &m.extent) {
                    (Some(_), Some(_)) => errs.push("give mesh.spacing or mesh.extent, not both".into()),
                    (None, None) => errs.push("mesh.spacing or mesh.extent is required".into()),
                    (Some(v), None) | (None, Some(v)) => {
                        if v.len() != d.len() {
                            errs.push("mesh spacing/extent length must match dims".into());
                        }
                        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                            errs.push("mesh spacing/extent must be positive and finite".into());
                        }
                    }
                }
            }
        }
        for r in &m.regions {
            if r.name == "background" {
                errs.push("region name 'background' is reserved".into());
            }
            let ok = match &r.shape {
                crate::mesh::Shape::Box { min, max } => finite(min) && finite(max),
                crate::mesh::Shape::Sphere { center, radius } => finite(center) && radius.is_finite() && *radius >= 0.0,
                crate::mesh::Shape::Ellipsoid {
                    center,
                    semi_axes,
                    rotation_deg,
                } => finite(center) && finite(semi_axes) && finite(rotation_deg),
            };
            if !ok {
                errs.push(format!("region '{}' has invalid geometry", r.name));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for n in &region_names {
            if !seen.insert(n) {
                errs.push(format!("duplicate region name '{n}'"));
            }
        }
        for (name, mat) in &self.materials {
            if !region_names.contains(name) {
                errs.push(format!("material for unknown region '{name}'"));
            }
            errs.extend(mat.validate(name, m.dims.as_ref().map_or(3, |d| d.len())));
        }
        for r in &m.regions {
            if !r.void && !self.materials.contains_key(&r.name) {
                errs.push(format!("region '{}' has no material", r.name));
            }
        }
        if !self.materials.contains_key("background") {
            errs.push("material for region 'background' is required".into());
        }
        let dim = m.dims.as_ref().map_or(3, |d| d.len());
        for (i, b) in self.boundary.iter().enumerate() {
            match &b.target {
                BoundaryTarget::Faces { faces } => {
                    if faces.axis >= dim {
                        errs.push(format!("boundary[{i}]: axis {} out of range", faces.axis));
                    }
                }
                BoundaryTarget::Region { region } => {
                    if !region_names.contains(region) {
                        errs.push(format!("boundary[{i}]: unknown region '{region}'"));
                    }
                    if !matches!(b.condition, Condition::Dirichlet { .. }) {
                        errs.push(format!("boundary[{i}]: region targets accept only dirichlet"));
                    }
                }
            }
            let ok = match b.condition {
                Condition::Dirichlet { value } | Condition::Flux { value } => value.is_finite(),
                Condition::Convection { h, ambient } => h.is_finite() && h >= 0.0 && ambient.is_finite(),
            };
            if !ok {
                errs.push(format!("boundary[{i}]: condition values must be finite"));
            }
        }
        let f = &self.functional;
        match f.kind.as_deref() {
            None => errs.push("functional.kind is required".into()),
            Some("compliance") => {}
            Some("flux_cloak") => {
                match f.target_flux {
                    None => errs.push("functional.target_flux is required for flux_cloak".into()),
                    Some(q) if !finite(&q) => errs.push("functional.target_flux must be finite".into()),
                    _ => {}
                }
                if f.mask_regions.is_empty() {
                    errs.push("functional.mask_regions is required for flux_cloak".into());
                }
                for r in &f.mask_regions {
                    if !region_names.contains(r) {
                        errs.push(format!("functional.mask_regions: unknown region '{r}'"));
                    }
                }
            }
            Some("temp_multi") => {
                if f.port.is_empty() {
                    errs.push("functional.port is required for temp_multi".into());
                }
                for p in &f.port {
                    if p.axis >= dim {
                        errs.push(format!("functional.port: axis {} out of range", p.axis));
                    }
                }
                match f.omega {
                    None => errs.push("functional.omega is required for temp_multi".into()),
                    Some(w) if !(0.0..=1.0).contains(&w) => errs.push(format!("functional.omega = {w} outside [0, 1]")),
                    _ => {}
                }
                if let Some(n) = f.normalization {
                    if !finite(&[n.av_utopia, n.av_max, n.vr_utopia, n.vr_max]) {
                        errs.push("functional.normalization values must be finite".into());
                    }
                }
            }
            Some(k) => errs.push(format!("unknown functional kind '{k}'")),
        }
        let o = &self.optimizer;
        if o.time.is_some() && o.times.is_some() {
            errs.push("give optimizer.time or optimizer.times, not both".into());
        }
        if let Some(s) = o.time {
            if !(s.start.is_finite() && s.end.is_finite()) || (s.steps > 0 && s.end <= s.start) {
                errs.push("optimizer.time must satisfy start < end".into());
            }
        }
        let oc = self.optimizer_config();
        errs.extend(oc.validate().into_iter().map(|e| format!("optimizer: {e}")));
        if !(o.tau >= 0.0 && o.tau.is_finite()) {
            errs.push("optimizer.tau must be non-negative".into());
        }
        if o.epsilon.is_some_and(|e| !(e >= 0.0 && e.is_finite())) {
            errs.push("optimizer.epsilon must be non-negative".into());
        }
        if !(o.delta_t > 0.0 && o.rho > 0.0) {
            errs.push("optimizer.delta_t and optimizer.rho must be positive".into());
        }
        if o.levelset_max_iters == 0 {
            errs.push("optimizer.levelset_max_iters must be positive".into());
        }
        if self.output.formats.is_empty() {
            errs.push("output.formats must not be empty".into());
        }
        errs
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            time_grid: self.time_grid(),
            tol_chi: o.tol_chi,
            tol_lambda: o.tol_lambda,
            tol_c: o.tol_c,
            max_outer_iters: o.max_outer_iters,
            max_bisection_iters: o.max_bisection_iters,
        }
    }

    pub fn levelset_params(&self) -> LevelSetParams {
        LevelSetParams {
            delta_t: self.optimizer.delta_t,
            rho: self.optimizer.rho,
            max_iters: self.optimizer.levelset_max_iters,
        }
    }

    pub fn build_model(&self) -> Result<ThermalModel> {
        let errs = self.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let dims = self.mesh.dims.clone().expect("validated");
        let spacing = self.spacing().expect("validated");
        let mesh = build_structured_mesh(&dims, &spacing, &self.mesh.regions, &self.boundary)?;
        let mats = mesh.region_names.iter().map(|n| self.materials.get(n).cloned()).collect();
        let material = MaterialModel::new(&mesh, mats)?;
        ThermalModel::new(mesh, material)
    }

    /// Builds the problem; `weights` overrides the multi-objective scalarization.
    pub fn build_problem(&self, weights: Option<MultiWeights>) -> Result<Problem> {
        let model = self.build_model()?;
        let f = &self.functional;
        let functional = match f.kind.as_deref().expect("validated") {
            "compliance" => CostFunctional::Compliance,
            "flux_cloak" => {
                let ids: Vec<usize> = f.mask_regions.iter().filter_map(|r| model.mesh.region_id(r)).collect();
                let mask = model.mesh.regions.iter().map(|r| ids.contains(r)).collect();
                CostFunctional::FluxCloak(FluxTarget {
                    flux: f.target_flux.expect("validated"),
                    mask,
                })
            }
            "temp_multi" => {
                let port = Port::new(&model.mesh, &f.port)?;
                let omega = f.omega.expect("validated");
                let weights = match (weights, f.normalization) {
                    (Some(w), _) => w,
                    (None, Some(n)) => MultiWeights::from_bounds(omega, n.av_utopia, n.av_max, n.vr_utopia, n.vr_max)?,
                    (None, None) => MultiWeights::unnormalized(omega),
                };
                CostFunctional::TempMulti { port, weights }
            }
            _ => unreachable!("validated"),
        };
        let smoother = match self.optimizer.epsilon {
            Some(eps) => Smoother::with_epsilon(&model.mesh, eps)?,
            None => Smoother::new(&model.mesh, self.optimizer.tau)?,
        };
        Problem::with_smoother(model, functional, smoother)
    }
}

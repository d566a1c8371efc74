//! Bi-valued material phases and property interpolation.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use serde::{Deserialize, Serialize};

pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const DEFAULT_M: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Hard,
    Soft,
}

/// Scalar (isotropic) or full tensor conductivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Conductivity {
    Scalar(f64),
    Tensor([[f64; 3]; 3]),
}

impl Conductivity {
    pub fn tensor(&self, dim: usize) -> [[f64; 3]; 3] {
        match self {
            Conductivity::Scalar(k) => {
                let mut t = [[0.0; 3]; 3];
                for (a, row) in t.iter_mut().enumerate().take(dim) {
                    row[a] = *k;
                }
                t
            }
            Conductivity::Tensor(t) => *t,
        }
    }
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_m_kappa() -> f64 {
    DEFAULT_M
}
fn default_m_source() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMaterial {
    pub kappa: Conductivity,
    #[serde(default)]
    pub source: f64,
    #[serde(default = "default_alpha")]
    pub alpha_kappa: f64,
    #[serde(default = "default_m_kappa")]
    pub m_kappa: f64,
    #[serde(default = "default_alpha")]
    pub alpha_source: f64,
    #[serde(default = "default_m_source")]
    pub m_source: f64,
    #[serde(default = "default_true")]
    pub optimizable: bool,
}

impl RegionMaterial {
    pub fn isotropic(kappa: f64) -> Self {
        Self {
            kappa: Conductivity::Scalar(kappa),
            source: 0.0,
            alpha_kappa: DEFAULT_ALPHA,
            m_kappa: DEFAULT_M,
            alpha_source: DEFAULT_ALPHA,
            m_source: 1.0,
            optimizable: true,
        }
    }

    pub fn beta_kappa(&self) -> f64 {
        self.alpha_kappa.powf(1.0 / self.m_kappa)
    }

    pub fn beta_source(&self) -> f64 {
        self.alpha_source.powf(1.0 / self.m_source)
    }

    pub fn validate(&self, name: &str, dim: usize) -> Vec<String> {
        let mut errs = Vec::new();
        let t = self.kappa.tensor(dim);
        let finite = t.iter().flatten().all(|v| v.is_finite());
        let sym = (0..3).all(|i| (0..3).all(|j| t[i][j] == t[j][i]));
        if !finite || !sym || !spd(&t, dim) {
            errs.push(format!("material '{name}': kappa must be finite, symmetric and positive definite"));
        }
        if !self.source.is_finite() {
            errs.push(format!("material '{name}': source must be finite"));
        }
        for (key, a) in [("alpha_kappa", self.alpha_kappa), ("alpha_source", self.alpha_source)] {
            if !(a > 0.0 && a <= 1.0) {
                errs.push(format!("material '{name}': {key} must lie in (0, 1]"));
            }
        }
        for (key, m) in [("m_kappa", self.m_kappa), ("m_source", self.m_source)] {
            if !(m >= 1.0 && m.is_finite()) {
                errs.push(format!("material '{name}': {key} must be >= 1"));
            }
        }
        if self.optimizable && self.alpha_kappa >= 1.0 {
            errs.push(format!("material '{name}': optimizable regions need alpha_kappa < 1"));
        }
        errs
    }
}

fn spd(t: &[[f64; 3]; 3], dim: usize) -> bool {
    // leading principal minors
    let m1 = t[0][0];
    let m2 = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    if dim == 2 {
        return m1 > 0.0 && m2 > 0.0;
    }
    let m3 = t[0][0] * (t[1][1] * t[2][2] - t[1][2] * t[2][1]) - t[0][1] * (t[1][0] * t[2][2] - t[1][2] * t[2][0])
        + t[0][2] * (t[1][0] * t[2][1] - t[1][1] * t[2][0]);
    m1 > 0.0 && m2 > 0.0 && m3 > 0.0
}

/// Material data indexed by mesh region id. Void regions carry `None`.
#[derive(Debug, Clone)]
pub struct MaterialModel {
    pub regions: Vec<Option<RegionMaterial>>,
    pub tensors: Vec<[[f64; 3]; 3]>,
}

impl MaterialModel {
    pub fn new(mesh: &Mesh, regions: Vec<Option<RegionMaterial>>) -> Result<Self> {
        if regions.len() != mesh.region_names.len() {
            return Err(Error::Material(format!(
                "{} material entries for {} regions",
                regions.len(),
                mesh.region_names.len()
            )));
        }
        let mut errs = Vec::new();
        for e in 0..mesh.n_elements() {
            let r = mesh.regions[e];
            if mesh.active[e] && regions[r].is_none() {
                errs.push(format!("region '{}' has no material", mesh.region_names[r]));
            }
        }
        errs.dedup();
        for (r, m) in regions.iter().enumerate() {
            if let Some(m) = m {
                errs.extend(m.validate(&mesh.region_names[r], mesh.dim));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Material(errs.join("; ")));
        }
        let tensors = regions
            .iter()
            .map(|m| m.as_ref().map(|m| m.kappa.tensor(mesh.dim)).unwrap_or([[0.0; 3]; 3]))
            .collect();
        Ok(Self { regions, tensors })
    }

    /// Same material in every region of the mesh.
    pub fn uniform(mesh: &Mesh, material: RegionMaterial) -> Result<Self> {
        Self::new(mesh, vec![Some(material); mesh.region_names.len()])
    }

    pub fn region(&self, r: usize) -> &RegionMaterial {
        self.regions[r].as_ref().expect("material of a void region requested")
    }

    /// Active elements whose phase may change.
    pub fn optimizable_mask(&self, mesh: &Mesh) -> Vec<bool> {
        (0..mesh.n_elements())
            .map(|e| mesh.active[e] && self.region(mesh.regions[e]).optimizable)
            .collect()
    }
}

pub fn relaxed_heaviside(x: f64, beta: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        beta
    }
}

/// Signed jump of the characteristic value when the phase is exchanged.
pub fn exchange_function(phase: Phase, beta: f64) -> f64 {
    match phase {
        Phase::Hard => -(1.0 - beta),
        Phase::Soft => 1.0 - beta,
    }
}

pub fn chi_value(phase: Phase, beta: f64) -> f64 {
    match phase {
        Phase::Hard => 1.0,
        Phase::Soft => beta,
    }
}

pub fn interpolate_conductivity(model: &MaterialModel, region: usize, phase: Phase) -> [[f64; 3]; 3] {
    let m = model.region(region);
    let s = match effective_phase(m, phase) {
        Phase::Hard => 1.0,
        Phase::Soft => m.alpha_kappa,
    };
    let mut t = model.tensors[region];
    t.iter_mut().flatten().for_each(|v| *v *= s);
    t
}

pub fn interpolate_heat_source(model: &MaterialModel, region: usize, phase: Phase) -> f64 {
    let m = model.region(region);
    match effective_phase(m, phase) {
        Phase::Hard => m.source,
        Phase::Soft => m.alpha_source * m.source,
    }
}

fn effective_phase(m: &RegionMaterial, phase: Phase) -> Phase {
    if m.optimizable {
        phase
    } else {
        Phase::Hard
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharacteristicField {
    pub phases: Vec<Phase>,
}

impl CharacteristicField {
    pub fn all_hard(mesh: &Mesh) -> Self {
        Self {
            phases: vec![Phase::Hard; mesh.n_elements()],
        }
    }

    pub fn soft_volume(&self, mesh: &Mesh) -> f64 {
        let n = (0..mesh.n_elements())
            .filter(|&e| mesh.active[e] && self.phases[e] == Phase::Soft)
            .count();
        n as f64 * mesh.element_volume()
    }

    /// Volume of elements whose phase differs from `other`.
    pub fn changed_volume(&self, other: &Self, mesh: &Mesh) -> f64 {
        let n = (0..mesh.n_elements())
            .filter(|&e| mesh.active[e] && self.phases[e] != other.phases[e])
            .count();
        n as f64 * mesh.element_volume()
    }
}

/// Nodal discrimination function; its sign defines the topology.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationField {
    pub psi: Vec<f64>,
}

/// Value of a nodal field at the element centroid.
pub fn centroid_value(mesh: &Mesh, e: usize, nodal: &[f64]) -> f64 {
    let nodes = mesh.element_nodes(e);
    nodes.iter().map(|&n| nodal[n]).sum::<f64>() / nodes.len() as f64
}

pub fn chi_from_psi(
    mesh: &Mesh,
    model: &MaterialModel,
    psi: &DiscriminationField,
    previous: &CharacteristicField,
) -> CharacteristicField {
    let phases = (0..mesh.n_elements())
        .map(|e| {
            if !mesh.active[e] || !model.region(mesh.regions[e]).optimizable {
                return previous.phases[e];
            }
            if relaxed_heaviside(centroid_value(mesh, e, &psi.psi), 0.5) == 1.0 {
                Phase::Hard
            } else {
                Phase::Soft
            }
        })
        .collect();
    CharacteristicField { phases }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, RegionDef, Shape};

    #[test]
    fn heaviside_branches() {
        assert_eq!(relaxed_heaviside(0.5, 0.2512), 1.0);
        assert_eq!(relaxed_heaviside(-0.5, 0.2512), 0.2512);
        assert_eq!(relaxed_heaviside(0.0, 0.2512), 1.0);
    }

    #[test]
    fn exchange_values() {
        assert!((exchange_function(Phase::Hard, 0.2512) + 0.7488).abs() < 1e-15);
        assert!((exchange_function(Phase::Soft, 0.2512) - 0.7488).abs() < 1e-15);
        assert!((exchange_function(Phase::Hard, 1e-9) + 1.0).abs() < 1e-8);
    }

    #[test]
    fn contrast_values() {
        let m = build_structured_mesh(&[1, 1], &[1.0, 1.0], &[], &[]).unwrap();
        let mut mat = RegionMaterial::isotropic(1.0);
        let model = MaterialModel::uniform(&m, mat.clone()).unwrap();
        assert!((interpolate_conductivity(&model, 0, Phase::Soft)[0][0] - 1e-3).abs() < 1e-15);
        assert_eq!(interpolate_conductivity(&model, 0, Phase::Hard)[1][1], 1.0);
        assert!((mat.beta_kappa() - 0.2512).abs() < 5e-5);

        mat.kappa = Conductivity::Scalar(403.0);
        mat.alpha_kappa = 5.459e-4;
        let model = MaterialModel::uniform(&m, mat.clone()).unwrap();
        assert!((interpolate_conductivity(&model, 0, Phase::Soft)[0][0] - 0.22).abs() < 1e-3);

        mat.source = 1000.0;
        mat.m_source = 1.0;
        mat.alpha_source = 1e-3;
        let model = MaterialModel::uniform(&m, mat).unwrap();
        assert!((interpolate_heat_source(&model, 0, Phase::Soft) - 1.0).abs() < 1e-12);
        assert_eq!(interpolate_heat_source(&model, 0, Phase::Hard), 1000.0);
    }

    #[test]
    fn chi_from_psi_strip() {
        let m = build_structured_mesh(&[4, 1], &[0.25, 0.25], &[], &[]).unwrap();
        let model = MaterialModel::uniform(&m, RegionMaterial::isotropic(1.0)).unwrap();
        let psi = DiscriminationField {
            psi: (0..m.n_nodes()).map(|n| m.node_coords(n)[0] - 0.5).collect(),
        };
        let chi = chi_from_psi(&m, &model, &psi, &CharacteristicField::all_hard(&m));
        assert_eq!(chi.phases, vec![Phase::Soft, Phase::Soft, Phase::Hard, Phase::Hard]);
    }

    #[test]
    fn frozen_regions_stay_hard() {
        let r = RegionDef {
            name: "fixed".into(),
            shape: Shape::Box {
                min: [0.0; 3],
                max: [0.5, 1.0, 0.0],
            },
            priority: 0,
            void: false,
        };
        let m = build_structured_mesh(&[2, 1], &[0.5, 1.0], &[r], &[]).unwrap();
        let mut fixed = RegionMaterial::isotropic(1.0);
        fixed.optimizable = false;
        let model = MaterialModel::new(&m, vec![Some(RegionMaterial::isotropic(1.0)), Some(fixed)]).unwrap();
        let psi = DiscriminationField {
            psi: vec![-1.0; m.n_nodes()],
        };
        let chi = chi_from_psi(&m, &model, &psi, &CharacteristicField::all_hard(&m));
        assert_eq!(chi.phases, vec![Phase::Hard, Phase::Soft]);
    }
}

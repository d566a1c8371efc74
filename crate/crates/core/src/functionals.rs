//! Cost functionals, adjoint loads and pseudo-energy (relaxed topological derivative) fields.
//!
//! Every `xi_*` field follows one convention: for an optimizable element `e` in phase `p`,
//! exchanging its material changes the cost by `-sign(Δχ_p) * xi[e] * |e|` per unit of
//! continuous exchange. High values therefore favour the hard phase.

use crate::error::{Error, Result};
use crate::fem::{dot, heat_flux, DiscreteSystem, PropertyScales, ThermalModel, ThermalSolver};
use crate::material::{chi_value, exchange_function, CharacteristicField};
use crate::mesh::{element_basis, BoundaryFace, FaceSelector, Mesh};

/// Sentinel pseudo-energy for elements that never change phase.
pub const FROZEN: f64 = f64::INFINITY;

/// Derivative factors (1-β) m χ^(m-1) for conductivity and source.
#[derive(Debug, Clone, Copy)]
struct Factors {
    gk: f64,
    gr: f64,
}

fn factors(model: &ThermalModel, chi: &CharacteristicField, e: usize) -> Option<Factors> {
    let mesh = &model.mesh;
    if !mesh.active[e] {
        return None;
    }
    let m = model.material.region(mesh.regions[e]);
    if !m.optimizable {
        return None;
    }
    let p = chi.phases[e];
    let (bk, br) = (m.beta_kappa(), m.beta_source());
    Some(Factors {
        gk: (1.0 - bk) * m.m_kappa * chi_value(p, bk).powf(m.m_kappa - 1.0),
        gr: (1.0 - br) * m.m_source * chi_value(p, br).powf(m.m_source - 1.0),
    })
}

fn element_values(mesh: &Mesh, e: usize, field: &[f64]) -> [f64; 8] {
    let mut v = [0.0; 8];
    for (a, &n) in mesh.element_nodes(e).iter().enumerate() {
        v[a] = field[n];
    }
    v
}

/// (1/|e|) ∫ ½ ∇a · κ · ∇b over element `e`, nominal κ.
fn pair_energy(model: &ThermalModel, e: usize, a: &[f64], b: &[f64]) -> f64 {
    let mesh = &model.mesh;
    let basis = element_basis(mesh, e);
    let t = &model.material.tensors[mesh.regions[e]];
    let va = element_values(mesh, e, a);
    let vb = element_values(mesh, e, b);
    let mut s = 0.0;
    for q in 0..basis.weights.len() {
        let ga = basis.gradient(q, &va);
        let gb = basis.gradient(q, &vb);
        let mut acc = 0.0;
        for k in 0..mesh.dim {
            for l in 0..mesh.dim {
                acc += ga[k] * t[k][l] * gb[l];
            }
        }
        s += basis.weights[q] * 0.5 * acc;
    }
    s / mesh.element_volume()
}

/// (1/|e|) ∫ r θ over element `e`, nominal source.
fn source_energy(model: &ThermalModel, e: usize, theta: &[f64]) -> f64 {
    let mesh = &model.mesh;
    let r = model.material.region(mesh.regions[e]).source;
    if r == 0.0 {
        return 0.0;
    }
    let nodes = mesh.element_nodes(e);
    r * nodes.iter().map(|&n| theta[n]).sum::<f64>() / nodes.len() as f64
}

/// ½ a(θ, θ): conduction energy plus convection boundary term.
pub fn eval_compliance(model: &ThermalModel, system: &DiscreteSystem, theta: &[f64]) -> f64 {
    0.5 * dot(theta, &model.apply_full(&system.scales, theta))
}

/// Minimized compliance objective l(θ) − ½ a(θ, θ).
pub fn compliance_objective(model: &ThermalModel, system: &DiscreteSystem, theta: &[f64]) -> f64 {
    dot(&system.f, theta) - eval_compliance(model, system, theta)
}

pub fn xi_compliance(model: &ThermalModel, chi: &CharacteristicField, theta1: &[f64]) -> Vec<f64> {
    (0..model.mesh.n_elements())
        .map(|e| match factors(model, chi, e) {
            None => FROZEN,
            Some(f) => f.gk * pair_energy(model, e, theta1, theta1) - f.gr * source_energy(model, e, theta1),
        })
        .collect()
}

/// Pseudo-energy from element matrices and an arbitrary adjoint `w`:
/// dJ/ds = explicit * df_eᵀθ_e − w_eᵀ(dK_e θ_e − df_e).
pub fn xi_adjoint_path(
    model: &ThermalModel,
    chi: &CharacteristicField,
    theta: &[f64],
    w: &[f64],
    explicit: f64,
) -> Vec<f64> {
    let mesh = &model.mesh;
    let nen = mesh.nen();
    let vol = mesh.element_volume();
    (0..mesh.n_elements())
        .map(|e| {
            if factors(model, chi, e).is_none() {
                return FROZEN;
            }
            let m = model.material.region(mesh.regions[e]);
            let p = chi.phases[e];
            let (bk, br) = (m.beta_kappa(), m.beta_source());
            let dk = m.m_kappa * chi_value(p, bk).powf(m.m_kappa - 1.0) * exchange_function(p, bk);
            let dr = m.m_source * chi_value(p, br).powf(m.m_source - 1.0) * exchange_function(p, br);
            let k0 = model.element_stiffness(mesh.regions[e]);
            let th = element_values(mesh, e, theta);
            let we = element_values(mesh, e, w);
            let df = dr * m.source * vol / nen as f64;
            let mut djds = 0.0;
            for a in 0..nen {
                let kth: f64 = (0..nen).map(|b| k0[a * nen + b] * th[b]).sum();
                djds += explicit * df * th[a] - we[a] * (dk * kth - df);
            }
            -exchange_function(p, bk).signum() * djds / vol
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FluxTarget {
    pub flux: [f64; 3],
    /// Per-element membership in the cloaking region.
    pub mask: Vec<bool>,
}

pub fn eval_flux_cloak(model: &ThermalModel, scales: &PropertyScales, theta1: &[f64], target: &FluxTarget) -> f64 {
    let mesh = &model.mesh;
    let basis = element_basis(mesh, 0);
    let mut s = 0.0;
    let mut any = false;
    for e in 0..mesh.n_elements() {
        if !target.mask[e] || !mesh.active[e] {
            continue;
        }
        any = true;
        for (q, flux) in heat_flux(model, scales, theta1, e).iter().enumerate() {
            let d2: f64 = (0..mesh.dim).map(|k| (flux[k] - target.flux[k]).powi(2)).sum();
            s += basis.weights[q] * d2;
        }
    }
    if !any {
        log::warn!("flux cloaking mask is empty; cost is zero");
    }
    s.sqrt()
}

fn c1_at(model: &ThermalModel, scales: &PropertyScales, theta1: &[f64], target: &FluxTarget, e: usize, j: f64) -> Vec<[f64; 3]> {
    let dim = model.mesh.dim;
    heat_flux(model, scales, theta1, e)
        .into_iter()
        .map(|f| {
            let mut c = [0.0; 3];
            for k in 0..dim {
                c[k] = (f[k] - target.flux[k]) / j;
            }
            c
        })
        .collect()
}

/// Load of the flux-cloak adjoint: f_i = −∫ ∇N_i · κ_χ C₁ dΩ.
pub fn adjoint_rhs_flux(
    model: &ThermalModel,
    scales: &PropertyScales,
    theta1: &[f64],
    target: &FluxTarget,
    j: f64,
) -> Result<Vec<f64>> {
    if !(j > 0.0) {
        return Err(Error::AdjointUndefined("flux deviation is zero".into()));
    }
    let mesh = &model.mesh;
    let basis = element_basis(mesh, 0);
    let mut f = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        if !target.mask[e] || !mesh.active[e] {
            continue;
        }
        let t = &model.material.tensors[mesh.regions[e]];
        let c1 = c1_at(model, scales, theta1, target, e, j);
        for (q, c) in c1.iter().enumerate() {
            let mut kc = [0.0; 3];
            for k in 0..mesh.dim {
                kc[k] = scales.kappa[e] * (0..mesh.dim).map(|l| t[k][l] * c[l]).sum::<f64>();
            }
            for (a, &n) in mesh.element_nodes(e).iter().enumerate() {
                let g: f64 = (0..mesh.dim).map(|k| basis.grad[q][k][a] * kc[k]).sum();
                f[n] -= basis.weights[q] * g;
            }
        }
    }
    Ok(f)
}

pub fn xi_flux_cloak(
    model: &ThermalModel,
    chi: &CharacteristicField,
    theta1: &[f64],
    theta2: &[f64],
    j: f64,
    target: &FluxTarget,
) -> Vec<f64> {
    let mesh = &model.mesh;
    let scales = model.scales(chi);
    let basis = element_basis(mesh, 0);
    (0..mesh.n_elements())
        .map(|e| {
            let Some(f) = factors(model, chi, e) else {
                return FROZEN;
            };
            let u12 = pair_energy(model, e, theta1, theta2);
            let mut uq = 0.0;
            if target.mask[e] && j > 0.0 {
                let t = &model.material.tensors[mesh.regions[e]];
                let v1 = element_values(mesh, e, theta1);
                for (q, c) in c1_at(model, &scales, theta1, target, e, j).iter().enumerate() {
                    let g = basis.gradient(q, &v1);
                    let mut acc = 0.0;
                    for k in 0..mesh.dim {
                        for l in 0..mesh.dim {
                            acc += c[k] * t[k][l] * g[l];
                        }
                    }
                    uq += basis.weights[q] * acc;
                }
                uq /= mesh.element_volume();
            }
            f.gk * (2.0 * u12 + uq) - f.gr * source_energy(model, e, theta2)
        })
        .collect()
}

/// Boundary port on which average and variance of temperature are observed.
#[derive(Debug, Clone)]
pub struct Port {
    pub faces: Vec<BoundaryFace>,
    /// ∫ Nᵀ dΓ over the port (full nodal vector).
    pub mass: Vec<f64>,
    pub measure: f64,
}

impl Port {
    pub fn new(mesh: &Mesh, selectors: &[FaceSelector]) -> Result<Self> {
        let faces = mesh.select_faces(selectors);
        let mut mass = vec![0.0; mesh.n_nodes()];
        let mut measure = 0.0;
        for f in &faces {
            let fb = mesh.face_basis(f.axis, f.side);
            let nodes = mesh.face_nodes(f.element, f.axis, f.side);
            for &n in &nodes {
                mass[n] += fb.area / nodes.len() as f64;
            }
            measure += fb.area;
        }
        if !(measure > 0.0) {
            return Err(Error::Mesh("cloaking port selects no boundary face".into()));
        }
        Ok(Self { faces, mass, measure })
    }

    /// C₂ = C₃ = 1/|port|.
    pub fn c2(&self) -> f64 {
        1.0 / self.measure
    }

    /// y = M x with the port face mass matrix.
    pub fn apply_mass(&self, mesh: &Mesh, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for f in &self.faces {
            let fb = mesh.face_basis(f.axis, f.side);
            let nodes = mesh.face_nodes(f.element, f.axis, f.side);
            let nf = nodes.len();
            for a in 0..nf {
                for b in 0..nf {
                    y[nodes[a]] += fb.mass[a * nf + b] * x[nodes[b]];
                }
            }
        }
        y
    }
}

pub fn eval_temp_average(theta1: &[f64], port: &Port) -> f64 {
    port.c2() * dot(&port.mass, theta1)
}

fn deviation(theta1: &[f64], j_av: f64) -> Vec<f64> {
    theta1.iter().map(|t| t - j_av).collect()
}

pub fn eval_temp_variance(mesh: &Mesh, theta1: &[f64], port: &Port, j_av: f64) -> f64 {
    let t = deviation(theta1, j_av);
    port.c2() * dot(&t, &port.apply_mass(mesh, &t))
}

pub fn adjoint_rhs_avg(port: &Port) -> Vec<f64> {
    port.mass.iter().map(|p| -p).collect()
}

pub fn adjoint_rhs_var(mesh: &Mesh, theta1: &[f64], port: &Port, j_av: f64) -> Vec<f64> {
    let t = deviation(theta1, j_av);
    port.apply_mass(mesh, &t).into_iter().map(|v| -2.0 * v).collect()
}

/// 𝒜 = 𝒯ᵀ M 1.
pub fn variance_coupling(theta1: &[f64], port: &Port, j_av: f64) -> f64 {
    dot(&deviation(theta1, j_av), &port.mass)
}

pub fn xi_temp_average(model: &ThermalModel, chi: &CharacteristicField, theta1: &[f64], theta2: &[f64], port: &Port) -> Vec<f64> {
    let c2 = port.c2();
    (0..model.mesh.n_elements())
        .map(|e| match factors(model, chi, e) {
            None => FROZEN,
            Some(f) => {
                -2.0 * c2 * f.gk * pair_energy(model, e, theta1, theta2) + c2 * f.gr * source_energy(model, e, theta2)
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn xi_temp_variance(
    model: &ThermalModel,
    chi: &CharacteristicField,
    theta1: &[f64],
    theta2: &[f64],
    theta3: &[f64],
    port: &Port,
    j_av: f64,
) -> Vec<f64> {
    let c2 = port.c2();
    let c3 = c2;
    let a = variance_coupling(theta1, port, j_av);
    (0..model.mesh.n_elements())
        .map(|e| match factors(model, chi, e) {
            None => FROZEN,
            Some(f) => {
                let u12 = pair_energy(model, e, theta1, theta2);
                let u13 = pair_energy(model, e, theta1, theta3);
                let ur2 = source_energy(model, e, theta2);
                let ur3 = source_energy(model, e, theta3);
                -2.0 * c3 * f.gk * u13 + c3 * f.gr * ur3 + 4.0 * c3 * c2 * a * f.gk * u12
                    - 2.0 * c3 * c2 * a * f.gr * ur2
            }
        })
        .collect()
}

/// Scalarization weights of the average/variance objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiWeights {
    pub omega: f64,
    pub c4: f64,
    pub c5: f64,
    pub av_utopia: f64,
    pub vr_utopia: f64,
}

impl MultiWeights {
    pub fn unnormalized(omega: f64) -> Self {
        Self {
            omega,
            c4: 1.0,
            c5: 1.0,
            av_utopia: 0.0,
            vr_utopia: 0.0,
        }
    }

    pub fn from_bounds(omega: f64, av_utopia: f64, av_max: f64, vr_utopia: f64, vr_max: f64) -> Result<Self> {
        let c4 = 1.0 / (av_max - av_utopia);
        let c5 = 1.0 / (vr_max - vr_utopia);
        if !c4.is_finite() || !c5.is_finite() {
            return Err(Error::Numerical("degenerate normalization constants".into()));
        }
        Ok(Self {
            omega,
            c4,
            c5,
            av_utopia,
            vr_utopia,
        })
    }

    pub fn cost(&self, j_av: f64, j_vr: f64) -> f64 {
        self.omega * self.c4 * (j_av - self.av_utopia) + (1.0 - self.omega) * self.c5 * (j_vr - self.vr_utopia)
    }
}

pub fn combine_multi(xi_av: &[f64], xi_vr: &[f64], w: &MultiWeights) -> Result<Vec<f64>> {
    if !w.c4.is_finite() || !w.c5.is_finite() {
        return Err(Error::Numerical("non-finite normalization constants".into()));
    }
    Ok(xi_av
        .iter()
        .zip(xi_vr)
        .map(|(&a, &v)| {
            if a == FROZEN {
                FROZEN
            } else {
                w.omega * w.c4 * a + (1.0 - w.omega) * w.c5 * v
            }
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn xi_temp_multi(
    model: &ThermalModel,
    chi: &CharacteristicField,
    theta1: &[f64],
    theta2: &[f64],
    theta3: &[f64],
    port: &Port,
    j_av: f64,
    weights: &MultiWeights,
) -> Result<Vec<f64>> {
    let xa = xi_temp_average(model, chi, theta1, theta2, port);
    let xv = xi_temp_variance(model, chi, theta1, theta2, theta3, port, j_av);
    combine_multi(&xa, &xv, weights)
}

#[derive(Debug, Clone)]
pub enum CostFunctional {
    Compliance,
    FluxCloak(FluxTarget),
    TempMulti { port: Port, weights: MultiWeights },
}

/// Result of one state/adjoint analysis.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub xi: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    /// Named auxiliary values (e.g. average and variance).
    pub extras: Vec<(&'static str, f64)>,
}

impl CostFunctional {
    pub fn name(&self) -> &'static str {
        match self {
            CostFunctional::Compliance => "compliance",
            CostFunctional::FluxCloak(_) => "flux_cloak",
            CostFunctional::TempMulti { .. } => "temp_multi",
        }
    }

    /// Cost for arbitrary (possibly non-binary) element property scales.
    pub fn cost_scaled(&self, model: &ThermalModel, scales: &PropertyScales) -> Result<f64> {
        let sys = model.assemble_scaled(scales);
        let solver = ThermalSolver::new(model, &sys)?;
        let th = solver.solve_state()?;
        Ok(match self {
            CostFunctional::Compliance => compliance_objective(model, &sys, &th),
            CostFunctional::FluxCloak(t) => eval_flux_cloak(model, scales, &th, t),
            CostFunctional::TempMulti { port, weights } => {
                let av = eval_temp_average(&th, port);
                let vr = eval_temp_variance(&model.mesh, &th, port, av);
                weights.cost(av, vr)
            }
        })
    }

    pub fn evaluate(&self, model: &ThermalModel, chi: &CharacteristicField) -> Result<Evaluation> {
        let scales = model.scales(chi);
        let sys = model.assemble_scaled(&scales);
        let solver = ThermalSolver::new(model, &sys)?;
        let th1 = solver.solve_state()?;
        if th1.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numerical("non-finite temperature".into()));
        }
        match self {
            CostFunctional::Compliance => Ok(Evaluation {
                cost: compliance_objective(model, &sys, &th1),
                xi: xi_compliance(model, chi, &th1),
                extras: vec![("energy", eval_compliance(model, &sys, &th1))],
                theta: vec![th1],
            }),
            CostFunctional::FluxCloak(target) => {
                let j = eval_flux_cloak(model, &scales, &th1, target);
                let f2 = adjoint_rhs_flux(model, &scales, &th1, target, j)?;
                let th2 = solver.solve_adjoint(&f2)?;
                Ok(Evaluation {
                    cost: j,
                    xi: xi_flux_cloak(model, chi, &th1, &th2, j, target),
                    theta: vec![th1, th2],
                    extras: vec![],
                })
            }
            CostFunctional::TempMulti { port, weights } => {
                let av = eval_temp_average(&th1, port);
                let vr = eval_temp_variance(&model.mesh, &th1, port, av);
                let th2 = solver.solve_adjoint(&adjoint_rhs_avg(port))?;
                let th3 = solver.solve_adjoint(&adjoint_rhs_var(&model.mesh, &th1, port, av))?;
                let xi = xi_temp_multi(model, chi, &th1, &th2, &th3, port, av, weights)?;
                Ok(Evaluation {
                    cost: weights.cost(av, vr),
                    xi,
                    theta: vec![th1, th2, th3],
                    extras: vec![("average", av), ("variance", vr)],
                })
            }
        }
    }
}

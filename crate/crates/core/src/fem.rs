//! Assembly and solution of the discrete steady heat-conduction system.

use crate::error::{Error, Result};
use crate::material::{chi_value, CharacteristicField, MaterialModel, Phase};
use crate::mesh::{element_basis, Condition, FaceTag, Mesh};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, Side};
use std::sync::OnceLock;

const NONE: usize = usize::MAX;
const RESIDUAL_TOL: f64 = 1e-10;
const REFINE_SWEEPS: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Systems with more free unknowns than this use Jacobi PCG.
    pub direct_limit: usize,
    pub pcg_tol: f64,
    pub pcg_max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            direct_limit: 200_000,
            pcg_tol: 1e-12,
            pcg_max_iters: 20_000,
        }
    }
}

/// Per-element multipliers applied to the nominal conductivity and source.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyScales {
    pub kappa: Vec<f64>,
    pub source: Vec<f64>,
}

impl PropertyScales {
    pub fn from_chi(mesh: &Mesh, material: &MaterialModel, chi: &CharacteristicField) -> Self {
        let mut kappa = vec![0.0; mesh.n_elements()];
        let mut source = vec![0.0; mesh.n_elements()];
        for e in 0..mesh.n_elements() {
            if !mesh.active[e] {
                continue;
            }
            let m = material.region(mesh.regions[e]);
            let phase = if m.optimizable { chi.phases[e] } else { Phase::Hard };
            kappa[e] = chi_value(phase, m.beta_kappa()).powf(m.m_kappa);
            source[e] = chi_value(phase, m.beta_source()).powf(m.m_source);
            if phase == Phase::Soft {
                // exact contrast, free of pow round-off
                kappa[e] = m.alpha_kappa;
                source[e] = m.alpha_source;
            }
        }
        Self { kappa, source }
    }
}

/// Mesh, materials, boundary data and the fixed sparsity layout of the reduced operator.
pub struct ThermalModel {
    pub mesh: Mesh,
    pub material: MaterialModel,
    pub options: SolverOptions,
    /// Free-unknown index per node, or `usize::MAX` for Dirichlet and dead nodes.
    pub dof: Vec<usize>,
    pub n_free: usize,
    symbolic: SymbolicSparseColMat<usize>,
    elem_slots: Vec<usize>,
    k0: Vec<Vec<f64>>,
    conv_values: Vec<f64>,
    /// Load from flux and convection boundaries (full nodal vector).
    f_static: Vec<f64>,
    conv_faces: Vec<(usize, f64)>,
    chol: OnceLock<std::result::Result<SymbolicLlt<usize>, String>>,
}

/// Operator values and load for one material layout.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub scales: PropertyScales,
    /// Upper-triangular CSC values of the free-free block.
    pub values: Vec<f64>,
    /// Full nodal load vector.
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ThermalSolution {
    pub theta: Vec<Vec<f64>>,
}

impl ThermalModel {
    pub fn new(mesh: Mesh, material: MaterialModel) -> Result<Self> {
        Self::with_options(mesh, material, SolverOptions::default())
    }

    pub fn with_options(mesh: Mesh, material: MaterialModel, options: SolverOptions) -> Result<Self> {
        if material.regions.len() != mesh.region_names.len() {
            return Err(Error::Material("mesh/material region mismatch".into()));
        }
        let nen = mesh.nen();
        let has_dirichlet = mesh.dirichlet.iter().zip(&mesh.live_nodes).any(|(d, &l)| l && d.is_some());
        let has_conv = mesh.boundary_faces.iter().any(|f| matches!(f.tag, FaceTag::Convection(_)));
        if !has_dirichlet && !has_conv {
            return Err(Error::Singular("no Dirichlet node and no convection face".into()));
        }

        let mut dof = vec![NONE; mesh.n_nodes()];
        let mut n_free = 0;
        for n in 0..mesh.n_nodes() {
            if mesh.live_nodes[n] && mesh.dirichlet[n].is_none() {
                dof[n] = n_free;
                n_free += 1;
            }
        }

        // upper pattern, column-wise
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n_free];
        for e in 0..mesh.n_elements() {
            if !mesh.active[e] {
                continue;
            }
            let nodes = mesh.element_nodes(e);
            for &a in nodes {
                for &b in nodes {
                    let (i, j) = (dof[a], dof[b]);
                    if i != NONE && j != NONE && i <= j {
                        cols[j].push(i);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n_free + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        drop(cols);
        let slot = |i: usize, j: usize| -> usize {
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            col_ptr[j] + rows.binary_search(&i).expect("pattern entry")
        };
        let mut elem_slots = vec![NONE; mesh.n_elements() * nen * nen];
        for e in 0..mesh.n_elements() {
            if !mesh.active[e] {
                continue;
            }
            let nodes = mesh.element_nodes(e);
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    let (i, j) = (dof[na], dof[nb]);
                    if i != NONE && j != NONE && i <= j {
                        elem_slots[(e * nen + a) * nen + b] = slot(i, j);
                    }
                }
            }
        }

        let basis = element_basis(&mesh, 0);
        let k0 = material
            .tensors
            .iter()
            .map(|t| {
                let mut k = vec![0.0; nen * nen];
                for q in 0..basis.weights.len() {
                    let g = &basis.grad[q];
                    for a in 0..nen {
                        for b in 0..nen {
                            let mut s = 0.0;
                            for kk in 0..mesh.dim {
                                for l in 0..mesh.dim {
                                    s += g[kk][a] * t[kk][l] * g[l][b];
                                }
                            }
                            k[a * nen + b] += basis.weights[q] * s;
                        }
                    }
                }
                k
            })
            .collect();

        let mut conv_values = vec![0.0; row_idx.len()];
        let mut f_static = vec![0.0; mesh.n_nodes()];
        let mut conv_faces = Vec::new();
        for (fi, face) in mesh.boundary_faces.iter().enumerate() {
            let fb = mesh.face_basis(face.axis, face.side);
            let nodes = mesh.face_nodes(face.element, face.axis, face.side);
            let nf = nodes.len();
            match face.tag {
                FaceTag::Flux(r) => {
                    let Condition::Flux { value } = mesh.rules[r].condition else { unreachable!() };
                    for &n in &nodes {
                        f_static[n] -= value * fb.area / nf as f64;
                    }
                }
                FaceTag::Convection(r) => {
                    let Condition::Convection { h, ambient } = mesh.rules[r].condition else {
                        unreachable!()
                    };
                    conv_faces.push((fi, h));
                    for &n in &nodes {
                        f_static[n] += h * ambient * fb.area / nf as f64;
                    }
                    for a in 0..nf {
                        for b in 0..nf {
                            let (i, j) = (dof[nodes[a]], dof[nodes[b]]);
                            if i != NONE && j != NONE && i <= j {
                                conv_values[slot(i, j)] += h * fb.mass[a * nf + b];
                            }
                        }
                    }
                }
                _ => {}
            }
        }

        let symbolic = SymbolicSparseColMat::new_checked(n_free, n_free, col_ptr, None, row_idx);
        Ok(Self {
            mesh,
            material,
            options,
            dof,
            n_free,
            symbolic,
            elem_slots,
            k0,
            conv_values,
            f_static,
            conv_faces,
            chol: OnceLock::new(),
        })
    }

    pub fn scales(&self, chi: &CharacteristicField) -> PropertyScales {
        PropertyScales::from_chi(&self.mesh, &self.material, chi)
    }

    /// Nominal element stiffness of a region (row-major, nen x nen).
    pub fn element_stiffness(&self, region: usize) -> &[f64] {
        &self.k0[region]
    }

    pub fn assemble_scaled(&self, scales: &PropertyScales) -> DiscreteSystem {
        let mesh = &self.mesh;
        let nen = mesh.nen();
        let mut values = self.conv_values.clone();
        let mut f = self.f_static.clone();
        let vol = mesh.element_volume();
        for e in 0..mesh.n_elements() {
            if !mesh.active[e] {
                continue;
            }
            let r = mesh.regions[e];
            let k = &self.k0[r];
            let s = scales.kappa[e];
            let slots = &self.elem_slots[e * nen * nen..(e + 1) * nen * nen];
            for (idx, &sl) in slots.iter().enumerate() {
                if sl != NONE {
                    values[sl] += s * k[idx];
                }
            }
            let src = self.material.region(r).source * scales.source[e];
            if src != 0.0 {
                for &n in mesh.element_nodes(e) {
                    f[n] += src * vol / nen as f64;
                }
            }
        }
        DiscreteSystem {
            scales: scales.clone(),
            values,
            f,
        }
    }

    /// y = K x over all nodes (no Dirichlet elimination).
    pub fn apply_full(&self, scales: &PropertyScales, x: &[f64]) -> Vec<f64> {
        let mesh = &self.mesh;
        let nen = mesh.nen();
        let mut y = vec![0.0; mesh.n_nodes()];
        for e in 0..mesh.n_elements() {
            if !mesh.active[e] {
                continue;
            }
            let k = &self.k0[mesh.regions[e]];
            let s = scales.kappa[e];
            let nodes = mesh.element_nodes(e);
            for a in 0..nen {
                let mut acc = 0.0;
                for b in 0..nen {
                    acc += k[a * nen + b] * x[nodes[b]];
                }
                y[nodes[a]] += s * acc;
            }
        }
        for &(fi, h) in &self.conv_faces {
            let face = &mesh.boundary_faces[fi];
            let fb = mesh.face_basis(face.axis, face.side);
            let nodes = mesh.face_nodes(face.element, face.axis, face.side);
            let nf = nodes.len();
            for a in 0..nf {
                for b in 0..nf {
                    y[nodes[a]] += h * fb.mass[a * nf + b] * x[nodes[b]];
                }
            }
        }
        y
    }

    pub fn dirichlet_vector(&self) -> Vec<f64> {
        self.mesh.dirichlet.iter().map(|d| d.unwrap_or(0.0)).collect()
    }

    fn symbolic_llt(&self) -> Result<&SymbolicLlt<usize>> {
        self.chol
            .get_or_init(|| SymbolicLlt::try_new(self.symbolic.as_ref(), Side::Upper).map_err(|e| format!("{e:?}")))
            .as_ref()
            .map_err(|e| Error::Singular(format!("symbolic factorization failed: {e}")))
    }

    fn matrix<'a>(&'a self, values: &'a [f64]) -> SparseColMatRef<'a, usize, f64> {
        SparseColMatRef::new(self.symbolic.as_ref(), values)
    }
}

enum Backend {
    Direct(Llt<usize, f64>),
    Pcg { inv_diag: Vec<f64> },
}

/// Factorized (or preconditioned) reduced operator shared by all right-hand sides.
pub struct ThermalSolver<'a> {
    model: &'a ThermalModel,
    system: &'a DiscreteSystem,
    backend: Backend,
}

pub fn assemble(model: &ThermalModel, chi: &CharacteristicField) -> DiscreteSystem {
    model.assemble_scaled(&model.scales(chi))
}

impl<'a> ThermalSolver<'a> {
    pub fn new(model: &'a ThermalModel, system: &'a DiscreteSystem) -> Result<Self> {
        let backend = if model.n_free <= model.options.direct_limit {
            let sym = model.symbolic_llt()?.clone();
            let llt = Llt::try_new_with_symbolic(sym, model.matrix(&system.values), Side::Upper)
                .map_err(|e| Error::Singular(format!("Cholesky factorization failed: {e:?}")))?;
            Backend::Direct(llt)
        } else {
            let mut inv_diag = vec![0.0; model.n_free];
            let s = &model.symbolic;
            for j in 0..model.n_free {
                let start = s.col_ptr()[j];
                let end = s.col_ptr()[j + 1];
                // diagonal is the last upper entry of each column
                debug_assert_eq!(s.row_idx()[end - 1], j);
                let d = system.values[end - 1];
                if !(d > 0.0) {
                    return Err(Error::Singular(format!("non-positive diagonal at unknown {j}")));
                }
                let _ = start;
                inv_diag[j] = 1.0 / d;
            }
            Backend::Pcg { inv_diag }
        };
        Ok(Self { model, system, backend })
    }

    /// Reduced symmetric product using the upper-triangular storage.
    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let s = &self.model.symbolic;
        let (cp, ri) = (s.col_ptr(), s.row_idx());
        let v = &self.system.values;
        let mut y = vec![0.0; x.len()];
        for j in 0..x.len() {
            for p in cp[j]..cp[j + 1] {
                let i = ri[p];
                y[i] += v[p] * x[j];
                if i != j {
                    y[j] += v[p] * x[i];
                }
            }
        }
        y
    }

    fn solve_reduced(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let x = match &self.backend {
            Backend::Direct(llt) => {
                let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
                llt.solve_in_place(rhs.as_mut());
                let mut x: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
                // iterative refinement while the residual keeps dropping
                let mut r: Vec<f64> = self.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
                let mut rn = norm(&r);
                for _ in 0..REFINE_SWEEPS {
                    if rn <= 1e-15 * bnorm {
                        break;
                    }
                    let mut rr = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
                    llt.solve_in_place(rr.as_mut());
                    let trial: Vec<f64> = x.iter().enumerate().map(|(i, xi)| xi + rr[(i, 0)]).collect();
                    let tr: Vec<f64> = self.matvec(&trial).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
                    let tn = norm(&tr);
                    if tn >= rn {
                        break;
                    }
                    let gain = rn / tn;
                    (x, r, rn) = (trial, tr, tn);
                    if gain < 2.0 {
                        break;
                    }
                }
                x
            }
            Backend::Pcg { inv_diag } => self.pcg(b, inv_diag)?,
        };
        let r: Vec<f64> = self.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let rel = norm(&r) / bnorm;
        if !rel.is_finite() || rel > RESIDUAL_TOL {
            return Err(Error::Solver {
                message: "residual above tolerance".into(),
                residual: rel,
            });
        }
        Ok(x)
    }

    fn pcg(&self, b: &[f64], inv_diag: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let opts = self.model.options;
        let bnorm = norm(b);
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..opts.pcg_max_iters {
            let ap = self.matvec(&p);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if norm(&r) <= opts.pcg_tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Solver {
            message: format!("PCG did not converge in {} iterations", opts.pcg_max_iters),
            residual: norm(&r) / bnorm,
        })
    }

    /// State temperatures; Dirichlet nodes carry their prescribed values.
    pub fn solve_state(&self) -> Result<Vec<f64>> {
        let m = self.model;
        let theta_d = m.dirichlet_vector();
        let kd = m.apply_full(&self.system.scales, &theta_d);
        let mut b = vec![0.0; m.n_free];
        for n in 0..m.mesh.n_nodes() {
            if m.dof[n] != NONE {
                b[m.dof[n]] = self.system.f[n] - kd[n];
            }
        }
        let x = self.solve_reduced(&b)?;
        let mut theta = theta_d;
        for n in 0..m.mesh.n_nodes() {
            if m.dof[n] != NONE {
                theta[n] = x[m.dof[n]];
            } else if !m.mesh.live_nodes[n] {
                theta[n] = 0.0;
            }
        }
        Ok(theta)
    }

    /// Solves K x = rhs with homogeneous Dirichlet conditions.
    pub fn solve_adjoint(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = self.model;
        let mut b = vec![0.0; m.n_free];
        for n in 0..m.mesh.n_nodes() {
            if m.dof[n] != NONE {
                b[m.dof[n]] = rhs[n];
            }
        }
        let x = self.solve_reduced(&b)?;
        let mut theta = vec![0.0; m.mesh.n_nodes()];
        for n in 0..m.mesh.n_nodes() {
            if m.dof[n] != NONE {
                theta[n] = x[m.dof[n]];
            }
        }
        Ok(theta)
    }
}

/// Heat flux q = -kappa_chi grad(theta) at each Gauss point of element `e`.
pub fn heat_flux(model: &ThermalModel, scales: &PropertyScales, theta: &[f64], e: usize) -> Vec<[f64; 3]> {
    let mesh = &model.mesh;
    let b = element_basis(mesh, e);
    let vals: Vec<f64> = mesh.element_nodes(e).iter().map(|&n| theta[n]).collect();
    let t = &model.material.tensors[mesh.regions[e]];
    (0..b.weights.len())
        .map(|q| {
            let g = b.gradient(q, &vals);
            let mut out = [0.0; 3];
            for k in 0..mesh.dim {
                out[k] = -scales.kappa[e] * (0..mesh.dim).map(|l| t[k][l] * g[l]).sum::<f64>();
            }
            out
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

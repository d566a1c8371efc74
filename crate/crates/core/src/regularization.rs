//! Screened-Laplacian smoothing of element pseudo-energies onto the nodes.

use crate::error::{Error, Result};
use crate::functionals::FROZEN;
use crate::mesh::{element_basis, Mesh};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, Side};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub tau: f64,
    pub epsilon: f64,
}

impl SmootherConfig {
    pub fn new(tau: f64, element_size: f64) -> Self {
        Self {
            tau,
            epsilon: tau * element_size,
        }
    }
}

/// Factorized (M_L + ε² K) over the live nodes of a mesh.
pub struct Smoother {
    pub config: SmootherConfig,
    index: Vec<usize>,
    llt: Llt<usize, f64>,
    n: usize,
    nen: usize,
    volume: f64,
}

impl Smoother {
    /// ε = τ·h_e.
    pub fn new(mesh: &Mesh, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::Numerical("tau must be non-negative".into()));
        }
        Self::build(mesh, SmootherConfig::new(tau, mesh.element_size()))
    }

    /// Fixed smoothing length, independent of the mesh size.
    pub fn with_epsilon(mesh: &Mesh, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Numerical("epsilon must be non-negative".into()));
        }
        let tau = epsilon / mesh.element_size();
        Self::build(mesh, SmootherConfig { tau, epsilon })
    }

    fn build(mesh: &Mesh, config: SmootherConfig) -> Result<Self> {
        let nen = mesh.nen();
        let mut index = vec![NONE; mesh.n_nodes()];
        let mut n = 0;
        for (i, &live) in mesh.live_nodes.iter().enumerate() {
            if live {
                index[i] = n;
                n += 1;
            }
        }
        // unit-conductivity element stiffness
        let basis = element_basis(mesh, 0);
        let mut k = vec![0.0; nen * nen];
        for q in 0..basis.weights.len() {
            for a in 0..nen {
                for b in 0..nen {
                    let g: f64 = (0..mesh.dim).map(|d| basis.grad[q][d][a] * basis.grad[q][d][b]).sum();
                    k[a * nen + b] += basis.weights[q] * g;
                }
            }
        }
        let eps2 = config.epsilon * config.epsilon;
        let lump = mesh.element_volume() / nen as f64;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for e in 0..mesh.n_elements() {
            if !mesh.active[e] {
                continue;
            }
            let nodes = mesh.element_nodes(e);
            for a in 0..nen {
                for b in 0..nen {
                    let (i, j) = (index[nodes[a]], index[nodes[b]]);
                    if i <= j {
                        let mut v = eps2 * k[a * nen + b];
                        if a == b {
                            v += lump;
                        }
                        cols[j].push((i, v));
                    }
                }
            }
        }
        let mut col_ptr = vec![0usize];
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        for c in cols.iter_mut() {
            c.sort_by_key(|p| p.0);
            let mut last = NONE;
            for &(i, v) in c.iter() {
                if i == last {
                    *vals.last_mut().unwrap() += v;
                } else {
                    rows.push(i);
                    vals.push(v);
                    last = i;
                }
            }
            col_ptr.push(rows.len());
        }
        let sym = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, rows);
        let fail = |e: String| Error::Numerical(format!("smoothing operator factorization failed: {e}"));
        let symllt = SymbolicLlt::try_new(sym.as_ref(), Side::Upper).map_err(|e| fail(format!("{e:?}")))?;
        let llt = Llt::try_new_with_symbolic(symllt, SparseColMatRef::new(sym.as_ref(), &vals), Side::Upper)
            .map_err(|e| fail(format!("{e:?}")))?;
        Ok(Self {
            config,
            index,
            llt,
            n,
            nen,
            volume: mesh.element_volume(),
        })
    }

    /// Solves (M_L + ε²K) ξ̂ = ∫ Nᵀ ξ dΩ. Frozen entries take the current maximum.
    pub fn smooth(&self, mesh: &Mesh, xi: &[f64]) -> Vec<f64> {
        let max = xi
            .iter()
            .zip(&mesh.active)
            .filter(|(v, &a)| a && **v != FROZEN)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let max = if max.is_finite() { max } else { 0.0 };
        let w = self.volume / self.nen as f64;
        let mut rhs = Mat::<f64>::zeros(self.n, 1);
        for e in 0..mesh.n_elements() {
            if !mesh.active[e] {
                continue;
            }
            let v = if xi[e] == FROZEN { max } else { xi[e] };
            for &node in mesh.element_nodes(e) {
                rhs[(self.index[node], 0)] += v * w;
            }
        }
        self.llt.solve_in_place(rhs.as_mut());
        (0..mesh.n_nodes())
            .map(|i| if self.index[i] == NONE { 0.0 } else { rhs[(self.index[i], 0)] })
            .collect()
    }
}

/// ∫ f dΩ of a nodal Q1 field over the active domain.
pub fn nodal_integral(mesh: &Mesh, field: &[f64]) -> f64 {
    let w = mesh.element_volume() / mesh.nen() as f64;
    (0..mesh.n_elements())
        .filter(|&e| mesh.active[e])
        .map(|e| mesh.element_nodes(e).iter().map(|&n| field[n]).sum::<f64>() * w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;

    #[test]
    fn constants_are_fixed_points() {
        let m = build_structured_mesh(&[5, 4, 3], &[0.1; 3], &[], &[]).unwrap();
        for tau in [0.0, 1.0, 3.0] {
            let s = Smoother::new(&m, tau).unwrap();
            let out = s.smooth(&m, &vec![2.5; m.n_elements()]);
            assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn spike_preserves_integral() {
        let m = build_structured_mesh(&[9, 9], &[0.1; 2], &[], &[]).unwrap();
        let s = Smoother::new(&m, 1.5).unwrap();
        let mut xi = vec![0.0; m.n_elements()];
        xi[40] = 1.0;
        let out = s.smooth(&m, &xi);
        let total: f64 = xi.iter().sum::<f64>() * m.element_volume();
        assert!((nodal_integral(&m, &out) - total).abs() < 1e-12 * total.max(1.0));
        assert!(out.iter().all(|&v| (-1e-15..=1.0).contains(&v)));
        let centre = m.node_index(4, 4, 0);
        let far = m.node_index(0, 0, 0);
        assert!(out[centre] > 10.0 * out[far]);
    }

    #[test]
    fn epsilon_from_tau() {
        let h = 1.0 / 120.0;
        let m = build_structured_mesh(&[2, 2, 2], &[h; 3], &[], &[]).unwrap();
        let s = Smoother::new(&m, 1.0).unwrap();
        assert!((s.config.epsilon - 8.3e-3).abs() < 5e-5);
    }
}

//! Structured axis-aligned Q1 grids (quads in 2D, hexes in 3D).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Local node offsets in VTK ordering. 2D elements use the first four.
pub const LOCAL_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const GAUSS_1D: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Rotation is applied as Rz * Ry * Rx with angles in degrees.
    Ellipsoid {
        center: [f64; 3],
        semi_axes: [f64; 3],
        #[serde(default)]
        rotation_deg: [f64; 3],
    },
}

impl Shape {
    pub fn contains(&self, p: &[f64; 3], dim: usize) -> bool {
        match self {
            Shape::Box { min, max } => (0..dim).all(|a| p[a] >= min[a] && p[a] <= max[a]),
            Shape::Sphere { center, radius } => {
                let d2: f64 = (0..dim).map(|a| (p[a] - center[a]).powi(2)).sum();
                d2 < radius * radius
            }
            Shape::Ellipsoid {
                center,
                semi_axes,
                rotation_deg,
            } => {
                if (0..dim).any(|a| semi_axes[a] <= 0.0) {
                    return false;
                }
                let r = rotation_matrix(rotation_deg);
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let mut s = 0.0;
                for a in 0..dim {
                    // local coordinate = R^T d
                    let l = r[0][a] * d[0] + r[1][a] * d[1] + r[2][a] * d[2];
                    s += (l / semi_axes[a]).powi(2);
                }
                s < 1.0
            }
        }
    }
}

fn rotation_matrix(deg: &[f64; 3]) -> [[f64; 3]; 3] {
    let (sa, ca) = deg[0].to_radians().sin_cos();
    let (sb, cb) = deg[1].to_radians().sin_cos();
    let (sg, cg) = deg[2].to_radians().sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]];
    matmul(&rz, &matmul(&ry, &rx))
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDef {
    pub name: String,
    pub shape: Shape,
    /// Higher wins when shapes overlap. Ties go to the later definition.
    #[serde(default)]
    pub priority: i32,
    /// Void regions are removed from the analysis domain.
    #[serde(default)]
    pub void: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Patch {
    /// Disc in the face plane; the coordinate along the face normal is ignored.
    Disc { center: [f64; 3], radius: f64 },
    Rect { min: [f64; 3], max: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSelector {
    pub axis: usize,
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<Patch>,
}

impl FaceSelector {
    pub fn plane(axis: usize, side: Side) -> Self {
        Self {
            axis,
            side,
            patch: None,
        }
    }

    fn matches(&self, axis: usize, side: Side, centroid: &[f64; 3], dim: usize) -> bool {
        if axis != self.axis || side != self.side {
            return false;
        }
        match &self.patch {
            None => true,
            Some(Patch::Disc { center, radius }) => {
                let d2: f64 = (0..dim)
                    .filter(|&a| a != axis)
                    .map(|a| (centroid[a] - center[a]).powi(2))
                    .sum();
                d2 <= radius * radius
            }
            Some(Patch::Rect { min, max }) => (0..dim)
                .filter(|&a| a != axis)
                .all(|a| centroid[a] >= min[a] && centroid[a] <= max[a]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    Dirichlet { value: f64 },
    /// Outward normal heat flux (W/m²); positive values extract heat.
    Flux { value: f64 },
    Convection { h: f64, ambient: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundaryTarget {
    Faces { faces: FaceSelector },
    /// Every node of the region's elements (Dirichlet only).
    Region { region: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRule {
    #[serde(flatten)]
    pub target: BoundaryTarget,
    pub condition: Condition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceTag {
    Adiabatic,
    Dirichlet(usize),
    Flux(usize),
    Convection(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub element: usize,
    pub axis: usize,
    pub side: Side,
    pub tag: FaceTag,
}

/// Shape functions and gradients at the Gauss points of one element.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub dim: usize,
    pub nen: usize,
    pub n: Vec<[f64; 8]>,
    /// grad[q][k][a] = dN_a/dx_k at Gauss point q.
    pub grad: Vec<[[f64; 8]; 3]>,
    pub weights: Vec<f64>,
}

impl ElementBasis {
    fn reference(dim: usize, spacing: &[f64; 3]) -> Self {
        let nen = 1 << dim;
        let vol: f64 = spacing[..dim].iter().product();
        let mut n = Vec::new();
        let mut grad = Vec::new();
        let mut weights = Vec::new();
        let nz = if dim == 3 { 2 } else { 1 };
        for gz in 0..nz {
            for gy in 0..2 {
                for gx in 0..2 {
                    let xi = [GAUSS_1D[gx], GAUSS_1D[gy], if dim == 3 { GAUSS_1D[gz] } else { 0.0 }];
                    let mut nq = [0.0; 8];
                    let mut gq = [[0.0; 8]; 3];
                    for a in 0..nen {
                        let o = LOCAL_OFFSETS[a];
                        let f = |k: usize| if o[k] == 1 { xi[k] } else { 1.0 - xi[k] };
                        let df = |k: usize| if o[k] == 1 { 1.0 } else { -1.0 };
                        nq[a] = (0..dim).map(f).product();
                        for k in 0..dim {
                            let mut g = df(k) / spacing[k];
                            for l in 0..dim {
                                if l != k {
                                    g *= f(l);
                                }
                            }
                            gq[k][a] = g;
                        }
                    }
                    n.push(nq);
                    grad.push(gq);
                    weights.push(vol / nen as f64);
                }
            }
        }
        Self {
            dim,
            nen,
            n,
            grad,
            weights,
        }
    }

    /// Gradient of a nodal field at Gauss point `q`.
    pub fn gradient(&self, q: usize, values: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for k in 0..self.dim {
            g[k] = (0..self.nen).map(|a| self.grad[q][k][a] * values[a]).sum();
        }
        g
    }

    pub fn value(&self, q: usize, values: &[f64]) -> f64 {
        (0..self.nen).map(|a| self.n[q][a] * values[a]).sum()
    }
}

/// Quadrature data on one boundary face orientation.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    /// Local element node indices lying on the face.
    pub nodes: Vec<usize>,
    /// Consistent face mass matrix, row-major over `nodes`.
    pub mass: Vec<f64>,
    pub area: f64,
}

impl FaceBasis {
    fn new(dim: usize, spacing: &[f64; 3], axis: usize, side: Side) -> Self {
        let s = match side {
            Side::Min => 0,
            Side::Max => 1,
        };
        let nodes: Vec<usize> = (0..1 << dim).filter(|&a| LOCAL_OFFSETS[a][axis] == s).collect();
        let tangents: Vec<usize> = (0..dim).filter(|&k| k != axis).collect();
        let area: f64 = tangents.iter().map(|&k| spacing[k]).product();
        let nf = nodes.len();
        // tensor-product 1D mass [[2,1],[1,2]]/6 per tangent direction
        let mut mass = vec![0.0; nf * nf];
        for (i, &a) in nodes.iter().enumerate() {
            for (j, &b) in nodes.iter().enumerate() {
                let mut m = area;
                for &k in &tangents {
                    m *= if LOCAL_OFFSETS[a][k] == LOCAL_OFFSETS[b][k] { 1.0 / 3.0 } else { 1.0 / 6.0 };
                }
                mass[i * nf + j] = m;
            }
        }
        Self { nodes, mass, area }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub conn: Vec<[usize; 8]>,
    /// Region id per element; 0 is the background.
    pub regions: Vec<usize>,
    pub region_names: Vec<String>,
    pub active: Vec<bool>,
    /// Nodes touched by at least one active element.
    pub live_nodes: Vec<bool>,
    pub boundary_faces: Vec<BoundaryFace>,
    pub rules: Vec<BoundaryRule>,
    /// Prescribed temperature per node.
    pub dirichlet: Vec<Option<f64>>,
    basis: ElementBasis,
    face_bases: Vec<FaceBasis>,
}

pub fn build_structured_mesh(
    dims: &[usize],
    spacing: &[f64],
    regions: &[RegionDef],
    boundary: &[BoundaryRule],
) -> Result<Mesh> {
    let dim = dims.len();
    if !(dim == 2 || dim == 3) {
        return Err(Error::Mesh(format!("expected 2 or 3 axes, got {dim}")));
    }
    if spacing.len() != dim {
        return Err(Error::Mesh("spacing length differs from dims length".into()));
    }
    if dims.contains(&0) {
        return Err(Error::Mesh("empty dims".into()));
    }
    if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::Mesh("spacing must be positive".into()));
    }
    let mut d3 = [1usize; 3];
    let mut h3 = [1.0; 3];
    d3[..dim].copy_from_slice(dims);
    h3[..dim].copy_from_slice(spacing);
    if dim == 2 {
        d3[2] = 0;
    }
    let nx = d3[0] + 1;
    let ny = d3[1] + 1;
    let node = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let nez = d3[2].max(1);
    let nen = 1 << dim;

    let mut region_names = vec!["background".to_string()];
    for r in regions {
        if region_names.contains(&r.name) {
            return Err(Error::Mesh(format!("duplicate region name '{}'", r.name)));
        }
        region_names.push(r.name.clone());
    }

    let mut conn = Vec::with_capacity(d3[0] * d3[1] * nez);
    let mut region_of = Vec::with_capacity(conn.capacity());
    let mut active = Vec::with_capacity(conn.capacity());
    for k in 0..nez {
        for j in 0..d3[1] {
            for i in 0..d3[0] {
                let mut c = [0usize; 8];
                for a in 0..nen {
                    let o = LOCAL_OFFSETS[a];
                    c[a] = node(i + o[0], j + o[1], k + o[2]);
                }
                conn.push(c);
                let centroid = [
                    (i as f64 + 0.5) * h3[0],
                    (j as f64 + 0.5) * h3[1],
                    if dim == 3 { (k as f64 + 0.5) * h3[2] } else { 0.0 },
                ];
                let mut best: Option<(i32, usize)> = None;
                for (ri, r) in regions.iter().enumerate() {
                    if r.shape.contains(&centroid, dim) && best.is_none_or(|(p, _)| r.priority >= p) {
                        best = Some((r.priority, ri));
                    }
                }
                match best {
                    Some((_, ri)) => {
                        region_of.push(ri + 1);
                        active.push(!regions[ri].void);
                    }
                    None => {
                        region_of.push(0);
                        active.push(true);
                    }
                }
            }
        }
    }
    let n_nodes = nx * ny * (d3[2] + 1);
    let mut live = vec![false; n_nodes];
    for (e, c) in conn.iter().enumerate() {
        if active[e] {
            for &n in &c[..nen] {
                live[n] = true;
            }
        }
    }
    if !active.iter().any(|&a| a) {
        return Err(Error::Mesh("every element is void".into()));
    }

    let mut face_bases = Vec::new();
    for axis in 0..dim {
        for side in [Side::Min, Side::Max] {
            face_bases.push(FaceBasis::new(dim, &h3, axis, side));
        }
    }

    let mut mesh = Mesh {
        dim,
        dims: d3,
        spacing: h3,
        origin: [0.0; 3],
        conn,
        regions: region_of,
        region_names,
        active,
        live_nodes: live,
        boundary_faces: Vec::new(),
        rules: boundary.to_vec(),
        dirichlet: vec![None; n_nodes],
        basis: ElementBasis::reference(dim, &h3),
        face_bases,
    };

    // exterior faces of active elements
    let mut faces = Vec::new();
    for e in 0..mesh.n_elements() {
        if !mesh.active[e] {
            continue;
        }
        let ijk = mesh.element_ijk(e);
        for axis in 0..dim {
            for side in [Side::Min, Side::Max] {
                let on = match side {
                    Side::Min => ijk[axis] == 0,
                    Side::Max => ijk[axis] + 1 == d3[axis],
                };
                if !on {
                    continue;
                }
                let centroid = mesh.face_centroid(e, axis, side);
                let mut tag = FaceTag::Adiabatic;
                let mut dval: Option<f64> = None;
                for (ri, rule) in boundary.iter().enumerate() {
                    let BoundaryTarget::Faces { faces: sel } = &rule.target else {
                        continue;
                    };
                    if !sel.matches(axis, side, &centroid, dim) {
                        continue;
                    }
                    tag = match rule.condition {
                        Condition::Dirichlet { value } => {
                            if let Some(v) = dval {
                                if v != value {
                                    return Err(Error::Mesh(format!(
                                        "conflicting Dirichlet values {v} and {value} on face of element {e}"
                                    )));
                                }
                            }
                            dval = Some(value);
                            FaceTag::Dirichlet(ri)
                        }
                        Condition::Flux { .. } => FaceTag::Flux(ri),
                        Condition::Convection { .. } => FaceTag::Convection(ri),
                    };
                }
                faces.push(BoundaryFace {
                    element: e,
                    axis,
                    side,
                    tag,
                });
            }
        }
    }
    mesh.boundary_faces = faces;

    // Dirichlet nodes
    let mut dirichlet: Vec<Option<f64>> = vec![None; n_nodes];
    let mut set = |n: usize, v: f64| -> Result<()> {
        match dirichlet[n] {
            Some(old) if old != v => Err(Error::Mesh(format!(
                "conflicting Dirichlet values {old} and {v} at node {n}"
            ))),
            _ => {
                dirichlet[n] = Some(v);
                Ok(())
            }
        }
    };
    for f in &mesh.boundary_faces {
        if let FaceTag::Dirichlet(ri) = f.tag {
            let Condition::Dirichlet { value } = boundary[ri].condition else {
                unreachable!()
            };
            for n in mesh.face_nodes(f.element, f.axis, f.side) {
                set(n, value)?;
            }
        }
    }
    for rule in boundary {
        if let BoundaryTarget::Region { region } = &rule.target {
            let Some(rid) = mesh.region_names.iter().position(|r| r == region) else {
                return Err(Error::Mesh(format!("boundary rule references unknown region '{region}'")));
            };
            let Condition::Dirichlet { value } = rule.condition else {
                return Err(Error::Mesh(format!(
                    "region '{region}' can only carry a Dirichlet condition"
                )));
            };
            for e in 0..mesh.n_elements() {
                if mesh.regions[e] == rid && mesh.active[e] {
                    for &n in mesh.element_nodes(e) {
                        set(n, value)?;
                    }
                }
            }
        }
    }
    mesh.dirichlet = dirichlet;
    Ok(mesh)
}

impl Mesh {
    pub fn nen(&self) -> usize {
        1 << self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.conn.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.live_nodes.len()
    }

    pub fn nodes_per_axis(&self) -> [usize; 3] {
        [self.dims[0] + 1, self.dims[1] + 1, self.dims[2] + 1]
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes_per_axis();
        i + n[0] * (j + n[1] * k)
    }

    pub fn node_coords(&self, n: usize) -> [f64; 3] {
        let np = self.nodes_per_axis();
        let i = n % np[0];
        let j = (n / np[0]) % np[1];
        let k = n / (np[0] * np[1]);
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            if self.dim == 3 { self.origin[2] + k as f64 * self.spacing[2] } else { 0.0 },
        ]
    }

    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let d = self.dims;
        [e % d[0], (e / d[0]) % d[1], e / (d[0] * d[1])]
    }

    pub fn element_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        &self.conn[e][..self.nen()]
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 3] {
        let ijk = self.element_ijk(e);
        let mut c = [0.0; 3];
        for a in 0..self.dim {
            c[a] = self.origin[a] + (ijk[a] as f64 + 0.5) * self.spacing[a];
        }
        c
    }

    pub fn element_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    /// Typical element size: the d-th root of the element volume.
    pub fn element_size(&self) -> f64 {
        self.element_volume().powf(1.0 / self.dim as f64)
    }

    pub fn face_centroid(&self, e: usize, axis: usize, side: Side) -> [f64; 3] {
        let mut c = self.element_centroid(e);
        c[axis] += match side {
            Side::Min => -0.5,
            Side::Max => 0.5,
        } * self.spacing[axis];
        c
    }

    pub fn face_basis(&self, axis: usize, side: Side) -> &FaceBasis {
        let s = match side {
            Side::Min => 0,
            Side::Max => 1,
        };
        &self.face_bases[2 * axis + s]
    }

    pub fn face_nodes(&self, e: usize, axis: usize, side: Side) -> Vec<usize> {
        self.face_basis(axis, side).nodes.iter().map(|&a| self.conn[e][a]).collect()
    }

    /// Measure of the active domain.
    pub fn active_volume(&self) -> f64 {
        self.active.iter().filter(|&&a| a).count() as f64 * self.element_volume()
    }

    pub fn region_id(&self, name: &str) -> Option<usize> {
        self.region_names.iter().position(|r| r == name)
    }

    /// Boundary faces selected by any of `selectors` (port definitions).
    pub fn select_faces(&self, selectors: &[FaceSelector]) -> Vec<BoundaryFace> {
        self.boundary_faces
            .iter()
            .filter(|f| {
                let c = self.face_centroid(f.element, f.axis, f.side);
                selectors.iter().any(|s| s.matches(f.axis, f.side, &c, self.dim))
            })
            .copied()
            .collect()
    }
}

/// Shape-function data for element `e`. All elements of a structured grid share it.
pub fn element_basis(mesh: &Mesh, e: usize) -> &ElementBasis {
    debug_assert!(e < mesh.n_elements());
    &mesh.basis
}

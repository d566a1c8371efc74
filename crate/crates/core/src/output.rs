//! Field snapshots (legacy VTK, ASCII) and per-step history (CSV).

use crate::error::{Error, Result};
use crate::material::Phase;
use crate::mesh::Mesh;
use crate::optimizer::StepResult;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const HISTORY_HEADER: &str = "t,cost,lambda,outer_iters,bisect_iters,constraint_residual,converged";

fn push_scalars(out: &mut String, name: &str, values: impl Iterator<Item = f64>) {
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(out, "{v:e}");
    }
}

/// Legacy-format unstructured grid with the documented point and cell fields.
pub fn vtk_string(mesh: &Mesh, step: &StepResult) -> String {
    let mut s = String::new();
    let n = mesh.n_nodes();
    let ne = mesh.n_elements();
    let nen = mesh.nen();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nthermotop t={:e}\nASCII\nDATASET UNSTRUCTURED_GRID", step.t);
    let _ = writeln!(s, "POINTS {n} double");
    for i in 0..n {
        let c = mesh.node_coords(i);
        let _ = writeln!(s, "{:e} {:e} {:e}", c[0], c[1], c[2]);
    }
    let _ = writeln!(s, "CELLS {ne} {}", ne * (nen + 1));
    for e in 0..ne {
        let _ = write!(s, "{nen}");
        for &v in mesh.element_nodes(e) {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    let ty = if mesh.dim == 2 { 9 } else { 12 };
    for _ in 0..ne {
        let _ = writeln!(s, "{ty}");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    push_scalars(&mut s, "psi", step.psi.iter().copied());
    push_scalars(&mut s, "xi_hat", step.xi_hat.iter().copied().chain(std::iter::repeat(0.0)).take(n));
    for (i, th) in step.theta.iter().enumerate().take(3) {
        push_scalars(&mut s, &format!("theta{}", i + 1), th.iter().copied());
    }
    let _ = writeln!(s, "CELL_DATA {ne}");
    push_scalars(
        &mut s,
        "chi",
        (0..ne).map(|e| if !mesh.active[e] { 0.0 } else if step.chi.phases[e] == Phase::Hard { 1.0 } else { 0.0 }),
    );
    push_scalars(&mut s, "region", mesh.regions.iter().map(|&r| r as f64));
    push_scalars(&mut s, "hard_fraction", step.hard_fraction.iter().copied());
    s
}

pub fn history_row(step: &StepResult) -> String {
    format!(
        "{:e},{:e},{:e},{},{},{:e},{}",
        step.t,
        step.cost,
        step.lambda,
        step.outer_iters,
        step.bisect_iters,
        step.constraint_residual.abs(),
        step.converged
    )
}

/// Writes snapshots and history rows for a run into one directory.
pub struct RunWriter {
    pub dir: PathBuf,
    prefix: String,
    vtk: bool,
    csv: bool,
    every: usize,
    count: usize,
}

impl RunWriter {
    pub fn new(dir: impl AsRef<Path>, prefix: &str, vtk: bool, csv: bool, every: usize) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let w = Self {
            dir,
            prefix: prefix.to_string(),
            vtk,
            csv,
            every,
            count: 0,
        };
        if csv {
            let p = w.history_path();
            fs::write(&p, format!("{HISTORY_HEADER}\n")).map_err(|e| Error::io(&p, e))?;
        }
        Ok(w)
    }

    pub fn history_path(&self) -> PathBuf {
        self.dir.join(format!("{}history.csv", self.prefix))
    }

    pub fn snapshot_path(&self, index: usize) -> PathBuf {
        self.dir.join(format!("{}step_{index:03}.vtk", self.prefix))
    }

    pub fn write_step(&mut self, mesh: &Mesh, step: &StepResult, last: bool) -> Result<()> {
        let idx = self.count;
        self.count += 1;
        if self.csv {
            let p = self.history_path();
            let mut f = fs::OpenOptions::new().append(true).open(&p).map_err(|e| Error::io(&p, e))?;
            writeln!(f, "{}", history_row(step)).map_err(|e| Error::io(&p, e))?;
        }
        let due = self.every > 0 && idx.is_multiple_of(self.every);
        if self.vtk && (due || last) {
            write_snapshot(mesh, step, &self.snapshot_path(idx))?;
        }
        Ok(())
    }
}

pub fn write_snapshot(mesh: &Mesh, step: &StepResult, path: &Path) -> Result<()> {
    fs::write(path, vtk_string(mesh, step)).map_err(|e| Error::io(path, e))
}

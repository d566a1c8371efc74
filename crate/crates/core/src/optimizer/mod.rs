//! Closed-form optimality iteration with Cutting & Bisection under a pseudo-time schedule.

pub mod volume;

use crate::error::{Error, Result};
use crate::fem::ThermalModel;
use crate::functionals::{CostFunctional, Evaluation, FROZEN};
use crate::material::{chi_from_psi, CharacteristicField, DiscriminationField, Phase};
use crate::mesh::Mesh;
use crate::regularization::Smoother;
pub use volume::marching_volume;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub time_grid: Vec<f64>,
    pub tol_chi: f64,
    pub tol_lambda: f64,
    pub tol_c: f64,
    pub max_outer_iters: usize,
    pub max_bisection_iters: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            time_grid: vec![0.0],
            tol_chi: 1e-1,
            tol_lambda: 1e-1,
            tol_c: 1e-3,
            max_outer_iters: 50,
            max_bisection_iters: 100,
        }
    }
}

/// `steps` equally spaced pseudo-times after `start`, ending at `end`.
pub fn uniform_grid(start: f64, end: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![start];
    }
    (1..=steps).map(|n| start + (end - start) * n as f64 / steps as f64).collect()
}

impl OptimizerConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let g = &self.time_grid;
        if g.is_empty() {
            errs.push("time grid is empty".into());
        }
        if g.iter().any(|t| !t.is_finite()) || g.first().is_some_and(|&t| t < 0.0) || g.last().is_some_and(|&t| t >= 1.0) {
            errs.push("time grid must lie in [0, 1)".into());
        }
        if g.windows(2).any(|w| w[1] <= w[0]) {
            errs.push("time grid must be strictly increasing".into());
        }
        for (name, v) in [("tol_chi", self.tol_chi), ("tol_lambda", self.tol_lambda), ("tol_c", self.tol_c)] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive"));
            }
        }
        if self.max_outer_iters == 0 || self.max_bisection_iters == 0 {
            errs.push("iteration caps must be positive".into());
        }
        errs
    }
}

/// Analysis problem shared by the closed-form and level-set drivers.
pub struct Problem {
    pub model: ThermalModel,
    pub functional: CostFunctional,
    pub smoother: Smoother,
    pub optimizable: Vec<bool>,
}

impl Problem {
    pub fn new(model: ThermalModel, functional: CostFunctional, tau: f64) -> Result<Self> {
        let smoother = Smoother::new(&model.mesh, tau)?;
        Self::with_smoother(model, functional, smoother)
    }

    pub fn with_smoother(model: ThermalModel, functional: CostFunctional, smoother: Smoother) -> Result<Self> {
        let optimizable = model.material.optimizable_mask(&model.mesh);
        if !optimizable.iter().any(|&o| o) {
            return Err(Error::Material("no optimizable region".into()));
        }
        Ok(Self {
            model,
            functional,
            smoother,
            optimizable,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.model.mesh
    }

    /// |Ω|: measure of the active domain.
    pub fn domain_volume(&self) -> f64 {
        self.model.mesh.active_volume()
    }

    pub fn optimizable_volume(&self) -> f64 {
        self.optimizable.iter().filter(|&&o| o).count() as f64 * self.model.mesh.element_volume()
    }

    /// t − |Ω⁻(ψ)|/|Ω| together with the element hard fractions.
    pub fn constraint(&self, t: f64, psi: &[f64]) -> (f64, Vec<f64>) {
        let (soft, frac) = marching_volume(&self.model.mesh, &self.optimizable, psi);
        (t - soft / self.domain_volume(), frac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftReference {
    pub shift: f64,
    pub norm: f64,
}

impl ShiftReference {
    /// Minimum and range of the finite entries.
    pub fn from_values(values: &[f64]) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { shift: 0.0, norm: 1.0 };
        }
        let mut norm = hi - lo;
        if norm == 0.0 {
            log::warn!("uniform pseudo-energy at the reference state; normalization set to 1");
            norm = 1.0;
        }
        Self { shift: lo, norm }
    }
}

/// Maps hard entries to (ξ − shift)/norm and soft entries to ξ/norm.
/// The reference is computed from the input when absent.
pub fn shift_normalize(values: &[f64], phases: &[Phase], reference: Option<ShiftReference>) -> (Vec<f64>, ShiftReference) {
    let r = reference.unwrap_or_else(|| ShiftReference::from_values(values));
    let out = values
        .iter()
        .zip(phases)
        .map(|(&v, &p)| {
            if v == FROZEN {
                FROZEN
            } else if p == Phase::Hard {
                (v - r.shift) / r.norm
            } else {
                v / r.norm
            }
        })
        .collect();
    (out, r)
}

#[derive(Debug, Clone)]
pub struct CutResult {
    pub lambda: f64,
    pub psi: Vec<f64>,
    pub hard_fraction: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds λ with |t − |Ω⁻(ξ̂ − λ)|/|Ω|| ≤ tol_c by bisection on [min ξ̂, max ξ̂].
pub fn cut_and_bisect(
    problem: &Problem,
    xi_hat: &[f64],
    t: f64,
    tol_c: f64,
    max_iters: usize,
    hint: Option<f64>,
) -> Result<CutResult> {
    let mesh = problem.mesh();
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Infeasible(format!("target {t} outside [0, 1)")));
    }
    let mut on_opt = vec![false; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        if problem.optimizable[e] {
            for &n in mesh.element_nodes(e) {
                on_opt[n] = true;
            }
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (n, &v) in xi_hat.iter().enumerate() {
        if on_opt[n] {
            if !v.is_finite() {
                return Err(Error::Numerical("non-finite smoothed pseudo-energy".into()));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let max_soft = problem.optimizable_volume() / problem.domain_volume();
    if t > max_soft + tol_c {
        return Err(Error::Infeasible(format!(
            "target {t} exceeds the optimizable fraction {max_soft:.6}"
        )));
    }
    let eval = |lambda: f64| {
        let psi: Vec<f64> = xi_hat.iter().map(|v| v - lambda).collect();
        let (c, frac) = problem.constraint(t, &psi);
        (c, psi, frac)
    };
    let done = |lambda: f64, c: f64, psi: Vec<f64>, frac: Vec<f64>, it: usize| CutResult {
        lambda,
        psi,
        hard_fraction: frac,
        residual: c,
        iterations: it,
    };
    let mut iters = 0;
    let (c, psi, frac) = eval(lo);
    if c.abs() <= tol_c {
        return Ok(done(lo, c, psi, frac, iters));
    }
    if hi == lo {
        hi = lo + 1.0;
    }
    let (c, psi, frac) = eval(hi);
    if c.abs() <= tol_c {
        return Ok(done(hi, c, psi, frac, iters));
    }
    if c > 0.0 {
        return Err(Error::Infeasible(format!("volume target {t} not reachable (residual {c:e})")));
    }
    if let Some(h) = hint.filter(|h| *h > lo && *h < hi) {
        iters += 1;
        let (c, psi, frac) = eval(h);
        if c.abs() <= tol_c {
            return Ok(done(h, c, psi, frac, iters));
        }
        if c > 0.0 {
            lo = h;
        } else {
            hi = h;
        }
    }
    while iters < max_iters {
        iters += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::Bisection(format!(
                "bracket collapsed at λ = {mid:e} without meeting the volume tolerance"
            )));
        }
        let (c, psi, frac) = eval(mid);
        if c.abs() <= tol_c {
            return Ok(done(mid, c, psi, frac, iters));
        }
        if c > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Bisection(format!("iteration cap {max_iters} exceeded")))
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub t: f64,
    pub chi: CharacteristicField,
    pub psi: Vec<f64>,
    pub xi_hat: Vec<f64>,
    pub lambda: f64,
    pub cost: f64,
    pub outer_iters: usize,
    pub bisect_iters: usize,
    pub constraint_residual: f64,
    pub hard_fraction: Vec<f64>,
    pub converged: bool,
    pub theta: Vec<Vec<f64>>,
    pub extras: Vec<(&'static str, f64)>,
}

/// Mutable design state carried across steps.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub chi: CharacteristicField,
    pub psi: Vec<f64>,
    pub lambda: Option<f64>,
    pub reference: Option<ShiftReference>,
}

impl OptimizerState {
    pub fn initial(mesh: &Mesh) -> Self {
        Self {
            chi: CharacteristicField::all_hard(mesh),
            psi: vec![1.0; mesh.n_nodes()],
            lambda: None,
            reference: None,
        }
    }
}

/// Element ξ → shifted/normalized → smoothed nodal ξ̂.
pub fn regularized_pseudo_energy(problem: &Problem, state: &mut OptimizerState, eval: &Evaluation) -> Vec<f64> {
    let (xn, r) = shift_normalize(&eval.xi, &state.chi.phases, state.reference);
    state.reference = Some(r);
    problem.smoother.smooth(problem.mesh(), &xn)
}

pub fn run_step(problem: &Problem, state: &mut OptimizerState, t: f64, cfg: &OptimizerConfig) -> Result<StepResult> {
    let mesh = problem.mesh();
    let omega = problem.domain_volume();
    let mut prev_lambda: Option<f64> = None;
    let mut bisect_total = 0;
    let mut last: Option<(Evaluation, CharacteristicField)> = None;
    let mut converged = false;
    let mut outer = 0;
    let mut cut = None;
    let mut xi_hat = Vec::new();
    while outer < cfg.max_outer_iters {
        outer += 1;
        let eval = problem.functional.evaluate(&problem.model, &state.chi)?;
        if !eval.cost.is_finite() {
            return Err(Error::Numerical("non-finite cost".into()));
        }
        xi_hat = regularized_pseudo_energy(problem, state, &eval);
        let c = cut_and_bisect(problem, &xi_hat, t, cfg.tol_c, cfg.max_bisection_iters, state.lambda)?;
        bisect_total += c.iterations;
        let chi_new = chi_from_psi(
            mesh,
            &problem.model.material,
            &DiscriminationField { psi: c.psi.clone() },
            &state.chi,
        );
        let dchi = chi_new.changed_volume(&state.chi, mesh) / omega;
        let dlambda = prev_lambda.map(|p| (c.lambda - p).abs() / p.abs().max(1.0));
        log::debug!(
            "t={t:.4} iter={outer} cost={:.6e} lambda={:.6e} dchi={dchi:.3e} dlambda={dlambda:?}",
            eval.cost,
            c.lambda
        );
        prev_lambda = Some(c.lambda);
        state.lambda = Some(c.lambda);
        last = Some((eval, state.chi.clone()));
        state.chi = chi_new;
        state.psi = c.psi.clone();
        cut = Some(c);
        if dchi <= cfg.tol_chi && dlambda.is_some_and(|d| d <= cfg.tol_lambda) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("step t={t} did not converge in {} outer iterations", cfg.max_outer_iters);
    }
    let cut = cut.expect("at least one outer iteration");
    let (eval, analysed) = last.expect("at least one evaluation");
    let eval = if analysed == state.chi {
        eval
    } else {
        problem.functional.evaluate(&problem.model, &state.chi)?
    };
    Ok(StepResult {
        t,
        chi: state.chi.clone(),
        psi: cut.psi,
        xi_hat,
        lambda: cut.lambda,
        cost: eval.cost,
        outer_iters: outer,
        bisect_iters: bisect_total,
        constraint_residual: cut.residual,
        hard_fraction: cut.hard_fraction,
        converged,
        theta: eval.theta,
        extras: eval.extras,
    })
}

/// Runs every pseudo-time of the grid, warm-starting each step from the previous design.
pub fn run_schedule(
    problem: &Problem,
    cfg: &OptimizerConfig,
    mut on_step: impl FnMut(&StepResult) -> Result<()>,
) -> Result<Vec<StepResult>> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let mut state = OptimizerState::initial(problem.mesh());
    let mut out = Vec::with_capacity(cfg.time_grid.len());
    for &t in &cfg.time_grid {
        let r = run_step(problem, &mut state, t, cfg)?;
        log::info!(
            "t={:.4} cost={:.6e} iters={} |C|={:.2e}{}",
            r.t,
            r.cost,
            r.outer_iters,
            r.constraint_residual.abs(),
            if r.converged { "" } else { " (not converged)" }
        );
        on_step(&r)?;
        out.push(r);
    }
    Ok(out)
}

//! Level-set baseline driven by the same smoothed pseudo-energy, with an
//! augmented-Lagrangian multiplier update for the volume constraint.

use crate::error::{Error, Result};
use crate::material::{chi_from_psi, exchange_function, DiscriminationField, Phase};
use crate::optimizer::{regularized_pseudo_energy, OptimizerConfig, OptimizerState, Problem, StepResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetParams {
    pub delta_t: f64,
    pub rho: f64,
    /// Per-step iteration cap.
    pub max_iters: usize,
}

impl Default for LevelSetParams {
    fn default() -> Self {
        Self {
            delta_t: 0.1,
            rho: 0.05,
            max_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetState {
    pub phi: Vec<f64>,
    pub lambda: f64,
    pub delta_t: f64,
    pub rho: f64,
}

/// φ' = φ − (Δt/Δχ) δL/δχ and λ' = λ + ρ C.
pub fn levelset_step(state: &LevelSetState, sensitivity: &[f64], exchange: &[f64], constraint: f64) -> LevelSetState {
    let phi = state
        .phi
        .iter()
        .zip(sensitivity.iter().zip(exchange))
        .map(|(&p, (&s, &dx))| if s == 0.0 { p } else { p - state.delta_t / dx * s })
        .collect();
    LevelSetState {
        phi,
        lambda: state.lambda + state.rho * constraint,
        delta_t: state.delta_t,
        rho: state.rho,
    }
}

/// δL/δχ = −sign(Δχ)(ξ̂ − λ) on nodes of optimizable elements, 0 elsewhere.
fn sensitivity(xi_hat: &[f64], phi: &[f64], lambda: f64, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = xi_hat.len();
    let mut sens = vec![0.0; n];
    let mut exch = vec![1.0; n];
    for i in 0..n {
        if beta[i].is_nan() {
            continue;
        }
        let phase = if phi[i] >= 0.0 { Phase::Hard } else { Phase::Soft };
        let dx = exchange_function(phase, beta[i]);
        exch[i] = dx;
        sens[i] = -dx.signum() * (xi_hat[i] - lambda);
    }
    (sens, exch)
}

/// Nodal conductivity relaxation factor, NaN on nodes without optimizable elements.
fn nodal_beta(problem: &Problem) -> Vec<f64> {
    let mesh = problem.mesh();
    let mut beta = vec![f64::NAN; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        if problem.optimizable[e] {
            let b = problem.model.material.region(mesh.regions[e]).beta_kappa();
            for &n in mesh.element_nodes(e) {
                if beta[n].is_nan() {
                    beta[n] = b;
                }
            }
        }
    }
    beta
}

pub fn run_levelset(
    problem: &Problem,
    cfg: &OptimizerConfig,
    params: &LevelSetParams,
    mut on_step: impl FnMut(&StepResult) -> Result<()>,
) -> Result<Vec<StepResult>> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    if !(params.delta_t > 0.0 && params.rho > 0.0) {
        return Err(Error::Config(vec!["delta_t and rho must be positive".into()]));
    }
    let mesh = problem.mesh();
    let omega = problem.domain_volume();
    let beta = nodal_beta(problem);
    let mut opt = OptimizerState::initial(mesh);
    let mut ls = LevelSetState {
        phi: vec![1.0; mesh.n_nodes()],
        lambda: 0.0,
        delta_t: params.delta_t,
        rho: params.rho,
    };
    let mut out = Vec::new();
    for &t in &cfg.time_grid {
        let mut iters = 0;
        let mut converged = false;
        let mut xi_hat = Vec::new();
        let (mut c_now, mut frac) = problem.constraint(t, &ls.phi);
        while iters < params.max_iters {
            iters += 1;
            let eval = problem.functional.evaluate(&problem.model, &opt.chi)?;
            if !eval.cost.is_finite() {
                return Err(Error::Numerical(format!("level-set cost diverged at t={t}")));
            }
            xi_hat = regularized_pseudo_energy(problem, &mut opt, &eval);
            let (sens, exch) = sensitivity(&xi_hat, &ls.phi, ls.lambda, &beta);
            ls = levelset_step(&ls, &sens, &exch, c_now);
            if ls.phi.iter().any(|p| !p.is_finite()) {
                return Err(Error::Numerical(format!("level-set function diverged at t={t}")));
            }
            let chi_new = chi_from_psi(mesh, &problem.model.material, &DiscriminationField { psi: ls.phi.clone() }, &opt.chi);
            let dchi = chi_new.changed_volume(&opt.chi, mesh) / omega;
            opt.chi = chi_new;
            (c_now, frac) = problem.constraint(t, &ls.phi);
            if c_now.abs() <= cfg.tol_c && dchi <= cfg.tol_chi {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("level-set step t={t} hit the iteration cap {}", params.max_iters);
        }
        let eval = problem.functional.evaluate(&problem.model, &opt.chi)?;
        let r = StepResult {
            t,
            chi: opt.chi.clone(),
            psi: ls.phi.clone(),
            xi_hat,
            lambda: ls.lambda,
            cost: eval.cost,
            outer_iters: iters,
            bisect_iters: 0,
            constraint_residual: c_now,
            hard_fraction: frac.clone(),
            converged,
            theta: eval.theta,
            extras: eval.extras,
        };
        log::info!(
            "level-set t={t:.4} cost={:.6e} iters={iters} |C|={:.2e}",
            r.cost,
            c_now.abs()
        );
        on_step(&r)?;
        out.push(r);
    }
    Ok(out)
}

//! Run orchestration behind the command-line interface.

use crate::config::{Format, Method, Normalization, ProblemConfig};
use crate::error::{Error, Result};
use crate::functionals::MultiWeights;
use crate::levelset::run_levelset;
use crate::optimizer::{run_schedule, Problem, StepResult};
use crate::output::RunWriter;
use std::path::{Path, PathBuf};

pub const OUTPUT_DIR_ENV: &str = "THERMOTOP_OUTPUT_DIR";

/// Output directory from the environment override or the config.
pub fn output_dir(cfg: &ProblemConfig) -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}

fn writer(cfg: &ProblemConfig, dir: &Path, prefix: &str) -> Result<RunWriter> {
    let f = &cfg.output.formats;
    RunWriter::new(dir, prefix, f.contains(&Format::Vtk), f.contains(&Format::Csv), cfg.output.snapshot_every)
}

fn execute(problem: &Problem, cfg: &ProblemConfig, method: Method, w: &mut RunWriter) -> Result<Vec<StepResult>> {
    let oc = cfg.optimizer_config();
    let n = oc.time_grid.len();
    let mut k = 0;
    let mut sink = |r: &StepResult| {
        k += 1;
        w.write_step(problem.mesh(), r, k == n)
    };
    match method {
        Method::ClosedForm => run_schedule(problem, &oc, &mut sink),
        Method::Levelset => run_levelset(problem, &oc, &cfg.levelset_params(), &mut sink),
    }
}

fn extra(step: &StepResult, key: &str) -> Result<f64> {
    step.extras
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Numerical(format!("missing '{key}' in run result")))
}

fn cache_path(cfg: &ProblemConfig, dir: &Path) -> PathBuf {
    dir.join(cfg.functional.cache.as_deref().unwrap_or("normalization.toml"))
}

/// Utopia and maximum values of the average/variance objectives, computed by the two
/// single-objective runs when neither configured nor cached.
pub fn normalization(cfg: &ProblemConfig, dir: &Path) -> Result<Normalization> {
    if let Some(n) = cfg.functional.normalization {
        return Ok(n);
    }
    let path = cache_path(cfg, dir);
    if let Ok(text) = std::fs::read_to_string(&path) {
        let n: Normalization = toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        log::info!("using cached normalization from {}", path.display());
        return Ok(n);
    }
    let endpoint = |omega: f64, name: &str| -> Result<(f64, f64)> {
        let problem = cfg.build_problem(Some(MultiWeights::unnormalized(omega)))?;
        let mut w = writer(cfg, &dir.join(name), "")?;
        let steps = execute(&problem, cfg, cfg.optimizer.method, &mut w)?;
        let last = steps.last().expect("non-empty schedule");
        Ok((extra(last, "average")?, extra(last, "variance")?))
    };
    let (av_utopia, vr_max) = endpoint(1.0, "omega_1")?;
    let (av_max, vr_min) = endpoint(0.0, "omega_0")?;
    let n = Normalization {
        av_utopia,
        av_max,
        vr_utopia: if cfg.functional.variance_utopia_zero { 0.0 } else { vr_min },
        vr_max,
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(&path, toml::to_string(&n).expect("serializes")).map_err(|e| Error::io(&path, e))?;
    Ok(n)
}

fn weights_for(cfg: &ProblemConfig, omega: f64, dir: &Path) -> Result<MultiWeights> {
    if omega == 0.0 || omega == 1.0 {
        return Ok(MultiWeights::unnormalized(omega));
    }
    let n = normalization(cfg, dir)?;
    MultiWeights::from_bounds(omega, n.av_utopia, n.av_max, n.vr_utopia, n.vr_max)
}

pub fn run(cfg: &ProblemConfig, dir: &Path) -> Result<Vec<StepResult>> {
    let weights = match (cfg.functional.kind.as_deref(), cfg.functional.omega) {
        (Some("temp_multi"), Some(omega)) => Some(weights_for(cfg, omega, dir)?),
        _ => None,
    };
    let problem = cfg.build_problem(weights)?;
    let mut w = writer(cfg, dir, "")?;
    execute(&problem, cfg, cfg.optimizer.method, &mut w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub omega: f64,
    pub average: f64,
    pub variance: f64,
    pub cost: f64,
}

pub fn sweep_omega(cfg: &ProblemConfig, values: &[f64], dir: &Path) -> Result<Vec<ParetoPoint>> {
    if cfg.functional.kind.as_deref() != Some("temp_multi") {
        return Err(Error::Config(vec!["sweep-omega requires functional.kind = \"temp_multi\"".into()]));
    }
    if let Some(bad) = values.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::Config(vec![format!("omega = {bad} outside [0, 1]")]));
    }
    let mut points = Vec::new();
    let mut csv = String::from("omega,average,variance,cost\n");
    for &omega in values {
        let weights = weights_for(cfg, omega, dir)?;
        let problem = cfg.build_problem(Some(weights))?;
        let mut w = writer(cfg, &dir.join(format!("sweep_omega_{omega}")), "")?;
        let steps = execute(&problem, cfg, cfg.optimizer.method, &mut w)?;
        let last = steps.last().expect("non-empty schedule");
        let p = ParetoPoint {
            omega,
            average: extra(last, "average")?,
            variance: extra(last, "variance")?,
            cost: last.cost,
        };
        csv.push_str(&format!("{:e},{:e},{:e},{:e}\n", p.omega, p.average, p.variance, p.cost));
        points.push(p);
    }
    let path = dir.join("pareto.csv");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(points)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub closed_form: Vec<StepResult>,
    pub levelset: Vec<StepResult>,
}

impl Comparison {
    pub fn closed_form_iterations(&self) -> usize {
        self.closed_form.iter().map(|s| s.outer_iters).sum()
    }

    pub fn levelset_iterations(&self) -> usize {
        self.levelset.iter().map(|s| s.outer_iters).sum()
    }

    pub fn ratio(&self) -> f64 {
        self.levelset_iterations() as f64 / self.closed_form_iterations() as f64
    }
}

pub fn compare(cfg: &ProblemConfig, dir: &Path) -> Result<Comparison> {
    let weights = match (cfg.functional.kind.as_deref(), cfg.functional.omega) {
        (Some("temp_multi"), Some(omega)) => Some(weights_for(cfg, omega, dir)?),
        _ => None,
    };
    let problem = cfg.build_problem(weights)?;
    let mut w = writer(cfg, dir, "closed_form_")?;
    let closed_form = execute(&problem, cfg, Method::ClosedForm, &mut w)?;
    let mut w = writer(cfg, dir, "levelset_")?;
    let levelset = execute(&problem, cfg, Method::Levelset, &mut w)?;
    Ok(Comparison { closed_form, levelset })
}

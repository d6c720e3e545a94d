//! Configuration file schema and its resolution into solver inputs.
//!
//! The file is TOML with one section per library module. Every key has a
//! default, so an empty (or absent) file is a runnable configuration, and
//! command-line flags override file values key by key.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ipde::{
    builtin, models, CflMode, ControlProblem, FarfieldRule, Grid, JumpDiscretization, LevyKernel,
    SchemeConfig,
};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub kernels: KernelsSection,
    #[serde(default)]
    pub stepper: StepperSection,
    #[serde(default)]
    pub switching: SwitchingSection,
    #[serde(default)]
    pub harness: HarnessSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Model id: heat, jump_diffusion, two_controls, switch_demo.
    pub model: Option<String>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub dx: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSection {
    /// Kernel id (finite_exp, tempered_stable, frac_laplace_trunc) or
    /// "none" for a pure PDE.
    pub model: Option<String>,
    /// Coarse second-difference step; defaults to sqrt(dx) where used.
    pub dz: Option<f64>,
    pub n_sphere: Option<usize>,
    pub trunc_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    pub theta: Option<f64>,
    pub vartheta: Option<f64>,
    /// Step size; omit to take the CFL bound (mode auto_dt).
    pub dt: Option<f64>,
    /// auto_dt, enforce, or off.
    pub cfl_mode: Option<String>,
    pub cfl_safety: Option<f64>,
    pub eps_fp: Option<f64>,
    pub fp_tol: Option<f64>,
    pub fp_max_iter: Option<usize>,
    /// initial_datum or constant_extension.
    pub farfield: Option<String>,
    pub store_trajectory: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSection {
    /// Control indices per regime; defaults to one singleton regime per
    /// control.
    pub partition: Option<Vec<Vec<usize>>>,
    pub switch_cost: Option<f64>,
    /// Costs swept by the gap table.
    pub costs: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    /// Kernel id for the manufactured study, or "none".
    pub kernel: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub horizon: Option<f64>,
    /// Refinement levels m; the grid step is 2 pi / 2^m.
    pub levels: Option<Vec<u32>>,
    /// Guaranteed-rate row of the report; defaults from the kernel's
    /// singularity order.
    pub guarantee: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let d = SchemeConfig::default();
        let s = &self.stepper;
        let cfl_mode = match s.cfl_mode.as_deref() {
            None => d.cfl_mode,
            Some("auto_dt") => CflMode::AutoDt,
            Some("enforce") => CflMode::Enforce,
            Some("off") => CflMode::Off,
            Some(other) => bail!("unknown cfl_mode `{other}`; options: auto_dt, enforce, off"),
        };
        Ok(SchemeConfig {
            theta: s.theta.unwrap_or(d.theta),
            vartheta: s.vartheta.unwrap_or(d.vartheta),
            dt: s.dt.or(d.dt),
            eps_fp: s.eps_fp.or(d.eps_fp),
            fp_tol: s.fp_tol.unwrap_or(d.fp_tol),
            fp_max_iter: s.fp_max_iter.unwrap_or(d.fp_max_iter),
            cfl_mode,
            cfl_safety: s.cfl_safety.unwrap_or(d.cfl_safety),
            dz: self.kernels.dz.or(d.dz),
            trunc_tol: self.kernels.trunc_tol.unwrap_or(d.trunc_tol),
            n_sphere: self.kernels.n_sphere.unwrap_or(d.n_sphere),
            store_trajectory: s.store_trajectory.unwrap_or(d.store_trajectory),
        })
    }

    pub fn farfield(&self, p: &ControlProblem) -> Result<FarfieldRule> {
        match self.stepper.farfield.as_deref().unwrap_or("initial_datum") {
            "initial_datum" => Ok(FarfieldRule::initial_datum(p.initial.clone())),
            "constant_extension" => Ok(FarfieldRule::ConstantExtension),
            other => {
                bail!("unknown farfield `{other}`; options: initial_datum, constant_extension")
            }
        }
    }
}

/// "none" (or an empty string) disables the non-local part.
pub fn kernel_by_id(id: &str) -> Result<Option<LevyKernel>> {
    if id.is_empty() || id == "none" {
        return Ok(None);
    }
    Ok(Some(builtin(id)?))
}

/// Everything a solve-like subcommand needs, resolved from one config.
pub struct Resolved {
    pub model_id: String,
    pub kernel_id: Option<String>,
    pub problem: ControlProblem,
    pub grid: Arc<Grid>,
    pub jd: JumpDiscretization,
    pub cfg: SchemeConfig,
    pub far: FarfieldRule,
}

pub fn resolve(file: &FileConfig) -> Result<Resolved> {
    let model_id = file.problem.model.clone().unwrap_or_else(|| "jump_diffusion".into());
    let horizon = file.problem.horizon.unwrap_or(0.5);
    let problem = models::by_id(&model_id, horizon)?;
    let lo = file.lattice.lo.clone().unwrap_or_else(|| vec![-2.0; problem.dim_x]);
    let hi = file.lattice.hi.clone().unwrap_or_else(|| vec![2.0; problem.dim_x]);
    if lo.len() != problem.dim_x || hi.len() != problem.dim_x {
        bail!(
            "model `{model_id}` lives in dimension {}, but the lattice bounds have {}/{} entries",
            problem.dim_x,
            lo.len(),
            hi.len()
        );
    }
    let dx = file.lattice.dx.unwrap_or(0.1);
    let grid = Arc::new(Grid::new(&lo, &hi, dx)?);
    let cfg = file.scheme_config()?;
    let kernel_id = match file.kernels.model.as_deref() {
        None => Some("finite_exp".to_string()),
        Some("none") | Some("") => None,
        Some(id) => Some(id.to_string()),
    };
    let kernel = match &kernel_id {
        Some(id) => kernel_by_id(id)?,
        None => None,
    };
    let jd = match &kernel {
        Some(k) => {
            JumpDiscretization::prepare(k, &grid, cfg.dz, cfg.n_sphere, cfg.trunc_tol, None)?
        }
        None => JumpDiscretization::None,
    };
    let far = file.farfield(&problem)?;
    Ok(Resolved { model_id, kernel_id, problem, grid, jd, cfg, far })
}

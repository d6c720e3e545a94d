//! Command-line front end: solve, switching, kernels, stencil, convergence,
//! and the gated verify suite.

mod config;
mod output;
mod verify;

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use ipde::harness::{estimate_order, manufactured_run, rate_report, stability_check, ManufacturedCase};
use ipde::switching::switching_gap_study;
use ipde::{solve, solve_switching, Grid, JumpDiscretization, KernelKind, SwitchingProblem};

use config::FileConfig;

const SCHEMA_HELP: &str = "\
CONFIG FILE

TOML with one section per module; every key is optional, and flags override
file values key by key. Defaults shown below.

  [problem]
  model = \"jump_diffusion\"    # heat | jump_diffusion | two_controls | switch_demo
  horizon = 0.5

  [lattice]
  lo = [-2.0]                  # one entry per space dimension
  hi = [2.0]
  dx = 0.1

  [kernels]
  model = \"finite_exp\"        # finite_exp | tempered_stable | frac_laplace_trunc | none
  # dz = 0.31                  # coarse step for gamma >= 1; defaults to sqrt(dx)
  n_sphere = 16
  trunc_tol = 1e-10

  [stepper]
  theta = 0.0                  # implicit weight on the local part
  vartheta = 0.0               # implicit weight on the non-local part
  # dt = 0.01                  # omit to take the CFL bound
  cfl_mode = \"auto_dt\"        # auto_dt | enforce | off
  cfl_safety = 1.0
  # eps_fp = 0.4               # fixed-point damping; defaults from the operator mass
  fp_tol = 1e-12
  fp_max_iter = 2000
  farfield = \"initial_datum\"  # initial_datum | constant_extension
  store_trajectory = false

  [switching]
  # partition = [[0], [1]]     # control indices per regime; default singletons
  switch_cost = 0.1
  costs = [0.4, 0.2, 0.1, 0.05]

  [harness]
  kernel = \"tempered_stable\"  # kernel id or none
  a = 0.1                      # diffusion
  b = 0.3                      # drift
  c = 0.2                      # discount
  horizon = 0.5
  levels = [5, 6, 7]           # grid steps 2 pi / 2^m
  # guarantee = 0.1            # defaults from the kernel's singularity order

Machine output (CSV) goes to --out or stdout; summaries go to stderr.
";

#[derive(Parser)]
#[command(
    name = "ipde",
    version,
    about = "Monotone difference-quadrature solver for Bellman integro-PDEs",
    after_long_help = SCHEMA_HELP
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Time-step one model and write the final field plus step diagnostics.
    Solve(SolveArgs),
    /// Solve the switching-system relaxation and tabulate its gaps.
    Switching(SwitchingArgs),
    /// Dump a kernel's quadrature weight table as CSV.
    Kernels(KernelsArgs),
    /// Dump one operator stencil at a node as CSV.
    Stencil(StencilArgs),
    /// Run a manufactured-solution refinement study and report rates.
    Convergence(ConvergenceArgs),
    /// Run the gated property suite; exits nonzero unless every check passes.
    Verify,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (TOML; see long --help for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem model id.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Grid step.
    #[arg(long)]
    dx: Option<f64>,
    /// Kernel id, or "none" for a pure PDE.
    #[arg(long)]
    kernel: Option<String>,
    /// Coarse quadrature step for gamma >= 1 kernels.
    #[arg(long)]
    dz: Option<f64>,
    /// Implicit weight on the local part.
    #[arg(long)]
    theta: Option<f64>,
    /// Implicit weight on the non-local part.
    #[arg(long)]
    vartheta: Option<f64>,
    /// Time step; omit to take the CFL bound.
    #[arg(long)]
    dt: Option<f64>,
    /// auto_dt, enforce, or off.
    #[arg(long)]
    cfl_mode: Option<String>,
    #[arg(long)]
    cfl_safety: Option<f64>,
}

impl CommonArgs {
    fn merged(&self) -> Result<FileConfig> {
        let mut file = FileConfig::load(self.config.as_deref())?;
        let p = &mut file.problem;
        if let Some(v) = &self.model {
            p.model = Some(v.clone());
        }
        if let Some(v) = self.horizon {
            p.horizon = Some(v);
        }
        if let Some(v) = self.dx {
            file.lattice.dx = Some(v);
        }
        if let Some(v) = &self.kernel {
            file.kernels.model = Some(v.clone());
        }
        if let Some(v) = self.dz {
            file.kernels.dz = Some(v);
        }
        let s = &mut file.stepper;
        if let Some(v) = self.theta {
            s.theta = Some(v);
        }
        if let Some(v) = self.vartheta {
            s.vartheta = Some(v);
        }
        if let Some(v) = self.dt {
            s.dt = Some(v);
        }
        if let Some(v) = &self.cfl_mode {
            s.cfl_mode = Some(v.clone());
        }
        if let Some(v) = self.cfl_safety {
            s.cfl_safety = Some(v);
        }
        Ok(file)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SwitchingArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Switching cost of the reported system.
    #[arg(long)]
    switch_cost: Option<f64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KernelsArgs {
    /// Config file (TOML; see long --help for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kernel id.
    #[arg(long)]
    model: Option<String>,
    /// Grid step the table is built for.
    #[arg(long)]
    dx: Option<f64>,
    /// Tail truncation tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Coarse quadrature step for gamma >= 1 kernels.
    #[arg(long)]
    dz: Option<f64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StencilArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Operator to dump: j (non-local) or l (local).
    #[arg(long, default_value = "j")]
    op: String,
    /// Flat node index; defaults to the grid midpoint.
    #[arg(long)]
    node: Option<usize>,
    /// Control index.
    #[arg(long, default_value_t = 0)]
    control: usize,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    /// Config file (TOML; see long --help for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kernel id for the manufactured study, or "none".
    #[arg(long)]
    kernel: Option<String>,
    /// Comma-separated refinement levels m (grid step 2 pi / 2^m).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Guaranteed-rate row of the report.
    #[arg(long)]
    guarantee: Option<f64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Switching(args) => cmd_switching(args),
        Cmd::Kernels(args) => cmd_kernels(args),
        Cmd::Stencil(args) => cmd_stencil(args),
        Cmd::Convergence(args) => cmd_convergence(args),
        Cmd::Verify => {
            let checks = verify::run_all();
            verify::print_and_gate(&checks)
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let file = args.common.merged()?;
    let r = config::resolve(&file)?;
    let result = solve(&r.problem, &r.jd, r.grid.clone(), &r.cfg, &r.far, None)?;
    let stab = stability_check(&result);
    let final_sup =
        result.final_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    eprintln!(
        "model {} kernel {} nodes {} steps {} dt {:.6e} final sup {:.6e} stability excess {:.2e}",
        r.model_id,
        r.kernel_id.as_deref().unwrap_or("none"),
        r.grid.n_nodes,
        result.steps,
        result.dt,
        final_sup,
        stab.worst_excess,
    );
    output::emit(args.out.as_deref(), &output::solve_csv(&result, &r.problem.controls))
}

fn cmd_switching(args: SwitchingArgs) -> Result<()> {
    let mut file = args.common.merged()?;
    if let Some(v) = args.switch_cost {
        file.switching.switch_cost = Some(v);
    }
    let r = config::resolve(&file)?;
    let n = r.problem.n_controls();
    let partition = file
        .switching
        .partition
        .clone()
        .unwrap_or_else(|| (0..n).map(|k| vec![k]).collect());
    let cost = file.switching.switch_cost.unwrap_or(0.1);
    let costs = file
        .switching
        .costs
        .clone()
        .unwrap_or_else(|| vec![0.4, 0.2, 0.1, 0.05]);

    // The scalar solve fixes the step size, so the regimes line up with it
    // step for step (regime operators run over control subsets, hence their
    // CFL cap is no tighter than the scalar one).
    let scalar = solve(&r.problem, &r.jd, r.grid.clone(), &r.cfg, &r.far, None)?;
    let mut cfg_fixed = r.cfg.clone();
    cfg_fixed.dt = Some(scalar.dt);
    let sp = SwitchingProblem {
        base: r.problem.clone(),
        partition: partition.clone(),
        switch_cost: cost,
    };
    let res = solve_switching(&sp, &r.jd, r.grid.clone(), &cfg_fixed, &r.far)?;
    let study = switching_gap_study(
        &r.problem,
        &partition,
        &r.jd,
        r.grid.clone(),
        &r.cfg,
        &r.far,
        &costs,
    )?;
    let fitted = study
        .fitted_exponent
        .map(|e| format!("{e:.3}"))
        .unwrap_or_else(|| "n/a".into());
    let one_sided_worst =
        study.one_sided_min.iter().copied().fold(f64::INFINITY, f64::min);
    eprintln!(
        "model {} regimes {} cost {} spread {:.6e} one-sided min {:.2e} gap exponent {}",
        r.model_id,
        partition.len(),
        cost,
        res.max_spread(),
        one_sided_worst,
        fitted,
    );
    output::emit(
        args.out.as_deref(),
        &output::switching_csv(
            &res,
            &scalar.final_values,
            &study.costs,
            &study.gaps,
            &study.one_sided_min,
        ),
    )
}

fn cmd_kernels(args: KernelsArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let id = args
        .model
        .or(file.kernels.model.clone())
        .unwrap_or_else(|| "finite_exp".into());
    let Some(kern) = config::kernel_by_id(&id)? else {
        bail!("the kernels dump needs a kernel id, not `none`");
    };
    let dx = args.dx.or(file.lattice.dx).unwrap_or(0.1);
    let tol = args.tol.or(file.kernels.trunc_tol).unwrap_or(1e-10);
    let dz = args.dz.or(file.kernels.dz);
    let n_sphere = file.kernels.n_sphere.unwrap_or(16);
    // The grid only hands prepare its step and dimension; four cells keep
    // any step an exact divisor of the span.
    let lo = vec![0.0; kern.dim];
    let hi = vec![4.0 * dx; kern.dim];
    let grid = Arc::new(Grid::new(&lo, &hi, dx)?);
    let jd = JumpDiscretization::prepare(&kern, &grid, dz, n_sphere, tol, None)?;
    match jd.table() {
        Some(t) => eprintln!(
            "kernel {id} dx {dx} step {:.6e} entries {}+{} tail bound {:.2e} center mass {:.6e}",
            t.step,
            t.plus.len(),
            t.minus.len(),
            t.tail_bound,
            t.center_mass(),
        ),
        None => eprintln!("kernel {id} dx {dx} (finite measure, quadrature rule)"),
    }
    output::emit(args.out.as_deref(), &output::kernel_csv(&jd, dx)?)
}

fn cmd_stencil(args: StencilArgs) -> Result<()> {
    let file = args.common.merged()?;
    let r = config::resolve(&file)?;
    let node = args.node.unwrap_or(r.grid.n_nodes / 2);
    if node >= r.grid.n_nodes {
        bail!("node {node} is outside the grid (0..{})", r.grid.n_nodes);
    }
    if args.control >= r.problem.n_controls() {
        bail!(
            "control {} is out of range; model `{}` has {} controls",
            args.control,
            r.model_id,
            r.problem.n_controls()
        );
    }
    let st = match args.op.as_str() {
        "l" => ipde::local::build_l(&r.problem, args.control, 0.0, node, &r.grid)?,
        "j" => {
            let x = r.grid.point(node);
            let jf = r.problem.jump[args.control].clone();
            let eta = move |z: &[f64]| jf(0.0, &x, z);
            let drift = r.jd.drift_vector(&eta, r.problem.dim_x, r.cfg.trunc_tol)?;
            r.jd.stencil(&r.grid, node, &eta, &drift)?
        }
        other => bail!("unknown operator `{other}`; options: j, l"),
    };
    eprintln!(
        "op {} node {} at {:?}: {} grid targets, {} far targets, diag mass {:.6e}",
        args.op,
        node,
        r.grid.point(node),
        st.nodes.len(),
        st.far.len(),
        st.diag_mass,
    );
    output::emit(args.out.as_deref(), &output::stencil_csv(&r.grid, &st))
}

fn cmd_convergence(args: ConvergenceArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let h = &file.harness;
    let id = args
        .kernel
        .clone()
        .or(h.kernel.clone())
        .unwrap_or_else(|| "tempered_stable".into());
    let kernel = match config::kernel_by_id(&id)? {
        Some(k) => k,
        None => ipde::LevyKernel::zero(1),
    };
    let guarantee = args.guarantee.or(h.guarantee).unwrap_or(match kernel.kind {
        KernelKind::SingularGammaGe1 => 0.1,
        _ => 0.2,
    });
    let case = ManufacturedCase {
        kernel,
        a: h.a.unwrap_or(0.1),
        b: h.b.unwrap_or(0.3),
        c: h.c.unwrap_or(0.2),
        horizon: h.horizon.unwrap_or(0.5),
    };
    let levels = args.levels.clone().or(h.levels.clone()).unwrap_or_else(|| vec![5, 6, 7]);
    let cfg = file.scheme_config()?;
    let records = manufactured_run(&case, &levels, &cfg)?;
    let hs: Vec<f64> = records.iter().map(|rec| rec.dx).collect();
    let errors: Vec<f64> = records.iter().map(|rec| rec.sup_error).collect();
    let fitted = estimate_order(&hs, &errors)
        .map(|fit| format!("{:.3}", fit.slope))
        .unwrap_or_else(|_| "n/a".into());
    eprintln!(
        "kernel {id} levels {levels:?} fitted order {fitted} guarantee {guarantee}",
    );
    output::emit(args.out.as_deref(), &rate_report(&records, Some(guarantee))?)
}

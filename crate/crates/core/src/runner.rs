//! Config-driven pipeline: solve, recover the bridge, optionally simulate,
//! and write CSV, SVG and JSON artifacts.
//!
//! | file | columns / content |
//! |------|-------------------|
//! | `density_t<t>.csv` | `node,weight,rho_opt` |
//! | `control_t<t>.csv` | `node,omega` |
//! | `convergence.csv` | `iteration,dH_residual` |
//! | `solution.svg` | waterfall of `ρ(·,t)` |
//! | `report.json` | [`Report`] |
//!
//! Numbers are written with 17 significant digits and LF line endings, so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::bridge::{is_monotone_within, stays_on_shorter_arc, uniform_times, BridgeSolution, MASS_DRIFT_WARN};
use crate::config::{DensitySpec, ExperimentConfig};
use crate::error::Result;
use crate::group::GroupId;
use crate::sde::{simulate_bridge, SimulationOptions};
use crate::sinkhorn::{marginal_residuals, solve, ConvergenceReport};

/// Version of the [`Report`] layout.
pub const REPORT_SCHEMA: u32 = 1;

/// Process exit code for a converged run.
pub const EXIT_CONVERGED: i32 = 0;
/// Process exit code for configuration or runtime errors.
pub const EXIT_ERROR: i32 = 1;
/// Process exit code when Sinkhorn hit `max_iter`.
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvEntry {
    pub t: f64,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub n_particles: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub bins: usize,
    pub tv: Vec<TvEntry>,
    pub max_orthogonality_defect: f64,
}

/// Contents of `report.json`. Keys appear in declaration order; fields that
/// do not apply are `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub group: GroupId,
    pub grid_size: usize,
    pub sigma: f64,
    pub truncation: usize,
    pub converged: bool,
    pub iterations: usize,
    pub terminal_residual: f64,
    pub contraction_estimate: f64,
    pub marginal_residual_rho0: f64,
    pub marginal_residual_rho1: f64,
    pub max_mass_drift: Option<f64>,
    pub fokker_planck_residual_mid: Option<f64>,
    pub time_samples: Vec<f64>,
    pub argmax_trajectory: Option<Vec<f64>>,
    /// SO(2) with von Mises endpoints only.
    pub shorter_arc: Option<bool>,
    /// SO(3) only: argmax moves monotonically within one grid cell.
    pub monotone_argmax: Option<bool>,
    pub simulation: Option<SimulationSummary>,
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub out_dir: PathBuf,
    pub convergence: ConvergenceReport,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.converged {
            EXIT_CONVERGED
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Tag used in per-time file names, e.g. `0.2500`.
pub fn time_tag(t: f64) -> String {
    format!("{t:.4}")
}

pub fn density_csv(nodes: &[f64], weights: &[f64], rho: &[f64]) -> String {
    let mut s = String::from("node,weight,rho_opt\n");
    for ((x, w), r) in nodes.iter().zip(weights).zip(rho) {
        let _ = writeln!(s, "{},{},{}", num(*x), num(*w), num(*r));
    }
    s
}

pub fn control_csv(nodes: &[f64], omega: &[f64]) -> String {
    let mut s = String::from("node,omega\n");
    for (x, w) in nodes.iter().zip(omega) {
        let _ = writeln!(s, "{},{}", num(*x), num(*w));
    }
    s
}

pub fn convergence_csv(trace: &[f64]) -> String {
    let mut s = String::from("iteration,dH_residual\n");
    for (k, d) in trace.iter().enumerate() {
        let _ = writeln!(s, "{},{}", k + 1, num(*d));
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn arc_endpoints(cfg: &ExperimentConfig) -> Option<(f64, f64)> {
    match (&cfg.endpoints.initial, &cfg.endpoints.terminal) {
        (DensitySpec::VonMises { location: a, .. }, DensitySpec::VonMises { location: b, .. }) => Some((*a, *b)),
        _ => None,
    }
}

/// Runs the full pipeline and writes artifacts into `cfg.output.directory`.
///
/// A non-converged solve still writes `convergence.csv` and `report.json`;
/// bridge-derived fields are then `null`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let out_dir = PathBuf::from(&cfg.output.directory);
    fs::create_dir_all(&out_dir)?;

    let problem = Arc::new(cfg.problem()?);
    let (potentials, conv) = solve(&problem, cfg.solver_options())?;
    let (res0, res1) = marginal_residuals(&problem, &potentials)?;
    write(&out_dir, "convergence.csv", &convergence_csv(&conv.dh_trace))?;

    let times = uniform_times(cfg.output.time_samples);
    let mut report = Report {
        schema: REPORT_SCHEMA,
        group: cfg.problem.group,
        grid_size: cfg.problem.grid_size,
        sigma: cfg.problem.sigma,
        truncation: problem.semigroup().kernel().truncation(),
        converged: conv.converged,
        iterations: conv.iterations,
        terminal_residual: conv.terminal_residual,
        contraction_estimate: conv.contraction_estimate,
        marginal_residual_rho0: res0,
        marginal_residual_rho1: res1,
        max_mass_drift: None,
        fokker_planck_residual_mid: None,
        time_samples: times.clone(),
        argmax_trajectory: None,
        shorter_arc: None,
        monotone_argmax: None,
        simulation: None,
    };

    if conv.converged {
        let sol = BridgeSolution::new(problem.clone(), potentials, &times)?;
        let grid = problem.grid();
        for s in sol.slices() {
            if s.mass_drift > MASS_DRIFT_WARN {
                eprintln!("warning: mass drift {:.3e} at t = {}", s.mass_drift, s.t);
            }
            let tag = time_tag(s.t);
            write(
                &out_dir,
                &format!("density_t{tag}.csv"),
                &density_csv(grid.nodes(), grid.weights(), s.rho.values()),
            )?;
            write(&out_dir, &format!("control_t{tag}.csv"), &control_csv(grid.nodes(), &s.control))?;
        }
        let curves: Vec<(f64, &[f64])> = sol.slices().iter().map(|s| (s.t, s.rho.values())).collect();
        write(
            &out_dir,
            "solution.svg",
            &crate::plot::waterfall_svg(grid.group(), grid.nodes(), &curves),
        )?;

        let traj = sol.argmax_trajectory();
        let h = grid.spacing();
        report.max_mass_drift = Some(sol.max_mass_drift());
        report.fokker_planck_residual_mid = Some(sol.fokker_planck_residual(0.5, 0.01)?);
        match grid.group() {
            GroupId::So2 => {
                report.shorter_arc = arc_endpoints(cfg).map(|(a, b)| stays_on_shorter_arc(&traj, a, b, h));
            }
            GroupId::So3 => report.monotone_argmax = Some(is_monotone_within(&traj, h)),
        }
        report.argmax_trajectory = Some(traj);

        if let Some(sim) = &cfg.simulate {
            let opts = SimulationOptions {
                n_particles: sim.n_particles,
                n_steps: sim.n_steps,
                seed: sim.seed,
                ..Default::default()
            };
            let rep = simulate_bridge(&sol, &opts)?;
            report.simulation = Some(SimulationSummary {
                n_particles: rep.n_particles,
                n_steps: rep.n_steps,
                seed: rep.seed,
                bins: opts.bins,
                tv: rep.checkpoints.iter().map(|c| TvEntry { t: c.t, tv: c.tv }).collect(),
                max_orthogonality_defect: rep.max_orthogonality_defect,
            });
        }
    }

    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write(&out_dir, "report.json", &json)?;
    Ok(RunOutcome {
        report,
        out_dir,
        convergence: conv,
    })
}

//! Experiment configuration, stored as TOML with one table per stage.
//!
//! ```toml
//! [problem]
//! group = "so2"
//! grid_size = 512
//! sigma = 1.0
//!
//! [endpoints.initial]
//! family = "von_mises"
//! kappa = 40.0
//! location = 0.5235987755982988
//! ```
//!
//! Every omitted field takes its default; unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{make_grid, von_mises_so2, von_mises_so3_class, DensityGrid, GroupGrid, GroupId};
use crate::heat::{HeatKernel, HeatKernelSo2, HeatKernelSo3, DEFAULT_L_MAX};
use crate::sinkhorn::{BridgeProblem, SolverOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub group: GroupId,
    pub grid_size: usize,
    pub sigma: f64,
    /// Highest circle frequency kept (SO(2)); defaults to `grid_size / 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    /// Highest representation degree kept (SO(3)); defaults to 60.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<usize>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            group: GroupId::So2,
            grid_size: 512,
            sigma: 1.0,
            m_max: None,
            l_max: None,
        }
    }
}

/// Endpoint density family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `∝ exp(κ cos(θ − location))` in the grid coordinate.
    VonMises { kappa: f64, location: f64 },
    Uniform,
}

impl DensitySpec {
    pub fn build(&self, grid: &Arc<GroupGrid>) -> Result<DensityGrid> {
        match (self, grid.group()) {
            (DensitySpec::Uniform, _) => Ok(DensityGrid::uniform(grid.clone())),
            (DensitySpec::VonMises { kappa, location }, GroupId::So2) => von_mises_so2(grid, *kappa, *location),
            (DensitySpec::VonMises { kappa, location }, GroupId::So3) => {
                von_mises_so3_class(grid, *kappa, *location)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointsConfig {
    pub initial: DensitySpec,
    pub terminal: DensitySpec,
}

impl Default for EndpointsConfig {
    fn default() -> Self {
        Self {
            initial: DensitySpec::VonMises {
                kappa: 40.0,
                location: PI / 6.0,
            },
            terminal: DensitySpec::VonMises {
                kappa: 40.0,
                location: 11.0 * PI / 6.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub time_samples: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            time_samples: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_particles: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_particles: 100_000,
            n_steps: 200,
            seed: 0,
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub endpoints: EndpointsConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    /// Monte Carlo stage; skipped when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
}

fn bad(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {reason}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Field-level checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.grid_size < crate::group::MIN_NODES {
            return Err(bad("problem.grid_size", format!("must be at least {}", crate::group::MIN_NODES)));
        }
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Err(bad("problem.sigma", "must be positive"));
        }
        match p.group {
            GroupId::So2 if p.l_max.is_some() => return Err(bad("problem.l_max", "only applies to so3")),
            GroupId::So3 if p.m_max.is_some() => return Err(bad("problem.m_max", "only applies to so2")),
            _ => {}
        }
        if p.m_max == Some(0) || p.l_max == Some(0) {
            return Err(bad("problem", "kernel truncation must be positive"));
        }
        for (name, spec) in [
            ("endpoints.initial", &self.endpoints.initial),
            ("endpoints.terminal", &self.endpoints.terminal),
        ] {
            if let DensitySpec::VonMises { kappa, location } = spec {
                if !(*kappa > 0.0 && kappa.is_finite()) {
                    return Err(bad(&format!("{name}.kappa"), "must be positive"));
                }
                let ok = match p.group {
                    GroupId::So2 => location.is_finite(),
                    GroupId::So3 => *location > 0.0 && *location <= PI,
                };
                if !ok {
                    return Err(bad(&format!("{name}.location"), format!("{location} is out of range")));
                }
            }
        }
        if !(self.solver.tol > 0.0) {
            return Err(bad("solver.tol", "must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(bad("solver.max_iter", "must be positive"));
        }
        if self.output.time_samples < 2 {
            return Err(bad("output.time_samples", "need at least 2"));
        }
        if self.output.directory.is_empty() {
            return Err(bad("output.directory", "must not be empty"));
        }
        if let Some(s) = &self.simulate {
            if s.n_particles < crate::sde::MIN_PARTICLES {
                return Err(bad(
                    "simulate.n_particles",
                    format!("need at least {}", crate::sde::MIN_PARTICLES),
                ));
            }
            if s.n_steps == 0 {
                return Err(bad("simulate.n_steps", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<HeatKernel> {
        let p = &self.problem;
        Ok(match p.group {
            GroupId::So2 => HeatKernel::So2(HeatKernelSo2::new(p.sigma, p.m_max.unwrap_or(p.grid_size / 2))?),
            GroupId::So3 => HeatKernel::So3(HeatKernelSo3::new(p.sigma, p.l_max.unwrap_or(DEFAULT_L_MAX))?),
        })
    }

    pub fn problem(&self) -> Result<BridgeProblem> {
        let grid = make_grid(self.problem.group, self.problem.grid_size)?;
        let rho0 = self.endpoints.initial.build(&grid)?;
        let rho1 = self.endpoints.terminal.build(&grid)?;
        BridgeProblem::new(rho0, rho1, self.kernel()?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }
}

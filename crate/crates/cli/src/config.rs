//! Experiment configuration file.
//!
//! Unknown keys are rejected at every level; validation errors name the
//! offending field path.

use std::path::{Path, PathBuf};

use evpinn_core::lm::{Damping, LmConfig};
use evpinn_core::pipeline::{FlowMapConfig, SolverConfig};
use evpinn_core::residuals::Weighting;
use evpinn_core::sampling::SamplePlan;
use evpinn_core::{ExtensionKind, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub lm: LmSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub level_set: LevelSetSection,
    #[serde(default)]
    pub ntk: NtkSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtensionName {
    Abs,
    Indicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingName {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampingName {
    Marquardt,
    Levenberg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelSetMode {
    Analytic,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityName {
    /// The benchmark's interface velocity.
    Benchmark,
    /// No motion; the learned map must be the identity.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub hidden: Vec<usize>,
    pub extension: Option<ExtensionName>,
    /// `[N_interior, N_boundary, N_initial, N_interface]`.
    pub counts: [usize; 4],
    pub interface_times: usize,
    pub weighting: WeightingName,
    pub block_weights: [f64; 5],
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            hidden: vec![32, 32, 32],
            extension: None,
            counts: [2000, 400, 300, 100],
            interface_times: 10,
            weighting: WeightingName::Mean,
            block_weights: [1.0; 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmSection {
    pub max_iters: usize,
    pub loss_stop: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub floor: f64,
    pub damping: DampingName,
}

impl Default for LmSection {
    fn default() -> Self {
        let d = LmConfig::default();
        LmSection {
            max_iters: d.max_iters,
            loss_stop: d.loss_stop,
            lambda_init: d.lambda_init,
            lambda_up: d.lambda_up,
            lambda_down: d.lambda_down,
            floor: d.floor,
            damping: DampingName::Marquardt,
        }
    }
}

impl LmSection {
    pub fn to_config(&self) -> LmConfig {
        LmConfig {
            max_iters: self.max_iters,
            loss_stop: self.loss_stop,
            lambda_init: self.lambda_init,
            lambda_up: self.lambda_up,
            lambda_down: self.lambda_down,
            floor: self.floor,
            damping: match self.damping {
                DampingName::Marquardt => Damping::Marquardt,
                DampingName::Levenberg => Damping::Levenberg,
            },
            ..LmConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestSection {
    /// Nodes per spatial axis.
    pub resolution: usize,
    /// Time slices, endpoints included.
    pub times: usize,
    /// Write the per-point `grid.csv` dump.
    pub export_grid: bool,
}

impl Default for TestSection {
    fn default() -> Self {
        TestSection { resolution: 101, times: 11, export_grid: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelSetSection {
    pub mode: LevelSetMode,
    pub velocity: VelocityName,
    pub hidden: Vec<usize>,
    pub delta: f64,
    pub grid_h: f64,
    pub time_steps: usize,
    pub n_interface: usize,
    pub n_anchor: usize,
    pub rk4_steps: usize,
    /// LM iterations per refit.
    pub max_iters: usize,
    pub loss_stop: f64,
    /// Learned level set to reuse in neural mode instead of fitting one.
    pub checkpoint: Option<PathBuf>,
}

impl Default for LevelSetSection {
    fn default() -> Self {
        let d = FlowMapConfig::new(vec![64, 64, 64, 64]);
        LevelSetSection {
            mode: LevelSetMode::Analytic,
            velocity: VelocityName::Benchmark,
            hidden: d.hidden,
            delta: d.delta,
            grid_h: d.grid_h,
            time_steps: d.time_steps,
            n_interface: d.n_interface,
            n_anchor: d.n_anchor,
            rk4_steps: d.rk4_steps,
            max_iters: d.lm.max_iters,
            loss_stop: d.lm.loss_stop,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NtkSection {
    pub width: usize,
    pub counts: [usize; 4],
    pub interface_times: usize,
}

impl Default for NtkSection {
    fn default() -> Self {
        NtkSection { width: 512, counts: [1000, 400, 200, 400], interface_times: 10 }
    }
}

fn field(path: &str, msg: impl Into<String>) -> CliError {
    CliError::Config(format!("{path}: {}", msg.into()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner().message().trim()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        ProblemSpec::by_name(&self.benchmark).map_err(|e| field("benchmark", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let problem = self.problem()?;
        let s = &self.solver;
        if s.hidden.is_empty() || s.hidden.contains(&0) {
            return Err(field("solver.hidden", "needs at least one positive width"));
        }
        if s.counts.contains(&0) {
            return Err(field("solver.counts", "all counts must be at least 1"));
        }
        if s.interface_times == 0 {
            return Err(field("solver.interface_times", "must be at least 1"));
        }
        if s.block_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(field("solver.block_weights", "weights must be finite and nonnegative"));
        }
        if s.extension == Some(ExtensionName::Abs) && problem.jump_kind == evpinn_core::problem::JumpKind::Nonzero {
            return Err(field("solver.extension", "the absolute level set cannot represent a value jump"));
        }
        self.lm.to_config().validate().map_err(|e| field("lm", e.to_string()))?;
        if self.test.resolution < 2 || self.test.times == 0 {
            return Err(field("test", "resolution must be at least 2 and times at least 1"));
        }
        let l = &self.level_set;
        if l.hidden.is_empty() || l.hidden.contains(&0) {
            return Err(field("level_set.hidden", "needs at least one positive width"));
        }
        if !(l.delta > 0.0) || !(l.grid_h > 0.0) {
            return Err(field("level_set", "delta and grid_h must be positive"));
        }
        if l.time_steps == 0 || l.n_interface == 0 || l.n_anchor == 0 || l.rk4_steps == 0 || l.max_iters == 0 {
            return Err(field("level_set", "counts must be positive"));
        }
        if let Some(p) = &l.checkpoint {
            if !p.is_file() {
                return Err(field("level_set.checkpoint", format!("{} does not exist", p.display())));
            }
        }
        if l.mode == LevelSetMode::Analytic && problem.rigid_motion().is_none() {
            return Err(field("level_set.mode", format!("{} has no analytic interface", problem.benchmark)));
        }
        if self.ntk.width == 0 || self.ntk.counts.contains(&0) || self.ntk.interface_times == 0 {
            return Err(field("ntk", "width and counts must be positive"));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        let mut plan = SamplePlan::new(s.counts, self.seed);
        plan.interface_times = s.interface_times;
        let mut cfg = SolverConfig::new(s.hidden.clone(), plan);
        cfg.extension = s.extension.map(|e| match e {
            ExtensionName::Abs => ExtensionKind::AbsLevelSet,
            ExtensionName::Indicator => ExtensionKind::Indicator,
        });
        cfg.lm = self.lm.to_config();
        cfg.weighting = match s.weighting {
            WeightingName::Mean => Weighting::Mean,
            WeightingName::Sum => Weighting::Sum,
        };
        cfg.block_weights = s.block_weights;
        cfg.test_resolution = self.test.resolution;
        cfg.test_times = self.test.times;
        cfg
    }

    pub fn flow_map_config(&self) -> FlowMapConfig {
        let l = &self.level_set;
        let mut cfg = FlowMapConfig::new(l.hidden.clone());
        cfg.delta = l.delta;
        cfg.grid_h = l.grid_h;
        cfg.time_steps = l.time_steps;
        cfg.n_interface = l.n_interface;
        cfg.n_anchor = l.n_anchor;
        cfg.rk4_steps = l.rk4_steps;
        cfg.lm.max_iters = l.max_iters;
        cfg.lm.loss_stop = l.loss_stop;
        cfg.seed = self.seed;
        cfg
    }

    pub fn ntk_plan(&self) -> SamplePlan {
        let mut plan = SamplePlan::new(self.ntk.counts, self.seed);
        plan.interface_times = self.ntk.interface_times;
        plan
    }
}

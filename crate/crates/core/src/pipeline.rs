//! End-to-end drivers: solver training and learned level-set construction.

use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::extension::ExtensionKind;
use crate::geometry::adaptive::{adaptive_time_stepping, MonitoredMap, StepEvent};
use crate::geometry::flowmap::{fit_flow_map, grid_nodes, CompositeLevelSet, FlowMap};
use crate::geometry::levelset::{InitialLevelSet, LevelSet};
use crate::geometry::rk4::TrajectoryTable;
use crate::lm::{self, LmConfig, LmTrace, StepRecord};
use crate::metrics::{error_norms, flowmap_error, ErrorReport};
use crate::model::Solution;
use crate::net::Mlp;
use crate::problem::{DomainShape, ProblemSpec};
use crate::residuals::{ModelKind, PinnProblem, ResidualOptions, ResidualSystem, Weighting};
use crate::rng::{Stream, STREAM_ANCHOR, STREAM_INTERFACE};
use crate::sampling::{equispaced_times, test_grid, InterfacePlacement, SamplePlan, TrainingSets};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Defaults to the kind matching the jump data.
    pub extension: Option<ExtensionKind>,
    pub plan: SamplePlan,
    pub lm: LmConfig,
    pub weighting: Weighting,
    pub block_weights: [f64; 5],
    pub test_resolution: usize,
    pub test_times: usize,
    /// RK4 steps per unit time when interface samples are advected.
    pub advect_steps_per_unit: usize,
}

impl SolverConfig {
    pub fn new(hidden: Vec<usize>, plan: SamplePlan) -> Self {
        SolverConfig {
            hidden,
            extension: None,
            plan,
            lm: LmConfig::default(),
            weighting: Weighting::Mean,
            block_weights: [1.0; 5],
            test_resolution: 101,
            test_times: 11,
            advect_steps_per_unit: 200,
        }
    }

    pub fn dims(&self, problem: &ProblemSpec) -> Vec<usize> {
        let mut dims = vec![problem.dim + 2];
        dims.extend(&self.hidden);
        dims.push(problem.outputs());
        dims
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub solution: Solution,
    pub trace: LmTrace,
    pub report: ErrorReport,
    pub rows: usize,
    pub excluded_interior: usize,
    pub runtime_s: f64,
}

/// Trains an extended-input network on `problem` with interface `ls` and
/// evaluates it on the test grid.
pub fn train_solver(
    problem: &ProblemSpec,
    ls: &LevelSet,
    cfg: &SolverConfig,
    observer: impl FnMut(&StepRecord),
) -> Result<TrainOutcome> {
    let start = Instant::now();
    problem.validate()?;
    let kind = cfg.extension.unwrap_or_else(|| problem.default_extension());
    let velocity = |x: &[f64], t: f64| problem.velocity(x, t);
    let motion = problem.rigid_motion();
    let placement = match (&motion, ls.is_analytic()) {
        (Some(m), true) => InterfacePlacement::Rigid(m),
        _ => InterfacePlacement::Advect { velocity: &velocity, steps_per_unit: cfg.advect_steps_per_unit },
    };
    let sets = TrainingSets::generate(&problem.domain, problem.t_end, &cfg.plan, ls, &placement)?;
    let opts = ResidualOptions {
        model: ModelKind::Extended(kind),
        weighting: cfg.weighting,
        block_weights: cfg.block_weights,
    };
    let system = ResidualSystem::build(problem, ls, &sets, &opts)?;
    let net = Mlp::init(&cfg.dims(problem), cfg.plan.seed)?;
    let lsq = PinnProblem::new(&system, &net)?;
    let trace = lm::train_with(&lsq, net.params(), &cfg.lm, observer)?;
    if !trace.loss.is_finite() {
        return Err(Error::Diverged { iter: trace.records.len(), loss: trace.loss });
    }
    let mut net = net;
    net.set_params(&trace.params);
    let solution = Solution::Extended { net, kind };
    let report = evaluate(&solution, problem, ls, cfg.test_resolution, cfg.test_times)?;
    Ok(TrainOutcome {
        solution,
        trace,
        report,
        rows: system.row_count(),
        excluded_interior: system.excluded_interior(),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Error norms on the equispaced test grid.
pub fn evaluate(solution: &Solution, problem: &ProblemSpec, ls: &LevelSet, resolution: usize, times: usize) -> Result<ErrorReport> {
    let grid = test_grid(&problem.domain, problem.t_end, resolution, times)?;
    error_norms(solution, problem, ls, &grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMapConfig {
    /// Hidden layer widths of every sub-map.
    pub hidden: Vec<usize>,
    /// Jacobian determinant threshold.
    pub delta: f64,
    /// Spacing of the determinant monitor grid.
    pub grid_h: f64,
    /// Number of time steps of the fitting grid on `[0, t_end]`.
    pub time_steps: usize,
    /// Interface points whose trajectories are matched.
    pub n_interface: usize,
    /// Domain points pinned to the identity at each interval start.
    pub n_anchor: usize,
    /// RK4 steps over `[0, t_end]` for the reference trajectories.
    pub rk4_steps: usize,
    /// Optimizer settings for each refit.
    pub lm: LmConfig,
    pub seed: u64,
}

impl FlowMapConfig {
    pub fn new(hidden: Vec<usize>) -> Self {
        FlowMapConfig {
            hidden,
            delta: 0.2,
            grid_h: 0.05,
            time_steps: 20,
            n_interface: 100,
            n_anchor: 200,
            rk4_steps: 2000,
            lm: LmConfig { max_iters: 200, loss_stop: 1e-12, ..LmConfig::default() },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_steps < 1 || self.n_interface < 1 || self.n_anchor < 1 || self.rk4_steps < 1 {
            return Err(Error::InvalidArgument("flow-map counts must be positive".into()));
        }
        if !(self.delta > 0.0) || !(self.grid_h > 0.0) {
            return Err(Error::InvalidArgument("delta and grid_h must be positive".into()));
        }
        self.lm.validate()
    }
}

/// A sub-map paired with the nodes its determinant is monitored on.
#[derive(Debug, Clone)]
struct MonitoredFlow {
    map: FlowMap,
    nodes: Arc<Vec<Vec<f64>>>,
}

impl MonitoredMap for MonitoredFlow {
    fn min_jacobian_det(&self, t: f64) -> Result<f64> {
        self.map.min_jacobian_det(t, &self.nodes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSummary {
    pub t_start: f64,
    pub t_end: f64,
    pub fit_loss: f64,
    pub min_det: f64,
}

#[derive(Debug, Clone)]
pub struct LevelSetOutcome {
    pub level_set: CompositeLevelSet,
    pub intervals: Vec<IntervalSummary>,
    pub events: Vec<StepEvent>,
    /// Flow-map error on held-out interface trajectories.
    pub flowmap_error: f64,
    pub runtime_s: f64,
}

/// Learns the inverse flow of `velocity` by adaptive time stepping and
/// composes the sub-maps with `initial`.
pub fn build_level_set(
    initial: &InitialLevelSet,
    domain: &DomainShape,
    t_end: f64,
    velocity: &(dyn Fn(&[f64], f64) -> Vec<f64> + Sync),
    cfg: &FlowMapConfig,
) -> Result<LevelSetOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let d = domain.dim();
    if initial.dim() != d {
        return Err(Error::InvalidArgument("initial level set and domain differ in dimension".into()));
    }
    let times = equispaced_times(t_end, cfg.time_steps + 1);
    let mut rng = Stream::new(cfg.seed, STREAM_INTERFACE);
    let fit_points: Vec<Vec<f64>> = (0..cfg.n_interface).map(|_| initial.sample_zero_set(&mut rng)).collect();
    let held_out: Vec<Vec<f64>> = (0..cfg.n_interface).map(|_| initial.sample_zero_set(&mut rng)).collect();
    let table = TrajectoryTable::build(velocity, fit_points, times.clone(), t_end, cfg.rk4_steps)?;
    let check = TrajectoryTable::build(velocity, held_out, times.clone(), t_end, cfg.rk4_steps)?;
    let anchors = crate::sampling::sample_interior(domain, t_end, cfg.n_anchor, cfg.seed ^ STREAM_ANCHOR)
        .into_iter()
        .map(|p| p.x)
        .collect::<Vec<_>>();
    let nodes = Arc::new(grid_nodes(domain, cfg.grid_h)?);
    let mut dims = vec![d + 1];
    dims.extend(&cfg.hidden);
    dims.push(d);
    let mut fresh = 0u64;
    let partition = adaptive_time_stepping(
        &times,
        cfg.delta,
        |t0| {
            fresh += 1;
            // zero output layer: every sub-map starts as the identity
            let mut net = Mlp::init(&dims, cfg.seed.wrapping_add(fresh))?;
            let n_out = d * (dims[dims.len() - 2] + 1);
            let total = net.param_count();
            net.params_mut()[total - n_out..].iter_mut().for_each(|v| *v = 0.0);
            Ok(MonitoredFlow { map: FlowMap::new(net, t0, t_end)?, nodes: nodes.clone() })
        },
        |m, window| Ok(fit_flow_map(&mut m.map, &table, &anchors, window.to_vec(), &cfg.lm)?.loss),
    )?;
    let intervals: Vec<IntervalSummary> = partition
        .intervals
        .iter()
        .map(|iv| IntervalSummary { t_start: iv.t_start, t_end: iv.t_end, fit_loss: iv.fit_loss, min_det: iv.min_det })
        .collect();
    let maps: Vec<FlowMap> = partition
        .intervals
        .into_iter()
        .map(|iv| FlowMap { t_start: iv.t_start, t_end: iv.t_end, ..iv.map.map })
        .collect();
    let level_set = CompositeLevelSet::new(initial.clone(), maps)?;
    let flowmap_error = flowmap_error(|x, t| level_set.pull_back(x, t), &check)?;
    Ok(LevelSetOutcome {
        level_set,
        intervals,
        events: partition.events,
        flowmap_error,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

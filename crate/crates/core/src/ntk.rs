//! Empirical neural tangent kernels of the residual operators and the
//! trace-based convergence-rate metrics.
//!
//! For an operator with per-sample parameter gradients stacked in `G`, the
//! kernel is `K = G G^T`. With `M` operators of sizes `N_i`,
//! `c_total = tr(K) / N` for the kernel of all stacked rows and
//! `c_partial = sum_i tr(K_i) / N_i`.

use std::fmt::Write as _;

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{row_gram, symmetric_eigenvalues};
use crate::net::Mlp;
use crate::problem::ProblemSpec;
use crate::residuals::{Block, ModelKind, ResidualOptions, ResidualSystem, VANILLA_FD_EPS};
use crate::sampling::{InterfacePlacement, SamplePlan, TrainingSets};

/// `G G^T` of a row-major `m x p` gradient matrix.
pub fn gram(g: &[f64], m: usize, p: usize) -> Result<Mat<f64>> {
    if g.len() != m * p {
        return Err(Error::LengthMismatch { expected: m * p, got: g.len() });
    }
    Ok(row_gram(g, m, p))
}

pub fn trace(k: &Mat<f64>) -> f64 {
    (0..k.nrows()).map(|i| k[(i, i)]).sum()
}

/// Whether descending eigenvalues are nonnegative up to `1e-8` of the
/// largest.
pub fn is_numerically_psd(eigenvalues: &[f64]) -> bool {
    let max = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    eigenvalues.iter().all(|&l| l >= -1e-8 * max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceMetrics {
    pub c_total: f64,
    pub c_partial: f64,
}

/// Metrics from `(trace(K_i), N_i)` per operator. The stacked kernel has
/// the operator kernels on its diagonal, so its trace is the sum of theirs.
pub fn convergence_metrics(operators: &[(f64, usize)]) -> Result<ConvergenceMetrics> {
    if operators.is_empty() || operators.iter().any(|&(_, n)| n == 0) {
        return Err(Error::InvalidArgument("operator counts must be positive".into()));
    }
    let n: usize = operators.iter().map(|&(_, n)| n).sum();
    let total: f64 = operators.iter().map(|&(t, _)| t).sum();
    Ok(ConvergenceMetrics {
        c_total: total / n as f64,
        c_partial: operators.iter().map(|&(t, n)| t / n as f64).sum(),
    })
}

#[derive(Debug, Clone)]
pub struct OperatorKernel {
    pub block: Block,
    pub size: usize,
    pub kernel: Mat<f64>,
    pub trace: f64,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NtkReport {
    pub label: String,
    pub dims: Vec<usize>,
    pub param_count: usize,
    pub operators: Vec<OperatorKernel>,
    /// Descending spectrum of the kernel of all stacked rows.
    pub full_eigenvalues: Vec<f64>,
    pub full_trace: f64,
    pub metrics: ConvergenceMetrics,
}

impl NtkReport {
    /// Kernels of every residual operator of `system` at `net`, from the
    /// unweighted residual Jacobian.
    pub fn compute(label: &str, system: &ResidualSystem, net: &Mlp) -> Result<Self> {
        let (_, jac) = system.raw_residuals_and_jacobian(net)?;
        let p = net.param_count();
        let m = system.row_count();
        let mut operators = Vec::new();
        for (block, range) in system.block_ranges() {
            let g = &jac[range.start * p..range.end * p];
            let kernel = gram(g, range.len(), p)?;
            let eigenvalues = symmetric_eigenvalues(&kernel)?;
            operators.push(OperatorKernel { block: *block, size: range.len(), trace: trace(&kernel), kernel, eigenvalues });
        }
        let full = gram(&jac, m, p)?;
        let full_trace = trace(&full);
        let full_eigenvalues = symmetric_eigenvalues(&full)?;
        let metrics = convergence_metrics(&operators.iter().map(|o| (o.trace, o.size)).collect::<Vec<_>>())?;
        Ok(NtkReport {
            label: label.to_string(),
            dims: net.dims().to_vec(),
            param_count: p,
            operators,
            full_eigenvalues,
            full_trace,
            metrics,
        })
    }

    /// Rows `label,operator,rank,eigenvalue`; the stacked kernel is `full`.
    pub fn spectrum_csv_rows(&self, out: &mut String) {
        for op in &self.operators {
            for (r, l) in op.eigenvalues.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{l:.17e}", self.label, op.block.name(), r + 1);
            }
        }
        for (r, l) in self.full_eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{},full,{},{l:.17e}", self.label, r + 1);
        }
    }

    /// `key = value` lines.
    pub fn metrics_text(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "{}.dims = {}", self.label, dims.join(","));
        let _ = writeln!(s, "{}.param_count = {}", self.label, self.param_count);
        for op in &self.operators {
            let _ = writeln!(s, "{}.{}.size = {}", self.label, op.block.name(), op.size);
            let _ = writeln!(s, "{}.{}.trace = {:.17e}", self.label, op.block.name(), op.trace);
        }
        let _ = writeln!(s, "{}.c_total = {:.17e}", self.label, self.metrics.c_total);
        let _ = writeln!(s, "{}.c_partial = {:.17e}", self.label, self.metrics.c_partial);
        s
    }
}

/// Extended and plain networks at initialization on the same samples.
#[derive(Debug, Clone)]
pub struct NtkComparison {
    pub extended: NtkReport,
    pub plain: NtkReport,
}

impl NtkComparison {
    pub fn ratio(&self) -> f64 {
        self.extended.metrics.c_total / self.plain.metrics.c_total
    }

    pub fn spectrum_csv(&self) -> String {
        let mut s = String::from("model,operator,rank,eigenvalue\n");
        self.extended.spectrum_csv_rows(&mut s);
        self.plain.spectrum_csv_rows(&mut s);
        s
    }

    pub fn metrics_text(&self) -> String {
        let mut s = self.extended.metrics_text();
        s.push_str(&self.plain.metrics_text());
        let _ = writeln!(s, "c_total_ratio = {:.17e}", self.ratio());
        s
    }
}

/// Kernels of a one-hidden-layer network of `width` neurons with and
/// without the extended input, both initialized from `plan.seed`.
pub fn ntk_compare(problem: &ProblemSpec, width: usize, plan: &SamplePlan) -> Result<NtkComparison> {
    let ls = problem
        .analytic_level_set()
        .ok_or_else(|| Error::InvalidArgument("kernel comparison needs an analytic interface".into()))?;
    let motion = problem.rigid_motion().expect("analytic level sets come from rigid motions");
    let sets = TrainingSets::generate(&problem.domain, problem.t_end, plan, &ls, &InterfacePlacement::Rigid(&motion))?;
    let d = problem.dim;
    let ext_kind = ModelKind::Extended(problem.default_extension());
    let ext_sys = ResidualSystem::build(problem, &ls, &sets, &ResidualOptions::new(ext_kind))?;
    let ext_net = Mlp::init(&[d + 2, width, problem.outputs()], plan.seed)?;
    let plain_sys = ResidualSystem::build(problem, &ls, &sets, &ResidualOptions::new(ModelKind::Plain { fd_eps: VANILLA_FD_EPS }))?;
    let plain_net = Mlp::init(&[d + 1, width, problem.outputs()], plan.seed)?;
    Ok(NtkComparison {
        extended: NtkReport::compute("xi", &ext_sys, &ext_net)?,
        plain: NtkReport::compute("vanilla", &plain_sys, &plain_net)?,
    })
}

//! Levenberg-Marquardt over stacked least-squares residuals.
//!
//! The loss is `sum_i r_i^2`. Each step solves
//! `(J^T J + lambda D + floor I) delta = -J^T r`, where `D = diag(J^T J)`
//! (Marquardt damping) or `I` (Levenberg damping). When the residual count is
//! smaller than the parameter count the same step is computed in residual
//! space through the push-through identity
//! `(J^T J + L)^{-1} J^T = L^{-1} J^T (I + J L^{-1} J^T)^{-1}` with the
//! diagonal `L = lambda max(D, floor)`, so the `m x m` Gram matrix is formed
//! once per Jacobian and only refactored when `lambda` changes.

use std::fmt::Write as _;

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg;

/// A residual vector `r(theta)` with a row-major Jacobian.
pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn residuals(&self, params: &[f64]) -> Result<Vec<f64>>;
    /// Residuals and the `m x n_params` Jacobian, row-major.
    fn residuals_and_jacobian(&self, params: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damping {
    Marquardt,
    Levenberg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub max_iters: usize,
    pub loss_stop: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub floor: f64,
    pub damping: Damping,
    /// Damping escalations tolerated when a factorization fails.
    pub max_factor_retries: usize,
    /// Above this damping the trainer stops: no step can reduce the loss.
    pub lambda_max: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iters: 5000,
            loss_stop: 1e-13,
            lambda_init: 1e-3,
            lambda_up: 2.0,
            lambda_down: 1.0 / 3.0,
            floor: 1e-12,
            damping: Damping::Marquardt,
            max_factor_retries: 30,
            lambda_max: 1e16,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1");
        }
        if !(self.lambda_init > 0.0) {
            return bad("lambda_init must be positive");
        }
        if !(self.lambda_up > 1.0) {
            return bad("lambda_up must exceed 1");
        }
        if !(self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return bad("lambda_down must lie in (0, 1)");
        }
        if !(self.floor >= 0.0) || !(self.loss_stop >= 0.0) {
            return bad("floor and loss_stop must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub iter: usize,
    /// Loss after the step (the trial loss when rejected).
    pub loss: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    LossStop,
    MaxIters,
    LambdaOverflow,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::LossStop => "loss_stop",
            StopReason::MaxIters => "max_iters",
            StopReason::LambdaOverflow => "lambda_overflow",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmTrace {
    pub initial_loss: f64,
    pub records: Vec<StepRecord>,
    pub params: Vec<f64>,
    pub loss: f64,
    pub stop: StopReason,
}

impl LmTrace {
    pub fn accepted_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter(|r| r.accepted).map(|r| r.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loss,lambda,step_norm,accepted\n");
        for r in &self.records {
            writeln!(out, "{},{:.16e},{:.16e},{:.16e},{}", r.iter, r.loss, r.lambda, r.step_norm, r.accepted as u8)
                .unwrap();
        }
        out
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Factorization cache for one Jacobian.
enum Linearization {
    /// `J^T J` and `J^T r`.
    Normal { a: Mat<f64>, g: Vec<f64>, diag: Vec<f64> },
    /// `J D^{-1} J^T` with the scaling `D`, plus `J` and `r`.
    PushThrough { s: Mat<f64>, d: Vec<f64>, j: Vec<f64>, r: Vec<f64>, m: usize, p: usize },
}

impl Linearization {
    fn new(j: Vec<f64>, r: Vec<f64>, p: usize, cfg: &LmConfig) -> Self {
        let m = r.len();
        if m >= p {
            let a = linalg::normal_matrix(&j, m, p);
            let g = linalg::transpose_times(&j, m, p, &r);
            let diag = (0..p).map(|i| a[(i, i)]).collect();
            Linearization::Normal { a, g, diag }
        } else {
            let d: Vec<f64> = match cfg.damping {
                Damping::Marquardt => (0..p)
                    .map(|c| (0..m).map(|i| j[i * p + c] * j[i * p + c]).sum::<f64>().max(cfg.floor).max(f64::MIN_POSITIVE))
                    .collect(),
                Damping::Levenberg => vec![1.0; p],
            };
            let mut scaled = j.clone();
            for row in scaled.chunks_exact_mut(p) {
                for (v, dc) in row.iter_mut().zip(&d) {
                    *v /= dc.sqrt();
                }
            }
            let s = linalg::row_gram(&scaled, m, p);
            Linearization::PushThrough { s, d, j, r, m, p }
        }
    }

    /// Step for damping `lambda`; `None` when the factorization fails.
    fn step(&self, lambda: f64, cfg: &LmConfig) -> Option<Vec<f64>> {
        match self {
            Linearization::Normal { a, g, diag } => {
                let mut sys = a.clone();
                for (i, &di) in diag.iter().enumerate() {
                    let scale = match cfg.damping {
                        Damping::Marquardt => di,
                        Damping::Levenberg => 1.0,
                    };
                    sys[(i, i)] += lambda * scale + cfg.floor;
                }
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                linalg::solve_spd(&sys, &neg)
            }
            Linearization::PushThrough { s, d, j, r, m, p } => {
                // lambda = 0 degenerates to L = floor I
                let (mut sys, diag_l): (Mat<f64>, Vec<f64>) = if lambda > 0.0 {
                    (s.clone(), d.iter().map(|dc| lambda * dc).collect())
                } else {
                    let fl = cfg.floor.max(f64::MIN_POSITIVE);
                    (linalg::row_gram(j, *m, *p), vec![fl; *p])
                };
                let inv = if lambda > 0.0 { 1.0 / lambda } else { 1.0 / diag_l[0] };
                for c in 0..*m {
                    for i in 0..*m {
                        sys[(i, c)] *= inv;
                    }
                    sys[(c, c)] += 1.0;
                }
                let y = linalg::solve_spd(&sys, r)?;
                let jt_y = linalg::transpose_times(j, *m, *p, &y);
                Some(jt_y.iter().zip(&diag_l).map(|(v, l)| -v / l).collect())
            }
        }
    }
}

/// One damped Gauss-Newton step at `params` (no acceptance test).
pub fn damped_step(problem: &dyn LeastSquares, params: &[f64], lambda: f64, cfg: &LmConfig) -> Result<Vec<f64>> {
    let (r, j) = problem.residuals_and_jacobian(params)?;
    let lin = Linearization::new(j, r, problem.n_params(), cfg);
    lin.step(lambda, cfg).ok_or(Error::Factorization { attempts: 0 })
}

/// Runs Levenberg-Marquardt from `params` until the loss target or the
/// iteration budget is reached.
pub fn train(problem: &dyn LeastSquares, params: &[f64], cfg: &LmConfig) -> Result<LmTrace> {
    train_with(problem, params, cfg, |_| {})
}

/// As [`train`], calling `observer` after every step record.
pub fn train_with(
    problem: &dyn LeastSquares,
    params: &[f64],
    cfg: &LmConfig,
    mut observer: impl FnMut(&StepRecord),
) -> Result<LmTrace> {
    cfg.validate()?;
    let p = problem.n_params();
    if params.len() != p {
        return Err(Error::LengthMismatch { expected: p, got: params.len() });
    }
    let mut theta = params.to_vec();
    let (r, j) = problem.residuals_and_jacobian(&theta)?;
    let mut loss = sum_sq(&r);
    if !loss.is_finite() {
        return Err(Error::Diverged { iter: 0, loss });
    }
    let initial_loss = loss;
    let mut lin = Linearization::new(j, r, p, cfg);
    let mut lambda = cfg.lambda_init;
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIters;

    for iter in 1..=cfg.max_iters {
        if loss <= cfg.loss_stop {
            stop = StopReason::LossStop;
            break;
        }
        let mut attempts = 0;
        let delta = loop {
            if let Some(d) = lin.step(lambda, cfg) {
                break d;
            }
            attempts += 1;
            if attempts > cfg.max_factor_retries {
                return Err(Error::Factorization { attempts });
            }
            lambda = (lambda * cfg.lambda_up).max(cfg.floor.max(1e-12));
        };
        let step_norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let trial: Vec<f64> = theta.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let trial_loss = match problem.residuals(&trial) {
            Ok(r) => sum_sq(&r),
            Err(Error::NonFinite { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        let accepted = trial_loss.is_finite() && trial_loss < loss;
        let rec = StepRecord { iter, loss: trial_loss, lambda, step_norm, accepted };
        records.push(rec);
        observer(&rec);
        if accepted {
            theta = trial;
            let (r, j) = problem.residuals_and_jacobian(&theta)?;
            loss = sum_sq(&r);
            if !loss.is_finite() {
                return Err(Error::Diverged { iter, loss });
            }
            lin = Linearization::new(j, r, p, cfg);
            lambda *= cfg.lambda_down;
        } else {
            lambda = (lambda * cfg.lambda_up).max(1e-12);
            if lambda > cfg.lambda_max {
                stop = StopReason::LambdaOverflow;
                break;
            }
        }
        if iter == cfg.max_iters && loss <= cfg.loss_stop {
            stop = StopReason::LossStop;
        }
    }
    Ok(LmTrace { initial_loss, records, params: theta, loss, stop })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        a: Vec<f64>,
        b: Vec<f64>,
        m: usize,
        p: usize,
    }

    impl LeastSquares for Linear {
        fn n_params(&self) -> usize {
            self.p
        }
        fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(linalg::times(&self.a, self.m, self.p, x).iter().zip(&self.b).map(|(u, v)| u - v).collect())
        }
        fn residuals_and_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((self.residuals(x)?, self.a.clone()))
        }
    }

    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn n_params(&self) -> usize {
            2
        }
        fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![x[0] - 1.0, 10.0 * (x[1] - x[0] * x[0])])
        }
        fn residuals_and_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((self.residuals(x)?, vec![1.0, 0.0, -20.0 * x[0], 10.0]))
        }
    }

    fn pinned(lambda: f64) -> LmConfig {
        LmConfig { lambda_init: lambda.max(1e-300), ..LmConfig::default() }
    }

    #[test]
    fn scalar_linear_residual_in_one_step() {
        let prob = Linear { a: vec![1.0], b: vec![3.0], m: 1, p: 1 };
        let step = damped_step(&prob, &[0.0], 0.0, &LmConfig::default()).unwrap();
        assert!((step[0] - 3.0).abs() < 1e-11);
        let trace = train(&prob, &[0.0], &pinned(1e-300)).unwrap();
        assert!(trace.records[0].accepted);
        assert!((trace.params[0] - 3.0).abs() < 1e-11);
    }

    #[test]
    fn full_rank_linear_system_in_one_step_both_paths() {
        let a = vec![2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.0, 1.0, 4.0, 1.0, 1.0, 1.0];
        let tall = Linear { a: a.clone(), b: vec![1.0, 2.0, 3.0, 4.0], m: 4, p: 3 };
        let step = damped_step(&tall, &[0.0; 3], 0.0, &LmConfig::default()).unwrap();
        let normal = linalg::normal_matrix(&a, 4, 3);
        let rhs = linalg::transpose_times(&a, 4, 3, &[1.0, 2.0, 3.0, 4.0]);
        let exact = linalg::solve_spd(&normal, &rhs).unwrap();
        for (s, e) in step.iter().zip(&exact) {
            assert!((s - e).abs() < 1e-10);
        }
        // wide system: minimum-norm direction via the push-through path
        let wide = Linear { a: a[..6].to_vec(), b: vec![1.0, 2.0], m: 2, p: 3 };
        let step = damped_step(&wide, &[0.0; 3], 0.0, &LmConfig::default()).unwrap();
        let r = wide.residuals(&step).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-9), "{r:?}");
    }

    #[test]
    fn rosenbrock_converges() {
        let trace = train(&Rosenbrock, &[-1.2, 1.0], &LmConfig { max_iters: 200, ..LmConfig::default() }).unwrap();
        assert!(trace.loss <= 1e-12, "loss {}", trace.loss);
        assert!(trace.records.len() <= 200);
        let acc: Vec<f64> = trace.accepted_losses().collect();
        assert!(acc.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn large_damping_follows_the_gradient() {
        let cfg = LmConfig { damping: Damping::Levenberg, ..LmConfig::default() };
        let x = [-1.2, 1.0];
        let step = damped_step(&Rosenbrock, &x, 1e12, &cfg).unwrap();
        let (r, j) = Rosenbrock.residuals_and_jacobian(&x).unwrap();
        let g = linalg::transpose_times(&j, 2, 2, &r);
        let cos = -(step[0] * g[0] + step[1] * g[1])
            / ((step[0].hypot(step[1])) * g[0].hypot(g[1]));
        assert!(cos.clamp(-1.0, 1.0).acos() <= 1e-6);
    }

    #[test]
    fn stops_immediately_at_zero_residual_and_honours_max_iters() {
        let prob = Linear { a: vec![1.0], b: vec![0.0], m: 1, p: 1 };
        let trace = train(&prob, &[0.0], &LmConfig::default()).unwrap();
        assert_eq!(trace.stop, StopReason::LossStop);
        assert!(trace.records.is_empty());
        let trace = train(&Rosenbrock, &[-1.2, 1.0], &LmConfig { max_iters: 1, ..LmConfig::default() }).unwrap();
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn traces_are_reproducible() {
        let a = train(&Rosenbrock, &[-1.2, 1.0], &LmConfig::default()).unwrap();
        let b = train(&Rosenbrock, &[-1.2, 1.0], &LmConfig::default()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = LmConfig { lambda_up: 0.5, ..LmConfig::default() };
        assert!(train(&Rosenbrock, &[0.0, 0.0], &bad).is_err());
    }
}

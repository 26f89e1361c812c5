//! Subcommand implementations. Each writes its artifacts into the output
//! directory and records their names for the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use evpinn_core::geometry::{hausdorff_distance, zero_crossings_2d, StepEvent};
use evpinn_core::lm::StepRecord;
use evpinn_core::metrics::export_grid;
use evpinn_core::ntk::ntk_compare;
use evpinn_core::pipeline::{build_level_set, evaluate, train_solver, LevelSetOutcome};
use evpinn_core::sampling::{equispaced_times, test_grid};
use evpinn_core::{CompositeLevelSet, ErrorReport, LevelSet, ProblemSpec, Solution};

use crate::config::{ExperimentConfig, LevelSetMode, VelocityName};
use crate::error::CliError;

/// Resolution of the zero-set extraction grid per axis.
const ZERO_SET_RESOLUTION: usize = 201;
/// Times at which zero sets are exported, endpoints included.
const ZERO_SET_TIMES: usize = 5;

pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub problem: ProblemSpec,
    pub out: PathBuf,
    pub quiet: bool,
    pub written: Vec<String>,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a ExperimentConfig, out: PathBuf, quiet: bool) -> Result<Self, CliError> {
        let problem = config.problem()?;
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        Ok(Context { config, problem, out, quiet, written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.out.join(name)
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn velocity(&self) -> impl Fn(&[f64], f64) -> Vec<f64> + Sync + '_ {
        let zero = self.config.level_set.velocity == VelocityName::Zero;
        let d = self.problem.dim;
        move |x: &[f64], t: f64| if zero { vec![0.0; d] } else { self.problem.velocity(x, t) }
    }

    /// The interface used by training and evaluation: analytic, loaded from
    /// a checkpoint, or learned now (its artifacts are then written too).
    fn level_set(&mut self) -> Result<LevelSet, CliError> {
        let cfg = &self.config.level_set;
        match (cfg.mode, &cfg.checkpoint) {
            (LevelSetMode::Analytic, _) => self.problem.analytic_level_set().ok_or_else(|| {
                CliError::Config(format!("level_set.mode: {} has no analytic interface", self.problem.benchmark))
            }),
            (LevelSetMode::Neural, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let c = CompositeLevelSet::from_checkpoint_str(self.problem.initial_level_set(), &text)?;
                Ok(LevelSet::Neural(c))
            }
            (LevelSetMode::Neural, None) => {
                let outcome = self.fit_level_set()?;
                Ok(LevelSet::Neural(outcome.level_set))
            }
        }
    }

    fn fit_level_set(&mut self) -> Result<LevelSetOutcome, CliError> {
        self.log("fitting level set");
        let outcome = {
            let velocity = self.velocity();
            build_level_set(
                &self.problem.initial_level_set(),
                &self.problem.domain,
                self.problem.t_end,
                &velocity,
                &self.config.flow_map_config(),
            )?
        };
        self.write_level_set(&outcome)?;
        Ok(outcome)
    }

    fn write_level_set(&mut self, outcome: &LevelSetOutcome) -> Result<(), CliError> {
        self.write("levelset.ckpt", &outcome.level_set.to_checkpoint_string())?;
        let mut iv = String::from("t_start,t_end,fit_loss,min_det\n");
        for s in &outcome.intervals {
            let _ = writeln!(iv, "{},{},{:.16e},{:.16e}", s.t_start, s.t_end, s.fit_loss, s.min_det);
        }
        self.write("intervals.csv", &iv)?;
        let mut ev = String::from("event,t,min_det,loss,rejected_t\n");
        for e in &outcome.events {
            match e {
                StepEvent::Extended { t, min_det, loss } => {
                    let _ = writeln!(ev, "extended,{t},{min_det:.16e},{loss:.16e},");
                }
                StepEvent::Split { at, rejected_t, min_det } => {
                    let _ = writeln!(ev, "split,{at},{min_det:.16e},,{rejected_t}");
                }
            }
        }
        self.write("events.csv", &ev)?;

        let mut metrics = String::new();
        let _ = writeln!(metrics, "flowmap_error {:.16e}", outcome.flowmap_error);
        let _ = writeln!(metrics, "intervals {}", outcome.intervals.len());
        let _ = writeln!(metrics, "runtime_s {:.6}", outcome.runtime_s);
        if self.problem.dim == 2 {
            let learned = LevelSet::Neural(outcome.level_set.clone());
            let reference =
                self.problem.analytic_level_set().filter(|_| self.config.level_set.velocity == VelocityName::Benchmark);
            let (lo, hi) = self.problem.domain.bounding_box();
            let (lo, hi) = ([lo[0], lo[1]], [hi[0], hi[1]]);
            let mut zs = String::from("t,x0,x1\n");
            for t in equispaced_times(self.problem.t_end, ZERO_SET_TIMES) {
                let pts = zero_crossings_2d(&learned, t, lo, hi, ZERO_SET_RESOLUTION)?;
                for p in &pts {
                    let _ = writeln!(zs, "{t},{:.16e},{:.16e}", p[0], p[1]);
                }
                if let Some(r) = &reference {
                    let exact = zero_crossings_2d(r, t, lo, hi, ZERO_SET_RESOLUTION)?;
                    let h = hausdorff_distance(&pts, &exact)?;
                    let _ = writeln!(metrics, "hausdorff_t[{t}] {h:.16e}");
                }
            }
            self.write("zeroset.csv", &zs)?;
        }
        self.write("levelset_metrics.txt", &metrics)?;
        self.log(&format!(
            "level set: {} interval(s), flow-map error {:.3e}",
            outcome.intervals.len(),
            outcome.flowmap_error
        ));
        Ok(())
    }

    fn write_report(&mut self, solution: &Solution, ls: &LevelSet, report: &ErrorReport, runtime_s: f64) -> Result<(), CliError> {
        let name = self.problem.benchmark.name();
        self.write("report.csv", &report.to_csv(name, self.config.seed, runtime_s))?;
        if self.config.test.export_grid {
            let grid = test_grid(&self.problem.domain, self.problem.t_end, self.config.test.resolution, self.config.test.times)?;
            let path = self.path("grid.csv");
            export_grid(solution, &self.problem, ls, &grid, &path)?;
        }
        self.log(&format!("{name}: e0 = {:.4e}, e1 = {:.4e}", report.e0, report.e1));
        Ok(())
    }
}

pub fn train(ctx: &mut Context) -> Result<(), CliError> {
    let ls = ctx.level_set()?;
    let cfg = ctx.config.solver_config();
    let quiet = ctx.quiet;
    let observer = |r: &StepRecord| {
        if !quiet && r.iter % 10 == 0 {
            eprintln!("iter {:>5}  loss {:.4e}  lambda {:.2e}", r.iter, r.loss, r.lambda);
        }
    };
    let outcome = train_solver(&ctx.problem, &ls, &cfg, observer)?;
    ctx.write("trace.csv", &outcome.trace.to_csv())?;
    let ckpt = ctx.path("model.ckpt");
    outcome.solution.save(&ckpt)?;
    ctx.write_report(&outcome.solution, &ls, &outcome.report, outcome.runtime_s)?;
    ctx.log(&format!(
        "stop: {} after {} iteration(s), loss {:.4e}",
        outcome.trace.stop.as_str(),
        outcome.trace.records.len(),
        outcome.trace.loss
    ));
    Ok(())
}

pub fn levelset(ctx: &mut Context) -> Result<(), CliError> {
    ctx.fit_level_set()?;
    Ok(())
}

pub fn ntk(ctx: &mut Context) -> Result<(), CliError> {
    let cmp = ntk_compare(&ctx.problem, ctx.config.ntk.width, &ctx.config.ntk_plan())?;
    ctx.write("spectrum.csv", &cmp.spectrum_csv())?;
    ctx.write("metrics.txt", &cmp.metrics_text())?;
    ctx.log(&format!("c_total ratio (extended / plain) = {:.4}", cmp.ratio()));
    Ok(())
}

pub fn eval(ctx: &mut Context, checkpoint: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(checkpoint).map_err(|e| CliError::io(checkpoint, e))?;
    let solution = Solution::from_checkpoint_str(&text)?;
    let ls = ctx.level_set()?;
    let start = std::time::Instant::now();
    let report = evaluate(&solution, &ctx.problem, &ls, ctx.config.test.resolution, ctx.config.test.times)?;
    ctx.write_report(&solution, &ls, &report, start.elapsed().as_secs_f64())
}

//! Error norms, flow-map error and CSV exports.
//!
//! `e0` is the root mean square of the solution error over the test points
//! and `e1` adds the squared spatial gradient error. For Oseen problems both
//! cover the velocity components; the pressure is reported separately.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::levelset::LevelSet;
use crate::geometry::rk4::TrajectoryTable;
use crate::model::Solution;
use crate::problem::{EquationKind, ProblemSpec};
use crate::sampling::SpaceTimePoint;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeError {
    pub t: f64,
    pub e0: f64,
    pub e1: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub e0: f64,
    pub e1: f64,
    /// Pressure `(e0, e1)` for Oseen problems.
    pub pressure: Option<(f64, f64)>,
    pub per_time: Vec<TimeError>,
    pub points: usize,
    /// Test points dropped because they lie on the interface.
    pub excluded: usize,
}

/// Squared errors of one point: `(value, gradient, pressure value,
/// pressure gradient)`.
type PointSq = (f64, f64, f64, f64);

fn point_errors(solution: &Solution, problem: &ProblemSpec, ls: &LevelSet, p: &SpaceTimePoint) -> Result<Option<PointSq>> {
    let Some(ev) = solution.eval(problem, ls, &p.x, p.t)? else {
        return Ok(None);
    };
    let ex = problem.exact(&p.x, p.t, ev.region);
    let d = problem.dim;
    let sq = |o: usize| -> (f64, f64) {
        let v = (ev.value[o] - ex.value[o]).powi(2);
        let g = (0..d).map(|i| (ev.grad[o * d + i] - ex.grad[o * d + i]).powi(2)).sum();
        (v, g)
    };
    let mut out = (0.0, 0.0, 0.0, 0.0);
    for o in 0..problem.primary_outputs() {
        let (v, g) = sq(o);
        out.0 += v;
        out.1 += g;
    }
    if problem.kind == EquationKind::Oseen {
        let (v, g) = sq(d);
        out.2 = v;
        out.3 = g;
    }
    Ok(Some(out))
}

fn rms(sum: f64, n: usize) -> f64 {
    (sum / n as f64).sqrt()
}

/// Error norms over `points`, also split by distinct time (in order of
/// first appearance).
pub fn error_norms(solution: &Solution, problem: &ProblemSpec, ls: &LevelSet, points: &[SpaceTimePoint]) -> Result<ErrorReport> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let errs: Vec<Option<PointSq>> =
        points.par_iter().map(|p| point_errors(solution, problem, ls, p)).collect::<Result<_>>()?;
    let mut total = (0.0, 0.0, 0.0, 0.0);
    let mut n = 0;
    let mut per_time: Vec<(f64, f64, f64, usize)> = Vec::new();
    for (p, e) in points.iter().zip(&errs) {
        let Some(e) = e else { continue };
        total.0 += e.0;
        total.1 += e.1;
        total.2 += e.2;
        total.3 += e.3;
        n += 1;
        match per_time.iter_mut().find(|s| s.0 == p.t) {
            Some(s) => {
                s.1 += e.0;
                s.2 += e.1;
                s.3 += 1;
            }
            None => per_time.push((p.t, e.0, e.1, 1)),
        }
    }
    if n == 0 {
        return Err(Error::EmptySet);
    }
    Ok(ErrorReport {
        e0: rms(total.0, n),
        e1: rms(total.0 + total.1, n),
        pressure: (problem.kind == EquationKind::Oseen).then(|| (rms(total.2, n), rms(total.2 + total.3, n))),
        per_time: per_time
            .into_iter()
            .map(|(t, v, g, c)| TimeError { t, e0: rms(v, c), e1: rms(v + g, c), points: c })
            .collect(),
        points: n,
        excluded: points.len() - n,
    })
}

/// Mean over trajectory times and points of `|X(x_i(t_j), t_j) - x_i(0)|^2`.
pub fn flowmap_error<F>(pull_back: F, table: &TrajectoryTable) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    if table.times.is_empty() || table.initial.is_empty() {
        return Err(Error::EmptySet);
    }
    let sums: Vec<f64> = table
        .times
        .par_iter()
        .zip(&table.positions)
        .map(|(&t, row)| {
            let mut s = 0.0;
            for (x, x0) in row.iter().zip(&table.initial) {
                let y = pull_back(x, t)?;
                s += y.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(sums.iter().sum::<f64>() / (table.times.len() * table.initial.len()) as f64)
}

/// Grid dump with columns `x..., t, u_pred..., u_exact..., abs_err...`;
/// interface points are written with `NaN` predictions.
pub fn grid_csv(solution: &Solution, problem: &ProblemSpec, ls: &LevelSet, points: &[SpaceTimePoint]) -> Result<String> {
    let outs = problem.outputs();
    let rows: Vec<String> = points
        .par_iter()
        .map(|p| {
            let mut line = String::new();
            for v in &p.x {
                let _ = write!(line, "{v:.16e},");
            }
            let _ = write!(line, "{:.16e}", p.t);
            let pred = solution.eval(problem, ls, &p.x, p.t)?;
            let (pv, ev): (Vec<f64>, Vec<f64>) = match &pred {
                Some(e) => (e.value.clone(), problem.exact(&p.x, p.t, e.region).value),
                None => (vec![f64::NAN; outs], vec![f64::NAN; outs]),
            };
            for v in pv.iter().chain(&ev) {
                let _ = write!(line, ",{v:.16e}");
            }
            for (a, b) in pv.iter().zip(&ev) {
                let _ = write!(line, ",{:.16e}", (a - b).abs());
            }
            line.push('\n');
            Ok(line)
        })
        .collect::<Result<_>>()?;
    let mut s = String::new();
    for k in 0..problem.dim {
        let _ = write!(s, "x{k},");
    }
    s.push('t');
    for tag in ["u_pred", "u_exact", "abs_err"] {
        for o in 0..outs {
            if outs == 1 {
                let _ = write!(s, ",{tag}");
            } else {
                let _ = write!(s, ",{tag}{o}");
            }
        }
    }
    s.push('\n');
    s.extend(rows);
    Ok(s)
}

pub fn export_grid(solution: &Solution, problem: &ProblemSpec, ls: &LevelSet, points: &[SpaceTimePoint], path: &Path) -> Result<()> {
    std::fs::write(path, grid_csv(solution, problem, ls, points)?)?;
    Ok(())
}

impl ErrorReport {
    /// `key,value` rows; times appear as `e0_t[<t>]`.
    pub fn to_csv(&self, benchmark: &str, seed: u64, runtime_s: f64) -> String {
        let mut s = String::from("key,value\n");
        let _ = writeln!(s, "benchmark,{benchmark}");
        let _ = writeln!(s, "seed,{seed}");
        let _ = writeln!(s, "e0,{:.16e}", self.e0);
        let _ = writeln!(s, "e1,{:.16e}", self.e1);
        if let Some((p0, p1)) = self.pressure {
            let _ = writeln!(s, "pressure_e0,{p0:.16e}");
            let _ = writeln!(s, "pressure_e1,{p1:.16e}");
        }
        let _ = writeln!(s, "points,{}", self.points);
        let _ = writeln!(s, "excluded,{}", self.excluded);
        let _ = writeln!(s, "runtime_s,{runtime_s:.6}");
        for te in &self.per_time {
            let _ = writeln!(s, "e0_t[{}],{:.16e}", te.t, te.e0);
            let _ = writeln!(s, "e1_t[{}],{:.16e}", te.t, te.e1);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::ExtensionKind;
    use crate::net::{param_count, Activation, Mlp};
    use crate::problem::Benchmark;
    use crate::sampling::test_grid;

    fn ex1() -> (ProblemSpec, LevelSet, Vec<SpaceTimePoint>) {
        let p = ProblemSpec::benchmark(Benchmark::Ex1);
        let ls = p.analytic_level_set().unwrap();
        let grid = test_grid(&p.domain, 1.0, 21, 3).unwrap();
        (p, ls, grid)
    }

    #[test]
    fn exact_solution_has_zero_error() {
        let (p, ls, grid) = ex1();
        let r = error_norms(&Solution::Exact(Benchmark::Ex1), &p, &ls, &grid).unwrap();
        assert_eq!((r.e0, r.e1), (0.0, 0.0));
        assert_eq!(r.per_time.len(), 3);
        assert_eq!(r.points + r.excluded, grid.len());
        assert!(matches!(error_norms(&Solution::Exact(Benchmark::Ex1), &p, &ls, &[]), Err(Error::EmptySet)));
    }

    #[test]
    fn constant_offset_from_a_zero_problem() {
        // on ex1, a constant net c has error u - c; compare with a direct sum
        let (p, ls, grid) = ex1();
        let c = 0.25;
        let mut params = vec![0.0; param_count(&[4, 1, 1])];
        params[6] = c;
        let net = Mlp::from_params(&[4, 1, 1], Activation::Identity, params).unwrap();
        let s = Solution::Extended { net, kind: ExtensionKind::AbsLevelSet };
        let r = error_norms(&s, &p, &ls, &grid).unwrap();
        let (mut v, mut g, mut n) = (0.0, 0.0, 0);
        for q in &grid {
            let phi = ls.value(&q.x, q.t).unwrap();
            if phi.abs() < 1e-12 {
                continue;
            }
            let e = p.exact(&q.x, q.t, crate::problem::Region::from_phi(phi).unwrap());
            v += (c - e.value[0]).powi(2);
            g += e.grad[0].powi(2) + e.grad[1].powi(2);
            n += 1;
        }
        assert!((r.e0 - (v / n as f64).sqrt()).abs() <= 1e-14 * r.e0);
        assert!((r.e1 - ((v + g) / n as f64).sqrt()).abs() <= 1e-14 * r.e1);
        assert!(r.e1 >= r.e0);
    }

    #[test]
    fn flowmap_error_of_identity_is_mean_squared_displacement() {
        let table = TrajectoryTable {
            initial: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            times: vec![0.0, 1.0],
            positions: vec![vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![vec![0.3, 0.4], vec![1.0, 1.0]]],
        };
        let id = flowmap_error(|x, _| Ok(x.to_vec()), &table).unwrap();
        assert!((id - (0.25 + 1.0) / 4.0).abs() < 1e-15);
        let perfect = flowmap_error(
            |x, t| {
                let j = table.times.iter().position(|&s| s == t).unwrap();
                let i = table.positions[j].iter().position(|p| p == x).unwrap();
                Ok(table.initial[i].clone())
            },
            &table,
        )
        .unwrap();
        assert_eq!(perfect, 0.0);
    }

    #[test]
    fn grid_export_is_deterministic_and_consistent() {
        let p = ProblemSpec::benchmark(Benchmark::Ex1);
        let ls = p.analytic_level_set().unwrap();
        let grid = test_grid(&p.domain, 1.0, 2, 1).unwrap();
        let s = Solution::Extended { net: Mlp::init(&[4, 3, 1], 1).unwrap(), kind: ExtensionKind::AbsLevelSet };
        let a = grid_csv(&s, &p, &ls, &grid).unwrap();
        assert_eq!(a, grid_csv(&s, &p, &ls, &grid).unwrap());
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], "x0,x1,t,u_pred,u_exact,abs_err");
        assert_eq!(lines.len(), 5);
        for l in &lines[1..] {
            let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            assert!(((v[3] - v[4]).abs() - v[5]).abs() <= 1e-15 * v[5].max(1.0));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        export_grid(&s, &p, &ls, &grid, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), a);
        assert!(export_grid(&s, &p, &ls, &grid, &dir.path().join("missing/grid.csv")).is_err());
    }
}

//! Classical fourth-order Runge-Kutta advection of interface points.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Integrates `dx/dt = velocity(x, t)` from `t0` to `t1` with `steps`
/// uniform steps.
pub fn rk4_advect<V>(velocity: &V, x0: &[f64], t0: f64, t1: f64, steps: usize) -> Result<Vec<f64>>
where
    V: Fn(&[f64], f64) -> Vec<f64> + ?Sized,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("rk4 needs at least one step".into()));
    }
    let d = x0.len();
    let h = (t1 - t0) / steps as f64;
    let mut x = x0.to_vec();
    let mut tmp = vec![0.0; d];
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        let k1 = velocity(&x, t);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        let k2 = velocity(&tmp, t + 0.5 * h);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        let k3 = velocity(&tmp, t + 0.5 * h);
        for i in 0..d {
            tmp[i] = x[i] + h * k3[i];
        }
        let k4 = velocity(&tmp, t + h);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
    }
    Ok(x)
}

/// Interface trajectories `X_RK(x_i, t_j; 0)` at a fixed set of times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub initial: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `positions[j][i]` is the position of point `i` at `times[j]`.
    pub positions: Vec<Vec<Vec<f64>>>,
}

impl TrajectoryTable {
    /// Advects every initial point through `times` (which must start at 0 and
    /// increase). Each segment uses enough RK4 steps to keep the step no
    /// larger than `t_end / steps_total`.
    pub fn build<V>(velocity: &V, initial: Vec<Vec<f64>>, times: Vec<f64>, t_end: f64, steps_total: usize) -> Result<Self>
    where
        V: Fn(&[f64], f64) -> Vec<f64> + Sync + ?Sized,
    {
        if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("trajectory times must start at 0 and increase".into()));
        }
        if initial.is_empty() {
            return Err(Error::EmptySet);
        }
        let h_max = t_end / steps_total.max(1) as f64;
        let per_point: Vec<Vec<Vec<f64>>> = initial
            .par_iter()
            .map(|x0| {
                let mut out = Vec::with_capacity(times.len());
                out.push(x0.clone());
                let mut x = x0.clone();
                for w in times.windows(2) {
                    let steps = ((w[1] - w[0]) / h_max - 1e-9).ceil().max(1.0) as usize;
                    x = rk4_advect(velocity, &x, w[0], w[1], steps)?;
                    out.push(x.clone());
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let positions = (0..times.len()).map(|j| per_point.iter().map(|p| p[j].clone()).collect()).collect();
        Ok(TrajectoryTable { initial, times, positions })
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ex1_velocity(_: &[f64], t: f64) -> Vec<f64> {
        vec![-0.3 * PI * (PI * t).sin(), 0.3 * PI * (PI * t).cos()]
    }

    #[test]
    fn constant_field_is_exact() {
        let v = |_: &[f64], _: f64| vec![1.0, 0.0];
        let x = rk4_advect(&v, &[0.0, 0.0], 0.0, 1.0, 7).unwrap();
        assert!((x[0] - 1.0).abs() <= 1e-15 && x[1] == 0.0, "{x:?}");
    }

    #[test]
    fn ex1_trajectory_closes() {
        let x = rk4_advect(&ex1_velocity, &[0.6, 0.0], 0.0, 1.0, 100).unwrap();
        assert!(x[0].abs() < 1e-8 && x[1].abs() < 1e-8, "{x:?}");
    }

    #[test]
    fn zero_steps_and_blowup_are_errors() {
        assert!(rk4_advect(&ex1_velocity, &[0.0, 0.0], 0.0, 1.0, 0).is_err());
        let v = |x: &[f64], _: f64| vec![x[0] * x[0] * 1e200];
        assert!(matches!(rk4_advect(&v, &[1e100], 0.0, 1.0, 4), Err(Error::NonFiniteState { step: 1 })));
    }

    #[test]
    fn table_starts_at_initial_points() {
        let init = vec![vec![0.6, 0.0], vec![0.1, 0.2]];
        let tab = TrajectoryTable::build(&ex1_velocity, init.clone(), vec![0.0, 0.5, 1.0], 1.0, 100).unwrap();
        assert_eq!(tab.positions[0], init);
        let p = &tab.positions[2][0];
        assert!(p[0].abs() < 1e-8 && p[1].abs() < 1e-8);
        assert_eq!(tab.time_index(0.5), Some(1));
    }
}

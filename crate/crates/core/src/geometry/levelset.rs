//! Level-set fields.
//!
//! Every analytic benchmark interface is a rigid motion of an initial level
//! set: `phi(x, t) = phi0(M(t) x + b(t))` with `M(t)` orthogonal. The neural
//! variant replaces the affine inverse map by a composition of learned flow
//! maps (see [`super::flowmap`]).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::Stream;

use super::flowmap::CompositeLevelSet;

/// Value and derivatives of a level-set field at one space-time point.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetSample {
    pub phi: f64,
    pub grad: Vec<f64>,
    pub dt: f64,
    pub lap: f64,
}

impl LevelSetSample {
    /// Unit normal pointing from the minus region to the plus region.
    pub fn normal(&self) -> Option<Vec<f64>> {
        let norm = self.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        (norm > 1e-12 && norm.is_finite()).then(|| self.grad.iter().map(|g| g / norm).collect())
    }
}

const STAR_SCALE: f64 = 0.3;
const STAR_PHASE: f64 = 5.0 * PI / 36.0;

/// Initial level set `phi0`, with a parametrization of its zero set.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLevelSet {
    /// `sum_i w_i (x_i - c_i)^2 - offset`.
    Quadric { center: Vec<f64>, weights: Vec<f64>, offset: f64 },
    /// `r - 0.3 (2.5 + 1.5 sin(5 theta + 5 pi / 36))^(-1/4)` in polar
    /// coordinates about `center`.
    Star { center: [f64; 2] },
}

impl InitialLevelSet {
    pub fn dim(&self) -> usize {
        match self {
            InitialLevelSet::Quadric { center, .. } => center.len(),
            InitialLevelSet::Star { .. } => 2,
        }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            InitialLevelSet::Quadric { center, weights, offset } => {
                y.iter().zip(center).zip(weights).map(|((y, c), w)| w * (y - c).powi(2)).sum::<f64>() - offset
            }
            InitialLevelSet::Star { center } => {
                let (dx, dy) = (y[0] - center[0], y[1] - center[1]);
                dx.hypot(dy) - star_radius(dy.atan2(dx)).0
            }
        }
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        match self {
            InitialLevelSet::Quadric { center, weights, .. } => {
                y.iter().zip(center).zip(weights).map(|((y, c), w)| 2.0 * w * (y - c)).collect()
            }
            InitialLevelSet::Star { center } => {
                let (dx, dy) = (y[0] - center[0], y[1] - center[1]);
                let r2 = dx * dx + dy * dy;
                let r = r2.sqrt();
                let (_, rho1, _) = star_radius(dy.atan2(dx));
                // grad r = (dx, dy)/r, grad theta = (-dy, dx)/r^2
                vec![dx / r + rho1 * dy / r2, dy / r - rho1 * dx / r2]
            }
        }
    }

    /// Row-major Hessian.
    pub fn hessian(&self, y: &[f64]) -> Vec<f64> {
        match self {
            InitialLevelSet::Quadric { weights, .. } => {
                let d = weights.len();
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    h[i * d + i] = 2.0 * weights[i];
                }
                h
            }
            InitialLevelSet::Star { center } => {
                let (dx, dy) = (y[0] - center[0], y[1] - center[1]);
                let r2 = dx * dx + dy * dy;
                let r = r2.sqrt();
                let r3 = r2 * r;
                let r4 = r2 * r2;
                let (_, rho1, rho2) = star_radius(dy.atan2(dx));
                let hr = [dy * dy / r3, -dx * dy / r3, dx * dx / r3];
                let gt = [-dy / r2, dx / r2];
                let ht = [2.0 * dx * dy / r4, (dy * dy - dx * dx) / r4, -2.0 * dx * dy / r4];
                let hxx = hr[0] - rho2 * gt[0] * gt[0] - rho1 * ht[0];
                let hxy = hr[1] - rho2 * gt[0] * gt[1] - rho1 * ht[1];
                let hyy = hr[2] - rho2 * gt[1] * gt[1] - rho1 * ht[2];
                vec![hxx, hxy, hxy, hyy]
            }
        }
    }

    /// Point on the zero set drawn by a uniform parameter.
    pub fn sample_zero_set(&self, rng: &mut Stream) -> Vec<f64> {
        match self {
            InitialLevelSet::Quadric { center, weights, offset } => {
                let dir: Vec<f64> = match center.len() {
                    2 => {
                        let a = rng.uniform_in(0.0, 2.0 * PI);
                        vec![a.cos(), a.sin()]
                    }
                    3 => {
                        let c = rng.uniform_in(-1.0, 1.0);
                        let a = rng.uniform_in(0.0, 2.0 * PI);
                        let s = (1.0 - c * c).sqrt();
                        vec![s * a.cos(), s * a.sin(), c]
                    }
                    _ => {
                        let v: Vec<f64> = (0..center.len()).map(|_| rng.normal()).collect();
                        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                        v.into_iter().map(|x| x / n).collect()
                    }
                };
                dir.iter()
                    .zip(center)
                    .zip(weights)
                    .map(|((u, c), w)| c + u * (offset / w).sqrt())
                    .collect()
            }
            InitialLevelSet::Star { center } => {
                let a = rng.uniform_in(0.0, 2.0 * PI);
                let rho = star_radius(a).0;
                vec![center[0] + rho * a.cos(), center[1] + rho * a.sin()]
            }
        }
    }
}

/// Star radius `rho(theta)` with its first two derivatives.
fn star_radius(theta: f64) -> (f64, f64, f64) {
    let arg = 5.0 * theta + STAR_PHASE;
    let s = 2.5 + 1.5 * arg.sin();
    let s1 = 7.5 * arg.cos();
    let s2 = -37.5 * arg.sin();
    let rho = STAR_SCALE * s.powf(-0.25);
    let rho1 = -0.25 * STAR_SCALE * s.powf(-1.25) * s1;
    let rho2 = STAR_SCALE * (0.3125 * s.powf(-2.25) * s1 * s1 - 0.25 * s.powf(-1.25) * s2);
    (rho, rho1, rho2)
}

/// Rigid inverse motion `y = M(t) x + b(t)` carrying a point at time `t`
/// back to its position at time 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RigidMotion {
    /// Uniform translation of the whole plane around a circle of `radius`
    /// with angular frequency `freq`, starting at angle 0.
    CircularTranslation { radius: f64, freq: f64 },
    /// Rotation about the vertical axis with angular speed `omega` combined
    /// with a vertical rise at speed `rise` (3D).
    RotateRise { omega: f64, rise: f64 },
    /// Planar rotation about `center` with angular speed `omega`.
    Rotate { omega: f64, center: [f64; 2] },
}

/// `(M, b, dM/dt, db/dt)` with row-major `d x d` matrices.
pub struct AffineFrame {
    pub m: Vec<f64>,
    pub b: Vec<f64>,
    pub m_dot: Vec<f64>,
    pub b_dot: Vec<f64>,
}

fn planar_inverse_rotation(angle: f64, rate: f64) -> ([f64; 4], [f64; 4]) {
    let (s, c) = angle.sin_cos();
    ([c, s, -s, c], [-rate * s, rate * c, -rate * c, -rate * s])
}

impl RigidMotion {
    pub fn dim(&self) -> usize {
        match self {
            RigidMotion::RotateRise { .. } => 3,
            _ => 2,
        }
    }

    pub fn frame(&self, t: f64) -> AffineFrame {
        match *self {
            RigidMotion::CircularTranslation { radius, freq } => {
                let (s, c) = (freq * t).sin_cos();
                AffineFrame {
                    m: vec![1.0, 0.0, 0.0, 1.0],
                    b: vec![-radius * (c - 1.0), -radius * s],
                    m_dot: vec![0.0; 4],
                    b_dot: vec![radius * freq * s, -radius * freq * c],
                }
            }
            RigidMotion::RotateRise { omega, rise } => {
                let (r, rd) = planar_inverse_rotation(omega * t, omega);
                AffineFrame {
                    m: vec![r[0], r[1], 0.0, r[2], r[3], 0.0, 0.0, 0.0, 1.0],
                    b: vec![0.0, 0.0, -rise * t],
                    m_dot: vec![rd[0], rd[1], 0.0, rd[2], rd[3], 0.0, 0.0, 0.0, 0.0],
                    b_dot: vec![0.0, 0.0, -rise],
                }
            }
            RigidMotion::Rotate { omega, center } => {
                let (r, rd) = planar_inverse_rotation(omega * t, omega);
                let mc = [r[0] * center[0] + r[1] * center[1], r[2] * center[0] + r[3] * center[1]];
                let mdc = [rd[0] * center[0] + rd[1] * center[1], rd[2] * center[0] + rd[3] * center[1]];
                AffineFrame {
                    m: r.to_vec(),
                    b: vec![center[0] - mc[0], center[1] - mc[1]],
                    m_dot: rd.to_vec(),
                    b_dot: vec![-mdc[0], -mdc[1]],
                }
            }
        }
    }

    /// Inverse map: position at time 0 of the particle at `x` at time `t`.
    pub fn pull_back(&self, x: &[f64], t: f64) -> Vec<f64> {
        let f = self.frame(t);
        let d = x.len();
        (0..d).map(|i| f.b[i] + (0..d).map(|j| f.m[i * d + j] * x[j]).sum::<f64>()).collect()
    }

    /// Forward map: position at time `t` of the particle starting at `y`.
    pub fn push_forward(&self, y: &[f64], t: f64) -> Vec<f64> {
        let f = self.frame(t);
        let d = y.len();
        // M is orthogonal, so M^{-1} = M^T
        (0..d).map(|j| (0..d).map(|i| f.m[i * d + j] * (y[i] - f.b[i])).sum::<f64>()).collect()
    }
}

#[derive(Debug, Clone)]
pub enum LevelSet {
    Analytic { initial: InitialLevelSet, motion: RigidMotion, t_end: f64 },
    Neural(CompositeLevelSet),
}

impl LevelSet {
    pub fn dim(&self) -> usize {
        match self {
            LevelSet::Analytic { initial, .. } => initial.dim(),
            LevelSet::Neural(c) => c.dim(),
        }
    }

    pub fn t_end(&self) -> f64 {
        match self {
            LevelSet::Analytic { t_end, .. } => *t_end,
            LevelSet::Neural(c) => c.t_end(),
        }
    }

    pub fn initial(&self) -> &InitialLevelSet {
        match self {
            LevelSet::Analytic { initial, .. } => initial,
            LevelSet::Neural(c) => c.initial(),
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, LevelSet::Analytic { .. })
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let t_end = self.t_end();
        if !(0.0..=t_end * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::TimeOutOfRange { t, t_end });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_time(t)?;
        match self {
            LevelSet::Analytic { initial, motion, .. } => Ok(initial.value(&motion.pull_back(x, t))),
            LevelSet::Neural(c) => c.value(x, t),
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<LevelSetSample> {
        self.check_time(t)?;
        match self {
            LevelSet::Analytic { initial, motion, .. } => {
                let d = x.len();
                let f = motion.frame(t);
                let y: Vec<f64> =
                    (0..d).map(|i| f.b[i] + (0..d).map(|j| f.m[i * d + j] * x[j]).sum::<f64>()).collect();
                let g0 = initial.gradient(&y);
                let h0 = initial.hessian(&y);
                let grad: Vec<f64> = (0..d).map(|j| (0..d).map(|i| f.m[i * d + j] * g0[i]).sum()).collect();
                let mut lap = 0.0;
                for k in 0..d {
                    for i in 0..d {
                        for j in 0..d {
                            lap += f.m[i * d + k] * h0[i * d + j] * f.m[j * d + k];
                        }
                    }
                }
                let ydot: Vec<f64> =
                    (0..d).map(|i| f.b_dot[i] + (0..d).map(|j| f.m_dot[i * d + j] * x[j]).sum::<f64>()).collect();
                let dt = g0.iter().zip(&ydot).map(|(a, b)| a * b).sum();
                Ok(LevelSetSample { phi: initial.value(&y), grad, dt, lap })
            }
            LevelSet::Neural(c) => c.eval(x, t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(ls: &LevelSet, x: &[f64], t: f64) {
        let s = ls.eval(x, t).unwrap();
        let h = 1e-5;
        let d = x.len();
        let f = |y: &[f64], tt: f64| ls.value(y, tt).unwrap();
        let mut lap = 0.0;
        for k in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let fd = (f(&xp, t) - f(&xm, t)) / (2.0 * h);
            assert!((fd - s.grad[k]).abs() <= 1e-6 * s.grad[k].abs().max(1.0), "grad {k}: {fd} vs {}", s.grad[k]);
            let h2 = 1e-4;
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h2;
            xm[k] -= h2;
            lap += (f(&xp, t) - 2.0 * f(x, t) + f(&xm, t)) / (h2 * h2);
        }
        assert!((lap - s.lap).abs() <= 1e-4 * s.lap.abs().max(1.0), "lap: {lap} vs {}", s.lap);
        // one-sided second-order difference at the initial time
        let fd_t = if t >= h {
            (f(x, t + h) - f(x, t - h)) / (2.0 * h)
        } else {
            (-3.0 * f(x, t) + 4.0 * f(x, t + h) - f(x, t + 2.0 * h)) / (2.0 * h)
        };
        assert!((fd_t - s.dt).abs() <= 1e-6 * s.dt.abs().max(1.0), "dt: {fd_t} vs {}", s.dt);
    }

    fn ex1() -> LevelSet {
        LevelSet::Analytic {
            initial: InitialLevelSet::Quadric {
                center: vec![0.3, 0.0],
                weights: vec![1.0, 1.0],
                offset: (PI / 6.0).powi(2),
            },
            motion: RigidMotion::CircularTranslation { radius: 0.3, freq: PI },
            t_end: 1.0,
        }
    }

    #[test]
    fn ex1_matches_printed_formula() {
        let ls = ex1();
        for &(x, y, t) in &[(0.1, 0.2, 0.3), (-0.7, 0.4, 0.9), (0.5, -0.5, 0.0)] {
            let printed = (x - 0.3 * (PI * t).cos()).powi(2) + (y - 0.3 * (PI * t).sin()).powi(2) - (PI / 6.0).powi(2);
            assert!((ls.value(&[x, y], t).unwrap() - printed).abs() < 1e-14);
            fd_check(&ls, &[x, y], t);
        }
        assert!(ls.value(&[0.3 + PI / 6.0, 0.0], 0.0).unwrap().abs() < 1e-15);
        let z = ls.eval(&[0.3, 0.0], 0.0).unwrap();
        assert!(z.grad.iter().all(|g| g.abs() < 1e-15));
        assert!((z.phi + (PI / 6.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn parametrized_interface_points_are_on_the_zero_set() {
        let ls = ex1();
        for &(t, a) in &[(0.2, 0.3), (0.7, 2.5), (1.0, -1.0)] {
            let x = [
                0.3 * (PI * t).cos() + PI / 6.0 * f64::cos(a),
                0.3 * (PI * t).sin() + PI / 6.0 * f64::sin(a),
            ];
            let s = ls.eval(&x, t).unwrap();
            assert!(s.phi.abs() < 1e-15);
            let n = s.normal().unwrap();
            assert!((n[0] - a.cos()).abs() < 1e-9 && (n[1] - a.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn rotations_and_star_match_finite_differences() {
        let ex2 = LevelSet::Analytic {
            initial: InitialLevelSet::Quadric {
                center: vec![0.0, 0.0, -0.25],
                weights: vec![1.0 / 0.49, 4.0, 4.0],
                offset: 1.0,
            },
            motion: RigidMotion::RotateRise { omega: PI / 2.0, rise: 0.5 },
            t_end: 1.0,
        };
        let (x, y, z, t): (f64, f64, f64, f64) = (0.3, -0.2, 0.1, 0.4);
        let (s, c) = (PI * t / 2.0).sin_cos();
        let printed = (x * c + y * s).powi(2) / 0.49 + (-x * s + y * c).powi(2) / 0.25 + (z - 0.5 * t + 0.25).powi(2) / 0.25 - 1.0;
        assert!((ex2.value(&[x, y, z], t).unwrap() - printed).abs() < 1e-14);
        fd_check(&ex2, &[x, y, z], t);

        let ex3 = LevelSet::Analytic {
            initial: InitialLevelSet::Star { center: [0.5, 0.5] },
            motion: RigidMotion::Rotate { omega: 1.0, center: [0.5, 0.5] },
            t_end: 1.0,
        };
        fd_check(&ex3, &[0.7, 0.35], 0.6);
        fd_check(&ex3, &[0.2, 0.8], 0.1);
    }

    #[test]
    fn star_hessian_matches_finite_differences() {
        let star = InitialLevelSet::Star { center: [0.5, 0.5] };
        let y = [0.62, 0.41];
        let h = star.hessian(&y);
        let eps = 1e-5;
        for j in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[j] += eps;
            ym[j] -= eps;
            let gp = star.gradient(&yp);
            let gm = star.gradient(&ym);
            for i in 0..2 {
                let fd = (gp[i] - gm[i]) / (2.0 * eps);
                assert!((fd - h[i * 2 + j]).abs() < 1e-5 * h[i * 2 + j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn push_forward_inverts_pull_back() {
        let m = RigidMotion::Rotate { omega: 1.0, center: [0.5, 0.5] };
        let x = [0.3, 0.9];
        let y = m.pull_back(&x, 0.8);
        let back = m.push_forward(&y, 0.8);
        assert!((back[0] - x[0]).abs() < 1e-15 && (back[1] - x[1]).abs() < 1e-15);
    }

    #[test]
    fn time_range_is_enforced() {
        assert!(matches!(ex1().value(&[0.0, 0.0], 1.5), Err(Error::TimeOutOfRange { .. })));
    }
}

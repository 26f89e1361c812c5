//! Moving-interface problem instances and the four benchmarks.
//!
//! Source, boundary, initial and jump data are manufactured from the exact
//! solutions, whose time derivative, spatial gradient and Laplacian are given
//! in closed form per region.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::extension::ExtensionKind;
use crate::geometry::levelset::{InitialLevelSet, LevelSet, RigidMotion};

#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Disk { center: [f64; 2], radius: f64 },
}

impl DomainShape {
    pub fn unit_box(dim: usize, lo: f64, hi: f64) -> Self {
        DomainShape::Box { lower: vec![lo; dim], upper: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainShape::Box { lower, .. } => lower.len(),
            DomainShape::Disk { .. } => 2,
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainShape::Box { lower, upper } => (lower.clone(), upper.clone()),
            DomainShape::Disk { center, radius } => (
                vec![center[0] - radius, center[1] - radius],
                vec![center[0] + radius, center[1] + radius],
            ),
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainShape::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
            }
            DomainShape::Disk { center, radius } => {
                (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) <= radius * radius
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquationKind {
    Parabolic,
    Oseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    Zero,
    Nonzero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Plus,
    Minus,
}

impl Region {
    /// Region from the sign of the level set; the interface itself is
    /// ambiguous.
    pub fn from_phi(phi: f64) -> Result<Region> {
        if phi > 0.0 {
            Ok(Region::Plus)
        } else if phi < 0.0 {
            Ok(Region::Minus)
        } else {
            Err(Error::InterfacePoint { phi })
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Region::Plus => 1.0,
            Region::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [Benchmark::Ex1, Benchmark::Ex2, Benchmark::Ex3, Benchmark::Ex4];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Ex1 => "ex1",
            Benchmark::Ex2 => "ex2",
            Benchmark::Ex3 => "ex3",
            Benchmark::Ex4 => "ex4",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

/// Exact solution and derivatives at one point, per output component.
///
/// For Oseen problems the outputs are the velocity components followed by
/// the pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEval {
    pub value: Vec<f64>,
    pub dt: Vec<f64>,
    /// Row-major `outputs x dim`.
    pub grad: Vec<f64>,
    pub lap: Vec<f64>,
}

impl ExactEval {
    fn zeros(outputs: usize, dim: usize) -> Self {
        ExactEval { value: vec![0.0; outputs], dt: vec![0.0; outputs], grad: vec![0.0; outputs * dim], lap: vec![0.0; outputs] }
    }

    pub fn grad_of(&self, o: usize, dim: usize) -> &[f64] {
        &self.grad[o * dim..(o + 1) * dim]
    }
}

/// `f` such that the exact solution satisfies the governing equation:
/// `u_t - beta lap u` (parabolic) or `u_t + (V . grad) u - nu lap u + grad p`
/// per velocity component (Oseen).
pub fn manufacture_source(kind: EquationKind, dim: usize, beta: f64, velocity: &[f64], exact: &ExactEval) -> Vec<f64> {
    match kind {
        EquationKind::Parabolic => vec![exact.dt[0] - beta * exact.lap[0]],
        EquationKind::Oseen => (0..dim)
            .map(|i| {
                let adv: f64 = (0..dim).map(|k| velocity[k] * exact.grad[i * dim + k]).sum();
                exact.dt[i] + adv - beta * exact.lap[i] + exact.grad[dim * dim + i]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub benchmark: Benchmark,
    pub dim: usize,
    pub domain: DomainShape,
    pub t_end: f64,
    /// Diffusion coefficients, or viscosities for Oseen problems.
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub kind: EquationKind,
    pub jump_kind: JumpKind,
}

const EX1_RADIUS: f64 = PI / 6.0;

impl ProblemSpec {
    pub fn benchmark(b: Benchmark) -> Self {
        match b {
            Benchmark::Ex1 => ProblemSpec {
                benchmark: b,
                dim: 2,
                domain: DomainShape::unit_box(2, -1.0, 1.0),
                t_end: 1.0,
                beta_plus: 10.0,
                beta_minus: 1.0,
                kind: EquationKind::Parabolic,
                jump_kind: JumpKind::Zero,
            },
            Benchmark::Ex2 => ProblemSpec {
                benchmark: b,
                dim: 3,
                domain: DomainShape::unit_box(3, -1.0, 1.0),
                t_end: 1.0,
                beta_plus: 10.0,
                beta_minus: 1.0,
                kind: EquationKind::Parabolic,
                jump_kind: JumpKind::Nonzero,
            },
            Benchmark::Ex3 => ProblemSpec {
                benchmark: b,
                dim: 2,
                domain: DomainShape::Disk { center: [0.5, 0.5], radius: 0.5 },
                t_end: 1.0,
                beta_plus: 1e-3,
                beta_minus: 1.0,
                kind: EquationKind::Oseen,
                jump_kind: JumpKind::Nonzero,
            },
            Benchmark::Ex4 => ProblemSpec {
                benchmark: b,
                dim: 2,
                domain: DomainShape::unit_box(2, 0.0, 1.0),
                t_end: 1.0,
                beta_plus: 1e-3,
                beta_minus: 1.0,
                kind: EquationKind::Oseen,
                jump_kind: JumpKind::Nonzero,
            },
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::benchmark(name.parse()?))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_plus > 0.0 && self.beta_minus > 0.0) {
            return Err(Error::InvalidArgument("coefficients must be positive".into()));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::InvalidArgument("t_end must be positive".into()));
        }
        if self.domain.dim() != self.dim {
            return Err(Error::InvalidArgument("domain dimension mismatch".into()));
        }
        Ok(())
    }

    /// Number of solution outputs (velocity plus pressure for Oseen).
    pub fn outputs(&self) -> usize {
        match self.kind {
            EquationKind::Parabolic => 1,
            EquationKind::Oseen => self.dim + 1,
        }
    }

    /// Outputs that carry initial, jump and error-norm data (velocity only
    /// for Oseen).
    pub fn primary_outputs(&self) -> usize {
        match self.kind {
            EquationKind::Parabolic => 1,
            EquationKind::Oseen => self.dim,
        }
    }

    pub fn beta(&self, region: Region) -> f64 {
        match region {
            Region::Plus => self.beta_plus,
            Region::Minus => self.beta_minus,
        }
    }

    /// Extension kind matching the jump data: continuous solutions use the
    /// absolute level set, discontinuous ones the indicator.
    pub fn default_extension(&self) -> ExtensionKind {
        match self.jump_kind {
            JumpKind::Zero => ExtensionKind::AbsLevelSet,
            JumpKind::Nonzero => ExtensionKind::Indicator,
        }
    }

    pub fn initial_level_set(&self) -> InitialLevelSet {
        match self.benchmark {
            Benchmark::Ex1 => InitialLevelSet::Quadric {
                center: vec![0.3, 0.0],
                weights: vec![1.0, 1.0],
                offset: EX1_RADIUS * EX1_RADIUS,
            },
            Benchmark::Ex2 => InitialLevelSet::Quadric {
                center: vec![0.0, 0.0, -0.25],
                weights: vec![1.0 / 0.49, 4.0, 4.0],
                offset: 1.0,
            },
            Benchmark::Ex3 => InitialLevelSet::Star { center: [0.5, 0.5] },
            Benchmark::Ex4 => InitialLevelSet::Quadric {
                center: vec![0.5, 0.75],
                weights: vec![1.0, 1.0],
                offset: 0.15 * 0.15,
            },
        }
    }

    /// Closed-form inverse motion when the interface moves rigidly.
    pub fn rigid_motion(&self) -> Option<RigidMotion> {
        match self.benchmark {
            Benchmark::Ex1 => Some(RigidMotion::CircularTranslation { radius: 0.3, freq: PI }),
            Benchmark::Ex2 => Some(RigidMotion::RotateRise { omega: PI / 2.0, rise: 0.5 }),
            Benchmark::Ex3 => Some(RigidMotion::Rotate { omega: 1.0, center: [0.5, 0.5] }),
            Benchmark::Ex4 => None,
        }
    }

    pub fn analytic_level_set(&self) -> Option<LevelSet> {
        self.rigid_motion().map(|motion| LevelSet::Analytic {
            initial: self.initial_level_set(),
            motion,
            t_end: self.t_end,
        })
    }

    /// Interface velocity field, also the advection velocity of Oseen
    /// problems.
    pub fn velocity(&self, x: &[f64], t: f64) -> Vec<f64> {
        match self.benchmark {
            Benchmark::Ex1 => vec![-0.3 * PI * (PI * t).sin(), 0.3 * PI * (PI * t).cos()],
            Benchmark::Ex2 => vec![-PI * x[1] / 2.0, PI * x[0] / 2.0, 0.5],
            Benchmark::Ex3 => vec![0.5 - x[1], x[0] - 0.5],
            Benchmark::Ex4 => {
                let c = (PI * t / 3.0).cos();
                let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
                vec![c * sx * sx * (2.0 * PI * x[1]).sin(), -c * sy * sy * (2.0 * PI * x[0]).sin()]
            }
        }
    }

    /// Exact solution with derivatives in `region`.
    pub fn exact(&self, x: &[f64], t: f64, region: Region) -> ExactEval {
        match self.benchmark {
            Benchmark::Ex1 => ex1_exact(x, t, region, self.beta(region), self.beta_plus, self.beta_minus),
            Benchmark::Ex2 => ex2_exact(x, t, region),
            Benchmark::Ex3 | Benchmark::Ex4 => oseen_exact(x, t, region),
        }
    }

    pub fn source(&self, x: &[f64], t: f64, region: Region) -> Vec<f64> {
        let e = self.exact(x, t, region);
        manufacture_source(self.kind, self.dim, self.beta(region), &self.velocity(x, t), &e)
    }

    /// Dirichlet data, from the plus-region solution (the interface stays
    /// away from the outer boundary in every benchmark).
    pub fn boundary_value(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.exact(x, t, Region::Plus).value
    }

    pub fn initial_value(&self, x: &[f64], region: Region) -> Vec<f64> {
        let mut v = self.exact(x, 0.0, region).value;
        v.truncate(self.primary_outputs());
        v
    }

    /// `u+ - u-` (velocity components for Oseen).
    pub fn jump_value(&self, x: &[f64], t: f64) -> Vec<f64> {
        let p = self.exact(x, t, Region::Plus);
        let m = self.exact(x, t, Region::Minus);
        (0..self.primary_outputs()).map(|o| p.value[o] - m.value[o]).collect()
    }

    /// Flux jump across the interface with unit normal `n` (minus to plus):
    /// `[beta grad u . n]` or, for Oseen, `[nu d_n u - p n]` per component.
    pub fn jump_flux(&self, x: &[f64], t: f64, n: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let side = |region: Region| -> Vec<f64> {
            let e = self.exact(x, t, region);
            let beta = self.beta(region);
            let dn = |o: usize| e.grad_of(o, d).iter().zip(n).map(|(g, v)| g * v).sum::<f64>();
            match self.kind {
                EquationKind::Parabolic => vec![beta * dn(0)],
                EquationKind::Oseen => (0..d).map(|i| beta * dn(i) - e.value[d] * n[i]).collect(),
            }
        };
        let p = side(Region::Plus);
        let m = side(Region::Minus);
        p.iter().zip(&m).map(|(a, b)| a - b).collect()
    }
}

fn ex1_exact(x: &[f64], t: f64, region: Region, beta: f64, beta_plus: f64, beta_minus: f64) -> ExactEval {
    let (s, c) = (PI * t).sin_cos();
    let (px, py) = (x[0] - 0.3 * c, x[1] - 0.3 * s);
    let rho = px * px + py * py;
    let coef = 1.0 / (EX1_RADIUS * beta);
    let r3 = rho.powf(1.5);
    let mut e = ExactEval::zeros(1, 2);
    e.value[0] = coef * rho.powf(2.5);
    if region == Region::Plus {
        e.value[0] += EX1_RADIUS.powi(4) * (1.0 / beta_minus - 1.0 / beta_plus);
    }
    e.grad = vec![5.0 * coef * r3 * px, 5.0 * coef * r3 * py];
    e.lap[0] = 25.0 * coef * r3;
    // d(px)/dt = 0.3 pi sin, d(py)/dt = -0.3 pi cos
    e.dt[0] = 5.0 * coef * r3 * (px * 0.3 * PI * s - py * 0.3 * PI * c);
    e
}

fn ex2_exact(x: &[f64], t: f64, region: Region) -> ExactEval {
    let mut e = ExactEval::zeros(1, 3);
    match region {
        Region::Plus => {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let g = r2.exp();
            let u = g * t.cos();
            e.value[0] = u;
            e.dt[0] = -g * t.sin();
            e.grad = vec![2.0 * x[0] * u, 2.0 * x[1] * u, 2.0 * x[2] * u];
            e.lap[0] = (6.0 + 4.0 * r2) * u;
        }
        Region::Minus => {
            let w = 0.1 * (x[2] - t).exp();
            let u = w * x[0].sin() * t.cos();
            e.value[0] = u;
            e.dt[0] = w * x[0].sin() * (-t.sin() - t.cos());
            e.grad = vec![w * x[0].cos() * t.cos(), 0.0, u];
            e.lap[0] = 0.0;
        }
    }
    e
}

fn oseen_exact(x: &[f64], t: f64, region: Region) -> ExactEval {
    let mut e = ExactEval::zeros(3, 2);
    let (hx, hy) = (0.5 * PI * x[0], 0.5 * PI * x[1]);
    match region {
        Region::Plus => {
            let ex = x[0].exp();
            let (s, c) = (PI * x[1] + PI * t).sin_cos();
            e.value = vec![ex * s, ex * c / PI, hx.sin() * hy.cos()];
            e.dt = vec![PI * ex * c, -ex * s, 0.0];
            e.grad = vec![
                ex * s,
                PI * ex * c,
                ex * c / PI,
                -ex * s,
                0.5 * PI * hx.cos() * hy.cos(),
                -0.5 * PI * hx.sin() * hy.sin(),
            ];
            e.lap = vec![(1.0 - PI * PI) * ex * s, (1.0 / PI - PI) * ex * c, -0.5 * PI * PI * hx.sin() * hy.cos()];
        }
        Region::Minus => {
            let (sx, cx) = (PI * x[0]).sin_cos();
            let (sy, cy) = (PI * x[1]).sin_cos();
            let (st, ct) = t.sin_cos();
            let u1 = cx * sy * ct;
            let u2 = -sx * cy * ct;
            e.value = vec![u1, u2, hx.cos() * hy.sin()];
            e.dt = vec![-cx * sy * st, sx * cy * st, 0.0];
            e.grad = vec![
                -PI * sx * sy * ct,
                PI * cx * cy * ct,
                -PI * cx * cy * ct,
                PI * sx * sy * ct,
                -0.5 * PI * hx.sin() * hy.sin(),
                0.5 * PI * hx.cos() * hy.cos(),
            ];
            e.lap = vec![-2.0 * PI * PI * u1, -2.0 * PI * PI * u2, -0.5 * PI * PI * hx.cos() * hy.sin()];
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn random_point(p: &ProblemSpec, rng: &mut Stream) -> Vec<f64> {
        let (lo, hi) = p.domain.bounding_box();
        loop {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.uniform_in(*a, *b)).collect();
            if p.domain.contains(&x) {
                return x;
            }
        }
    }

    /// Central differences of the closed-form value against the oracle.
    fn fd_check(p: &ProblemSpec, x: &[f64], t: f64, region: Region) {
        let e = p.exact(x, t, region);
        let d = p.dim;
        let val = |y: &[f64], s: f64| p.exact(y, s, region).value;
        let h = 1e-5;
        for o in 0..p.outputs() {
            let fd_t = (val(x, t + h)[o] - val(x, t - h)[o]) / (2.0 * h);
            assert!((fd_t - e.dt[o]).abs() <= 1e-5 * e.dt[o].abs().max(1.0), "{:?} dt[{o}]", p.benchmark);
            let mut lap = 0.0;
            for k in 0..d {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                let fd = (val(&xp, t)[o] - val(&xm, t)[o]) / (2.0 * h);
                let an = e.grad[o * d + k];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{:?} grad[{o}][{k}]", p.benchmark);
                let h2 = 1e-4;
                xp[k] = x[k] + h2;
                xm[k] = x[k] - h2;
                lap += (val(&xp, t)[o] - 2.0 * val(x, t)[o] + val(&xm, t)[o]) / (h2 * h2);
            }
            assert!((lap - e.lap[o]).abs() <= 1e-5 * e.lap[o].abs().max(1.0) + 1e-5, "{:?} lap[{o}]: {lap} vs {}", p.benchmark, e.lap[o]);
        }
    }

    #[test]
    fn derivative_oracles_match_finite_differences() {
        let mut rng = Stream::new(1, 77);
        for b in Benchmark::ALL {
            let p = ProblemSpec::benchmark(b);
            for _ in 0..10 {
                let x = random_point(&p, &mut rng);
                let t = rng.uniform_in(0.05, 0.95);
                fd_check(&p, &x, t, Region::Plus);
                fd_check(&p, &x, t, Region::Minus);
            }
        }
    }

    #[test]
    fn manufactured_source_closes_the_equation() {
        let p = ProblemSpec::benchmark(Benchmark::Ex1);
        let x = [0.7, -0.2];
        let t = 0.4;
        for region in [Region::Plus, Region::Minus] {
            let e = p.exact(&x, t, region);
            let f = p.source(&x, t, region);
            assert!((e.dt[0] - p.beta(region) * e.lap[0] - f[0]).abs() < 1e-9);
        }
        let constant = ExactEval { value: vec![2.5], dt: vec![0.0], grad: vec![0.0, 0.0], lap: vec![0.0] };
        assert_eq!(manufacture_source(EquationKind::Parabolic, 2, 3.7, &[0.0, 0.0], &constant), vec![0.0]);
    }

    #[test]
    fn oseen_velocities_are_divergence_free() {
        let p = ProblemSpec::benchmark(Benchmark::Ex3);
        let mut rng = Stream::new(2, 77);
        for _ in 0..100 {
            let x = random_point(&p, &mut rng);
            let t = rng.uniform();
            for region in [Region::Plus, Region::Minus] {
                let e = p.exact(&x, t, region);
                assert!((e.grad[0] + e.grad[3]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ex1_registry_entry() {
        let p = ProblemSpec::by_name("ex1").unwrap();
        assert_eq!((p.beta_plus, p.beta_minus), (10.0, 1.0));
        let ls = p.analytic_level_set().unwrap();
        assert!(ls.value(&[0.3 + PI / 6.0, 0.0], 0.0).unwrap().abs() < 1e-15);
        assert!(matches!(ProblemSpec::by_name("ex9"), Err(Error::UnknownBenchmark(_))));
        let p3 = ProblemSpec::by_name("ex3").unwrap();
        assert_eq!((p3.beta_plus, p3.beta_minus), (1e-3, 1.0));
        assert_eq!(p3.outputs(), 3);
    }

    #[test]
    fn ex1_jumps_vanish_on_the_interface() {
        let p = ProblemSpec::benchmark(Benchmark::Ex1);
        for k in 0..20 {
            let t = k as f64 / 19.0;
            let a = 0.7 * k as f64;
            let n = [a.cos(), a.sin()];
            let x = [0.3 * (PI * t).cos() + EX1_RADIUS * n[0], 0.3 * (PI * t).sin() + EX1_RADIUS * n[1]];
            assert!(p.jump_value(&x, t)[0].abs() < 1e-12);
            assert!(p.jump_flux(&x, t, &n)[0].abs() < 1e-9);
            let plus = p.exact(&x, t, Region::Plus);
            let flux = p.beta_plus * (plus.grad[0] * n[0] + plus.grad[1] * n[1]);
            assert!((flux - 5.0 * EX1_RADIUS.powi(4) / EX1_RADIUS).abs() < 1e-9);
        }
    }

    #[test]
    fn region_from_phi() {
        assert_eq!(Region::from_phi(0.1).unwrap(), Region::Plus);
        assert_eq!(Region::from_phi(-0.1).unwrap(), Region::Minus);
        assert!(matches!(Region::from_phi(0.0), Err(Error::InterfacePoint { .. })));
    }
}

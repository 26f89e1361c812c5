//! Deterministic training and test point sets.
//!
//! Every generator draws from its own named stream of the seed, so changing
//! one count never shifts the points of another set.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::levelset::{LevelSet, RigidMotion};
use crate::geometry::rk4::rk4_advect;
use crate::problem::DomainShape;
use crate::rng::{Stream, STREAM_BOUNDARY, STREAM_INITIAL, STREAM_INTERFACE, STREAM_INTERIOR};

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

/// A point on the interface with its unit normal (pointing into the plus
/// region).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceSample {
    pub x: Vec<f64>,
    pub t: f64,
    pub normal: Vec<f64>,
}

/// Training counts and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_initial: usize,
    pub n_interface: usize,
    /// Equispaced interface times on `[0, t_end]`, endpoints included.
    pub interface_times: usize,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(counts: [usize; 4], seed: u64) -> Self {
        SamplePlan {
            n_interior: counts[0],
            n_boundary: counts[1],
            n_initial: counts[2],
            n_interface: counts[3],
            interface_times: 10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.n_interior, self.n_boundary, self.n_initial, self.n_interface].contains(&0) {
            return Err(Error::InvalidArgument("all sample counts must be at least 1".into()));
        }
        if self.interface_times < 1 {
            return Err(Error::InvalidArgument("interface_times must be at least 1".into()));
        }
        Ok(())
    }

    /// Points per interface time: the total split evenly, rounded, at
    /// least one.
    pub fn interface_per_time(&self) -> usize {
        ((self.n_interface as f64 / self.interface_times as f64).round() as usize).max(1)
    }
}

fn uniform_in_domain(domain: &DomainShape, rng: &mut Stream) -> Vec<f64> {
    let (lo, hi) = domain.bounding_box();
    loop {
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(&l, &h)| rng.uniform_in(l, h)).collect();
        if domain.contains(&x) {
            return x;
        }
    }
}

/// I.i.d. uniform points of `domain x [0, t_end]`; disks by rejection from
/// the bounding box.
pub fn sample_interior(domain: &DomainShape, t_end: f64, n: usize, seed: u64) -> Vec<SpaceTimePoint> {
    let mut rng = Stream::new(seed, STREAM_INTERIOR);
    (0..n)
        .map(|_| {
            let x = uniform_in_domain(domain, &mut rng);
            SpaceTimePoint { x, t: rng.uniform_in(0.0, t_end) }
        })
        .collect()
}

/// Uniform points of the initial slice.
pub fn sample_initial(domain: &DomainShape, n: usize, seed: u64) -> Vec<SpaceTimePoint> {
    let mut rng = Stream::new(seed, STREAM_INITIAL);
    (0..n).map(|_| SpaceTimePoint { x: uniform_in_domain(domain, &mut rng), t: 0.0 }).collect()
}

/// Uniform points of `boundary x [0, t_end]`. Box faces are chosen with
/// probability proportional to their measure.
pub fn sample_boundary(domain: &DomainShape, t_end: f64, n: usize, seed: u64) -> Vec<SpaceTimePoint> {
    let mut rng = Stream::new(seed, STREAM_BOUNDARY);
    match domain {
        DomainShape::Box { lower, upper } => {
            let d = lower.len();
            let extent: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
            // each axis owns two faces of equal measure
            let face: Vec<f64> =
                (0..d).map(|k| (0..d).filter(|&j| j != k).map(|j| extent[j]).product::<f64>()).collect();
            let total: f64 = 2.0 * face.iter().sum::<f64>();
            (0..n)
                .map(|_| {
                    let mut pick = rng.uniform() * total;
                    let mut axis = d - 1;
                    let mut high = true;
                    'search: for k in 0..d {
                        for side in [false, true] {
                            if pick < face[k] {
                                axis = k;
                                high = side;
                                break 'search;
                            }
                            pick -= face[k];
                        }
                    }
                    let mut x: Vec<f64> = (0..d).map(|j| rng.uniform_in(lower[j], upper[j])).collect();
                    x[axis] = if high { upper[axis] } else { lower[axis] };
                    SpaceTimePoint { x, t: rng.uniform_in(0.0, t_end) }
                })
                .collect()
        }
        DomainShape::Disk { center, radius } => (0..n)
            .map(|_| {
                let a = rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
                let x = vec![center[0] + radius * a.cos(), center[1] + radius * a.sin()];
                SpaceTimePoint { x, t: rng.uniform_in(0.0, t_end) }
            })
            .collect(),
    }
}

/// How a point of the initial interface is carried to time `t`.
pub enum InterfacePlacement<'a> {
    /// Exact rigid motion.
    Rigid(&'a RigidMotion),
    /// RK4 advection through a velocity field with `steps_per_unit` steps
    /// per unit time.
    Advect { velocity: &'a (dyn Fn(&[f64], f64) -> Vec<f64> + Sync), steps_per_unit: usize },
}

impl InterfacePlacement<'_> {
    fn place(&self, y: &[f64], t: f64) -> Result<Vec<f64>> {
        match self {
            InterfacePlacement::Rigid(m) => Ok(m.push_forward(y, t)),
            InterfacePlacement::Advect { velocity, steps_per_unit } => {
                let steps = ((t * *steps_per_unit as f64).ceil() as usize).max(1);
                rk4_advect(*velocity, y, 0.0, t, steps)
            }
        }
    }
}

/// Equispaced times on `[0, t_end]` including both endpoints.
pub fn equispaced_times(t_end: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|j| t_end * j as f64 / (n - 1) as f64).collect()
}

const MAX_RESAMPLES: usize = 1000;

/// Interface samples at equispaced times: uniform parameter samples of the
/// initial interface carried forward by `placement`, with unit normals
/// from `ls`. A sample with a degenerate gradient is redrawn.
pub fn sample_interface(
    ls: &LevelSet,
    placement: &InterfacePlacement<'_>,
    per_time: usize,
    times: &[f64],
    seed: u64,
) -> Result<Vec<InterfaceSample>> {
    // draw reference points sequentially so the stream is schedule independent
    let mut rng = Stream::new(seed, STREAM_INTERFACE);
    let slots: Vec<(f64, Vec<Vec<f64>>)> = times
        .iter()
        .map(|&t| {
            let refs = (0..per_time * 4).map(|_| ls.initial().sample_zero_set(&mut rng)).collect();
            (t, refs)
        })
        .collect();
    let per_slot: Vec<Vec<InterfaceSample>> = slots
        .into_par_iter()
        .map(|(t, refs)| {
            let mut out = Vec::with_capacity(per_time);
            let mut refs = refs.into_iter();
            let mut extra = Stream::new(seed ^ t.to_bits(), STREAM_INTERFACE);
            let mut attempts = 0;
            while out.len() < per_time {
                let y = refs.next().unwrap_or_else(|| ls.initial().sample_zero_set(&mut extra));
                let x = placement.place(&y, t)?;
                if let Some(normal) = ls.eval(&x, t)?.normal() {
                    out.push(InterfaceSample { x, t, normal });
                } else {
                    attempts += 1;
                    if attempts > MAX_RESAMPLES {
                        return Err(Error::InvalidArgument(format!("degenerate interface at t = {t}")));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_slot.into_iter().flatten().collect())
}

/// Tensor-product equispaced grid, time outermost, then the spatial axes
/// in order. Disk domains keep the nodes inside the disk.
pub fn test_grid(domain: &DomainShape, t_end: f64, resolution: usize, n_times: usize) -> Result<Vec<SpaceTimePoint>> {
    if resolution < 2 || n_times < 1 {
        return Err(Error::InvalidArgument("test grid needs resolution >= 2 and at least one time".into()));
    }
    let (lo, hi) = domain.bounding_box();
    let d = lo.len();
    let axis = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (resolution - 1) as f64;
    let per_slice = resolution.pow(d as u32);
    let mut out = Vec::new();
    for t in equispaced_times(t_end, n_times) {
        for flat in 0..per_slice {
            let mut rem = flat;
            let mut x = vec![0.0; d];
            for k in (0..d).rev() {
                x[k] = axis(k, rem % resolution);
                rem /= resolution;
            }
            if domain.contains(&x) {
                out.push(SpaceTimePoint { x, t });
            }
        }
    }
    Ok(out)
}

/// The four training sets of one plan.
#[derive(Debug, Clone)]
pub struct TrainingSets {
    pub interior: Vec<SpaceTimePoint>,
    pub boundary: Vec<SpaceTimePoint>,
    pub initial: Vec<SpaceTimePoint>,
    pub interface: Vec<InterfaceSample>,
}

impl TrainingSets {
    pub fn generate(
        domain: &DomainShape,
        t_end: f64,
        plan: &SamplePlan,
        ls: &LevelSet,
        placement: &InterfacePlacement<'_>,
    ) -> Result<Self> {
        plan.validate()?;
        Ok(TrainingSets {
            interior: sample_interior(domain, t_end, plan.n_interior, plan.seed),
            boundary: sample_boundary(domain, t_end, plan.n_boundary, plan.seed),
            initial: sample_initial(domain, plan.n_initial, plan.seed),
            interface: sample_interface(
                ls,
                placement,
                plan.interface_per_time(),
                &equispaced_times(t_end, plan.interface_times),
                plan.seed,
            )?,
        })
    }

    /// Debug dump with columns `x..., t, set`.
    pub fn to_csv(&self) -> String {
        let d = self.interior.first().map_or(0, |p| p.x.len());
        let mut s = String::new();
        for k in 0..d {
            let _ = write!(s, "x{k},");
        }
        s.push_str("t,set\n");
        let mut row = |x: &[f64], t: f64, tag: &str| {
            for v in x {
                let _ = write!(s, "{v:.17e},");
            }
            let _ = writeln!(s, "{t:.17e},{tag}");
        };
        for p in &self.interior {
            row(&p.x, p.t, "interior");
        }
        for p in &self.boundary {
            row(&p.x, p.t, "boundary");
        }
        for p in &self.initial {
            row(&p.x, p.t, "initial");
        }
        for p in &self.interface {
            row(&p.x, p.t, "interface");
        }
        s
    }
}

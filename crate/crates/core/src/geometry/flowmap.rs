//! Learned inverse flow maps and the composite neural level set.
//!
//! A sub-map on `[T_{k-1}, T_k]` is `X(x, t) = x + F(x, t)` with `F` a network
//! in `(x, t)`. It carries a point at time `t` back to its position at
//! `T_{k-1}`. For `t` in `(T_{k-1}, T_k]` the full inverse map applies sub-map
//! `k` at `t`, then sub-maps `k-1, ..., 1` at their own end times, and the
//! level set is `phi0` of the result.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::small_det;
use crate::lm::{self, LeastSquares, LmConfig, LmTrace};
use crate::net::{JetSpec, Mlp};
use crate::problem::DomainShape;

use super::levelset::{InitialLevelSet, LevelSetSample};
use super::rk4::TrajectoryTable;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub net: Mlp,
    pub t_start: f64,
    pub t_end: f64,
}

/// Value, spatial Jacobian, Laplacian and time derivative of a vector map.
#[derive(Debug, Clone)]
pub struct MapJet {
    pub y: Vec<f64>,
    /// Row-major `d x d`, `jac[a * d + i] = dy_a / dx_i`.
    pub jac: Vec<f64>,
    pub lap: Vec<f64>,
    pub dt: Vec<f64>,
}

impl FlowMap {
    pub fn new(net: Mlp, t_start: f64, t_end: f64) -> Result<Self> {
        let d = net.output_dim();
        if net.input_dim() != d + 1 {
            return Err(Error::InvalidArgument(format!(
                "flow-map net needs {} inputs for {d} outputs, got {}",
                d + 1,
                net.input_dim()
            )));
        }
        Ok(FlowMap { net, t_start, t_end })
    }

    pub fn dim(&self) -> usize {
        self.net.output_dim()
    }

    fn input(x: &[f64], t: f64) -> Vec<f64> {
        let mut v = x.to_vec();
        v.push(t);
        v
    }

    /// `x + F(x, t)`.
    pub fn apply(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let f = self.net.forward(&Self::input(x, t))?;
        Ok(x.iter().zip(f).map(|(a, b)| a + b).collect())
    }

    /// Spatial Jacobian `I + grad F` (row-major).
    pub fn jacobian(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let d = self.dim();
        let jet = self.net.jet(&Self::input(x, t), &JetSpec::first())?;
        let mut jac = vec![0.0; d * d];
        for a in 0..d {
            for i in 0..d {
                jac[a * d + i] = jet.d(a, i)? + if a == i { 1.0 } else { 0.0 };
            }
        }
        Ok(jac)
    }

    /// Value, Jacobian, per-output Hessians (row-major, `d` blocks of
    /// `d x d`) and time derivative.
    fn second_order(&self, x: &[f64], t: f64) -> Result<(MapJet, Vec<f64>)> {
        let d = self.dim();
        let vars: Vec<usize> = (0..d).collect();
        let jet = self.net.jet(&Self::input(x, t), &JetSpec::second(&vars))?;
        let mut out = MapJet { y: vec![0.0; d], jac: vec![0.0; d * d], lap: vec![0.0; d], dt: vec![0.0; d] };
        let mut hess = vec![0.0; d * d * d];
        for a in 0..d {
            out.y[a] = x[a] + jet.value(a);
            out.dt[a] = jet.d(a, d)?;
            for i in 0..d {
                out.jac[a * d + i] = jet.d(a, i)? + if a == i { 1.0 } else { 0.0 };
                for j in 0..d {
                    hess[a * d * d + i * d + j] = jet.h(a, i, j)?;
                }
                out.lap[a] += hess[a * d * d + i * d + i];
            }
        }
        Ok((out, hess))
    }

    pub fn min_jacobian_det(&self, t: f64, nodes: &[Vec<f64>]) -> Result<f64> {
        let d = self.dim();
        let dets: Vec<f64> =
            nodes.par_iter().map(|x| self.jacobian(x, t).map(|j| small_det(&j, d))).collect::<Result<_>>()?;
        Ok(dets.into_iter().fold(f64::INFINITY, f64::min))
    }
}

/// Tensor-product grid with spacing at most `h` over the domain (interior
/// nodes only for disks).
pub fn grid_nodes(domain: &DomainShape, h: f64) -> Result<Vec<Vec<f64>>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("grid spacing must be positive".into()));
    }
    let (lo, hi) = domain.bounding_box();
    let counts: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / h - 1e-9).ceil() as usize + 1).collect();
    let mut nodes = Vec::new();
    let total: usize = counts.iter().product();
    for flat in 0..total {
        let mut rem = flat;
        let mut x = vec![0.0; lo.len()];
        for k in (0..lo.len()).rev() {
            let idx = rem % counts[k];
            rem /= counts[k];
            x[k] = lo[k] + (hi[k] - lo[k]) * idx as f64 / (counts[k] - 1) as f64;
        }
        if domain.contains(&x) {
            nodes.push(x);
        }
    }
    Ok(nodes)
}

#[derive(Debug, Clone)]
pub struct CompositeLevelSet {
    initial: InitialLevelSet,
    maps: Vec<FlowMap>,
}

impl CompositeLevelSet {
    pub fn new(initial: InitialLevelSet, maps: Vec<FlowMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidArgument("composite level set needs at least one sub-map".into()));
        }
        if maps[0].t_start != 0.0 {
            return Err(Error::InvalidArgument("first sub-map must start at t = 0".into()));
        }
        for w in maps.windows(2) {
            if w[0].t_end != w[1].t_start {
                return Err(Error::InvalidArgument("sub-map intervals must tile the time range".into()));
            }
        }
        if maps.iter().any(|m| !(m.t_end > m.t_start) || m.dim() != initial.dim()) {
            return Err(Error::InvalidArgument("sub-map intervals must be increasing and match the dimension".into()));
        }
        Ok(CompositeLevelSet { initial, maps })
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn t_end(&self) -> f64 {
        self.maps.last().unwrap().t_end
    }

    pub fn initial(&self) -> &InitialLevelSet {
        &self.initial
    }

    pub fn maps(&self) -> &[FlowMap] {
        &self.maps
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend(self.maps.iter().map(|m| m.t_end));
        b
    }

    /// Index of the sub-map active at `t`, or `None` at `t = 0`.
    fn active(&self, t: f64) -> Option<usize> {
        if t <= 0.0 {
            return None;
        }
        Some(self.maps.iter().position(|m| t <= m.t_end).unwrap_or(self.maps.len() - 1))
    }

    /// Position at time 0 of the point at `x` at time `t`.
    pub fn pull_back(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let Some(k) = self.active(t) else {
            return Ok(x.to_vec());
        };
        let mut y = self.maps[k].apply(x, t)?;
        for m in self.maps[..k].iter().rev() {
            y = m.apply(&y, m.t_end)?;
        }
        Ok(y)
    }

    /// Pull-back with its spatial Jacobian, Laplacian and time derivative.
    pub fn pull_back_jet(&self, x: &[f64], t: f64) -> Result<MapJet> {
        let d = self.dim();
        let Some(k) = self.active(t) else {
            let mut jac = vec![0.0; d * d];
            for i in 0..d {
                jac[i * d + i] = 1.0;
            }
            return Ok(MapJet { y: x.to_vec(), jac, lap: vec![0.0; d], dt: vec![0.0; d] });
        };
        let (mut acc, _) = self.maps[k].second_order(x, t)?;
        for m in self.maps[..k].iter().rev() {
            let (outer, hess) = m.second_order(&acc.y, m.t_end)?;
            let mut jac = vec![0.0; d * d];
            let mut lap = vec![0.0; d];
            let mut dt = vec![0.0; d];
            for a in 0..d {
                for i in 0..d {
                    jac[a * d + i] = (0..d).map(|b| outer.jac[a * d + b] * acc.jac[b * d + i]).sum();
                }
                dt[a] = (0..d).map(|b| outer.jac[a * d + b] * acc.dt[b]).sum();
                let mut l = (0..d).map(|b| outer.jac[a * d + b] * acc.lap[b]).sum::<f64>();
                for i in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            l += hess[a * d * d + b * d + c] * acc.jac[b * d + i] * acc.jac[c * d + i];
                        }
                    }
                }
                lap[a] = l;
            }
            acc = MapJet { y: outer.y, jac, lap, dt };
        }
        Ok(acc)
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.initial.value(&self.pull_back(x, t)?))
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<LevelSetSample> {
        let d = self.dim();
        let mj = self.pull_back_jet(x, t)?;
        let g0 = self.initial.gradient(&mj.y);
        let h0 = self.initial.hessian(&mj.y);
        let grad: Vec<f64> = (0..d).map(|i| (0..d).map(|a| g0[a] * mj.jac[a * d + i]).sum()).collect();
        let mut lap = g0.iter().zip(&mj.lap).map(|(g, l)| g * l).sum::<f64>();
        for i in 0..d {
            for a in 0..d {
                for b in 0..d {
                    lap += h0[a * d + b] * mj.jac[a * d + i] * mj.jac[b * d + i];
                }
            }
        }
        let dt = g0.iter().zip(&mj.dt).map(|(g, v)| g * v).sum();
        Ok(LevelSetSample { phi: self.initial.value(&mj.y), grad, dt, lap })
    }

    /// Text checkpoint: header, interval table, then each sub-network.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::from("evpinn-levelset 1\n");
        writeln!(out, "maps {}", self.maps.len()).unwrap();
        for m in &self.maps {
            writeln!(out, "interval {:.16e} {:.16e}", m.t_start, m.t_end).unwrap();
            out.push_str(&m.net.to_checkpoint_string());
            out.push_str("end\n");
        }
        out
    }

    /// Parses [`Self::to_checkpoint_string`] output; `initial` is supplied by
    /// the benchmark.
    pub fn from_checkpoint_str(initial: InitialLevelSet, text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("level-set checkpoint: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("evpinn-levelset 1") {
            return Err(bad("missing header"));
        }
        let n: usize = lines
            .next()
            .and_then(|l| l.trim().strip_prefix("maps "))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing map count"))?;
        let mut maps = Vec::with_capacity(n);
        for _ in 0..n {
            let iv: Vec<f64> = lines
                .next()
                .and_then(|l| l.trim().strip_prefix("interval "))
                .ok_or_else(|| bad("missing interval"))?
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad interval")))
                .collect::<Result<_>>()?;
            if iv.len() != 2 {
                return Err(bad("bad interval"));
            }
            let mut body = String::new();
            for l in lines.by_ref() {
                if l.trim() == "end" {
                    break;
                }
                body.push_str(l);
                body.push('\n');
            }
            maps.push(FlowMap::new(Mlp::from_checkpoint_str(&body)?, iv[0], iv[1])?);
        }
        CompositeLevelSet::new(initial, maps)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }
}

/// Least-squares loss of one sub-map: identity at the interval start on
/// domain anchors, and trajectory matching back to the start positions.
pub struct FlowMapLoss<'a> {
    dims: Vec<usize>,
    anchors: &'a [Vec<f64>],
    table: &'a TrajectoryTable,
    start_index: usize,
    time_indices: Vec<usize>,
}

impl<'a> FlowMapLoss<'a> {
    /// `time_indices` index `table.times`; the first entry is the interval
    /// start `T_{k-1}`.
    pub fn new(dims: &[usize], anchors: &'a [Vec<f64>], table: &'a TrajectoryTable, time_indices: Vec<usize>) -> Result<Self> {
        let start_index = *time_indices.first().ok_or(Error::EmptySet)?;
        if anchors.is_empty() || table.initial.is_empty() {
            return Err(Error::EmptySet);
        }
        if time_indices.iter().any(|&j| j >= table.times.len()) {
            return Err(Error::InvalidArgument("trajectory time index out of range".into()));
        }
        Ok(FlowMapLoss { dims: dims.to_vec(), anchors, table, start_index, time_indices })
    }

    fn d(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn net(&self, params: &[f64]) -> Result<Mlp> {
        Mlp::from_params(&self.dims, crate::net::Activation::Tanh, params.to_vec())
    }

    /// `(input point, time, target, weight)` for every row group.
    fn rows(&self) -> impl Iterator<Item = (&[f64], f64, Option<&[f64]>, f64)> + '_ {
        let t0 = self.table.times[self.start_index];
        let wa = (1.0 / self.anchors.len() as f64).sqrt();
        let wt = (1.0 / (self.time_indices.len() * self.table.initial.len()) as f64).sqrt();
        let anchors = self.anchors.iter().map(move |x| (x.as_slice(), t0, None, wa));
        let traj = self.time_indices.iter().flat_map(move |&j| {
            let tj = self.table.times[j];
            self.table.positions[j]
                .iter()
                .zip(&self.table.positions[self.start_index])
                .map(move |(x, target)| (x.as_slice(), tj, Some(target.as_slice()), wt))
        });
        anchors.chain(traj)
    }

    pub fn row_count(&self) -> usize {
        self.d() * (self.anchors.len() + self.time_indices.len() * self.table.initial.len())
    }
}

impl LeastSquares for FlowMapLoss<'_> {
    fn n_params(&self) -> usize {
        crate::net::param_count(&self.dims)
    }

    fn residuals(&self, params: &[f64]) -> Result<Vec<f64>> {
        let net = self.net(params)?;
        let d = self.d();
        let groups: Vec<_> = self.rows().collect();
        let chunks: Vec<Vec<f64>> = groups
            .par_iter()
            .map(|&(x, t, target, w)| {
                let mut inp = x.to_vec();
                inp.push(t);
                let f = net.forward(&inp)?;
                Ok((0..d)
                    .map(|a| match target {
                        None => w * f[a],
                        Some(tg) => w * (x[a] + f[a] - tg[a]),
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }

    fn residuals_and_jacobian(&self, params: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let net = self.net(params)?;
        let d = self.d();
        let p = net.param_count();
        let groups: Vec<_> = self.rows().collect();
        let chunks: Vec<(Vec<f64>, Vec<f64>)> = groups
            .par_iter()
            .map(|&(x, t, target, w)| {
                let mut inp = x.to_vec();
                inp.push(t);
                let jet = net.jet(&inp, &JetSpec::value())?;
                let mut r = Vec::with_capacity(d);
                let mut jac = vec![0.0; d * p];
                for a in 0..d {
                    let f = jet.value(a);
                    r.push(match target {
                        None => w * f,
                        Some(tg) => w * (x[a] + f - tg[a]),
                    });
                    let mut seed = jet.seed();
                    seed.add_value(a, w);
                    jet.backprop(&net, &seed, &mut jac[a * p..(a + 1) * p]);
                }
                Ok((r, jac))
            })
            .collect::<Result<_>>()?;
        let mut r = Vec::with_capacity(self.row_count());
        let mut jac = Vec::with_capacity(self.row_count() * p);
        for (ri, ji) in chunks {
            r.extend(ri);
            jac.extend(ji);
        }
        Ok((r, jac))
    }
}

/// Result of fitting one sub-map.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub loss: f64,
    pub trace: LmTrace,
    /// Whether the loss target was reached; the best parameters are kept
    /// either way.
    pub converged: bool,
}

/// Fits `map` in place on the trajectory times `time_indices` (first entry
/// is the interval start).
pub fn fit_flow_map(
    map: &mut FlowMap,
    table: &TrajectoryTable,
    anchors: &[Vec<f64>],
    time_indices: Vec<usize>,
    cfg: &LmConfig,
) -> Result<FitReport> {
    let loss = FlowMapLoss::new(map.net.dims(), anchors, table, time_indices)?;
    let trace = lm::train(&loss, map.net.params(), cfg)?;
    map.net.set_params(&trace.params);
    Ok(FitReport { loss: trace.loss, converged: trace.loss <= cfg.loss_stop, trace })
}

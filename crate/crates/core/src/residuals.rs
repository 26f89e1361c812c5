//! Stacked residual vector of the interface PINN loss and its parameter
//! Jacobian.
//!
//! Every residual row is a linear combination of physical derivatives of
//! the model at one or two probes (a point, a time, a region and the
//! extended variable there) minus a target. Rows are grouped by sample, so
//! the stacked order is block, then sample index, then component, and is
//! independent of the number of worker threads.

use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extension::{extended_variable, interface_limit, seed_quantity, quantity, ExtensionKind, InputLayout, Quantity, ZInfo, INTERFACE_TOL};
use crate::geometry::levelset::LevelSet;
use crate::lm::LeastSquares;
use crate::net::{Activation, DerivativeJet, Mlp, Order};
use crate::problem::{EquationKind, ProblemSpec, Region};
use crate::sampling::{InterfaceSample, SpaceTimePoint, TrainingSets};

/// Points closer to the interface than this are dropped from the PDE block
/// because their coefficient is ambiguous.
pub const PDE_EXCLUSION_TOL: f64 = 1e-10;

/// Step of the one-sided difference in the plain-network flux surrogate.
pub const VANILLA_FD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Pde,
    Boundary,
    Initial,
    FluxJump,
    ValueJump,
}

impl Block {
    pub const ALL: [Block; 5] = [Block::Pde, Block::Boundary, Block::Initial, Block::FluxJump, Block::ValueJump];

    pub fn name(self) -> &'static str {
        match self {
            Block::Pde => "l1_pde",
            Block::Boundary => "l2_boundary",
            Block::Initial => "l3_initial",
            Block::FluxJump => "l4_flux_jump",
            Block::ValueJump => "l5_value_jump",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Network family the system is assembled for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    /// Inputs `(x, t, z)`.
    Extended(ExtensionKind),
    /// Inputs `(x, t)`; the flux jump uses the one-sided difference
    /// surrogate with step `fd_eps`.
    Plain { fd_eps: f64 },
}

impl ModelKind {
    pub fn layout(&self, dim: usize) -> InputLayout {
        InputLayout { dim, extended: matches!(self, ModelKind::Extended(_)) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Each block is divided by its sample count.
    Mean,
    /// Plain sum of squares.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualOptions {
    pub model: ModelKind,
    pub weighting: Weighting,
    /// Per-block weights in `Block::ALL` order.
    pub block_weights: [f64; 5],
}

impl ResidualOptions {
    pub fn new(model: ModelKind) -> Self {
        ResidualOptions { model, weighting: Weighting::Mean, block_weights: [1.0; 5] }
    }
}

/// Model evaluated by a residual system.
#[derive(Debug, Clone, Copy)]
pub enum FieldModel<'a> {
    Net(&'a Mlp),
    /// The closed-form solution of the problem, region by region.
    Exact(&'a ProblemSpec),
}

#[derive(Debug, Clone)]
struct Probe {
    x: Vec<f64>,
    t: f64,
    region: Region,
    z: ZInfo,
    order: Order,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    probe: usize,
    output: usize,
    q: Quantity,
    coef: f64,
}

#[derive(Debug, Clone)]
struct Row {
    terms: Vec<Term>,
    target: f64,
}

/// Rows of one sample sharing the same probes.
#[derive(Debug, Clone)]
struct Group {
    block: Block,
    probes: Vec<Probe>,
    rows: Vec<Row>,
}

/// Residual rows of one training problem, assembled once from the sample
/// sets and evaluated for any parameter vector.
#[derive(Debug, Clone)]
pub struct ResidualSystem {
    dim: usize,
    outputs: usize,
    layout: InputLayout,
    groups: Vec<Group>,
    /// Samples per block.
    counts: [usize; 5],
    /// Row scale per block.
    scales: [f64; 5],
    ranges: Vec<(Block, Range<usize>)>,
    excluded: usize,
}

fn probe_z(model: &ModelKind, ls: &LevelSet, x: &[f64], t: f64, dim: usize) -> Result<(Region, ZInfo)> {
    let e = ls.eval(x, t)?;
    let region = Region::from_phi(e.phi)?;
    let z = match model {
        ModelKind::Extended(kind) => extended_variable(*kind, &e)?,
        ModelKind::Plain { .. } => ZInfo::constant(0.0, dim),
    };
    Ok((region, z))
}

fn term(probe: usize, output: usize, q: Quantity, coef: f64) -> Term {
    Term { probe, output, q, coef }
}

impl ResidualSystem {
    pub fn build(problem: &ProblemSpec, ls: &LevelSet, sets: &TrainingSets, opts: &ResidualOptions) -> Result<Self> {
        problem.validate()?;
        if let ModelKind::Plain { fd_eps } = opts.model {
            if !(fd_eps > 0.0) {
                return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
            }
        }
        if opts.block_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("block weights must be finite and nonnegative".into()));
        }
        let dim = problem.dim;
        let layout = opts.model.layout(dim);
        let mut counts = [0usize; 5];

        let pde: Vec<Option<Group>> = sets
            .interior
            .par_iter()
            .map(|p| {
                if ls.value(&p.x, p.t)?.abs() < PDE_EXCLUSION_TOL {
                    return Ok(None);
                }
                Ok(Some(pde_group(problem, ls, &opts.model, p)?))
            })
            .collect::<Result<_>>()?;
        let excluded = pde.iter().filter(|g| g.is_none()).count();
        let mut groups: Vec<Group> = pde.into_iter().flatten().collect();
        counts[Block::Pde.index()] = groups.len();

        let boundary: Vec<Group> = sets
            .boundary
            .par_iter()
            .map(|p| {
                let (region, z) = probe_z(&opts.model, ls, &p.x, p.t, dim)?;
                let g = problem.boundary_value(&p.x, p.t);
                Ok(value_group(Block::Boundary, p, region, z, &g))
            })
            .collect::<Result<_>>()?;
        counts[Block::Boundary.index()] = boundary.len();
        groups.extend(boundary);

        let initial: Vec<Group> = sets
            .initial
            .par_iter()
            .map(|p| {
                let (region, z) = probe_z(&opts.model, ls, &p.x, 0.0, dim)?;
                let u0 = problem.initial_value(&p.x, region);
                Ok(value_group(Block::Initial, &SpaceTimePoint { x: p.x.clone(), t: 0.0 }, region, z, &u0))
            })
            .collect::<Result<_>>()?;
        counts[Block::Initial.index()] = initial.len();
        groups.extend(initial);

        for s in &sets.interface {
            check_interface_sample(ls, s, dim)?;
        }
        let flux: Vec<Group> =
            sets.interface.par_iter().map(|s| flux_group(problem, ls, &opts.model, s)).collect::<Result<_>>()?;
        counts[Block::FluxJump.index()] = flux.len();
        groups.extend(flux);

        // the value jump vanishes identically for the absolute level set and
        // cannot be represented by a plain network
        if opts.model == ModelKind::Extended(ExtensionKind::Indicator) {
            let jumps: Vec<Group> =
                sets.interface.par_iter().map(|s| value_jump_group(problem, ls, s)).collect::<Result<_>>()?;
            counts[Block::ValueJump.index()] = jumps.len();
            groups.extend(jumps);
        }

        let mut scales = [0.0; 5];
        for b in Block::ALL {
            let n = counts[b.index()];
            let w = opts.block_weights[b.index()];
            scales[b.index()] = match opts.weighting {
                Weighting::Mean if n > 0 => (w / n as f64).sqrt(),
                Weighting::Mean => 0.0,
                Weighting::Sum => w.sqrt(),
            };
        }
        let mut ranges = Vec::new();
        let mut start = 0;
        for b in Block::ALL {
            let len: usize = groups.iter().filter(|g| g.block == b).map(|g| g.rows.len()).sum();
            if len > 0 {
                ranges.push((b, start..start + len));
            }
            start += len;
        }
        Ok(ResidualSystem { dim, outputs: problem.outputs(), layout, groups, counts, scales, ranges, excluded })
    }

    pub fn layout(&self) -> InputLayout {
        self.layout
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn row_count(&self) -> usize {
        self.ranges.last().map_or(0, |(_, r)| r.end)
    }

    /// Row range of every nonempty block, in stacking order.
    pub fn block_ranges(&self) -> &[(Block, Range<usize>)] {
        &self.ranges
    }

    /// Samples that entered `block`.
    pub fn sample_count(&self, block: Block) -> usize {
        self.counts[block.index()]
    }

    /// Interior samples dropped because they lie on the interface.
    pub fn excluded_interior(&self) -> usize {
        self.excluded
    }

    fn check_net(&self, net: &Mlp) -> Result<()> {
        if net.input_dim() != self.layout.n_inputs() {
            return Err(Error::LengthMismatch { expected: self.layout.n_inputs(), got: net.input_dim() });
        }
        if net.output_dim() != self.outputs {
            return Err(Error::LengthMismatch { expected: self.outputs, got: net.output_dim() });
        }
        Ok(())
    }

    fn group_rows(&self, g: &Group, model: FieldModel<'_>, jac: Option<&Mlp>) -> Result<Vec<(f64, Vec<f64>)>> {
        let evals: Vec<ProbeEval> = g
            .probes
            .iter()
            .map(|p| match model {
                FieldModel::Net(net) => {
                    let spec = self.layout.jet_spec(p.order, crate::extension::z_varies(&p.z));
                    Ok(ProbeEval::Jet(net.jet(&self.layout.input(&p.x, p.t, p.z.z), &spec)?))
                }
                FieldModel::Exact(problem) => Ok(ProbeEval::Exact(problem.exact(&p.x, p.t, p.region))),
            })
            .collect::<Result<_>>()?;
        g.rows
            .iter()
            .map(|row| {
                let mut r = -row.target;
                for tm in &row.terms {
                    r += tm.coef * evals[tm.probe].quantity(&self.layout, &g.probes[tm.probe].z, self.dim, tm.output, tm.q)?;
                }
                let grad = match jac {
                    Some(net) => {
                        let mut grad = vec![0.0; net.param_count()];
                        for (k, ev) in evals.iter().enumerate() {
                            let ProbeEval::Jet(jet) = ev else { unreachable!("jacobian needs a network") };
                            let mut seed = jet.seed();
                            for tm in row.terms.iter().filter(|tm| tm.probe == k) {
                                seed_quantity(&mut seed, &self.layout, &g.probes[k].z, tm.output, tm.q, tm.coef)?;
                            }
                            if !seed.is_zero() {
                                jet.backprop(net, &seed, &mut grad);
                            }
                        }
                        grad
                    }
                    None => Vec::new(),
                };
                Ok((r, grad))
            })
            .collect()
    }

    fn assemble(&self, model: FieldModel<'_>, jacobian: bool, weighted: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let jac_net = match (model, jacobian) {
            (FieldModel::Net(net), true) => Some(net),
            (FieldModel::Exact(_), true) => {
                return Err(Error::InvalidArgument("the exact solution has no parameters".into()));
            }
            _ => None,
        };
        if let FieldModel::Net(net) = model {
            self.check_net(net)?;
        }
        let per_group: Vec<Vec<(f64, Vec<f64>)>> =
            self.groups.par_iter().map(|g| self.group_rows(g, model, jac_net)).collect::<Result<_>>()?;
        let p = jac_net.map_or(0, |n| n.param_count());
        let m = self.row_count();
        let mut r = Vec::with_capacity(m);
        let mut j = Vec::with_capacity(if jacobian { m * p } else { 0 });
        for (g, rows) in self.groups.iter().zip(per_group) {
            let s = if weighted { self.scales[g.block.index()] } else { 1.0 };
            for (ri, gi) in rows {
                r.push(s * ri);
                j.extend(gi.into_iter().map(|v| s * v));
            }
        }
        Ok((r, j))
    }

    /// Weighted residual vector.
    pub fn residuals(&self, model: FieldModel<'_>) -> Result<Vec<f64>> {
        Ok(self.assemble(model, false, true)?.0)
    }

    /// Unweighted residuals, `model - target` per row.
    pub fn raw_residuals(&self, model: FieldModel<'_>) -> Result<Vec<f64>> {
        Ok(self.assemble(model, false, false)?.0)
    }

    /// Weighted residuals and row-major Jacobian.
    pub fn residuals_and_jacobian(&self, net: &Mlp) -> Result<(Vec<f64>, Vec<f64>)> {
        self.assemble(FieldModel::Net(net), true, true)
    }

    /// Unweighted residuals and row-major Jacobian.
    pub fn raw_residuals_and_jacobian(&self, net: &Mlp) -> Result<(Vec<f64>, Vec<f64>)> {
        self.assemble(FieldModel::Net(net), true, false)
    }

    /// `sum_b w_b / N_b sum r^2` (mean weighting) or `sum_b w_b sum r^2`.
    pub fn loss(&self, model: FieldModel<'_>) -> Result<f64> {
        Ok(self.residuals(model)?.iter().map(|r| r * r).sum())
    }

    /// Debug dump with columns `block,index,value` of the weighted residuals.
    pub fn dump_csv(&self, model: FieldModel<'_>) -> Result<String> {
        let r = self.residuals(model)?;
        let mut s = String::from("block,index,value\n");
        for (b, range) in &self.ranges {
            for (k, i) in range.clone().enumerate() {
                let _ = writeln!(s, "{},{k},{:.17e}", b.name(), r[i]);
            }
        }
        Ok(s)
    }
}

enum ProbeEval {
    Jet(DerivativeJet),
    Exact(crate::problem::ExactEval),
}

impl ProbeEval {
    fn quantity(&self, layout: &InputLayout, z: &ZInfo, dim: usize, o: usize, q: Quantity) -> Result<f64> {
        match self {
            ProbeEval::Jet(jet) => quantity(jet, layout, z, o, q),
            ProbeEval::Exact(e) => Ok(match q {
                Quantity::Value => e.value[o],
                Quantity::Dt => e.dt[o],
                Quantity::Grad(i) => e.grad[o * dim + i],
                Quantity::Lap => e.lap[o],
            }),
        }
    }
}

fn pde_group(problem: &ProblemSpec, ls: &LevelSet, model: &ModelKind, p: &SpaceTimePoint) -> Result<Group> {
    let d = problem.dim;
    let (region, z) = probe_z(model, ls, &p.x, p.t, d)?;
    let beta = problem.beta(region);
    let f = problem.source(&p.x, p.t, region);
    let rows = match problem.kind {
        EquationKind::Parabolic => vec![Row {
            terms: vec![term(0, 0, Quantity::Dt, 1.0), term(0, 0, Quantity::Lap, -beta)],
            target: f[0],
        }],
        EquationKind::Oseen => {
            let v = problem.velocity(&p.x, p.t);
            let mut rows: Vec<Row> = (0..d)
                .map(|i| {
                    let mut terms = vec![term(0, i, Quantity::Dt, 1.0), term(0, i, Quantity::Lap, -beta)];
                    terms.extend((0..d).map(|k| term(0, i, Quantity::Grad(k), v[k])));
                    terms.push(term(0, d, Quantity::Grad(i), 1.0));
                    Row { terms, target: f[i] }
                })
                .collect();
            rows.push(Row { terms: (0..d).map(|i| term(0, i, Quantity::Grad(i), 1.0)).collect(), target: 0.0 });
            rows
        }
    };
    Ok(Group {
        block: Block::Pde,
        probes: vec![Probe { x: p.x.clone(), t: p.t, region, z, order: Order::Second }],
        rows,
    })
}

fn value_group(block: Block, p: &SpaceTimePoint, region: Region, z: ZInfo, targets: &[f64]) -> Group {
    Group {
        block,
        probes: vec![Probe { x: p.x.clone(), t: p.t, region, z, order: Order::Value }],
        rows: targets
            .iter()
            .enumerate()
            .map(|(o, &g)| Row { terms: vec![term(0, o, Quantity::Value, 1.0)], target: g })
            .collect(),
    }
}

fn check_interface_sample(ls: &LevelSet, s: &InterfaceSample, dim: usize) -> Result<()> {
    if s.normal.len() != dim || s.x.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, got: s.normal.len().min(s.x.len()) });
    }
    let nn = s.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((nn - 1.0).abs() <= 1e-12) {
        return Err(Error::InvalidArgument(format!("interface normal has length {nn}")));
    }
    if ls.is_analytic() {
        let phi = ls.value(&s.x, s.t)?;
        if phi.abs() > INTERFACE_TOL {
            return Err(Error::OffInterface { phi, tol: INTERFACE_TOL });
        }
    }
    Ok(())
}

/// Flux rows `[beta grad u . n] - h_N` (or `[nu d_n u - p n] - h_N` per
/// velocity component) from the one-sided limits of `z`.
fn flux_group(problem: &ProblemSpec, ls: &LevelSet, model: &ModelKind, s: &InterfaceSample) -> Result<Group> {
    let d = problem.dim;
    let h = problem.jump_flux(&s.x, s.t, &s.normal);
    let n = &s.normal;
    let (probes, sides): (Vec<Probe>, [(usize, Region); 2]) = match model {
        ModelKind::Extended(kind) => {
            let e = ls.eval(&s.x, s.t)?;
            let mk = |region| Probe {
                x: s.x.clone(),
                t: s.t,
                region,
                z: interface_limit(*kind, &e, region),
                order: Order::First,
            };
            (vec![mk(Region::Plus), mk(Region::Minus)], [(0, Region::Plus), (1, Region::Minus)])
        }
        // beta+ grad u(x) . n - beta- grad u(x + eps n) . n
        ModelKind::Plain { fd_eps } => {
            let shifted: Vec<f64> = s.x.iter().zip(n).map(|(x, v)| x + fd_eps * v).collect();
            let z = ZInfo::constant(0.0, d);
            (
                vec![
                    Probe { x: s.x.clone(), t: s.t, region: Region::Plus, z: z.clone(), order: Order::First },
                    Probe { x: shifted, t: s.t, region: Region::Minus, z, order: Order::First },
                ],
                [(0, Region::Plus), (1, Region::Minus)],
            )
        }
    };
    let rows = (0..problem.primary_outputs())
        .map(|i| {
            let mut terms = Vec::new();
            for (probe, region) in sides {
                let sign = if region == Region::Plus { 1.0 } else { -1.0 };
                let beta = problem.beta(region);
                terms.extend((0..d).map(|k| term(probe, i, Quantity::Grad(k), sign * beta * n[k])));
                if problem.kind == EquationKind::Oseen {
                    terms.push(term(probe, d, Quantity::Value, -sign * n[i]));
                }
            }
            Row { terms, target: h[i] }
        })
        .collect();
    Ok(Group { block: Block::FluxJump, probes, rows })
}

fn value_jump_group(problem: &ProblemSpec, ls: &LevelSet, s: &InterfaceSample) -> Result<Group> {
    let e = ls.eval(&s.x, s.t)?;
    let h = problem.jump_value(&s.x, s.t);
    let mk = |region| Probe {
        x: s.x.clone(),
        t: s.t,
        region,
        z: interface_limit(ExtensionKind::Indicator, &e, region),
        order: Order::Value,
    };
    Ok(Group {
        block: Block::ValueJump,
        probes: vec![mk(Region::Plus), mk(Region::Minus)],
        rows: (0..problem.primary_outputs())
            .map(|o| Row { terms: vec![term(0, o, Quantity::Value, 1.0), term(1, o, Quantity::Value, -1.0)], target: h[o] })
            .collect(),
    })
}

/// Least-squares view of a residual system over the parameters of a fixed
/// architecture.
pub struct PinnProblem<'a> {
    system: &'a ResidualSystem,
    dims: Vec<usize>,
    activation: Activation,
}

impl<'a> PinnProblem<'a> {
    pub fn new(system: &'a ResidualSystem, template: &Mlp) -> Result<Self> {
        system.check_net(template)?;
        Ok(PinnProblem { system, dims: template.dims().to_vec(), activation: template.activation() })
    }

    fn net(&self, params: &[f64]) -> Result<Mlp> {
        Mlp::from_params(&self.dims, self.activation, params.to_vec())
    }
}

impl LeastSquares for PinnProblem<'_> {
    fn n_params(&self) -> usize {
        crate::net::param_count(&self.dims)
    }

    fn residuals(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.system.residuals(FieldModel::Net(&self.net(params)?))
    }

    fn residuals_and_jacobian(&self, params: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.system.residuals_and_jacobian(&self.net(params)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Benchmark;
    use crate::sampling::{InterfacePlacement, SamplePlan};

    fn setup(b: Benchmark, counts: [usize; 4]) -> (ProblemSpec, LevelSet, TrainingSets) {
        let p = ProblemSpec::benchmark(b);
        let ls = p.analytic_level_set().unwrap();
        let motion = p.rigid_motion().unwrap();
        let mut plan = SamplePlan::new(counts, 11);
        plan.interface_times = 5;
        let sets = TrainingSets::generate(&p.domain, p.t_end, &plan, &ls, &InterfacePlacement::Rigid(&motion)).unwrap();
        (p, ls, sets)
    }

    #[test]
    fn exact_solution_closes_every_block() {
        for b in [Benchmark::Ex1, Benchmark::Ex2, Benchmark::Ex3] {
            let (p, ls, sets) = setup(b, [200, 60, 40, 50]);
            let sys = ResidualSystem::build(&p, &ls, &sets, &ResidualOptions::new(ModelKind::Extended(p.default_extension())))
                .unwrap();
            let r = sys.raw_residuals(FieldModel::Exact(&p)).unwrap();
            let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst <= 1e-8, "{b}: {worst}");
            assert!(sys.loss(FieldModel::Exact(&p)).unwrap() <= 1e-14 * r.len() as f64);
        }
    }

    #[test]
    fn block_layout() {
        let (p, ls, sets) = setup(Benchmark::Ex3, [20, 10, 8, 10]);
        let sys = ResidualSystem::build(&p, &ls, &sets, &ResidualOptions::new(ModelKind::Extended(ExtensionKind::Indicator)))
            .unwrap();
        let names: Vec<&str> = sys.block_ranges().iter().map(|(b, _)| b.name()).collect();
        assert_eq!(names, ["l1_pde", "l2_boundary", "l3_initial", "l4_flux_jump", "l5_value_jump"]);
        let lens: Vec<usize> = sys.block_ranges().iter().map(|(_, r)| r.len()).collect();
        assert_eq!(lens, [20 * 3, 10 * 3, 8 * 2, 10 * 2, 10 * 2]);
        let (p1, ls1, sets1) = setup(Benchmark::Ex1, [20, 10, 8, 10]);
        let abs = ResidualSystem::build(&p1, &ls1, &sets1, &ResidualOptions::new(ModelKind::Extended(ExtensionKind::AbsLevelSet)))
            .unwrap();
        assert_eq!(abs.block_ranges().len(), 4);
        assert_eq!(abs.row_count(), 48);
    }

    #[test]
    fn zero_net_leaves_minus_the_data() {
        let (p, ls, sets) = setup(Benchmark::Ex1, [30, 5, 5, 10]);
        let sys = ResidualSystem::build(&p, &ls, &sets, &ResidualOptions::new(ModelKind::Extended(ExtensionKind::AbsLevelSet)))
            .unwrap();
        let zero = Mlp::zeros(&[4, 6, 1]).unwrap();
        let r = sys.raw_residuals(FieldModel::Net(&zero)).unwrap();
        let (_, pde) = sys.block_ranges()[0].clone();
        assert_eq!(pde.len(), 30);
        for (k, i) in pde.enumerate() {
            let q = &sets.interior[k];
            let region = Region::from_phi(ls.value(&q.x, q.t).unwrap()).unwrap();
            assert_eq!(r[i], -p.source(&q.x, q.t, region)[0]);
        }
        let (_, bnd) = sys.block_ranges()[1].clone();
        for (k, i) in bnd.enumerate() {
            let q = &sets.boundary[k];
            assert_eq!(r[i], -p.boundary_value(&q.x, q.t)[0]);
        }
        assert!(sys.raw_residuals(FieldModel::Net(&Mlp::zeros(&[3, 6, 1]).unwrap())).is_err());
        assert!(sys.raw_residuals(FieldModel::Net(&Mlp::zeros(&[4, 6, 2]).unwrap())).is_err());
    }

    #[test]
    fn oseen_zero_data_and_divergence() {
        let (p, ls, sets) = setup(Benchmark::Ex3, [40, 5, 5, 5]);
        let sys = ResidualSystem::build(&p, &ls, &sets, &ResidualOptions::new(ModelKind::Extended(ExtensionKind::Indicator)))
            .unwrap();
        let r = sys.raw_residuals(FieldModel::Exact(&p)).unwrap();
        // every third PDE row is the divergence of the exact velocity
        let (_, pde) = sys.block_ranges()[0].clone();
        for i in pde.step_by(3).map(|i| i + 2) {
            assert!(r[i].abs() <= 1e-10);
        }
        let zero = Mlp::zeros(&[4, 6, 3]).unwrap();
        let rz = sys.raw_residuals(FieldModel::Net(&zero)).unwrap();
        let (_, pde) = sys.block_ranges()[0].clone();
        for i in pde.step_by(3).map(|i| i + 2) {
            assert_eq!(rz[i], 0.0);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        for (b, kind) in [
            (Benchmark::Ex1, ExtensionKind::AbsLevelSet),
            (Benchmark::Ex3, ExtensionKind::Indicator),
        ] {
            let (p, ls, sets) = setup(b, [6, 4, 3, 5]);
            let sys = ResidualSystem::build(&p, &ls, &sets, &ResidualOptions::new(ModelKind::Extended(kind))).unwrap();
            let net = Mlp::init(&[4, 8, 8, p.outputs()], 3).unwrap();
            let (_, j) = sys.residuals_and_jacobian(&net).unwrap();
            let m = sys.row_count();
            let np = net.param_count();
            let h = 1e-6;
            for k in 0..np {
                let mut a = net.clone();
                a.params_mut()[k] += h;
                let mut c = net.clone();
                c.params_mut()[k] -= h;
                let ra = sys.residuals(FieldModel::Net(&a)).unwrap();
                let rc = sys.residuals(FieldModel::Net(&c)).unwrap();
                for i in 0..m {
                    let fd = (ra[i] - rc[i]) / (2.0 * h);
                    let an = j[i * np + k];
                    assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{b} row {i} param {k}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn plain_flux_surrogate() {
        let (mut p, ls, sets) = setup(Benchmark::Ex1, [5, 5, 5, 10]);
        p.beta_plus = 2.0;
        p.beta_minus = 2.0;
        let eps = VANILLA_FD_EPS;
        let sys = ResidualSystem::build(&p, &ls, &sets, &ResidualOptions::new(ModelKind::Plain { fd_eps: eps })).unwrap();
        let (_, flux) = sys.block_ranges().iter().find(|(b, _)| *b == Block::FluxJump).unwrap().clone();
        let hn: Vec<f64> = sets.interface.iter().map(|s| p.jump_flux(&s.x, s.t, &s.normal)[0]).collect();
        // affine network: both gradients agree, residual is -h_N
        let mut p_lin = vec![0.0; crate::net::param_count(&[3, 1, 1])];
        p_lin[0] = 0.7;
        p_lin[1] = -0.2;
        p_lin[2] = 0.4;
        p_lin[4] = 1.0;
        let lin = Mlp::from_params(&[3, 1, 1], Activation::Identity, p_lin).unwrap();
        let r = sys.raw_residuals(FieldModel::Net(&lin)).unwrap();
        for (k, i) in flux.clone().enumerate() {
            assert!((r[i] + hn[k]).abs() < 1e-12);
        }
        // smooth network: the surrogate is a Taylor remainder of size eps |D^2 u|
        let net = Mlp::init(&[3, 16, 1], 4).unwrap();
        let r = sys.raw_residuals(FieldModel::Net(&net)).unwrap();
        for (k, i) in flux.enumerate() {
            assert!((r[i] + hn[k]).abs() <= 1e-5 * 2.0 * 10.0, "{}", r[i] + hn[k]);
        }
    }

    #[test]
    fn residuals_are_weighted_per_block() {
        let (p, ls, sets) = setup(Benchmark::Ex1, [10, 4, 5, 5]);
        let mut opts = ResidualOptions::new(ModelKind::Extended(ExtensionKind::AbsLevelSet));
        let net = Mlp::init(&[4, 5, 1], 2).unwrap();
        let mean = ResidualSystem::build(&p, &ls, &sets, &opts).unwrap();
        opts.weighting = Weighting::Sum;
        let sum = ResidualSystem::build(&p, &ls, &sets, &opts).unwrap();
        let raw = sum.raw_residuals(FieldModel::Net(&net)).unwrap();
        let weighted = mean.residuals(FieldModel::Net(&net)).unwrap();
        for (b, range) in mean.block_ranges() {
            let n = mean.sample_count(*b) as f64;
            for i in range.clone() {
                assert!((weighted[i] - raw[i] / n.sqrt()).abs() <= 1e-15 * raw[i].abs().max(1.0));
            }
        }
        assert_eq!(sum.loss(FieldModel::Net(&net)).unwrap(), raw.iter().map(|r| r * r).sum::<f64>());
    }

    #[test]
    fn loss_is_invariant_under_point_permutation() {
        let (p, ls, mut sets) = setup(Benchmark::Ex1, [12, 6, 5, 10]);
        let opts = ResidualOptions::new(ModelKind::Extended(ExtensionKind::AbsLevelSet));
        let net = Mlp::init(&[4, 5, 1], 2).unwrap();
        let a = ResidualSystem::build(&p, &ls, &sets, &opts).unwrap().loss(FieldModel::Net(&net)).unwrap();
        sets.interior.reverse();
        sets.interface.reverse();
        let b = ResidualSystem::build(&p, &ls, &sets, &opts).unwrap().loss(FieldModel::Net(&net)).unwrap();
        assert!((a - b).abs() <= 1e-13 * a);
    }

    #[test]
    fn interface_samples_must_be_on_the_interface() {
        let (p, ls, mut sets) = setup(Benchmark::Ex1, [5, 5, 5, 5]);
        sets.interface[0].x[0] += 1e-3;
        let opts = ResidualOptions::new(ModelKind::Extended(ExtensionKind::AbsLevelSet));
        assert!(matches!(ResidualSystem::build(&p, &ls, &sets, &opts), Err(Error::OffInterface { .. })));
        sets.interface[0].x[0] -= 1e-3;
        sets.interface[0].normal = vec![0.0, 0.0];
        assert!(ResidualSystem::build(&p, &ls, &sets, &opts).is_err());
    }
}

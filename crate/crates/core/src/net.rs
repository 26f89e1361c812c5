//! Fully connected feedforward networks with analytic derivative jets.
//!
//! A forward pass propagates, alongside the activations, the first
//! derivatives with respect to every input and the second derivatives with
//! respect to a chosen subset of inputs (Taylor-mode propagation). Parameter
//! gradients of any linear functional of the output jet come from a single
//! reverse sweep over that forward computation, so a residual such as
//! `u_t - beta * lap(u)` costs one forward and one reverse pass per point.
//!
//! Parameters are stored flat, layer by layer: the row-major weight matrix
//! `W^l` (`n_l x n_{l-1}`) followed by the bias `b^l`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{Stream, STREAM_INIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// Linear hidden layers; used as an exactly differentiable test fixture.
    Identity,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        acc += w[0] * w[1] + w[1];
        offsets.push(acc);
    }
    offsets
}

/// Number of trainable entries for the given layer sizes.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Seeded initialization: weights `N(0, 1/fan_in)`, biases zero.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least one hidden layer, got dims {dims:?}"
            )));
        }
        Self::check_dims(dims)?;
        let offsets = layer_offsets(dims);
        let mut params = vec![0.0; *offsets.last().unwrap()];
        let mut rng = Stream::new(seed, STREAM_INIT);
        for l in 1..dims.len() {
            let (n_in, n_out) = (dims[l - 1], dims[l]);
            let scale = 1.0 / (n_in as f64).sqrt();
            let w = &mut params[offsets[l - 1]..offsets[l - 1] + n_in * n_out];
            for v in w.iter_mut() {
                *v = scale * rng.normal();
            }
        }
        Ok(Mlp { dims: dims.to_vec(), activation: Activation::Tanh, params, offsets })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        let offsets = layer_offsets(dims);
        let params = vec![0.0; *offsets.last().unwrap()];
        Ok(Mlp { dims: dims.to_vec(), activation: Activation::Tanh, params, offsets })
    }

    pub fn from_params(dims: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        Self::check_dims(dims)?;
        let offsets = layer_offsets(dims);
        if params.len() != *offsets.last().unwrap() {
            return Err(Error::LengthMismatch { expected: *offsets.last().unwrap(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Mlp { dims: dims.to_vec(), activation, params, offsets })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("invalid layer dims {dims:?}")));
        }
        Ok(())
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.params.copy_from_slice(p);
    }

    /// Returns `(weights, bias)` of affine layer `l` (1-based).
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.dims[l - 1], self.dims[l]);
        let start = self.offsets[l - 1];
        let w = &self.params[start..start + n_in * n_out];
        let b = &self.params[start + n_in * n_out..self.offsets[l]];
        (w, b)
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch { expected: self.input_dim(), got: x.len() });
        }
        let n_layers = self.dims.len() - 1;
        let mut a = x.to_vec();
        for l in 1..=n_layers {
            let (w, b) = self.layer(l);
            let n_in = self.dims[l - 1];
            let mut s: Vec<f64> = b.to_vec();
            for (i, si) in s.iter_mut().enumerate() {
                *si += dot(&w[i * n_in..(i + 1) * n_in], &a);
            }
            if l < n_layers && self.activation == Activation::Tanh {
                s.iter_mut().for_each(|v| *v = v.tanh());
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l });
            }
            a = s;
        }
        Ok(a)
    }

    /// Forward pass carrying the derivative jet requested by `spec`.
    pub fn jet(&self, x: &[f64], spec: &JetSpec) -> Result<DerivativeJet> {
        let n0 = self.input_dim();
        if x.len() != n0 {
            return Err(Error::LengthMismatch { expected: n0, got: x.len() });
        }
        let layout = Layout::new(n0, spec)?;
        let c_count = layout.count;
        let n_layers = self.dims.len() - 1;

        let mut input = vec![0.0; c_count * n0];
        input[..n0].copy_from_slice(x);
        if layout.first {
            for k in 0..n0 {
                input[(1 + k) * n0 + k] = 1.0;
            }
        }
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers.saturating_sub(1));
        acts.push(input);

        for l in 1..=n_layers {
            let (w, b) = self.layer(l);
            let (n_in, n_out) = (self.dims[l - 1], self.dims[l]);
            let prev = &acts[l - 1];
            let mut s = vec![0.0; c_count * n_out];
            // second-order channels of the raw input are zero
            let live = if l == 1 { layout.second_start } else { c_count };
            for c in 0..live {
                let a_c = &prev[c * n_in..(c + 1) * n_in];
                let s_c = &mut s[c * n_out..(c + 1) * n_out];
                for (i, si) in s_c.iter_mut().enumerate() {
                    *si = dot(&w[i * n_in..(i + 1) * n_in], a_c);
                }
            }
            for (si, bi) in s[..n_out].iter_mut().zip(b) {
                *si += bi;
            }
            if s[..n_out].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l });
            }
            if l == n_layers {
                acts.push(s);
            } else {
                let a = activate(self.activation, &layout, &s, n_out);
                acts.push(a);
                pre.push(s);
            }
        }
        Ok(DerivativeJet { layout, dims: self.dims.clone(), activation: self.activation, acts, pre })
    }

    /// Writes the versioned text checkpoint.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "evpinn-mlp 1").unwrap();
        writeln!(out, "activation {}", self.activation.name()).unwrap();
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "dims {}", dims.join(" ")).unwrap();
        writeln!(out, "params {}", self.params.len()).unwrap();
        for p in &self.params {
            writeln!(out, "{p:.16e}").unwrap();
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let bad = |m: &str| Error::Parse(format!("mlp checkpoint: {m}"));
        if lines.next() != Some("evpinn-mlp 1") {
            return Err(bad("missing `evpinn-mlp 1` header"));
        }
        let act = match lines.next().and_then(|l| l.strip_prefix("activation ")) {
            Some("tanh") => Activation::Tanh,
            Some("identity") => Activation::Identity,
            _ => return Err(bad("bad activation line")),
        };
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("dims "))
            .ok_or_else(|| bad("missing dims line"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad dim")))
            .collect::<Result<_>>()?;
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("params "))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing params line"))?;
        let params: Vec<f64> = lines
            .take(count)
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad parameter value")))
            .collect::<Result<_>>()?;
        if params.len() != count {
            return Err(bad("truncated parameter list"));
        }
        Mlp::from_params(&dims, act, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    First,
    Second,
}

/// Which derivative blocks a forward pass should carry.
#[derive(Debug, Clone, PartialEq)]
pub struct JetSpec {
    pub order: Order,
    /// Inputs whose mixed second derivatives are propagated.
    pub hess_vars: Vec<usize>,
}

impl JetSpec {
    pub fn value() -> Self {
        JetSpec { order: Order::Value, hess_vars: Vec::new() }
    }

    pub fn first() -> Self {
        JetSpec { order: Order::First, hess_vars: Vec::new() }
    }

    pub fn second(hess_vars: &[usize]) -> Self {
        JetSpec { order: Order::Second, hess_vars: hess_vars.to_vec() }
    }
}

/// Channel layout: value, one channel per input derivative, one per
/// unordered pair of Hessian variables.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    n_in: usize,
    first: bool,
    second_start: usize,
    count: usize,
    /// (channel of first var, channel of second var) per pair channel
    pairs: Vec<(usize, usize)>,
    pair_lookup: Vec<Option<usize>>,
}

impl Layout {
    fn new(n_in: usize, spec: &JetSpec) -> Result<Self> {
        let first = spec.order >= Order::First;
        let second_start = if first { 1 + n_in } else { 1 };
        let mut pairs = Vec::new();
        let mut pair_lookup = vec![None; n_in * n_in];
        if spec.order == Order::Second {
            for (a, &i) in spec.hess_vars.iter().enumerate() {
                if i >= n_in {
                    return Err(Error::InvalidArgument(format!("hessian variable {i} out of range")));
                }
                for &j in &spec.hess_vars[a..] {
                    let ch = second_start + pairs.len();
                    pair_lookup[i * n_in + j] = Some(ch);
                    pair_lookup[j * n_in + i] = Some(ch);
                    pairs.push((1 + i, 1 + j));
                }
            }
        }
        let count = second_start + pairs.len();
        Ok(Layout { n_in, first, second_start, count, pairs, pair_lookup })
    }

    fn first_channel(&self, k: usize) -> Option<usize> {
        (self.first && k < self.n_in).then_some(1 + k)
    }

    fn pair_channel(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n_in || j >= self.n_in {
            return None;
        }
        self.pair_lookup[i * self.n_in + j]
    }
}

fn activate(act: Activation, layout: &Layout, s: &[f64], n: usize) -> Vec<f64> {
    if act == Activation::Identity {
        return s.to_vec();
    }
    let mut a = vec![0.0; s.len()];
    for j in 0..n {
        let v = s[j].tanh();
        let d1 = 1.0 - v * v;
        let d2 = -2.0 * v * d1;
        a[j] = v;
        for c in 1..layout.second_start {
            a[c * n + j] = d1 * s[c * n + j];
        }
        for (p, &(ci, cj)) in layout.pairs.iter().enumerate() {
            let c = layout.second_start + p;
            a[c * n + j] = d2 * s[ci * n + j] * s[cj * n + j] + d1 * s[c * n + j];
        }
    }
    a
}

/// Network value plus derivative blocks at one input, with the tape needed to
/// pull parameter gradients back through it.
#[derive(Debug, Clone)]
pub struct DerivativeJet {
    layout: Layout,
    dims: Vec<usize>,
    activation: Activation,
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl DerivativeJet {
    fn out(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.dims)
    }

    pub fn value(&self, o: usize) -> f64 {
        self.out()[o]
    }

    pub fn values(&self) -> Vec<f64> {
        self.out()[..self.output_dim()].to_vec()
    }

    /// First derivative of output `o` with respect to input `k`.
    pub fn d(&self, o: usize, k: usize) -> Result<f64> {
        let c = self.layout.first_channel(k).ok_or(Error::MissingJetBlock("first-order"))?;
        Ok(self.out()[c * self.output_dim() + o])
    }

    /// Gradient of output `o` with respect to every input.
    pub fn d_inputs(&self, o: usize) -> Result<Vec<f64>> {
        (0..self.input_dim()).map(|k| self.d(o, k)).collect()
    }

    /// Mixed second derivative of output `o` with respect to inputs `i`, `j`.
    pub fn h(&self, o: usize, i: usize, j: usize) -> Result<f64> {
        let c = self.layout.pair_channel(i, j).ok_or(Error::MissingJetBlock("second-order"))?;
        Ok(self.out()[c * self.output_dim() + o])
    }

    /// Hessian block of output `o` over `vars` (row-major).
    pub fn hessian(&self, o: usize, vars: &[usize]) -> Result<Vec<f64>> {
        let mut h = Vec::with_capacity(vars.len() * vars.len());
        for &i in vars {
            for &j in vars {
                h.push(self.h(o, i, j)?);
            }
        }
        Ok(h)
    }

    /// Zeroed seed over this jet's output channels.
    pub fn seed(&self) -> JetSeed {
        JetSeed {
            layout: self.layout.clone(),
            n_out: self.output_dim(),
            data: vec![0.0; self.layout.count * self.output_dim()],
        }
    }

    /// Inner product of a seed with the output jet.
    pub fn contract(&self, seed: &JetSeed) -> f64 {
        dot(&seed.data, self.out())
    }

    /// Accumulates `d<seed, jet>/d(theta)` into `grad`.
    pub fn backprop(&self, net: &Mlp, seed: &JetSeed, grad: &mut [f64]) {
        debug_assert_eq!(net.dims, self.dims);
        debug_assert_eq!(grad.len(), net.param_count());
        let layout = &self.layout;
        let cc = layout.count;
        let n_layers = self.dims.len() - 1;
        let mut sbar = seed.data.clone();
        for l in (1..=n_layers).rev() {
            let (n_in, n_out) = (self.dims[l - 1], self.dims[l]);
            let start = net.offsets[l - 1];
            let (gw, gb) = grad[start..net.offsets[l]].split_at_mut(n_in * n_out);
            let prev = &self.acts[l - 1];
            let live = if l == 1 { layout.second_start } else { cc };
            for c in 0..live {
                let a_c = &prev[c * n_in..(c + 1) * n_in];
                let sb_c = &sbar[c * n_out..(c + 1) * n_out];
                for (i, &g) in sb_c.iter().enumerate() {
                    if g != 0.0 {
                        axpy(g, a_c, &mut gw[i * n_in..(i + 1) * n_in]);
                    }
                }
            }
            for (gbi, s) in gb.iter_mut().zip(&sbar[..n_out]) {
                *gbi += s;
            }
            if l == 1 {
                break;
            }
            let (w, _) = net.layer(l);
            let mut abar = vec![0.0; cc * n_in];
            for c in 0..cc {
                let sb_c = &sbar[c * n_out..(c + 1) * n_out];
                let ab_c = &mut abar[c * n_in..(c + 1) * n_in];
                for (i, &g) in sb_c.iter().enumerate() {
                    if g != 0.0 {
                        axpy(g, &w[i * n_in..(i + 1) * n_in], ab_c);
                    }
                }
            }
            sbar = match self.activation {
                Activation::Identity => abar,
                Activation::Tanh => {
                    activation_adjoint(layout, &self.pre[l - 2], &self.acts[l - 1], &abar, n_in)
                }
            };
        }
    }

    /// Parameter gradient of output `o`.
    pub fn param_gradient_value(&self, net: &Mlp, o: usize) -> Vec<f64> {
        let mut seed = self.seed();
        seed.add_value(o, 1.0);
        let mut g = vec![0.0; net.param_count()];
        self.backprop(net, &seed, &mut g);
        g
    }

    /// Parameter gradient of `d(output o)/d(input k)`.
    pub fn param_gradient_d(&self, net: &Mlp, o: usize, k: usize) -> Result<Vec<f64>> {
        let mut seed = self.seed();
        seed.add_d(o, k, 1.0)?;
        let mut g = vec![0.0; net.param_count()];
        self.backprop(net, &seed, &mut g);
        Ok(g)
    }
}

fn activation_adjoint(layout: &Layout, s: &[f64], a: &[f64], abar: &[f64], n: usize) -> Vec<f64> {
    let mut sbar = vec![0.0; abar.len()];
    for j in 0..n {
        let v = a[j];
        let d1 = 1.0 - v * v;
        let d2 = -2.0 * v * d1;
        let d3 = -2.0 * d1 * (1.0 - 3.0 * v * v);
        let mut sb0 = abar[j] * d1;
        for c in 1..layout.second_start {
            let ab = abar[c * n + j];
            sbar[c * n + j] += ab * d1;
            sb0 += ab * d2 * s[c * n + j];
        }
        for (p, &(ci, cj)) in layout.pairs.iter().enumerate() {
            let c = layout.second_start + p;
            let ab = abar[c * n + j];
            if ab == 0.0 {
                continue;
            }
            let (si, sj) = (s[ci * n + j], s[cj * n + j]);
            sbar[c * n + j] += ab * d1;
            sb0 += ab * (d3 * si * sj + d2 * s[c * n + j]);
            sbar[ci * n + j] += ab * d2 * sj;
            sbar[cj * n + j] += ab * d2 * si;
        }
        sbar[j] += sb0;
    }
    sbar
}

/// Coefficients of a linear functional over the output jet.
#[derive(Debug, Clone)]
pub struct JetSeed {
    layout: Layout,
    n_out: usize,
    data: Vec<f64>,
}

impl JetSeed {
    pub fn add_value(&mut self, o: usize, coef: f64) {
        self.data[o] += coef;
    }

    pub fn add_d(&mut self, o: usize, k: usize, coef: f64) -> Result<()> {
        let c = self.layout.first_channel(k).ok_or(Error::MissingJetBlock("first-order"))?;
        self.data[c * self.n_out + o] += coef;
        Ok(())
    }

    pub fn add_h(&mut self, o: usize, i: usize, j: usize, coef: f64) -> Result<()> {
        let c = self.layout.pair_channel(i, j).ok_or(Error::MissingJetBlock("second-order"))?;
        self.data[c * self.n_out + o] += coef;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

//! Extended-variable inputs and the chain-rule assembly of PDE derivatives.
//!
//! A network `U(x, t, z)` represents `u(x, t) = U(x, t, z(x, t))`, where `z`
//! is the sign of the level set (indicator) or its absolute value. With
//! `D` denoting partial derivatives of `U`:
//!
//! ```text
//! u_t      = D_t U + z_t D_z U
//! grad u   = grad_x U + D_z U grad z
//! lap u    = lap_x U + 2 grad z . grad_x(D_z U) + |grad z|^2 D_zz U + lap z D_z U
//! ```
//!
//! Networks without the extra input use the same layout with `z` absent.

use crate::error::{Error, Result};
use crate::geometry::levelset::LevelSetSample;
use crate::net::{DerivativeJet, JetSeed, JetSpec, Mlp, Order};
use crate::problem::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionKind {
    Indicator,
    AbsLevelSet,
}

impl ExtensionKind {
    pub fn name(self) -> &'static str {
        match self {
            ExtensionKind::Indicator => "indicator",
            ExtensionKind::AbsLevelSet => "abs",
        }
    }
}

/// Extended variable and its derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ZInfo {
    pub z: f64,
    pub grad: Vec<f64>,
    pub dt: f64,
    pub lap: f64,
}

impl ZInfo {
    pub fn constant(z: f64, dim: usize) -> Self {
        ZInfo { z, grad: vec![0.0; dim], dt: 0.0, lap: 0.0 }
    }

    fn is_constant(&self) -> bool {
        self.dt == 0.0 && self.lap == 0.0 && self.grad.iter().all(|&g| g == 0.0)
    }
}

/// `z` away from the interface.
pub fn extended_variable(kind: ExtensionKind, ls: &LevelSetSample) -> Result<ZInfo> {
    let region = Region::from_phi(ls.phi)?;
    let s = region.sign();
    Ok(match kind {
        ExtensionKind::Indicator => ZInfo::constant(s, ls.grad.len()),
        ExtensionKind::AbsLevelSet => ZInfo {
            z: ls.phi.abs(),
            grad: ls.grad.iter().map(|g| s * g).collect(),
            dt: s * ls.dt,
            lap: s * ls.lap,
        },
    })
}

/// One-sided limit of `z` on the interface, approached from `region`.
pub fn interface_limit(kind: ExtensionKind, ls: &LevelSetSample, region: Region) -> ZInfo {
    let s = region.sign();
    match kind {
        ExtensionKind::Indicator => ZInfo::constant(s, ls.grad.len()),
        ExtensionKind::AbsLevelSet => ZInfo {
            z: 0.0,
            grad: ls.grad.iter().map(|g| s * g).collect(),
            dt: s * ls.dt,
            lap: s * ls.lap,
        },
    }
}

/// Input layout `(x_0, ..., x_{d-1}, t[, z])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputLayout {
    pub dim: usize,
    pub extended: bool,
}

impl InputLayout {
    pub fn n_inputs(&self) -> usize {
        self.dim + 1 + self.extended as usize
    }

    pub fn t_index(&self) -> usize {
        self.dim
    }

    pub fn z_index(&self) -> Option<usize> {
        self.extended.then_some(self.dim + 1)
    }

    pub fn input(&self, x: &[f64], t: f64, z: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_inputs());
        v.extend_from_slice(x);
        v.push(t);
        if self.extended {
            v.push(z);
        }
        v
    }

    /// Jet request for the given order; second-order blocks cover the
    /// spatial inputs plus `z` when `z` varies in space.
    pub fn jet_spec(&self, order: Order, z_varies: bool) -> JetSpec {
        match order {
            Order::Value => JetSpec::value(),
            Order::First => JetSpec::first(),
            Order::Second => {
                let mut vars: Vec<usize> = (0..self.dim).collect();
                if let (Some(zi), true) = (self.z_index(), z_varies) {
                    vars.push(zi);
                }
                JetSpec::second(&vars)
            }
        }
    }
}

/// Physical derivative of the composite `u(x, t) = U(x, t, z(x, t))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Value,
    Dt,
    Grad(usize),
    Lap,
}

impl Quantity {
    pub fn order(self) -> Order {
        match self {
            Quantity::Value => Order::Value,
            Quantity::Dt | Quantity::Grad(_) => Order::First,
            Quantity::Lap => Order::Second,
        }
    }
}

/// Visits `(jet entry, coefficient)` pairs whose weighted sum is `q`.
fn expand(layout: &InputLayout, zi: &ZInfo, q: Quantity, mut visit: impl FnMut(Entry, f64) -> Result<()>) -> Result<()> {
    let z = layout.z_index();
    match q {
        Quantity::Value => visit(Entry::Value, 1.0),
        Quantity::Dt => {
            visit(Entry::D(layout.t_index()), 1.0)?;
            match z {
                Some(zi_idx) if zi.dt != 0.0 => visit(Entry::D(zi_idx), zi.dt),
                _ => Ok(()),
            }
        }
        Quantity::Grad(i) => {
            visit(Entry::D(i), 1.0)?;
            match z {
                Some(zi_idx) if zi.grad[i] != 0.0 => visit(Entry::D(zi_idx), zi.grad[i]),
                _ => Ok(()),
            }
        }
        Quantity::Lap => {
            for i in 0..layout.dim {
                visit(Entry::H(i, i), 1.0)?;
            }
            if let Some(zi_idx) = z {
                let g2: f64 = zi.grad.iter().map(|g| g * g).sum();
                for i in 0..layout.dim {
                    if zi.grad[i] != 0.0 {
                        visit(Entry::H(i, zi_idx), 2.0 * zi.grad[i])?;
                    }
                }
                if g2 != 0.0 {
                    visit(Entry::H(zi_idx, zi_idx), g2)?;
                }
                if zi.lap != 0.0 {
                    visit(Entry::D(zi_idx), zi.lap)?;
                }
            }
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Entry {
    Value,
    D(usize),
    H(usize, usize),
}

/// Evaluates quantity `q` of output `o`.
pub fn quantity(jet: &DerivativeJet, layout: &InputLayout, zi: &ZInfo, o: usize, q: Quantity) -> Result<f64> {
    let mut acc = 0.0;
    expand(layout, zi, q, |e, c| {
        acc += c * match e {
            Entry::Value => jet.value(o),
            Entry::D(k) => jet.d(o, k)?,
            Entry::H(i, j) => jet.h(o, i, j)?,
        };
        Ok(())
    })?;
    Ok(acc)
}

/// Adds `coef * q(output o)` to a backpropagation seed.
pub fn seed_quantity(seed: &mut JetSeed, layout: &InputLayout, zi: &ZInfo, o: usize, q: Quantity, coef: f64) -> Result<()> {
    expand(layout, zi, q, |e, c| match e {
        Entry::Value => {
            seed.add_value(o, coef * c);
            Ok(())
        }
        Entry::D(k) => seed.add_d(o, k, coef * c),
        Entry::H(i, j) => seed.add_h(o, i, j, coef * c),
    })
}

/// Physical derivatives of one output.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeDerivatives {
    pub u: f64,
    pub u_t: f64,
    pub grad_u: Vec<f64>,
    pub lap_u: f64,
}

/// Applies the three chain-rule identities to a jet computed at
/// `(x, t, z(x, t))`.
pub fn assemble_pde_derivatives(jet: &DerivativeJet, layout: &InputLayout, zi: &ZInfo, o: usize) -> Result<PdeDerivatives> {
    Ok(PdeDerivatives {
        u: quantity(jet, layout, zi, o, Quantity::Value)?,
        u_t: quantity(jet, layout, zi, o, Quantity::Dt)?,
        grad_u: (0..layout.dim).map(|i| quantity(jet, layout, zi, o, Quantity::Grad(i))).collect::<Result<_>>()?,
        lap_u: quantity(jet, layout, zi, o, Quantity::Lap)?,
    })
}

/// Tolerance for membership of an analytic interface.
pub const INTERFACE_TOL: f64 = 1e-10;

fn check_on_interface(phi: Option<f64>) -> Result<()> {
    match phi {
        Some(p) if p.abs() > INTERFACE_TOL => Err(Error::OffInterface { phi: p, tol: INTERFACE_TOL }),
        _ => Ok(()),
    }
}

/// `U(x, t, z+) - U(x, t, z-)` per output. `ls.phi` is checked against the
/// interface tolerance when `check` is set (analytic level sets).
pub fn jump_value(net: &Mlp, kind: ExtensionKind, x: &[f64], t: f64, ls: &LevelSetSample, check: bool) -> Result<Vec<f64>> {
    check_on_interface(check.then_some(ls.phi))?;
    let layout = InputLayout { dim: x.len(), extended: true };
    if kind == ExtensionKind::AbsLevelSet {
        return Ok(vec![0.0; net.output_dim()]);
    }
    let plus = net.forward(&layout.input(x, t, interface_limit(kind, ls, Region::Plus).z))?;
    let minus = net.forward(&layout.input(x, t, interface_limit(kind, ls, Region::Minus).z))?;
    Ok(plus.iter().zip(&minus).map(|(a, b)| a - b).collect())
}

/// `beta+ grad u+ . n - beta- grad u- . n` per output from one-sided limits
/// of `z`.
#[allow(clippy::too_many_arguments)]
pub fn jump_flux(
    net: &Mlp,
    kind: ExtensionKind,
    x: &[f64],
    t: f64,
    ls: &LevelSetSample,
    normal: &[f64],
    beta_plus: f64,
    beta_minus: f64,
    check: bool,
) -> Result<Vec<f64>> {
    check_on_interface(check.then_some(ls.phi))?;
    let nn: f64 = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (nn - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("normal has length {nn}")));
    }
    let layout = InputLayout { dim: x.len(), extended: true };
    let side = |region: Region| -> Result<Vec<f64>> {
        let zi = interface_limit(kind, ls, region);
        let jet = net.jet(&layout.input(x, t, zi.z), &JetSpec::first())?;
        (0..net.output_dim())
            .map(|o| {
                let mut acc = 0.0;
                for (i, ni) in normal.iter().enumerate() {
                    acc += ni * quantity(&jet, &layout, &zi, o, Quantity::Grad(i))?;
                }
                Ok(acc)
            })
            .collect()
    };
    let p = side(Region::Plus)?;
    let m = side(Region::Minus)?;
    Ok(p.iter().zip(&m).map(|(a, b)| beta_plus * a - beta_minus * b).collect())
}

/// Whether the extended variable varies in space at this point.
pub fn z_varies(zi: &ZInfo) -> bool {
    !zi.is_constant()
}

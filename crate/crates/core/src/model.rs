//! Trained (or closed-form) solutions and their checkpoints.

use std::path::Path;

use crate::error::{Error, Result};
use crate::extension::{extended_variable, quantity, ExtensionKind, InputLayout, Quantity};
use crate::geometry::levelset::LevelSet;
use crate::net::{JetSpec, Mlp};
use crate::problem::{Benchmark, ProblemSpec, Region};
use crate::residuals::{FieldModel, ModelKind, VANILLA_FD_EPS};

/// Value and spatial gradient of every output at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    pub region: Region,
    pub value: Vec<f64>,
    /// Row-major `outputs x dim`.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Solution {
    Extended { net: Mlp, kind: ExtensionKind },
    Plain { net: Mlp },
    /// The closed-form solution of a benchmark.
    Exact(Benchmark),
}

impl Solution {
    pub fn model_kind(&self) -> Option<ModelKind> {
        match self {
            Solution::Extended { kind, .. } => Some(ModelKind::Extended(*kind)),
            Solution::Plain { .. } => Some(ModelKind::Plain { fd_eps: VANILLA_FD_EPS }),
            Solution::Exact(_) => None,
        }
    }

    pub fn net(&self) -> Option<&Mlp> {
        match self {
            Solution::Extended { net, .. } | Solution::Plain { net } => Some(net),
            Solution::Exact(_) => None,
        }
    }

    /// The model as seen by residual assembly.
    pub fn field<'a>(&'a self, problem: &'a ProblemSpec) -> FieldModel<'a> {
        match self {
            Solution::Extended { net, .. } | Solution::Plain { net } => FieldModel::Net(net),
            Solution::Exact(_) => FieldModel::Exact(problem),
        }
    }

    /// Evaluates at `(x, t)` with the region taken from `ls`; points on the
    /// interface (`|phi| < 1e-12`) give `None`.
    pub fn eval(&self, problem: &ProblemSpec, ls: &LevelSet, x: &[f64], t: f64) -> Result<Option<PointEval>> {
        let e = ls.eval(x, t)?;
        if e.phi.abs() < 1e-12 {
            return Ok(None);
        }
        let region = Region::from_phi(e.phi)?;
        let d = problem.dim;
        let (net, layout, z) = match self {
            Solution::Exact(b) => {
                if *b != problem.benchmark {
                    return Err(Error::InvalidArgument(format!("exact solution of {b} used for {}", problem.benchmark)));
                }
                let ex = problem.exact(x, t, region);
                return Ok(Some(PointEval { region, value: ex.value, grad: ex.grad }));
            }
            Solution::Extended { net, kind } => {
                (net, InputLayout { dim: d, extended: true }, extended_variable(*kind, &e)?)
            }
            Solution::Plain { net } => {
                (net, InputLayout { dim: d, extended: false }, crate::extension::ZInfo::constant(0.0, d))
            }
        };
        if net.input_dim() != layout.n_inputs() {
            return Err(Error::LengthMismatch { expected: layout.n_inputs(), got: net.input_dim() });
        }
        let jet = net.jet(&layout.input(x, t, z.z), &JetSpec::first())?;
        let outs = net.output_dim();
        let mut value = Vec::with_capacity(outs);
        let mut grad = Vec::with_capacity(outs * d);
        for o in 0..outs {
            value.push(jet.value(o));
            for i in 0..d {
                grad.push(quantity(&jet, &layout, &z, o, Quantity::Grad(i))?);
            }
        }
        Ok(Some(PointEval { region, value, grad }))
    }

    pub fn to_checkpoint_string(&self) -> String {
        match self {
            Solution::Exact(b) => format!("evpinn-exact 1\nbenchmark {b}\n"),
            Solution::Extended { net, kind } => {
                format!("evpinn-solution 1\nmodel extended {}\n{}", kind.name(), net.to_checkpoint_string())
            }
            Solution::Plain { net } => format!("evpinn-solution 1\nmodel plain\n{}", net.to_checkpoint_string()),
        }
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("solution checkpoint: {m}"));
        let mut parts = text.splitn(3, '\n');
        let header = parts.next().unwrap_or("").trim();
        let second = parts.next().unwrap_or("").trim();
        match header {
            "evpinn-exact 1" => {
                let name = second.strip_prefix("benchmark ").ok_or_else(|| bad("missing benchmark line"))?;
                Ok(Solution::Exact(name.trim().parse()?))
            }
            "evpinn-solution 1" => {
                let net = Mlp::from_checkpoint_str(parts.next().unwrap_or(""))?;
                match second {
                    "model plain" => Ok(Solution::Plain { net }),
                    "model extended abs" => Ok(Solution::Extended { net, kind: ExtensionKind::AbsLevelSet }),
                    "model extended indicator" => Ok(Solution::Extended { net, kind: ExtensionKind::Indicator }),
                    _ => Err(bad("bad model line")),
                }
            }
            _ => Err(bad("unknown header")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints_round_trip() {
        let net = Mlp::init(&[4, 5, 1], 2).unwrap();
        for s in [
            Solution::Extended { net: net.clone(), kind: ExtensionKind::AbsLevelSet },
            Solution::Extended { net: net.clone(), kind: ExtensionKind::Indicator },
            Solution::Plain { net: Mlp::init(&[3, 5, 1], 2).unwrap() },
            Solution::Exact(Benchmark::Ex3),
        ] {
            assert_eq!(Solution::from_checkpoint_str(&s.to_checkpoint_string()).unwrap(), s);
        }
        assert!(Solution::from_checkpoint_str("evpinn-exact 1\nbenchmark ex7\n").is_err());
        assert!(Solution::from_checkpoint_str("nonsense").is_err());
    }

    #[test]
    fn exact_evaluation_matches_problem() {
        let p = ProblemSpec::benchmark(Benchmark::Ex1);
        let ls = p.analytic_level_set().unwrap();
        let e = Solution::Exact(Benchmark::Ex1).eval(&p, &ls, &[0.9, 0.9], 0.2).unwrap().unwrap();
        assert_eq!(e.region, Region::Plus);
        assert_eq!(e.value, p.exact(&[0.9, 0.9], 0.2, Region::Plus).value);
        assert!(Solution::Exact(Benchmark::Ex2).eval(&p, &ls, &[0.9, 0.9], 0.2).is_err());
    }
}

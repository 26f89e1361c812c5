//! Zero-set extraction and set distances.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::levelset::LevelSet;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn directed(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.par_iter()
        .map(|p| b.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

/// Symmetric Hausdorff distance under the Euclidean metric.
pub fn hausdorff_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(directed(a, b).max(directed(b, a)))
}

/// Points where the level set at time `t` crosses zero along the edges of a
/// uniform `n x n` grid over `[lo, hi]` (linear interpolation per edge, as in
/// marching squares). Two-dimensional fields only.
pub fn zero_crossings_2d(ls: &LevelSet, t: f64, lo: [f64; 2], hi: [f64; 2], n: usize) -> Result<Vec<Vec<f64>>> {
    if ls.dim() != 2 || n < 2 {
        return Err(Error::InvalidArgument("zero crossings need a 2D field and n >= 2".into()));
    }
    let coord = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64;
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| ls.value(&[coord(0, idx / n), coord(1, idx % n)], t))
        .collect::<Result<_>>()?;
    let at = |i: usize, j: usize| values[i * n + j];
    let mut pts = Vec::new();
    let mut edge = |(i0, j0): (usize, usize), (i1, j1): (usize, usize)| {
        let (a, b) = (at(i0, j0), at(i1, j1));
        if a == 0.0 {
            pts.push(vec![coord(0, i0), coord(1, j0)]);
        } else if a * b < 0.0 {
            let s = a / (a - b);
            pts.push(vec![
                coord(0, i0) + s * (coord(0, i1) - coord(0, i0)),
                coord(1, j0) + s * (coord(1, j1) - coord(1, j0)),
            ]);
        }
    };
    for i in 0..n {
        for j in 0..n {
            if i + 1 < n {
                edge((i, j), (i + 1, j));
            }
            if j + 1 < n {
                edge((i, j), (i, j + 1));
            }
        }
    }
    Ok(pts)
}

/// Newton projection of seed points onto the zero set at time `t`; seeds
/// that fail to converge within `max_iter` steps are dropped.
pub fn project_to_zero_set(ls: &LevelSet, t: f64, seeds: &[Vec<f64>], max_iter: usize, tol: f64) -> Result<Vec<Vec<f64>>> {
    let projected: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|s| {
            let mut x = s.clone();
            for _ in 0..max_iter {
                let e = ls.eval(&x, t)?;
                if e.phi.abs() <= tol {
                    return Ok(Some(x));
                }
                let g2: f64 = e.grad.iter().map(|g| g * g).sum();
                if !(g2 > 1e-24) {
                    return Ok(None);
                }
                for (xi, gi) in x.iter_mut().zip(&e.grad) {
                    *xi -= e.phi * gi / g2;
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    Ok(projected.into_iter().flatten().collect())
}

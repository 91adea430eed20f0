use std::cmp::Ordering;

use super::assignment::min_cost_assignment;
use crate::error::{Error, Result};

/// Largest atom count accepted by the exact assignment path.
pub const MAX_ATOMS: usize = 4096;

/// Discrete measure on ℝⁿ: points stored contiguously with positive weights
/// summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

impl EmpiricalMeasure {
    /// Equal-weight cloud.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::Validation("point cloud must be a non-empty multiple of the dimension".into()));
        }
        let count = points.len() / dim;
        Ok(Self { dim, points, weights: vec![1.0 / count as f64; count], uniform: true })
    }

    pub fn weighted(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != weights.len() * dim || weights.is_empty() {
            return Err(Error::Validation("points and weights do not match".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Validation("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("weights sum to {total}")));
        }
        Ok(Self { dim, points, weights, uniform: false })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (k, w) in self.weights.iter().enumerate() {
            for (mi, x) in m.iter_mut().zip(self.point(k)) {
                *mi += w * x;
            }
        }
        m
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pair(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::Validation("measures live in different dimensions".into()));
    }
    if !a.uniform || !b.uniform || a.len() != b.len() {
        return Err(Error::Unsupported("exact W2 needs two equal-weight clouds of equal size".into()));
    }
    if a.len() > MAX_ATOMS {
        return Err(Error::Unsupported(format!("{} atoms exceed the cap of {MAX_ATOMS}", a.len())));
    }
    Ok(())
}

fn sorted(a: &EmpiricalMeasure) -> Vec<f64> {
    let mut v = a.points.clone();
    v.sort_by(f64::total_cmp);
    v
}

/// W₂ between equal-size uniform clouds: sorting for n = 1, optimal
/// assignment otherwise.
pub fn wasserstein2(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    check_pair(a, b)?;
    if a.dim == 1 {
        let (x, y) = (sorted(a), sorted(b));
        let s: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum();
        return Ok((s / x.len() as f64).sqrt());
    }
    wasserstein2_assignment(a, b)
}

/// W₂ between equal-size uniform clouds through the assignment solver, in any dimension.
pub fn wasserstein2_assignment(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    check_pair(a, b)?;
    // Fixed argument order and summation order keep the result exactly symmetric.
    let swap = a.points.iter().zip(&b.points).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(Ordering::Greater);
    let (a, b) = if swap { (b, a) } else { (a, b) };
    let n = a.len();
    let cost: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| sq_dist(a.point(i), b.point(j))).collect();
    let assign = min_cost_assignment(n, &cost);
    let mut matched: Vec<f64> = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    matched.sort_by(f64::total_cmp);
    let total: f64 = matched.iter().sum();
    Ok((total / n as f64).max(0.0).sqrt())
}

/// W₁ between equal-size one-dimensional clouds.
pub fn wasserstein1_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    check_pair(a, b)?;
    if a.dim != 1 {
        return Err(Error::Unsupported("W1 is provided for n = 1 only".into()));
    }
    let (x, y) = (sorted(a), sorted(b));
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64)
}

/// Squared W₂ between two weighted measures on the line by quantile coupling.
fn w2_squared_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    let order = |m: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&i, &j| m.points[i].total_cmp(&m.points[j]));
        idx
    };
    let (ia, ib) = (order(a), order(b));
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (a.weights[ia[0]], b.weights[ib[0]]);
    let mut total = 0.0;
    loop {
        let m = ra.min(rb);
        let d = a.points[ia[i]] - b.points[ib[j]];
        total += m * d * d;
        ra -= m;
        rb -= m;
        if ra <= 1e-15 {
            i += 1;
            if i == ia.len() {
                break;
            }
            ra = a.weights[ia[i]];
        }
        if rb <= 1e-15 {
            j += 1;
            if j == ib.len() {
                break;
            }
            rb = b.weights[ib[j]];
        }
    }
    total
}

fn expand(m: &EmpiricalMeasure, total: usize) -> Option<Vec<f64>> {
    let mut pts = Vec::with_capacity(total * m.dim);
    for (k, w) in m.weights.iter().enumerate() {
        let c = w * total as f64;
        let r = c.round();
        if (c - r).abs() > 1e-9 {
            return None;
        }
        for _ in 0..r as usize {
            pts.extend_from_slice(m.point(k));
        }
    }
    (pts.len() == total * m.dim).then_some(pts)
}

/// Squared W₂ between arbitrary discrete measures. Exact on the line; in
/// higher dimension both measures are expanded to a common equal-weight
/// cloud of at most [`MAX_ATOMS`] points.
pub fn wasserstein2_weighted_squared(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::Validation("measures live in different dimensions".into()));
    }
    if a.dim == 1 {
        return Ok(w2_squared_1d(a, b));
    }
    for total in 1..=MAX_ATOMS {
        if let (Some(pa), Some(pb)) = (expand(a, total), expand(b, total)) {
            let ea = EmpiricalMeasure::uniform(a.dim, pa)?;
            let eb = EmpiricalMeasure::uniform(b.dim, pb)?;
            return Ok(wasserstein2(&ea, &eb)?.powi(2));
        }
    }
    Err(Error::Unsupported(format!("weights admit no common equal-weight expansion within {MAX_ATOMS} atoms")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_example() {
        let a = EmpiricalMeasure::uniform(1, vec![0.0, 2.0]).unwrap();
        let b = EmpiricalMeasure::uniform(1, vec![1.0, 1.0]).unwrap();
        assert_eq!(wasserstein2(&a, &b).unwrap(), 1.0);
        assert_eq!(wasserstein2(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn plane_example() {
        let a = EmpiricalMeasure::uniform(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let b = EmpiricalMeasure::uniform(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((wasserstein2(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_counts_rejected() {
        let a = EmpiricalMeasure::uniform(1, vec![0.0, 2.0]).unwrap();
        let b = EmpiricalMeasure::uniform(1, vec![1.0]).unwrap();
        assert!(matches!(wasserstein2(&a, &b), Err(Error::Unsupported(_))));
    }

    #[test]
    fn weighted_line_and_expansion_agree() {
        let emp = EmpiricalMeasure::uniform(1, vec![0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let law = EmpiricalMeasure::weighted(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        // 0.1 of mass moves distance 1.
        assert!((wasserstein2_weighted_squared(&emp, &law).unwrap() - 0.1).abs() < 1e-12);
        let emp2 = EmpiricalMeasure::uniform(2, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let law2 = EmpiricalMeasure::weighted(2, vec![0.0, 0.0, 1.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert!((wasserstein2_weighted_squared(&emp2, &law2).unwrap() - 0.1).abs() < 1e-12);
    }
}

//! Exact Wasserstein-2 distances between equal-size empirical measures.

use crate::error::{Error, Result};
use crate::stats::compensated_sum;

/// Largest point cloud accepted by [`w2_small_cloud`].
pub const MAX_CLOUD: usize = 256;
/// Largest dimension accepted by [`w2_small_cloud`].
pub const MAX_DIM: usize = 8;

/// `W₂` between two equal-size samples on the line: the root mean square
/// difference of the sorted samples.
pub fn w2_sorted_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "samples have different sizes ({} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Parameter("samples must not be empty".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Parameter("samples must be finite".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let ss = compensated_sum(sa.iter().zip(&sb).map(|(x, y)| (x - y) * (x - y)));
    Ok((ss / a.len() as f64).sqrt())
}

/// Squared Euclidean distance.
pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Cost of an assignment `row i ↦ column perm[i]`, summed in row order.
pub fn assignment_cost(a: &[Vec<f64>], b: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(i, &j)| squared_distance(&a[i], &b[j]))
        .sum()
}

/// Minimum-cost perfect matching (Hungarian method with potentials);
/// returns the column assigned to each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; column 0 is a virtual start node
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Exact `W₂` between two equal-size point clouds in `ℝ^d`.
pub fn w2_small_cloud(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "clouds have different sizes ({} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Parameter("clouds must not be empty".into()));
    }
    if a.len() > MAX_CLOUD {
        return Err(Error::Parameter(format!(
            "clouds larger than {MAX_CLOUD} points are not supported; project onto a scalar \
             functional and use w2_sorted_1d"
        )));
    }
    let d = a[0].len();
    if d == 0 || d > MAX_DIM {
        return Err(Error::Parameter(format!("dimension must lie in 1..={MAX_DIM}")));
    }
    if a.iter().chain(b).any(|p| p.len() != d || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::Parameter("points must be finite and share one dimension".into()));
    }
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| b.iter().map(|y| squared_distance(x, y)).collect())
        .collect();
    let perm = min_cost_assignment(&cost);
    Ok((assignment_cost(a, b, &perm) / a.len() as f64).sqrt())
}

//! Independent test oracles: a brute-force Jacobi eigensolver and a
//! separating-axis rectangle-intersection check. Deliberately share no code
//! with the implementations they cross-check.

#![allow(dead_code)] // each integration test binary uses a subset

use bevhd::scene::Point2;

/// Uniform f64 in [lo, hi) from a splitmix64 stream.
pub fn uniform(state: &mut u64, lo: f64, hi: f64) -> f64 {
    let u = (bevhd::grid::splitmix64(state) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + u * (hi - lo)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major
/// square). Returns (eigenvalues, eigenvectors-as-columns) sorted by
/// descending eigenvalue.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).expect("finite eigenvalues"));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (eigenvalues, eigenvectors)
}

/// An oriented rectangle: center, heading, full length/width.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub center: Point2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Rect {
    fn axes(&self) -> [Point2; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    fn half_extents(&self) -> [f64; 2] {
        [self.length / 2.0, self.width / 2.0]
    }
}

/// Signed separation between two oriented rectangles under SAT: the maximum
/// over the four candidate axes of (center distance along axis − summed
/// projected half-extents). Positive = separated by at least that much;
/// negative = every axis overlaps (intersection), with magnitude the
/// smallest axis penetration.
pub fn sat_signed_separation(a: &Rect, b: &Rect) -> f64 {
    let d = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    let mut best = f64::NEG_INFINITY;
    for (rect, other) in [(a, b), (b, a)] {
        let axes = rect.axes();
        let other_axes = other.axes();
        for (i, axis) in axes.iter().enumerate() {
            let centers = (d[0] * axis[0] + d[1] * axis[1]).abs();
            let ext_self = rect.half_extents()[i];
            let ext_other = other_axes
                .iter()
                .zip(other.half_extents())
                .map(|(oa, h)| h * (oa[0] * axis[0] + oa[1] * axis[1]).abs())
                .sum::<f64>();
            best = best.max(centers - ext_self - ext_other);
        }
    }
    best
}

pub fn sat_intersects(a: &Rect, b: &Rect) -> bool {
    sat_signed_separation(a, b) < 0.0
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn jacobi_recovers_diagonal() {
        let (vals, vecs) = jacobi_eigen(vec![vec![2.0, 0.0], vec![0.0, 5.0]]);
        assert!((vals[0] - 5.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!(vecs[0][1].abs() > 0.99);
    }

    #[test]
    fn sat_axis_aligned_cases() {
        let a = Rect {
            center: [0.0, 0.0],
            heading: 0.0,
            length: 4.0,
            width: 2.0,
        };
        let mut b = a;
        b.center = [10.0, 0.0];
        assert!((sat_signed_separation(&a, &b) - 6.0).abs() < 1e-12);
        b.center = [3.0, 0.0];
        assert!((sat_signed_separation(&a, &b) + 1.0).abs() < 1e-12);
        assert!(sat_intersects(&a, &b));
    }
}

use crate::matrix::Matrix;

use super::{CostMatrix, DistanceMatrix};

/// Absolute slack allowed before a triple counts as a triangle-inequality violation.
pub const TRIANGLE_SLACK: f64 = 1e-12;

/// Floyd–Warshall over the complete graph with edge weights `C_ij`. O(n³).
pub fn geodesic_distance(cost: &CostMatrix) -> DistanceMatrix {
    let n = cost.n();
    let mut d = cost.matrix().clone();
    for i in 0..n {
        d.set(i, i, 0.0);
    }
    let data = d.data_mut();
    for k in 0..n {
        for i in 0..n {
            let dik = data[i * n + k];
            if dik == f64::INFINITY {
                continue;
            }
            for j in 0..n {
                let via = dik + data[k * n + j];
                if via < data[i * n + j] {
                    data[i * n + j] = via;
                }
            }
        }
    }
    DistanceMatrix(d)
}

/// Every `(i, j, k)` with `C_ij > C_ik + C_kj + TRIANGLE_SLACK`, zero-based, in
/// lexicographic order.
pub fn check_triangle_inequality(cost: &CostMatrix) -> Vec<(usize, usize, usize)> {
    violations(cost.matrix())
}

pub(crate) fn violations(c: &Matrix) -> Vec<(usize, usize, usize)> {
    let n = c.n();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let direct = c.get(i, j);
            for k in 0..n {
                if direct > c.get(i, k) + c.get(k, j) + TRIANGLE_SLACK {
                    out.push((i, j, k));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn detour() -> CostMatrix {
        CostMatrix::from_rows(&[
            vec![0.0, 10.0, 1.0],
            vec![10.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    /// Brute-force enumeration of simple paths between two of three nodes.
    fn three_node_paths(c: &CostMatrix, a: usize, b: usize) -> f64 {
        let other = (0..3).find(|&k| k != a && k != b).unwrap();
        f64::min(c.get(a, b), c.get(a, other) + c.get(other, b))
    }

    #[test]
    fn detour_through_third_node() {
        let c = detour();
        let d = geodesic_distance(&c);
        assert_eq!(d.get(0, 1), three_node_paths(&c, 0, 1));
        assert_eq!(d.get(0, 1), 2.0);
        assert_eq!(d.get(1, 0), 2.0);
        assert_eq!(d.get(0, 2), 1.0);
        assert!(violations(d.matrix()).is_empty());
    }

    #[test]
    fn metric_cost_is_its_own_geodesic() {
        let pts = [0.0f64, 0.3, 1.1, 2.0];
        let c = CostMatrix::new(Matrix::from_fn(4, |i, j| (pts[i] - pts[j]).abs())).unwrap();
        assert_eq!(geodesic_distance(&c).matrix(), c.matrix());
        assert!(check_triangle_inequality(&c).is_empty());
    }

    #[test]
    fn zero_cost_gives_zero_distance() {
        let c = CostMatrix::new(Matrix::zeros(3)).unwrap();
        assert!(geodesic_distance(&c).matrix().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn detour_violation_reported() {
        let v = check_triangle_inequality(&detour());
        assert!(v.contains(&(0, 1, 2)));
        assert!(v.contains(&(1, 0, 2)));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn single_point_has_no_triples() {
        let c = CostMatrix::new(Matrix::zeros(1)).unwrap();
        assert!(check_triangle_inequality(&c).is_empty());
    }
}

//! Full-history reference implementations.
//!
//! Everything here keeps every raw observation and recomputes from scratch,
//! which is exactly what the constant-size production state avoids. The code
//! deliberately shares nothing with [`crate::voxel_stats`] or
//! [`crate::renderability`]; tests compare the two.

use crate::Vec3;

/// Every raw observation of one voxel.
#[derive(Debug, Clone, Default)]
pub struct FullHistory {
    pub dirs: Vec<Vec3>,
    pub colors: Vec<Vec3>,
    pub depths: Vec<f64>,
}

impl FullHistory {
    pub fn push(&mut self, dir: Vec3, color: Vec3, depth: f64) {
        self.dirs.push(dir);
        self.colors.push(color);
        self.depths.push(depth);
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

/// `(cos θ, κ)` against the raw directions: max dot product clamped to
/// `[0, 1]`, and the tangent-plane bounding-box test with no inflation.
pub fn exact_bias(history: &FullHistory, query: &Vec3) -> (f64, u8) {
    let mut best = 0.0_f64;
    for d in &history.dirs {
        let c = d.x * query.x + d.y * query.y + d.z * query.z;
        if c > best {
            best = c;
        }
    }
    (best.min(1.0), box_kappa(&history.dirs, query))
}

fn box_kappa(dirs: &[Vec3], query: &Vec3) -> u8 {
    // Coordinate axis with the smallest |component|, first one on ties.
    let comps = [query.x.abs(), query.y.abs(), query.z.abs()];
    let mut axis = 0;
    if comps[1] < comps[axis] {
        axis = 1;
    }
    if comps[2] < comps[axis] {
        axis = 2;
    }
    let mut seed = Vec3::zeros();
    seed[axis] = 1.0;
    let e1 = (seed - query * query[axis]).normalize();
    let e2 = query.cross(&e1);

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for d in dirs {
        if d.dot(query) <= 0.0 {
            continue;
        }
        any = true;
        let p = [d.dot(&e1), d.dot(&e2)];
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let tol = 1e-12;
    if any && lo[0] <= tol && hi[0] >= -tol && lo[1] <= tol && hi[1] >= -tol {
        1
    } else {
        2
    }
}

/// Mean squared discrepancy over ordered pairs,
/// `1/(n(n-1)) Σ_{t≠t'} ‖z_t - z_t'‖²`. Zero for fewer than two samples.
pub fn mean_pairwise_discrepancy(colors: &[Vec3]) -> f64 {
    let n = colors.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (t, a) in colors.iter().enumerate() {
        for (u, b) in colors.iter().enumerate() {
            if t != u {
                total += (a - b).norm_squared();
            }
        }
    }
    total / (n * (n - 1)) as f64
}

/// Pairwise-discrepancy noise score, clamped to `[0, 1]`; 1 below two samples.
pub fn exact_delta(history: &FullHistory) -> f64 {
    if history.colors.len() < 2 {
        return 1.0;
    }
    (1.0 - mean_pairwise_discrepancy(&history.colors)).clamp(0.0, 1.0)
}

/// Unbiased covariance trace by the two-pass formula.
pub fn batch_cov_trace(colors: &[Vec3]) -> f64 {
    let n = colors.len();
    if n < 2 {
        return 0.0;
    }
    let mut mean = [0.0; 3];
    for c in colors {
        for i in 0..3 {
            mean[i] += c[i];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut ss = 0.0;
    for c in colors {
        for i in 0..3 {
            let d = c[i] - mean[i];
            ss += d * d;
        }
    }
    ss / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history() {
        let h = FullHistory::default();
        assert_eq!(exact_bias(&h, &Vec3::z()), (0.0, 2));
        assert_eq!(exact_delta(&h), 1.0);
    }

    #[test]
    fn history_containing_query() {
        let mut h = FullHistory::default();
        h.push(Vec3::x(), Vec3::zeros(), 1.0);
        h.push(Vec3::z(), Vec3::zeros(), 1.0);
        assert_eq!(exact_bias(&h, &Vec3::z()), (1.0, 1));
    }

    #[test]
    fn two_sample_pairwise() {
        let mut h = FullHistory::default();
        h.push(Vec3::z(), Vec3::zeros(), 1.0);
        h.push(Vec3::z(), Vec3::repeat(1.0), 1.0);
        // each ordered pair contributes 3; mean over 2 pairs is 3, 1 - 3 = -2
        assert_eq!(mean_pairwise_discrepancy(&h.colors), 3.0);
        assert_eq!(exact_delta(&h), 0.0);
        assert_eq!(batch_cov_trace(&h.colors), 1.5);
    }

    #[test]
    fn identical_samples() {
        let colors = vec![Vec3::new(0.25, 0.5, 0.75); 5];
        assert_eq!(batch_cov_trace(&colors), 0.0);
        let h = FullHistory {
            dirs: vec![Vec3::z(); 5],
            colors,
            depths: vec![1.0; 5],
        };
        assert_eq!(exact_delta(&h), 1.0);
    }

    #[test]
    fn order_invariant_exactly_for_pairwise() {
        let a = vec![
            Vec3::new(0.375, 0.5, 0.25),
            Vec3::new(0.75, 0.5, 0.125),
            Vec3::new(0.5, 0.0, 1.0),
        ];
        let mut b = a.clone();
        b.reverse();
        // dyadic inputs: every partial sum is exact regardless of order
        assert_eq!(mean_pairwise_discrepancy(&a), mean_pairwise_discrepancy(&b));
    }
}

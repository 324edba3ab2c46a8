//! Amanatides–Woo voxel traversal: every cell a ray segment passes through
//! is visited exactly once, in order.

use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub cell: [i32; 3],
    /// Ray parameter (metres along a unit direction) where the cell is entered.
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Walks the grid with the given `origin` and `cell_size` along
/// `start + t·dir` for `t ∈ [0, t_limit)`. `dir` must be unit length.
pub struct GridWalk {
    cell: [i32; 3],
    step: [i32; 3],
    t_next: [f64; 3],
    t_delta: [f64; 3],
    t_enter: f64,
    t_limit: f64,
}

impl GridWalk {
    pub fn new(origin: &Vec3, cell_size: f64, start: &Vec3, dir: &Vec3, t_limit: f64) -> Self {
        let mut cell = [0; 3];
        let mut step = [0; 3];
        let mut t_next = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let g = (start[a] - origin[a]) / cell_size;
            let idx = g.floor();
            cell[a] = idx as i32;
            if dir[a] > 0.0 {
                step[a] = 1;
                t_next[a] = (origin[a] + (idx + 1.0) * cell_size - start[a]) / dir[a];
                t_delta[a] = cell_size / dir[a];
            } else if dir[a] < 0.0 {
                step[a] = -1;
                t_next[a] = (origin[a] + idx * cell_size - start[a]) / dir[a];
                t_delta[a] = -cell_size / dir[a];
            }
        }
        Self {
            cell,
            step,
            t_next,
            t_delta,
            t_enter: 0.0,
            t_limit,
        }
    }
}

impl Iterator for GridWalk {
    type Item = Crossing;

    fn next(&mut self) -> Option<Crossing> {
        if !(self.t_enter < self.t_limit) {
            return None;
        }
        let mut axis = 0;
        if self.t_next[1] < self.t_next[axis] {
            axis = 1;
        }
        if self.t_next[2] < self.t_next[axis] {
            axis = 2;
        }
        let t_exit = self.t_next[axis];
        let out = Crossing {
            cell: self.cell,
            t_enter: self.t_enter,
            t_exit,
        };
        self.cell[axis] += self.step[axis];
        self.t_next[axis] += self.t_delta[axis];
        self.t_enter = t_exit;
        Some(out)
    }
}

/// Slab test of a ray against an axis-aligned box; `(t_enter, t_exit)` or
/// `None` when missed.
pub fn ray_box(start: &Vec3, dir: &Vec3, lo: &Vec3, hi: &Vec3) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if start[a] < lo[a] || start[a] > hi[a] {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo[a] - start[a]) / dir[a], (hi[a] - start[a]) / dir[a]);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    (t0 <= t1).then_some((t0, t1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    #[test]
    fn axis_aligned_walk() {
        let cells: Vec<_> = GridWalk::new(&Vec3::zeros(), 1.0, &Vec3::new(0.5, 0.5, 0.5), &Vec3::x(), 3.0)
            .map(|c| c.cell)
            .collect();
        assert_eq!(cells, vec![[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
    }

    #[test]
    fn negative_direction_and_origin_offset() {
        let walk: Vec<_> = GridWalk::new(
            &Vec3::new(-1.0, 0.0, 0.0),
            0.5,
            &Vec3::new(0.1, 0.2, 0.2),
            &-Vec3::x(),
            0.7,
        )
        .collect();
        let cells: Vec<_> = walk.iter().map(|c| c.cell).collect();
        assert_eq!(cells, vec![[2, 0, 0], [1, 0, 0], [0, 0, 0]]);
        assert!((walk[0].t_exit - 0.1).abs() < 1e-12);
        assert!((walk[2].t_enter - 0.6).abs() < 1e-12);
    }

    #[test]
    fn matches_slab_oracle_on_random_rays() {
        // Every cell whose box overlaps the segment with positive length is
        // visited, and nothing else, in increasing t.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let start = Vec3::new(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0));
            let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            let limit = rng.gen_range(0.1..5.0);
            let walked: Vec<_> = GridWalk::new(&Vec3::zeros(), 1.0, &start, &dir, limit).collect();
            for w in walked.windows(2) {
                assert!(w[0].t_exit <= w[1].t_exit);
            }
            let got: BTreeSet<_> = walked.iter().map(|c| c.cell).collect();
            assert_eq!(got.len(), walked.len());
            let mut expected = BTreeSet::new();
            for x in -6..13 {
                for y in -6..13 {
                    for z in -6..13 {
                        let lo = Vec3::new(x as f64, y as f64, z as f64);
                        let hi = lo + Vec3::repeat(1.0);
                        if let Some((a, b)) = ray_box(&start, &dir, &lo, &hi) {
                            let (a, b) = (a.max(0.0), b.min(limit));
                            if b - a > 1e-9 {
                                expected.insert([x, y, z]);
                            }
                        }
                    }
                }
            }
            assert!(expected.is_subset(&got));
            for c in got.difference(&expected) {
                // only zero-length touches may differ
                let lo = Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64);
                let (a, b) = ray_box(&start, &dir, &lo, &(lo + Vec3::repeat(1.0))).unwrap();
                assert!(b.min(limit) - a.max(0.0) <= 1e-9);
            }
        }
    }
}

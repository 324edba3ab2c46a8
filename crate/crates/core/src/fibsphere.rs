//! Fibonacci lattice discretisation of the unit sphere.
//!
//! Bin centers follow the golden-angle spiral: `z_k = 1 - 2(k + 0.5)/N`,
//! `φ_k = 2πk/φ_g` with `φ_g` the golden ratio, for `k = 0..N`. The same
//! lattice type backs both the per-voxel visited-direction mask (default 64
//! bins) and the panoramic direction selector (default 10° resolution).

use std::f64::consts::PI;

use crate::{check_unit, Error, Result, Vec3};

const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

/// How to size a lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatticeSpec {
    /// Explicit bin count `N >= 4`.
    Bins(usize),
    /// Target central angle (radians) of one bin; `N = ⌈4π / A⌉` with
    /// `A = 2π(1 - cos(θ/2))` the cap area.
    Resolution(f64),
}

/// Per-bin sets of lattice bins covered by a field of view whose optical
/// axis is aligned with the bin center.
#[derive(Debug, Clone)]
pub struct FovSets {
    half_angle: f64,
    sets: Vec<Vec<usize>>,
}

impl FovSets {
    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    /// `N(k)`, sorted ascending.
    pub fn get(&self, bin: usize) -> &[usize] {
        &self.sets[bin]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.sets.iter().map(Vec::as_slice)
    }
}

/// Deterministic Fibonacci lattice; immutable once built.
#[derive(Debug, Clone)]
pub struct Lattice {
    centers: Vec<Vec3>,
    bin_radius: f64,
    fov: Option<FovSets>,
    columns: Option<Box<CenterColumns>>,
}

/// Center coordinates as zero-padded columns, for lattices of at most 64 bins.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CenterColumns {
    pub x: [f64; 64],
    pub y: [f64; 64],
    pub z: [f64; 64],
}

/// Number of bins implied by a target angular resolution.
pub fn bins_for_resolution(theta_res: f64) -> Result<usize> {
    if !(theta_res > 0.0 && theta_res < PI) {
        return Err(Error::InvalidLattice(format!(
            "angular resolution {theta_res} rad must lie in (0, pi)"
        )));
    }
    let cap_area = 2.0 * PI * (1.0 - (theta_res / 2.0).cos());
    let n = (4.0 * PI / cap_area).ceil();
    Ok(n as usize)
}

impl Lattice {
    pub fn build(spec: LatticeSpec) -> Result<Self> {
        let n = match spec {
            LatticeSpec::Bins(n) => n,
            LatticeSpec::Resolution(theta) => bins_for_resolution(theta)?,
        };
        if n < 4 {
            return Err(Error::InvalidLattice(format!(
                "lattice needs at least 4 bins, got {n}"
            )));
        }
        let nf = n as f64;
        let centers: Vec<Vec3> = (0..n)
            .map(|k| {
                let kf = k as f64;
                let z = 1.0 - 2.0 * (kf + 0.5) / nf;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = 2.0 * PI * kf / GOLDEN_RATIO;
                Vec3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        let bin_radius = covering_radius(&centers);
        let columns = (n <= 64).then(|| {
            let mut cols = Box::new(CenterColumns {
                x: [0.0; 64],
                y: [0.0; 64],
                z: [0.0; 64],
            });
            for (k, c) in centers.iter().enumerate() {
                cols.x[k] = c.x;
                cols.y[k] = c.y;
                cols.z[k] = c.z;
            }
            cols
        });
        Ok(Self {
            centers,
            bin_radius,
            fov: None,
            columns,
        })
    }

    pub(crate) fn columns(&self) -> Option<&CenterColumns> {
        self.columns.as_deref()
    }

    pub fn with_fov(mut self, half_angle: f64) -> Result<Self> {
        self.build_fov_sets(half_angle)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Whether a visited-bin mask over this lattice fits a single `u64`.
    pub fn is_compact(&self) -> bool {
        self.centers.len() <= 64
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    pub fn center(&self, bin: usize) -> Vec3 {
        self.centers[bin]
    }

    /// Largest angle (radians) between any direction and its nearest center.
    pub fn bin_radius(&self) -> f64 {
        self.bin_radius
    }

    pub fn fov_sets(&self) -> Option<&FovSets> {
        self.fov.as_ref()
    }

    /// Index of the center with the largest dot product against `dir`;
    /// ties go to the lowest index.
    pub fn nearest_bin(&self, dir: &Vec3) -> Result<usize> {
        check_unit(dir)?;
        Ok(self.nearest_bin_unchecked(dir))
    }

    /// [`Lattice::nearest_bin`] without the unit-norm check, for callers that
    /// normalise themselves.
    pub fn nearest_bin_unchecked(&self, dir: &Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (k, q) in self.centers.iter().enumerate() {
            let d = q.dot(dir);
            if d > best_dot {
                best_dot = d;
                best = k;
            }
        }
        best
    }

    /// Populates `N(k) = { j : ⟨q_j, q_k⟩ >= cos(half_angle) }` for every bin.
    pub fn build_fov_sets(&mut self, half_angle: f64) -> Result<()> {
        if !(half_angle > 0.0 && half_angle <= PI / 2.0) {
            return Err(Error::InvalidHalfAngle(half_angle));
        }
        let cos_half = half_angle.cos();
        let sets = self
            .centers
            .iter()
            .enumerate()
            .map(|(k, qk)| {
                self.centers
                    .iter()
                    .enumerate()
                    .filter(|&(j, qj)| j == k || qj.dot(qk) >= cos_half)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        self.fov = Some(FovSets { half_angle, sets });
        Ok(())
    }
}

/// Exact covering radius: the largest angular distance from a spherical
/// Voronoi vertex to its generating centers. Vertices are circumcenters of
/// center triples with no other center strictly closer.
fn covering_radius(centers: &[Vec3]) -> f64 {
    let n = centers.len();
    // Equal-area cap radius; Voronoi neighbours sit well within a few of these.
    let cap = (1.0 - 2.0 / n as f64).clamp(-1.0, 1.0).acos();
    let cos_reach = (3.5 * cap).min(PI).cos();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (i + 1..n)
                .filter(|&j| centers[i].dot(&centers[j]) >= cos_reach)
                .collect()
        })
        .collect();

    let mut worst_cos = 1.0_f64;
    for (i, near) in neighbours.iter().enumerate() {
        let qi = centers[i];
        for (a, &j) in near.iter().enumerate() {
            for &k in &near[a + 1..] {
                let normal = (centers[j] - qi).cross(&(centers[k] - qi));
                let len = normal.norm();
                if len < 1e-12 {
                    continue;
                }
                for c in [normal / len, -normal / len] {
                    let d = c.dot(&qi);
                    if d >= worst_cos {
                        continue;
                    }
                    if centers.iter().all(|q| q.dot(&c) <= d + 1e-12) {
                        worst_cos = d;
                    }
                }
            }
        }
    }
    worst_cos.clamp(-1.0, 1.0).acos()
}

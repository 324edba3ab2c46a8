//! Constant-size online state for one surface voxel.
//!
//! Each voxel keeps a visited-direction mask over a [`Lattice`], Welford
//! moments of its observed RGB samples and the best (largest) inverse depth
//! it has been seen at. None of it grows with the number of observations.

use crate::{check_unit, Error, Lattice, Result, Vec3};

/// `√(2 / 1.5)`, maps the per-sample colour standard deviation to `[0, 1]`.
pub const NOISE_ALPHA: f64 = 1.154_700_538_379_251_5;

/// Visited-bin bitset. Lattices with at most 64 bins use a single word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BinMask {
    Compact(u64),
    Wide(Box<[u64]>),
}

impl BinMask {
    pub fn new(n_bins: usize) -> Self {
        if n_bins <= 64 {
            BinMask::Compact(0)
        } else {
            BinMask::Wide(vec![0; n_bins.div_ceil(64)].into_boxed_slice())
        }
    }

    pub fn words(&self) -> &[u64] {
        match self {
            BinMask::Compact(w) => std::slice::from_ref(w),
            BinMask::Wide(ws) => ws,
        }
    }

    fn words_mut(&mut self) -> &mut [u64] {
        match self {
            BinMask::Compact(w) => std::slice::from_mut(w),
            BinMask::Wide(ws) => ws,
        }
    }

    pub fn set(&mut self, bin: usize) {
        self.words_mut()[bin / 64] |= 1 << (bin % 64);
    }

    pub fn contains(&self, bin: usize) -> bool {
        self.words()
            .get(bin / 64)
            .is_some_and(|w| w & (1 << (bin % 64)) != 0)
    }

    pub fn count(&self) -> u32 {
        self.words().iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words().iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &BinMask) {
        for (a, b) in self.words_mut().iter_mut().zip(other.words()) {
            *a |= b;
        }
    }

    /// Indices of set bits, ascending.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words().iter().enumerate().flat_map(|(i, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i * 64 + bit)
            })
        })
    }
}

/// Result of one accepted observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub bin: usize,
    /// At least one colour channel was outside `[0, 1]` and got clamped.
    pub clamped: bool,
}

/// Per-voxel observation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelStats {
    mask: BinMask,
    n_bins: u32,
    n: u64,
    mean: [f64; 3],
    // Upper triangle of the 3x3 scatter matrix: xx, xy, xz, yy, yz, zz.
    m2: [f64; 6],
    rho_max: f64,
}

impl VoxelStats {
    pub fn new(n_bins: usize) -> Self {
        Self {
            mask: BinMask::new(n_bins),
            n_bins: n_bins as u32,
            n: 0,
            mean: [0.0; 3],
            m2: [0.0; 6],
            rho_max: 0.0,
        }
    }

    pub fn for_lattice(lattice: &Lattice) -> Self {
        Self::new(lattice.len())
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins as usize
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mask(&self) -> &BinMask {
        &self.mask
    }

    pub fn mean(&self) -> Vec3 {
        Vec3::from(self.mean)
    }

    /// The six stored scatter entries `xx, xy, xz, yy, yz, zz`.
    pub fn m2(&self) -> [f64; 6] {
        self.m2
    }

    pub fn trace(&self) -> f64 {
        self.m2[0] + self.m2[3] + self.m2[5]
    }

    /// Largest inverse depth observed so far (1/m); 0 when unobserved.
    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn is_observed(&self) -> bool {
        self.n > 0
    }

    /// Records one observation seen along `dir` (camera to voxel, unit
    /// length) with colour `rgb` at range `depth` metres.
    pub fn update(
        &mut self,
        lattice: &Lattice,
        dir: &Vec3,
        rgb: &Vec3,
        depth: f64,
    ) -> Result<UpdateOutcome> {
        if lattice.len() != self.n_bins() {
            return Err(Error::LatticeMismatch {
                left: self.n_bins(),
                right: lattice.len(),
            });
        }
        check_unit(dir)?;
        self.observe_bin(lattice.nearest_bin_unchecked(dir), rgb, depth)
    }

    /// Same as [`VoxelStats::update`] with the direction already binned.
    pub fn observe_bin(&mut self, bin: usize, rgb: &Vec3, depth: f64) -> Result<UpdateOutcome> {
        if !rgb.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFiniteObservation("rgb"));
        }
        if !depth.is_finite() || depth <= 0.0 {
            return Err(Error::NonFiniteObservation("depth"));
        }
        if bin >= self.n_bins() {
            return Err(Error::LatticeMismatch {
                left: self.n_bins(),
                right: bin + 1,
            });
        }
        let clamped = rgb.iter().any(|&c| !(0.0..=1.0).contains(&c));
        let z = rgb.map(|c| c.clamp(0.0, 1.0));

        self.mask.set(bin);
        self.n += 1;
        let n = self.n as f64;
        let delta = [z[0] - self.mean[0], z[1] - self.mean[1], z[2] - self.mean[2]];
        for c in 0..3 {
            self.mean[c] += delta[c] / n;
        }
        let post = [z[0] - self.mean[0], z[1] - self.mean[1], z[2] - self.mean[2]];
        let mut idx = 0;
        for a in 0..3 {
            for b in a..3 {
                self.m2[idx] += post[a] * delta[b];
                idx += 1;
            }
        }
        self.rho_max = self.rho_max.max(1.0 / depth);
        Ok(UpdateOutcome { bin, clamped })
    }

    /// Appearance consistency `δ ∈ [0, 1]`; 1 means identical colours in
    /// every view. Fewer than two samples carry no scatter evidence and score 1.
    pub fn delta(&self) -> f64 {
        if self.n < 2 {
            return 1.0;
        }
        let trs = (self.trace() / (self.n - 1) as f64).max(0.0);
        (1.0 - NOISE_ALPHA * trs.sqrt()).clamp(0.0, 1.0)
    }

    /// Combines two partial summaries of disjoint observation streams.
    pub fn merge(&self, other: &VoxelStats) -> Result<VoxelStats> {
        if self.n_bins != other.n_bins {
            return Err(Error::LatticeMismatch {
                left: self.n_bins(),
                right: other.n_bins(),
            });
        }
        let mut out = self.clone();
        out.mask.union_with(&other.mask);
        out.rho_max = self.rho_max.max(other.rho_max);
        if other.n == 0 {
            return Ok(out);
        }
        if self.n == 0 {
            out.n = other.n;
            out.mean = other.mean;
            out.m2 = other.m2;
            return Ok(out);
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let total = na + nb;
        let d = [
            other.mean[0] - self.mean[0],
            other.mean[1] - self.mean[1],
            other.mean[2] - self.mean[2],
        ];
        let w = na * nb / total;
        let mut idx = 0;
        for a in 0..3 {
            out.mean[a] = self.mean[a] + d[a] * nb / total;
            for b in a..3 {
                out.m2[idx] = self.m2[idx] + other.m2[idx] + w * d[a] * d[b];
                idx += 1;
            }
        }
        out.n = self.n + other.n;
        Ok(out)
    }

    /// Encoded record length for a lattice of `n_bins`.
    pub fn encoded_len(n_bins: usize) -> usize {
        BinMask::new(n_bins).words().len() * 8 + 8 + 3 * 8 + 6 * 8 + 8
    }

    /// Little-endian record: mask words, n, mean, m2, rho_max.
    pub fn encode(&self, out: &mut Vec<u8>) {
        for w in self.mask.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.n.to_le_bytes());
        for v in self.mean.iter().chain(&self.m2) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.rho_max.to_le_bytes());
    }

    /// Inverse of [`VoxelStats::encode`]; returns the bytes consumed.
    pub fn decode(bytes: &[u8], n_bins: usize) -> Result<(VoxelStats, usize)> {
        let len = Self::encoded_len(n_bins);
        if bytes.len() < len {
            return Err(Error::Snapshot("truncated voxel record".into()));
        }
        let mut words = bytes[..len].chunks_exact(8).map(|c| {
            let mut b = [0u8; 8];
            b.copy_from_slice(c);
            b
        });
        let mut stats = VoxelStats::new(n_bins);
        for w in stats.mask.words_mut() {
            *w = u64::from_le_bytes(words.next().unwrap());
        }
        stats.n = u64::from_le_bytes(words.next().unwrap());
        for v in stats.mean.iter_mut().chain(stats.m2.iter_mut()) {
            *v = f64::from_le_bytes(words.next().unwrap());
        }
        stats.rho_max = f64::from_le_bytes(words.next().unwrap());
        if n_bins % 64 != 0 {
            let last = *stats.mask.words().last().unwrap();
            if last >> (n_bins % 64) != 0 {
                return Err(Error::Snapshot("mask bit beyond lattice size".into()));
            }
        }
        if (stats.n == 0) != stats.mask.is_empty() || (stats.n == 0) != (stats.rho_max == 0.0) {
            return Err(Error::Snapshot("inconsistent voxel record".into()));
        }
        Ok((stats, len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::LatticeSpec;
    use proptest::prelude::*;

    fn lattice() -> Lattice {
        Lattice::build(LatticeSpec::Bins(64)).unwrap()
    }

    fn feed(stats: &mut VoxelStats, lattice: &Lattice, colors: &[Vec3]) {
        for (i, c) in colors.iter().enumerate() {
            let dir = lattice.center(i % lattice.len());
            stats.update(lattice, &dir, c, 1.0 + i as f64 * 0.01).unwrap();
        }
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn alpha_constant() {
        assert_eq!(NOISE_ALPHA, (2.0f64 / 1.5).sqrt());
    }

    #[test]
    fn single_sample() {
        let l = lattice();
        let mut s = VoxelStats::for_lattice(&l);
        s.update(&l, &Vec3::z(), &Vec3::repeat(0.5), 2.0).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.mean(), Vec3::repeat(0.5));
        assert_eq!(s.trace(), 0.0);
        assert_eq!(s.rho_max(), 0.5);
        assert_eq!(s.mask().count(), 1);
        assert_eq!(s.delta(), 1.0);
    }

    #[test]
    fn two_sample_scatter() {
        let l = lattice();
        let mut s = VoxelStats::for_lattice(&l);
        feed(&mut s, &l, &[Vec3::zeros(), Vec3::repeat(1.0)]);
        assert_eq!(s.count(), 2);
        assert_eq!(s.mean(), Vec3::repeat(0.5));
        // Σ‖z - μ‖² = 2 · 3 · 0.25
        assert!((s.trace() - 1.5).abs() < 1e-15);
        // 1 - √(2/1.5)·√1.5 = 1 - √2 < 0, clamped.
        assert_eq!(s.delta(), 0.0);
    }

    #[test]
    fn delta_edge_cases() {
        let l = lattice();
        assert_eq!(VoxelStats::for_lattice(&l).delta(), 1.0);
        let mut s = VoxelStats::for_lattice(&l);
        feed(&mut s, &l, &[Vec3::new(0.2, 0.4, 0.6); 9]);
        assert_eq!(s.trace(), 0.0);
        assert_eq!(s.delta(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs_without_mutation() {
        let l = lattice();
        let mut s = VoxelStats::for_lattice(&l);
        s.update(&l, &Vec3::z(), &Vec3::repeat(0.3), 1.0).unwrap();
        let before = s.clone();
        assert!(s.update(&l, &Vec3::z(), &Vec3::new(f64::NAN, 0.0, 0.0), 1.0).is_err());
        assert!(s.update(&l, &Vec3::z(), &Vec3::repeat(0.3), f64::INFINITY).is_err());
        assert!(s.update(&l, &Vec3::z(), &Vec3::repeat(0.3), 0.0).is_err());
        assert!(s.update(&l, &Vec3::new(0.0, 0.0, 2.0), &Vec3::repeat(0.3), 1.0).is_err());
        let other = Lattice::build(LatticeSpec::Bins(32)).unwrap();
        assert!(s.update(&other, &Vec3::z(), &Vec3::repeat(0.3), 1.0).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn out_of_range_rgb_is_clamped() {
        let l = lattice();
        let mut s = VoxelStats::for_lattice(&l);
        let out = s.update(&l, &Vec3::z(), &Vec3::new(1.5, -0.2, 0.5), 1.0).unwrap();
        assert!(out.clamped);
        assert_eq!(s.mean(), Vec3::new(1.0, 0.0, 0.5));
    }

    #[test]
    fn wide_mask_layout() {
        let l = Lattice::build(LatticeSpec::Bins(526)).unwrap();
        let mut s = VoxelStats::for_lattice(&l);
        assert!(matches!(s.mask(), BinMask::Wide(w) if w.len() == 9));
        s.observe_bin(525, &Vec3::zeros(), 1.0).unwrap();
        s.observe_bin(3, &Vec3::zeros(), 1.0).unwrap();
        assert!(s.mask().contains(525));
        assert_eq!(s.mask().iter().collect::<Vec<_>>(), vec![3, 525]);
        assert!(matches!(VoxelStats::new(64).mask(), BinMask::Compact(_)));
    }

    #[test]
    fn thousand_random_updates_match_batch() {
        use rand::{Rng, SeedableRng};
        let l = lattice();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let colors: Vec<Vec3> = (0..1000)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let mut s = VoxelStats::for_lattice(&l);
        feed(&mut s, &l, &colors);
        let streamed = s.trace() / 999.0;
        assert!(rel_close(streamed, oracle::batch_cov_trace(&colors), 1e-9));
    }

    #[test]
    fn merge_identity_and_mismatch() {
        let l = lattice();
        let mut x = VoxelStats::for_lattice(&l);
        feed(&mut x, &l, &[Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.7, 0.1, 0.9)]);
        let empty = VoxelStats::for_lattice(&l);
        assert_eq!(x.merge(&empty).unwrap(), x);
        assert_eq!(empty.merge(&x).unwrap(), x);
        assert!(x.merge(&VoxelStats::new(32)).is_err());
    }

    #[test]
    fn state_size_is_constant() {
        let l = lattice();
        let mut s = VoxelStats::for_lattice(&l);
        s.update(&l, &Vec3::z(), &Vec3::repeat(0.5), 1.0).unwrap();
        let mut one = Vec::new();
        s.encode(&mut one);
        for i in 0..1_000_000u32 {
            let c = (i % 7) as f64 / 7.0;
            s.observe_bin((i % 64) as usize, &Vec3::repeat(c), 1.0).unwrap();
        }
        let mut many = Vec::new();
        s.encode(&mut many);
        assert_eq!(one.len(), many.len());
        assert_eq!(one.len(), VoxelStats::encoded_len(64));
        assert!(std::mem::size_of::<VoxelStats>() <= 128);
    }

    #[test]
    fn decode_rejects_inconsistent_records() {
        let l = lattice();
        let mut s = VoxelStats::for_lattice(&l);
        s.update(&l, &Vec3::z(), &Vec3::repeat(0.5), 1.0).unwrap();
        let mut buf = Vec::new();
        s.encode(&mut buf);
        let (back, used) = VoxelStats::decode(&buf, 64).unwrap();
        assert_eq!(back, s);
        assert_eq!(used, buf.len());
        assert!(VoxelStats::decode(&buf[..10], 64).is_err());
        // zero the mask but keep n = 1
        let mut broken = buf.clone();
        broken[..8].fill(0);
        assert!(VoxelStats::decode(&broken, 64).is_err());
    }

    fn color() -> impl Strategy<Value = Vec3> {
        (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(r, g, b)| Vec3::new(r, g, b))
    }

    proptest! {
        #[test]
        fn welford_matches_two_pass(colors in prop::collection::vec(color(), 2..200)) {
            let l = lattice();
            let mut s = VoxelStats::for_lattice(&l);
            feed(&mut s, &l, &colors);
            let n = colors.len() as f64;
            let streamed = s.trace() / (n - 1.0);
            let batch = oracle::batch_cov_trace(&colors);
            prop_assert!((streamed - batch).abs() <= 1e-9 * batch.max(1e-12));
        }

        #[test]
        fn pairwise_identity(colors in prop::collection::vec(color(), 2..120)) {
            let l = lattice();
            let mut s = VoxelStats::for_lattice(&l);
            feed(&mut s, &l, &colors);
            let n = colors.len() as f64;
            let pairwise = oracle::mean_pairwise_discrepancy(&colors);
            let from_m2 = 2.0 * s.trace() / (n - 1.0);
            prop_assert!((pairwise - from_m2).abs() <= 1e-9 * pairwise.max(1e-12));
        }

        #[test]
        fn merge_equals_sequential(
            a in prop::collection::vec(color(), 0..60),
            b in prop::collection::vec(color(), 0..60),
        ) {
            let l = lattice();
            let (mut sa, mut sb, mut seq) = (
                VoxelStats::for_lattice(&l),
                VoxelStats::for_lattice(&l),
                VoxelStats::for_lattice(&l),
            );
            feed(&mut sa, &l, &a);
            feed(&mut sb, &l, &b);
            feed(&mut seq, &l, &a);
            // replay b's stream with the same directions and depths `feed` used
            for (i, c) in b.iter().enumerate() {
                seq.update(&l, &l.center(i % 64), c, 1.0 + i as f64 * 0.01).unwrap();
            }
            let ab = sa.merge(&sb).unwrap();
            let ba = sb.merge(&sa).unwrap();
            prop_assert_eq!(ab.count(), seq.count());
            prop_assert_eq!(ab.mask(), seq.mask());
            prop_assert_eq!(ab.rho_max(), seq.rho_max());
            prop_assert!((ab.trace() - seq.trace()).abs() <= 1e-9 * seq.trace().max(1e-12));
            prop_assert!((ab.trace() - ba.trace()).abs() <= 1e-12);
            prop_assert!((ab.mean() - ba.mean()).amax() <= 1e-12);
        }

        #[test]
        fn invariants_hold_under_updates(
            obs in prop::collection::vec((0usize..64, color(), 0.1..10.0f64), 0..80),
        ) {
            let l = lattice();
            let mut s = VoxelStats::for_lattice(&l);
            let mut prev_bits = 0;
            for (bin, c, d) in &obs {
                s.observe_bin(*bin, c, *d).unwrap();
                let bits = s.mask().count();
                prop_assert!(bits >= prev_bits);
                prev_bits = bits;
            }
            prop_assert_eq!(s.count() == 0, s.mask().is_empty());
            prop_assert_eq!(s.count() == 0, s.rho_max() == 0.0);
            prop_assert!(s.trace() >= 0.0);
            prop_assert!(u64::from(s.mask().count()) <= s.count());
            let d = s.delta();
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn delta_is_order_invariant(mut colors in prop::collection::vec(color(), 2..100), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let l = lattice();
            let mut a = VoxelStats::for_lattice(&l);
            feed(&mut a, &l, &colors);
            colors.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut b = VoxelStats::for_lattice(&l);
            feed(&mut b, &l, &colors);
            prop_assert!((a.delta() - b.delta()).abs() <= 1e-9);
        }
    }
}

//! Direct and dual lattices of the torus `T_N`, Brillouin representatives and
//! the truncated Galerkin mode sets.
//!
//! A dual vector is always carried as an integer triple `k` together with the
//! lattice period `N`; the physical wave vector is `ξ = (2π/N)·k`. Keeping the
//! integers around makes lattice membership tests exact.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::{Error, Result, Vec3};

/// Default upper bound on the number of modes a [`ModeSet`] may hold.
pub const DEFAULT_MODE_BUDGET: usize = 2_000_000;

/// The cubic lattice `Γ_N = Z³/NZ³` and its torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct LatticeSpec {
    n: usize,
}

impl LatticeSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("lattice period N must be >= 1".into()));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of cells (and ions), `N³`.
    pub fn cell_count(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Torus volume, equal to the cell count.
    pub fn volume(&self) -> f64 {
        self.cell_count() as f64
    }

    /// Lattice sites `n ∈ {0..N-1}³` in lexicographic order; the position of an
    /// ion in this list is its index everywhere in the crate.
    pub fn sites(&self) -> Vec<[usize; 3]> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.cell_count());
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }

    /// Dual-lattice unit `2π/N`.
    pub fn dual_unit(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn xi(&self, k: [i32; 3]) -> Vec3 {
        let u = self.dual_unit();
        [u * k[0] as f64, u * k[1] as f64, u * k[2] as f64]
    }

    /// Reduces a coordinate to `[0, N)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let n = self.n as f64;
        let r = x.rem_euclid(n);
        // rem_euclid can round up to exactly n for tiny negative inputs
        if r >= n {
            0.0
        } else {
            r
        }
    }

    pub fn wrap3(&self, x: Vec3) -> Vec3 {
        [self.wrap(x[0]), self.wrap(x[1]), self.wrap(x[2])]
    }

    /// Signed circular displacement `a - b` reduced to `[-N/2, N/2)`.
    pub fn circular_diff(&self, a: f64, b: f64) -> f64 {
        let n = self.n as f64;
        (a - b + 0.5 * n).rem_euclid(n) - 0.5 * n
    }
}

/// True iff `ξ = (2π/N)k` lies in `Γ*_1 = 2πZ³`, i.e. every `k_j ≡ 0 (mod N)`.
pub fn in_gamma1(k: [i32; 3], n: usize) -> bool {
    let n = n as i32;
    k.iter().all(|&kj| kj.rem_euclid(n) == 0)
}

pub fn norm2_int(k: [i32; 3]) -> i64 {
    k.iter().map(|&x| (x as i64) * (x as i64)).sum()
}

/// The Galerkin mode set `{(2π/N)k : k·k ≤ m}` with its collocation grid.
#[derive(Debug, Clone)]
pub struct ModeSet {
    lattice: LatticeSpec,
    cutoff: u32,
    modes: Vec<[i32; 3]>,
    index: HashMap<[i32; 3], usize>,
    negation: Vec<usize>,
    max_component: i32,
    grid_dims: [usize; 3],
}

impl PartialEq for ModeSet {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.cutoff == other.cutoff
    }
}

/// Builds the ball `k·k ≤ m` with the default mode budget.
pub fn build_mode_set(n: usize, m: u32) -> Result<ModeSet> {
    ModeSet::with_budget(n, m, DEFAULT_MODE_BUDGET)
}

impl ModeSet {
    pub fn with_budget(n: usize, m: u32, budget: usize) -> Result<Self> {
        let lattice = LatticeSpec::new(n)?;
        if m == 0 {
            return Err(Error::InvalidParameter("mode cutoff m must be >= 1".into()));
        }
        let kmax = (m as f64).sqrt().floor() as i32;
        // count before allocating anything
        let mut count = 0usize;
        for a in -kmax..=kmax {
            for b in -kmax..=kmax {
                let rest = m as i64 - (a * a + b * b) as i64;
                if rest >= 0 {
                    count += 2 * ((rest as f64).sqrt().floor() as usize) + 1;
                }
            }
        }
        if count > budget {
            return Err(Error::ResourceLimit { modes: count, budget });
        }
        let mut modes = Vec::with_capacity(count);
        for a in -kmax..=kmax {
            for b in -kmax..=kmax {
                for c in -kmax..=kmax {
                    let k = [a, b, c];
                    if norm2_int(k) <= m as i64 {
                        modes.push(k);
                    }
                }
            }
        }
        let index: HashMap<_, _> = modes.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let negation = modes.iter().map(|k| index[&[-k[0], -k[1], -k[2]]]).collect();
        let g = 2 * kmax as usize + 2;
        Ok(Self {
            lattice,
            cutoff: m,
            modes,
            index,
            negation,
            max_component: kmax,
            grid_dims: [g, g, g],
        })
    }

    pub fn lattice(&self) -> LatticeSpec {
        self.lattice
    }

    pub fn n(&self) -> usize {
        self.lattice.n()
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[[i32; 3]] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> [i32; 3] {
        self.modes[i]
    }

    pub fn index_of(&self, k: [i32; 3]) -> Option<usize> {
        self.index.get(&k).copied()
    }

    /// Position of `-k` for the mode at position `i`.
    pub fn negated(&self, i: usize) -> usize {
        self.negation[i]
    }

    /// Position of the zero mode.
    pub fn zero(&self) -> usize {
        self.index[&[0, 0, 0]]
    }

    pub fn max_component(&self) -> i32 {
        self.max_component
    }

    /// Collocation grid, `2·max|k_j| + 2` points per axis.
    pub fn grid_dims(&self) -> [usize; 3] {
        self.grid_dims
    }

    pub fn xi(&self, i: usize) -> Vec3 {
        self.lattice.xi(self.modes[i])
    }

    pub fn xi2(&self, i: usize) -> f64 {
        let u = self.lattice.dual_unit();
        u * u * norm2_int(self.modes[i]) as f64
    }

    /// True when every mode of `self` is also a mode of `other`.
    pub fn is_subset_of(&self, other: &ModeSet) -> bool {
        self.lattice == other.lattice && self.cutoff <= other.cutoff
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrillouinPoint {
    pub k: [i32; 3],
    pub in_gamma1: bool,
}

/// Half-open Brillouin representatives `(2π/N)k`, `k_j ∈ {0..N-1}`.
#[derive(Debug, Clone)]
pub struct BrillouinSet {
    lattice: LatticeSpec,
    points: Vec<BrillouinPoint>,
}

impl BrillouinSet {
    pub fn points(&self) -> &[BrillouinPoint] {
        &self.points
    }

    pub fn lattice(&self) -> LatticeSpec {
        self.lattice
    }

    /// Representatives outside `Γ*_1`, the set the Wiener condition is checked on.
    pub fn outside_gamma1(&self) -> impl Iterator<Item = &BrillouinPoint> {
        self.points.iter().filter(|p| !p.in_gamma1)
    }
}

pub fn brillouin_points(n: usize) -> Result<BrillouinSet> {
    let lattice = LatticeSpec::new(n)?;
    let points = lattice
        .sites()
        .into_iter()
        .map(|s| {
            let k = [s[0] as i32, s[1] as i32, s[2] as i32];
            BrillouinPoint { k, in_gamma1: in_gamma1(k, n) }
        })
        .collect();
    Ok(BrillouinSet { lattice, points })
}

/// Reduces `k` to its Brillouin representative, `k_j mod N`.
pub fn brillouin_class(k: [i32; 3], n: usize) -> [i32; 3] {
    let n = n as i32;
    [k[0].rem_euclid(n), k[1].rem_euclid(n), k[2].rem_euclid(n)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mode_counts() {
        assert_eq!(build_mode_set(2, 1).unwrap().len(), 7);
        assert_eq!(build_mode_set(2, 2).unwrap().len(), 19);
        let one = build_mode_set(1, 1).unwrap();
        assert_eq!(one.len(), 7);
        for &k in one.modes() {
            assert!(in_gamma1(k, 1));
        }
    }

    #[test]
    fn grid_respects_dealias_bound() {
        for m in 1..10 {
            let ms = build_mode_set(3, m).unwrap();
            let g = ms.grid_dims();
            assert!(g.iter().all(|&d| d >= 2 * ms.max_component() as usize + 2));
        }
    }

    #[test]
    fn rejects_oversized_cutoff() {
        assert!(matches!(
            ModeSet::with_budget(2, 100, 1000),
            Err(Error::ResourceLimit { .. })
        ));
        assert!(build_mode_set(2, 0).is_err());
        assert!(build_mode_set(0, 1).is_err());
    }

    #[test]
    fn ordering_is_lexicographic() {
        let ms = build_mode_set(2, 3).unwrap();
        assert!(ms.modes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn brillouin_counts() {
        for (n, inside) in [(1, 1), (2, 1), (3, 1)] {
            let b = brillouin_points(n).unwrap();
            assert_eq!(b.points().len(), n * n * n);
            assert_eq!(b.points().iter().filter(|p| p.in_gamma1).count(), inside);
            assert_eq!(b.outside_gamma1().count(), n * n * n - inside);
        }
    }

    #[test]
    fn gamma1_membership() {
        assert!(in_gamma1([2, 0, 0], 2));
        assert!(!in_gamma1([1, 0, 0], 2));
        for n in 1..5 {
            assert!(in_gamma1([0, 0, 0], n));
        }
        assert!(in_gamma1([-3, 6, 0], 3));
        assert!(!in_gamma1([-3, 5, 0], 3));
    }

    #[test]
    fn circular_distance() {
        let l = LatticeSpec::new(2).unwrap();
        assert!((l.circular_diff(1.9, 0.0).abs() - 0.1).abs() < 1e-15);
        assert_eq!(l.wrap(-1e-20), 0.0);
    }

    proptest! {
        #[test]
        fn negation_is_bijection(n in 1usize..4, m in 1u32..12) {
            let ms = build_mode_set(n, m).unwrap();
            for i in 0..ms.len() {
                let j = ms.negated(i);
                let (a, b) = (ms.mode(i), ms.mode(j));
                prop_assert_eq!([-a[0], -a[1], -a[2]], b);
                prop_assert_eq!(ms.negated(j), i);
            }
        }

        #[test]
        fn brillouin_partitions_dual_lattice(n in 1usize..5, k in prop::array::uniform3(-20i32..20)) {
            let b = brillouin_points(n).unwrap();
            let class = brillouin_class(k, n);
            prop_assert_eq!(b.points().iter().filter(|p| p.k == class).count(), 1);
        }
    }
}

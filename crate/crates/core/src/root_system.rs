//! Combinatorics of `A_n` acting on `R^{n+1}` by coordinate permutations.
//!
//! Indices are zero-based: the positive root `(i, j)` with `i < j` is the
//! functional `x_i - x_j`, and the simple roots are `(i, i + 1)`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::summation::{self, NeumaierSum};
use crate::DEFAULT_RANK_CAP;

/// A point of the closed positive Weyl chamber: weakly decreasing coordinates.
///
/// The same type carries spectral parameters and space variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamberPoint(Vec<f64>);

impl ChamberPoint {
    /// Accepts coordinates that are finite and weakly decreasing.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("empty coordinate list".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate {bad}")));
        }
        if let Some(i) = coords.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(format!(
                "coordinates not weakly decreasing at position {i}: {} < {}",
                coords[i],
                coords[i + 1]
            )));
        }
        Ok(Self(coords))
    }

    /// Sorts into the chamber. The flag reports whether the order changed.
    ///
    /// Every W-invariant quantity is unaffected by the sort.
    pub fn from_unsorted(mut coords: Vec<f64>) -> Result<(Self, bool)> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        let reordered = coords.windows(2).any(|w| w[0] < w[1]);
        coords.sort_by(|a, b| b.total_cmp(a));
        Ok((Self::new(coords)?, reordered))
    }

    pub fn zero(dim: usize) -> Self {
        Self(alloc::vec![0.0; dim.max(1)])
    }

    /// Builds `x` with `x_last = base` and `x_i - x_{i+1} = gaps[i]`.
    pub fn from_gaps(base: f64, gaps: &[f64]) -> Result<Self> {
        if gaps.iter().any(|g| *g < 0.0 || !g.is_finite()) {
            return Err(Error::InvalidInput("gaps must be finite and nonnegative".into()));
        }
        let mut coords = alloc::vec![base; gaps.len() + 1];
        for i in (0..gaps.len()).rev() {
            coords[i] = coords[i + 1] + gaps[i];
        }
        Self::new(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Rank `n` of the root system acting on this space.
    pub fn rank(&self) -> usize {
        self.0.len() - 1
    }

    /// Simple-root values `alpha_i(X) = x_i - x_{i+1}`.
    pub fn gaps(&self) -> Vec<f64> {
        self.0.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// Smallest simple-root value; `+inf` in dimension one.
    pub fn min_gap(&self) -> f64 {
        self.0
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Interior of the chamber.
    pub fn is_strict(&self) -> bool {
        self.min_gap() > 0.0
    }

    /// True when every coordinate is equal (fixed by all of W).
    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|c| *c == self.0[0])
    }

    pub fn dot(&self, other: &Self) -> f64 {
        summation::dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        summation::dot(&self.0, &self.0)
    }

    /// Multiplication by a nonnegative scalar keeps the point in the chamber.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("scale factor {c} must be >= 0")));
        }
        Ok(Self(self.0.iter().map(|x| x * c).collect()))
    }

    /// Adds `c * direction`, re-validating dominance.
    pub fn perturbed(&self, direction: &ChamberPoint, c: f64) -> Result<Self> {
        Self::new(
            self.0
                .iter()
                .zip(direction.coords())
                .map(|(x, d)| x + c * d)
                .collect(),
        )
    }

    /// The image under `X -> -w_0 X`, which maps the chamber to itself.
    pub fn reversed_negated(&self) -> Self {
        Self(self.0.iter().rev().map(|x| -x).collect())
    }

    /// Keeps the listed coordinates (in increasing index order).
    pub fn select(&self, indices: &[usize]) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self(indices.iter().map(|&i| self.0[i]).collect())
    }
}

/// Zero-based positive roots of `A_n`, lexicographically ordered.
pub fn positive_roots(n: usize) -> Vec<(usize, usize)> {
    let mut roots = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..=n {
        for j in (i + 1)..=n {
            roots.push((i, j));
        }
    }
    roots
}

/// `pi(X) = prod_{i<j} (x_i - x_j)`.
pub fn pi(x: &[f64]) -> f64 {
    let mut p = 1.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            p *= x[i] - x[j];
        }
    }
    p
}

/// `log pi(X)`; `-inf` when two coordinates coincide.
pub fn ln_pi(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            s += libm::log(x[i] - x[j]);
        }
    }
    s
}

/// `A_n` with its positive roots and `rho`.
#[derive(Debug, Clone)]
pub struct RootSystem {
    rank: usize,
    cap: usize,
    positive_roots: Vec<(usize, usize)>,
    rho: ChamberPoint,
}

impl RootSystem {
    pub fn new(rank: usize) -> Result<Self> {
        Self::with_cap(rank, DEFAULT_RANK_CAP)
    }

    pub fn with_cap(rank: usize, cap: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidInput("rank must be at least 1".into()));
        }
        if rank > cap {
            return Err(Error::RankTooLarge { rank, cap });
        }
        let rho = (1..=rank + 1)
            .map(|i| (rank + 2) as f64 - 2.0 * i as f64)
            .collect();
        Ok(Self {
            rank,
            cap,
            positive_roots: positive_roots(rank),
            rho: ChamberPoint(rho),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Ambient dimension `d = n + 1`.
    pub fn dim(&self) -> usize {
        self.rank + 1
    }

    /// Number of positive roots.
    pub fn gamma(&self) -> usize {
        self.positive_roots.len()
    }

    /// `|W| = (n+1)!`.
    pub fn weyl_order(&self) -> u64 {
        (1..=self.dim() as u64).product()
    }

    pub fn positive_roots(&self) -> &[(usize, usize)] {
        &self.positive_roots
    }

    /// `rho = sum of positive roots`, i.e. `rho_i = n + 2 - 2i` (one-based `i`).
    pub fn rho(&self) -> &ChamberPoint {
        &self.rho
    }

    pub fn weyl_elements(&self) -> WeylElements {
        WeylElements::new(self.dim())
    }

    fn check_dim(&self, x: &ChamberPoint) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates, got {}",
                self.dim(),
                x.dim()
            )));
        }
        Ok(())
    }

    /// Coefficients `c` with `Y - wY = sum_i c_i alpha_i` over the simple roots.
    ///
    /// For `A_n` these are partial sums of `Y - wY`; they are nonnegative for
    /// dominant `Y`.
    pub fn decompose_diff(&self, y: &ChamberPoint, w: &WeylElement) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        let wy = w.act(y.coords());
        let mut acc = NeumaierSum::new();
        let mut c = Vec::with_capacity(self.rank);
        for k in 0..self.rank {
            acc.add(y.coords()[k]);
            acc.add(-wy[k]);
            c.push(acc.total());
        }
        Ok(c)
    }

    /// Minimiser and minimum of `<w lambda, X>` over all of W.
    pub fn min_weyl_pairing(
        &self,
        lambda: &ChamberPoint,
        x: &ChamberPoint,
    ) -> Result<(WeylElement, f64)> {
        self.check_dim(lambda)?;
        self.check_dim(x)?;
        let mut best: Option<(WeylElement, f64)> = None;
        let mut perms = SignedPermutations::new(self.dim());
        while let Some((perm, sign)) = perms.advance() {
            let v = pairing(perm, lambda.coords(), x.coords());
            if best.as_ref().map_or(true, |(_, b)| v < *b) {
                best = Some((
                    WeylElement {
                        perm: perm.to_vec(),
                        sign,
                    },
                    v,
                ));
            }
        }
        Ok(best.expect("W is never empty"))
    }

    /// Smallest `C` with `c_i(Y, w) <= C * max_k alpha_k(Y)` for all dominant
    /// `Y` and all `w`, found by exhausting W.
    ///
    /// Each `c_i` is linear in the simple-root values, so its supremum over the
    /// unit cube of gaps is the sum of its positive coefficients.
    pub fn coefficient_bound(&self) -> f64 {
        let n = self.rank;
        let mut best: f64 = 0.0;
        for w in self.weyl_elements() {
            let inv = w.inverse();
            let mut coef = alloc::vec![0i64; n];
            for j in 0..n {
                // (wY)_j = y_{inv[j]}; y_j - y_m expands over gaps g_j..g_{m-1}.
                let (a, b) = (j, inv.perm[j]);
                if a < b {
                    coef[a..b].iter_mut().for_each(|c| *c += 1);
                } else {
                    coef[b..a].iter_mut().for_each(|c| *c -= 1);
                }
                let positive: i64 = coef.iter().filter(|c| **c > 0).sum();
                best = best.max(positive as f64);
            }
        }
        best
    }
}

/// `<w lambda, X> = sum_j lambda_j x_{perm[j]}`.
#[inline]
pub(crate) fn pairing(perm: &[usize], lambda: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (j, &p) in perm.iter().enumerate() {
        s += lambda[j] * x[p];
    }
    s
}

/// An element of `W = S_{n+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeylElement {
    /// `perm[j]` is the position that coordinate `j` is moved to.
    pub perm: Vec<usize>,
    pub sign: i8,
}

impl WeylElement {
    pub fn identity(dim: usize) -> Self {
        Self {
            perm: (0..dim).collect(),
            sign: 1,
        }
    }

    /// Builds an element from a permutation, computing its sign.
    pub fn from_perm(perm: Vec<usize>) -> Result<Self> {
        let dim = perm.len();
        let mut seen = alloc::vec![false; dim];
        for &p in &perm {
            if p >= dim || seen[p] {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
            seen[p] = true;
        }
        let sign = permutation_sign(&perm);
        Ok(Self { perm, sign })
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = alloc::vec![0; self.perm.len()];
        for (j, &p) in self.perm.iter().enumerate() {
            inv[p] = j;
        }
        Self {
            perm: inv,
            sign: self.sign,
        }
    }

    /// `(w X)_i = X_{perm^{-1}(i)}`.
    pub fn act(&self, x: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; x.len()];
        for (j, &p) in self.perm.iter().enumerate() {
            out[p] = x[j];
        }
        out
    }
}

fn permutation_sign(perm: &[usize]) -> i8 {
    let mut visited = alloc::vec![false; perm.len()];
    let mut sign = 1i8;
    for start in 0..perm.len() {
        if visited[start] {
            continue;
        }
        let mut len = 0;
        let mut k = start;
        while !visited[k] {
            visited[k] = true;
            k = perm[k];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// Allocation-free walk over `S_dim` by Heap's algorithm.
///
/// Consecutive permutations differ by one transposition, so the sign simply
/// alternates.
#[derive(Debug, Clone)]
pub struct SignedPermutations {
    perm: Vec<usize>,
    counters: Vec<usize>,
    index: usize,
    sign: i8,
    started: bool,
}

impl SignedPermutations {
    pub fn new(dim: usize) -> Self {
        Self {
            perm: (0..dim).collect(),
            counters: alloc::vec![0; dim],
            index: 1,
            sign: 1,
            started: false,
        }
    }

    pub fn advance(&mut self) -> Option<(&[usize], i8)> {
        if !self.started {
            self.started = true;
            return Some((&self.perm, self.sign));
        }
        let n = self.perm.len();
        while self.index < n {
            if self.counters[self.index] < self.index {
                if self.index % 2 == 0 {
                    self.perm.swap(0, self.index);
                } else {
                    self.perm.swap(self.counters[self.index], self.index);
                }
                self.sign = -self.sign;
                self.counters[self.index] += 1;
                self.index = 1;
                return Some((&self.perm, self.sign));
            }
            self.counters[self.index] = 0;
            self.index += 1;
        }
        None
    }
}

/// Streams every element of W exactly once.
#[derive(Debug, Clone)]
pub struct WeylElements {
    inner: SignedPermutations,
}

impl WeylElements {
    pub fn new(dim: usize) -> Self {
        Self {
            inner: SignedPermutations::new(dim),
        }
    }
}

impl Iterator for WeylElements {
    type Item = WeylElement;

    fn next(&mut self) -> Option<WeylElement> {
        self.inner.advance().map(|(perm, sign)| WeylElement {
            perm: perm.to_vec(),
            sign,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cp(v: &[f64]) -> ChamberPoint {
        ChamberPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn positive_root_enumeration() {
        assert_eq!(positive_roots(1), vec![(0, 1)]);
        assert_eq!(positive_roots(2), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(positive_roots(3).len(), 6);
    }

    #[test]
    fn pi_values() {
        assert_eq!(pi(&[1.0, 0.0]), 1.0);
        assert_eq!(pi(&[2.0, 1.0, 0.0]), 2.0);
        assert_eq!(pi(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn rho_and_counts() {
        let rs = RootSystem::new(1).unwrap();
        assert_eq!(rs.rho().coords(), &[1.0, -1.0]);
        assert_eq!(rs.gamma(), 1);
        let rs = RootSystem::new(3).unwrap();
        assert_eq!(rs.rho().coords(), &[3.0, 1.0, -1.0, -3.0]);
        assert_eq!(rs.gamma(), 6);
        assert_eq!(rs.weyl_order(), 24);
    }

    #[test]
    fn rho_is_sum_of_positive_roots() {
        let rs = RootSystem::new(4).unwrap();
        let mut sum = vec![0.0; rs.dim()];
        for &(i, j) in rs.positive_roots() {
            sum[i] += 1.0;
            sum[j] -= 1.0;
        }
        assert_eq!(sum.as_slice(), rs.rho().coords());
    }

    #[test]
    fn rank_cap_is_enforced() {
        assert_eq!(
            RootSystem::new(9).unwrap_err(),
            Error::RankTooLarge { rank: 9, cap: 8 }
        );
        assert!(RootSystem::with_cap(9, 9).is_ok());
    }

    #[test]
    fn weyl_enumeration_counts_and_signs() {
        for n in 1..=5 {
            let rs = RootSystem::new(n).unwrap();
            let all: Vec<_> = rs.weyl_elements().collect();
            assert_eq!(all.len() as u64, rs.weyl_order());
            let sign_sum: i64 = all.iter().map(|w| w.sign as i64).sum();
            assert_eq!(sign_sum, 0);
            for w in &all {
                assert_eq!(w.sign, permutation_sign(&w.perm));
            }
            let mut perms: Vec<_> = all.iter().map(|w| w.perm.clone()).collect();
            perms.sort();
            perms.dedup();
            assert_eq!(perms.len(), all.len());
        }
        let signs: Vec<i8> = RootSystem::new(1)
            .unwrap()
            .weyl_elements()
            .map(|w| w.sign)
            .collect();
        assert_eq!(signs, vec![1, -1]);
    }

    #[test]
    fn action_convention() {
        let w = WeylElement::from_perm(vec![1, 2, 0]).unwrap();
        // (wX)_{perm[j]} = X_j
        assert_eq!(w.act(&[10.0, 20.0, 30.0]), vec![30.0, 10.0, 20.0]);
        assert_eq!(w.sign, 1);
        let back = w.inverse().act(&w.act(&[10.0, 20.0, 30.0]));
        assert_eq!(back, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn decompose_identity_and_transposition() {
        let rs = RootSystem::new(1).unwrap();
        let y = cp(&[3.5, -1.25]);
        let id = WeylElement::identity(2);
        assert_eq!(rs.decompose_diff(&y, &id).unwrap(), vec![0.0]);
        let s = WeylElement::from_perm(vec![1, 0]).unwrap();
        assert_eq!(rs.decompose_diff(&y, &s).unwrap(), vec![4.75]);
    }

    #[test]
    fn decompose_three_cycle_matches_linear_solve() {
        let rs = RootSystem::new(2).unwrap();
        let y = cp(&[2.0, 1.0, 0.0]);
        let w = WeylElement::from_perm(vec![1, 2, 0]).unwrap();
        let c = rs.decompose_diff(&y, &w).unwrap();
        // Solve [1 0; -1 1; 0 -1] c = Y - wY by least squares on the first two rows.
        let d: Vec<f64> = y
            .coords()
            .iter()
            .zip(w.act(y.coords()))
            .map(|(a, b)| a - b)
            .collect();
        let c1 = d[0];
        let c2 = d[1] + c1;
        assert!((c[0] - c1).abs() < 1e-15 && (c[1] - c2).abs() < 1e-15);
        assert!((-c2 - d[2]).abs() < 1e-15);
        assert!(c.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn min_pairing_examples() {
        let rs = RootSystem::new(1).unwrap();
        let (w, v) = rs.min_weyl_pairing(&cp(&[1.0, 0.0]), &cp(&[1.0, 0.0])).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(w.perm, vec![1, 0]);
        let (_, v) = rs.min_weyl_pairing(&cp(&[0.0, 0.0]), &cp(&[5.0, 1.0])).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn coefficient_bound_small_ranks() {
        assert_eq!(RootSystem::new(1).unwrap().coefficient_bound(), 1.0);
        for n in 1..=4 {
            let c = RootSystem::new(n).unwrap().coefficient_bound();
            assert!(c.is_finite() && c >= 1.0);
        }
    }

    #[test]
    fn from_unsorted_flags_reordering() {
        let (p, flag) = ChamberPoint::from_unsorted(vec![1.0, 2.0]).unwrap();
        assert!(flag);
        assert_eq!(p.coords(), &[2.0, 1.0]);
        let (_, flag) = ChamberPoint::from_unsorted(vec![2.0, 1.0]).unwrap();
        assert!(!flag);
        assert!(ChamberPoint::new(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn gaps_roundtrip() {
        let p = ChamberPoint::from_gaps(-1.0, &[0.5, 2.0]).unwrap();
        assert_eq!(p.coords(), &[1.5, 1.0, -1.0]);
        assert_eq!(p.gaps(), vec![0.5, 2.0]);
        assert!(p.is_strict());
        assert_eq!(p.reversed_negated().coords(), &[1.0, -1.0, -1.5]);
    }
}

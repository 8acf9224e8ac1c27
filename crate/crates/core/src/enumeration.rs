//! Exact tree counts and the cached powers of their generating function.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{dot_at, Series};
use crate::tree::Tree;

/// Default ceiling on the estimated footprint of a count table.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Exact counts `tau_0..=tau_N` of m-ary search trees by number of keys,
/// together with the coefficients of `tau(z)^k` for `k = 1..=m`.
///
/// Immutable once built; share freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeCountTable {
    m: usize,
    n_max: usize,
    counts: Vec<Integer>,
    /// `powers[k - 1][n] = [z^n] tau(z)^k`
    powers: Vec<Vec<Integer>>,
}

pub fn tree_counts(m: usize, n_max: usize) -> Result<TreeCountTable> {
    tree_counts_with_budget(m, n_max, DEFAULT_MEMORY_BUDGET)
}

pub fn tree_counts_with_budget(m: usize, n_max: usize, budget_bytes: u64) -> Result<TreeCountTable> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("branching factor m = {m} must be >= 2")));
    }
    check_budget(m, n_max, budget_bytes)?;
    let mut table = TreeCountTable {
        m,
        n_max: 0,
        counts: Vec::with_capacity(n_max + 1),
        powers: vec![Vec::with_capacity(n_max + 1); m],
    };
    table.grow(n_max);
    Ok(table)
}

/// Fails with a budget error if a table for `(m, n_max)` would not fit.
pub fn check_budget(m: usize, n_max: usize, budget_bytes: u64) -> Result<()> {
    let estimate = estimated_bytes(m, n_max);
    if estimate > budget_bytes {
        return Err(Error::ResourceBudget(format!(
            "count table for m = {m}, N = {n_max} needs about {estimate} bytes, budget is {budget_bytes}"
        )));
    }
    Ok(())
}

/// tau_n carries fewer than 2 bits per key for every m (1/rho <= 4).
fn estimated_bytes(m: usize, n_max: usize) -> u64 {
    let n = n_max as u64 + 1;
    let words = (m as u64 + 1) * (n * n / 64 + n);
    words * 8
}

impl TreeCountTable {
    /// Computes tau_n and extends every cached power in lockstep, so the
    /// shift by m - 1 only ever reads finished entries.
    fn grow(&mut self, n_max: usize) {
        let m = self.m;
        let start = self.counts.len();
        for n in start..=n_max {
            let tau = if n + 1 < m {
                Integer::from(1)
            } else {
                self.powers[m - 1][n - (m - 1)].clone()
            };
            self.counts.push(tau);
            self.powers[0].push(self.counts[n].clone());
            for k in 1..m {
                let (lower, upper) = self.powers.split_at_mut(k);
                let v = dot_at(&lower[k - 1], &self.counts, n, ());
                upper[0].push(v);
            }
        }
        self.n_max = n_max;
    }

    /// Returns a table covering at least `n_max`, rebuilding lazily.
    pub fn extended(&self, n_max: usize) -> TreeCountTable {
        let mut t = self.clone();
        if n_max > t.n_max {
            t.grow(n_max);
        }
        t
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn counts(&self) -> &[Integer] {
        &self.counts
    }

    pub fn count(&self, n: usize) -> Result<&Integer> {
        self.counts.get(n).ok_or(Error::TableTooShort {
            needed: n,
            have: self.n_max,
        })
    }

    /// Coefficients of `tau(z)^k` for `1 <= k <= m`.
    pub fn power(&self, k: usize) -> &[Integer] {
        assert!((1..=self.m).contains(&k), "power {k} outside 1..={}", self.m);
        &self.powers[k - 1]
    }

    /// `[z^n] tau(z)^k` with `tau^0 = 1`.
    pub fn power_coeff(&self, k: usize, n: usize) -> Integer {
        if k == 0 {
            Integer::from(u32::from(n == 0))
        } else {
            self.powers[k - 1][n].clone()
        }
    }

    pub fn ensure_covers(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            Err(Error::TableTooShort {
                needed: n,
                have: self.n_max,
            })
        } else {
            Ok(())
        }
    }

    /// `tau(z)` as a series in any carrier.
    pub fn series<T: crate::scalar::Scalar>(&self, ctx: T::Ctx, len: usize) -> Series<T> {
        Series::from_integers(ctx, &self.counts[..len.min(self.counts.len())]).resized(len)
    }

    pub fn power_series<T: crate::scalar::Scalar>(&self, k: usize, ctx: T::Ctx, len: usize) -> Series<T> {
        if k == 0 {
            let mut s = Series::zeros(ctx, len);
            if len > 0 {
                s.coeffs_mut()[0] = T::one(ctx);
            }
            return s;
        }
        let p = self.power(k);
        Series::from_integers(ctx, &p[..len.min(p.len())]).resized(len)
    }

    /// Probability of the root split `(j_1, ..., j_m)` for a uniform tree.
    pub fn split_probability(&self, parts: &[usize]) -> Result<Rational> {
        if parts.len() != self.m {
            return Err(Error::InvalidParameter(format!(
                "split has {} parts, expected {}",
                parts.len(),
                self.m
            )));
        }
        let n = parts.iter().sum::<usize>() + self.m - 1;
        let total = self.count(n)?;
        let mut num = Integer::from(1);
        for &j in parts {
            num *= &self.counts[j];
        }
        Ok(Rational::from((num, total.clone())))
    }

    pub fn to_cache(&self) -> CountCache {
        CountCache {
            m: self.m,
            n: self.n_max,
            counts: self.counts.iter().map(|c| c.to_string()).collect(),
        }
    }

    /// Rebuilds from cached counts; the recurrence is re-checked on load.
    pub fn from_cache(cache: &CountCache) -> Result<Self> {
        let counts: Vec<Integer> = cache
            .counts
            .iter()
            .map(|s| {
                Integer::from_str_radix(s, 10)
                    .map_err(|e| Error::Format(format!("bad count {s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if counts.len() != cache.n + 1 {
            return Err(Error::Format(format!(
                "cache claims N = {} but holds {} counts",
                cache.n,
                counts.len()
            )));
        }
        let table = tree_counts(cache.m, cache.n)?;
        if table.counts != counts {
            return Err(Error::Format("cached counts do not satisfy the recurrence".into()));
        }
        Ok(table)
    }
}

/// On-disk form: `{"m": int, "N": int, "counts": [decimal strings]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountCache {
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub counts: Vec<String>,
}

pub fn cache_path(dir: &Path, m: usize, n: usize) -> PathBuf {
    dir.join(format!("tau-m{m}-n{n}.json"))
}

/// Loads `tau-m{M}-n{N}.json` from `dir` or builds and stores it.
pub fn load_or_build(dir: &Path, m: usize, n: usize) -> Result<TreeCountTable> {
    let path = cache_path(dir, m, n);
    if path.exists() {
        let text = std::fs::read_to_string(&path)?;
        let cache: CountCache = serde_json::from_str(&text)?;
        if cache.m == m && cache.n == n {
            return TreeCountTable::from_cache(&cache);
        }
    }
    let table = tree_counts(m, n)?;
    let json = serde_json::to_string(&table.to_cache())?;
    crate::io::write_atomic(&path, json.as_bytes())?;
    Ok(table)
}

/// Largest `n` accepted by [`brute_force_count`].
pub const BRUTE_FORCE_MAX_N: usize = 9;

/// Number of distinct trees obtained by inserting every permutation of
/// `1..=n` key by key.
pub fn brute_force_count(m: usize, n: usize) -> Result<u64> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("branching factor m = {m} must be >= 2")));
    }
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::InvalidParameter(format!(
            "n = {n} too large for n! enumeration (max {BRUTE_FORCE_MAX_N})"
        )));
    }
    let mut seen = HashSet::new();
    let mut perm: Vec<usize> = (1..=n).collect();
    for_each_permutation(&mut perm, &mut |p| {
        seen.insert(insert_sequence(m, p).canonical());
    });
    Ok(seen.len() as u64)
}

/// Builds the tree produced by inserting `keys` in order.
pub fn insert_sequence(m: usize, keys: &[usize]) -> Tree {
    let mut root = SearchNode::default();
    for &k in keys {
        root.insert(m, k);
    }
    root.shape(m)
}

#[derive(Default)]
struct SearchNode {
    keys: Vec<usize>,
    children: Vec<SearchNode>,
}

impl SearchNode {
    fn insert(&mut self, m: usize, key: usize) {
        if self.keys.len() < m - 1 {
            let pos = self.keys.partition_point(|&k| k < key);
            self.keys.insert(pos, key);
            return;
        }
        if self.children.is_empty() {
            self.children = (0..m).map(|_| SearchNode::default()).collect();
        }
        let slot = self.keys.partition_point(|&k| k < key);
        self.children[slot].insert(m, key);
    }

    fn size(&self) -> usize {
        self.keys.len() + self.children.iter().map(SearchNode::size).sum::<usize>()
    }

    fn shape(&self, m: usize) -> Tree {
        let size = self.size();
        if size + 1 < m {
            return Tree::terminal(size);
        }
        let children = if self.children.is_empty() {
            (0..m).map(|_| Tree::terminal(0)).collect()
        } else {
            self.children.iter().map(|c| c.shape(m)).collect()
        };
        Tree { size, children }
    }
}

/// Heap's algorithm.
fn for_each_permutation(items: &mut [usize], f: &mut dyn FnMut(&[usize])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    f(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// `t_n = tau_n rho^n` in big-float arithmetic, grown by the same
/// convolution recurrence applied to `tau(rho z)`.
///
/// Used where exact counts are too expensive (n in the tens of thousands);
/// the scaled values stay O(n^{-3/2}).
#[derive(Clone, Debug)]
pub struct ScaledCounts {
    m: usize,
    bits: u32,
    rho: Float,
    rho_shift: Float,
    values: Vec<Float>,
    powers: Vec<Vec<Float>>,
}

impl ScaledCounts {
    pub fn new(m: usize, rho: &Float, n_max: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!("branching factor m = {m} must be >= 2")));
        }
        let bits = rho.prec();
        let rho_shift = Float::with_val(bits, rho.pow_ref_u(m as u32 - 1));
        let mut s = ScaledCounts {
            m,
            bits,
            rho: rho.clone(),
            rho_shift,
            values: Vec::new(),
            powers: vec![Vec::new(); m],
        };
        s.extend_to(n_max);
        Ok(s)
    }

    pub fn extend_to(&mut self, n_max: usize) {
        let m = self.m;
        let bits = self.bits;
        for n in self.values.len()..=n_max {
            let t = if n + 1 < m {
                Float::with_val(bits, self.rho.pow_ref_u(n as u32))
            } else {
                Float::with_val(bits, &self.powers[m - 1][n - (m - 1)] * &self.rho_shift)
            };
            self.values.push(t);
            self.powers[0].push(self.values[n].clone());
            for k in 1..m {
                let (lower, upper) = self.powers.split_at_mut(k);
                let v = dot_at(&lower[k - 1], &self.values, n, bits);
                upper[0].push(v);
            }
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[Float] {
        &self.values
    }

    pub fn get(&self, n: usize) -> Option<&Float> {
        self.values.get(n)
    }
}

trait PowRefU {
    fn pow_ref_u(&self, e: u32) -> Float;
}

impl PowRefU for Float {
    fn pow_ref_u(&self, e: u32) -> Float {
        use rug::ops::Pow;
        Float::with_val(self.prec(), self.pow(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(v: &[u64]) -> Vec<Integer> {
        v.iter().map(|&x| Integer::from(x)).collect()
    }

    #[test]
    fn catalan_and_ternary_counts() {
        assert_eq!(tree_counts(2, 4).unwrap().counts(), &small(&[1, 1, 2, 5, 14])[..]);
        assert_eq!(tree_counts(3, 4).unwrap().counts(), &small(&[1, 1, 1, 3, 6])[..]);
        assert_eq!(tree_counts(5, 3).unwrap().counts(), &small(&[1, 1, 1, 1])[..]);
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_count(2, 3).unwrap(), 5);
        assert_eq!(brute_force_count(3, 2).unwrap(), 1);
        assert_eq!(brute_force_count(3, 4).unwrap(), 6);
        assert!(brute_force_count(2, 10).is_err());
    }

    #[test]
    fn square_of_catalan_series() {
        let t = tree_counts(2, 3).unwrap();
        assert_eq!(t.power(2)[..4], small(&[1, 2, 5, 14])[..]);
    }

    #[test]
    fn power_cache_is_the_cauchy_power() {
        let t = tree_counts(4, 30).unwrap();
        let tau = t.series::<Integer>((), 31);
        let mut acc = tau.clone();
        for k in 2..=4 {
            acc = crate::series::convolve(&acc, &tau, 30).unwrap();
            assert_eq!(acc.coeffs(), t.power(k));
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(
            tree_counts_with_budget(3, 100_000, 1 << 20),
            Err(Error::ResourceBudget(_))
        ));
    }

    #[test]
    fn lazy_extension_matches_fresh_build() {
        let t = tree_counts(3, 20).unwrap().extended(40);
        assert_eq!(t, tree_counts(3, 40).unwrap());
    }

    #[test]
    fn split_probabilities_for_three_keys() {
        let t = tree_counts(2, 3).unwrap();
        assert_eq!(t.split_probability(&[2, 0]).unwrap(), Rational::from((2, 5)));
        assert_eq!(t.split_probability(&[1, 1]).unwrap(), Rational::from((1, 5)));
    }

    #[test]
    fn cache_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let built = load_or_build(dir.path(), 3, 25).unwrap();
        let loaded = load_or_build(dir.path(), 3, 25).unwrap();
        assert_eq!(built, loaded);
        let mut cache = built.to_cache();
        cache.counts[10] = "7".into();
        assert!(TreeCountTable::from_cache(&cache).is_err());
        let text = std::fs::read_to_string(cache_path(dir.path(), 3, 25)).unwrap();
        assert!(text.starts_with("{\"m\":3,\"N\":25,\"counts\":[\"1\""));
    }

    #[test]
    fn scaled_counts_track_exact_counts() {
        let rho = Float::with_val(128, 0.25);
        let s = ScaledCounts::new(2, &rho, 60).unwrap();
        let t = tree_counts(2, 60).unwrap();
        for n in [0usize, 1, 7, 60] {
            let want = Float::with_val(128, &t.counts()[n]) * Float::with_val(128, 0.25f64.powi(n as i32));
            let rel = Float::with_val(128, (s.values()[n].clone() - &want) / &want).abs();
            assert!(rel < 1e-30, "n = {n}");
        }
    }
}

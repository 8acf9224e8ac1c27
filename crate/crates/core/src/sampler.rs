//! Exact sampling of random m-ary search trees.
//!
//! Under the uniform model the root split `(J_1, ..., J_m)` of a tree on
//! `n` keys has probability `tau_{j_1} ... tau_{j_m} / tau_n`. Parts are
//! drawn one at a time from their exact conditional laws with big-integer
//! inverse-CDF draws, so no rounding enters the sampled shape. The
//! random-permutation model draws the split uniformly over compositions.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::integer::Order;
use rug::Integer;
use serde::Serialize;

use crate::enumeration::TreeCountTable;
use crate::error::{Error, Result};
use crate::par::{map_indices, with_threads};
use crate::stats::{histogram, jackknife, Estimate, Histogram, Stat};
use crate::toll::TollSpec;
use crate::tree::Tree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Uniform,
    RandomPermutation,
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Model::Uniform),
            "rp" | "random_permutation" => Ok(Model::RandomPermutation),
            _ => Err(Error::InvalidParameter(format!("unknown model {s:?} (uniform|rp)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplitSampler {
    pub m: usize,
    pub table: Arc<TreeCountTable>,
    pub seed: u64,
    pub model: Model,
}

/// Uniform integer in `[0, bound)` from 64-bit words, by masking the top
/// word and rejecting overshoots.
pub fn uniform_below<R: RngCore>(rng: &mut R, bound: &Integer) -> Integer {
    assert!(*bound > 0, "empty range");
    if let Some(b) = bound.to_u64() {
        // Lemire-free rejection on the masked word keeps the stream simple.
        let mask = u64::MAX >> (b - 1).leading_zeros().min(63);
        loop {
            let x = rng.next_u64() & if b == 1 { 0 } else { mask };
            if x < b {
                return Integer::from(x);
            }
        }
    }
    let bits = bound.significant_bits();
    let words = bits.div_ceil(64) as usize;
    let top_bits = bits - 64 * (words as u32 - 1);
    let top_mask = if top_bits == 64 { u64::MAX } else { (1u64 << top_bits) - 1 };
    let mut buf = vec![0u64; words];
    loop {
        for w in buf.iter_mut() {
            *w = rng.next_u64();
        }
        buf[words - 1] &= top_mask;
        let x = Integer::from_digits(&buf, Order::Lsf);
        if x < *bound {
            return x;
        }
    }
}

impl SplitSampler {
    pub fn new(table: Arc<TreeCountTable>, seed: u64, model: Model) -> Self {
        SplitSampler {
            m: table.m(),
            table,
            seed,
            model,
        }
    }

    /// Random stream for replication `rep`.
    pub fn rng(&self, rep: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(rep);
        r
    }

    /// One root split of a tree on `n >= m - 1` keys.
    pub fn split_sample<R: RngCore>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        let m = self.m;
        if n + 1 < m {
            return Err(Error::InvalidParameter(format!("a tree on {n} keys has no split for m = {m}")));
        }
        self.table.ensure_covers(n)?;
        let rem = n - (m - 1);
        Ok(match self.model {
            Model::Uniform => self.uniform_split(rem, rng),
            Model::RandomPermutation => rp_split(m, rem, rng),
        })
    }

    fn uniform_split<R: RngCore>(&self, rem: usize, rng: &mut R) -> Vec<usize> {
        let m = self.m;
        let tau = self.table.counts();
        let mut parts = Vec::with_capacity(m);
        let mut left = rem;
        for i in 0..m - 1 {
            // the other k parts share tau^k
            let k = m - 1 - i;
            let rest = self.table.power(k);
            let total = self.table.power_coeff(k + 1, left);
            let u = uniform_below(rng, &total);
            let w = |j: usize| Integer::from(&tau[j] * &rest[left - j]);
            // Mass sits at both ends of the range, so scan from both sides.
            let (mut lo, mut hi) = (0usize, left);
            let mut below = Integer::new(); // weight of j < lo
            let mut above = total.clone(); // weight of j <= hi
            let j = loop {
                below += w(lo);
                if u < below {
                    break lo;
                }
                lo += 1;
                above -= w(hi);
                if u >= above {
                    break hi;
                }
                hi -= 1;
            };
            parts.push(j);
            left -= j;
        }
        parts.push(left);
        parts
    }

    /// A full tree, built with an explicit stack.
    pub fn sample_tree<R: RngCore>(&self, n: usize, rng: &mut R) -> Result<Tree> {
        self.table.ensure_covers(n)?;
        let m = self.m;
        if n + 1 < m {
            return Ok(Tree::terminal(n));
        }
        // Nodes are created parent first and linked afterwards.
        let mut sizes: Vec<usize> = vec![n];
        let mut kids: Vec<Vec<usize>> = vec![Vec::new()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let sz = sizes[id];
            if sz + 1 < m {
                continue;
            }
            for j in self.split_sample(sz, rng)? {
                let c = sizes.len();
                sizes.push(j);
                kids.push(Vec::new());
                kids[id].push(c);
                stack.push(c);
            }
        }
        // children always have larger ids than their parent
        let mut built: Vec<Option<Tree>> = vec![None; sizes.len()];
        for id in (0..sizes.len()).rev() {
            let children = kids[id].iter().map(|&c| built[c].take().expect("child built")).collect();
            built[id] = Some(Tree {
                size: sizes[id],
                children,
            });
        }
        Ok(built[0].take().expect("root built"))
    }

    /// One draw of each functional on the same random tree.
    pub fn sample_functionals<R: RngCore>(&self, n: usize, tolls: &[TollTable], rng: &mut R) -> Result<Vec<f64>> {
        self.table.ensure_covers(n)?;
        let m = self.m;
        let mut acc = vec![0.0; tolls.len()];
        let mut stack = vec![n];
        while let Some(sz) = stack.pop() {
            if sz + 1 < m {
                for (a, t) in acc.iter_mut().zip(tolls) {
                    *a += t.initial[sz];
                }
                continue;
            }
            for (a, t) in acc.iter_mut().zip(tolls) {
                *a += t.values[sz];
            }
            stack.extend(self.split_sample(sz, rng)?);
        }
        Ok(acc)
    }

    pub fn sample_functional<R: RngCore>(&self, n: usize, toll: &TollSpec, rng: &mut R) -> Result<f64> {
        let t = TollTable::new(toll, n)?;
        Ok(self.sample_functionals(n, std::slice::from_ref(&t), rng)?[0])
    }
}

/// Uniform composition of `rem` into `m` nonnegative parts: stars and bars.
fn rp_split<R: RngCore>(m: usize, rem: usize, rng: &mut R) -> Vec<usize> {
    let mut bars = index::sample(rng, rem + m - 1, m - 1).into_vec();
    bars.sort_unstable();
    let mut parts = Vec::with_capacity(m);
    let mut prev = 0usize;
    for b in bars {
        parts.push(b - prev);
        prev = b + 1;
    }
    parts.push(rem + m - 1 - prev);
    parts
}

/// Toll and initial values in double precision for fast accumulation.
#[derive(Clone, Debug)]
pub struct TollTable {
    pub label: String,
    pub values: Vec<f64>,
    pub initial: Vec<f64>,
}

impl TollTable {
    pub fn new(toll: &TollSpec, n_max: usize) -> Result<Self> {
        let values = (0..=n_max)
            .map(|n| if n + 1 >= toll.m { toll.toll_f64(n) } else { 0.0 })
            .collect();
        let initial = toll.initial.iter().map(|x| x.to_f64()).collect();
        Ok(TollTable {
            label: toll.label(),
            values,
            initial,
        })
    }
}

/// Monte Carlo summary for one functional.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    pub model: Model,
    pub toll: String,
    pub mean: Estimate,
    pub variance: Estimate,
    pub skewness: Option<Estimate>,
    pub excess_kurtosis: Option<Estimate>,
    pub histogram: Histogram,
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// Per-replication values of each functional, in replication order.
pub fn simulate_values(s: &SplitSampler, n: usize, tolls: &[TollSpec], reps: usize, threads: usize) -> Result<Vec<Vec<f64>>> {
    let tables: Vec<TollTable> = tolls.iter().map(|t| TollTable::new(t, n)).collect::<Result<_>>()?;
    for t in tolls {
        if t.m != s.m {
            return Err(Error::InvalidParameter(format!("toll is for m = {} but the sampler uses m = {}", t.m, s.m)));
        }
    }
    let draws: Vec<Result<Vec<f64>>> = with_threads(threads, || {
        map_indices(reps, |rep| {
            let mut rng = s.rng(rep as u64);
            s.sample_functionals(n, &tables, &mut rng)
        })
    });
    let mut cols = vec![Vec::with_capacity(reps); tolls.len()];
    for d in draws {
        for (c, v) in cols.iter_mut().zip(d?) {
            c.push(v);
        }
    }
    Ok(cols)
}

pub fn summarize(s: &SplitSampler, n: usize, toll: &TollSpec, values: &[f64], elapsed_secs: f64) -> Result<SimulationSummary> {
    let variance = jackknife(values, Stat::Variance)?;
    let spread = variance.value > 0.0;
    Ok(SimulationSummary {
        n,
        m: s.m,
        reps: values.len(),
        seed: s.seed,
        model: s.model,
        toll: toll.label(),
        mean: jackknife(values, Stat::Mean)?,
        variance,
        skewness: spread.then(|| jackknife(values, Stat::Skewness)).transpose()?,
        excess_kurtosis: spread.then(|| jackknife(values, Stat::ExcessKurtosis)).transpose()?,
        histogram: histogram(values, 50),
        elapsed_secs,
    })
}

/// Summaries for several functionals evaluated on the same trees.
pub fn monte_carlo_multi(
    s: &SplitSampler,
    n: usize,
    tolls: &[TollSpec],
    reps: usize,
    threads: usize,
) -> Result<Vec<SimulationSummary>> {
    if reps < 3 {
        return Err(Error::InvalidParameter("need at least 3 replications".into()));
    }
    let start = Instant::now();
    let cols = simulate_values(s, n, tolls, reps, threads)?;
    let elapsed = start.elapsed().as_secs_f64();
    tolls
        .iter()
        .zip(&cols)
        .map(|(t, v)| summarize(s, n, t, v, elapsed))
        .collect()
}

/// Summary of `reps` independent draws of `X_n`. Replication `r` uses its
/// own stream, so the result does not depend on `threads`.
pub fn monte_carlo(s: &SplitSampler, n: usize, toll: &TollSpec, reps: usize, threads: usize) -> Result<SimulationSummary> {
    Ok(monte_carlo_multi(s, n, std::slice::from_ref(toll), reps, threads)?.remove(0))
}

//! Exact moments of additive functionals in coefficient space.
//!
//! With `F_s(z) = sum_n tau_n E[X_n^s] z^n`, the distributional recurrence
//! gives
//!
//! ```text
//! F_s = (X_s + R_s) / (1 - m z^{m-1} tau^{m-1})
//! ```
//!
//! where `X_s = sum_{n <= m-2} x_n^s z^n` and `R_s` collects every product
//! of lower moment series: `[z^n] R_s = r_n^{[s]}`. Products are grouped by
//! the multiset of nonzero exponents so each distinct product is formed once.

use std::collections::HashMap;

use rug::{Float, Integer, Rational};

use crate::enumeration::TreeCountTable;
use crate::error::{Error, Result};
use crate::scalar::{resolve_exact_mode, ArithmeticMode, Real, Scalar};
use crate::series::{convolve, Series};
use crate::toll::{TailRule, TollKind, TollSpec};

/// Requested arithmetic for [`exact_moments`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentMode {
    /// Exact integers or rationals, whichever the toll needs.
    Exact,
    /// Binary floats with the given precision.
    Float(u32),
}

/// `mu[s][n] = tau_n E[X_n^s]` and, optionally, `r[s][n] = r_n^{[s]}`.
#[derive(Clone, Debug)]
pub struct MomentTable<T: Scalar> {
    pub toll: TollSpec,
    pub n_max: usize,
    pub s_max: usize,
    pub mu: Vec<Series<T>>,
    pub r: Vec<Series<T>>,
    pub tau: Vec<Integer>,
}

/// A moment table in whichever carrier the toll required.
#[derive(Clone, Debug)]
pub enum AnyMomentTable {
    Integer(MomentTable<Integer>),
    Rational(MomentTable<Rational>),
    Float(MomentTable<Float>),
}

impl AnyMomentTable {
    pub fn mode(&self) -> ArithmeticMode {
        match self {
            AnyMomentTable::Integer(_) => ArithmeticMode::ExactInteger,
            AnyMomentTable::Rational(_) => ArithmeticMode::ExactRational,
            AnyMomentTable::Float(t) => t.mu[0].mode(),
        }
    }

    pub fn n_max(&self) -> usize {
        match self {
            AnyMomentTable::Integer(t) => t.n_max,
            AnyMomentTable::Rational(t) => t.n_max,
            AnyMomentTable::Float(t) => t.n_max,
        }
    }

    pub fn s_max(&self) -> usize {
        match self {
            AnyMomentTable::Integer(t) => t.s_max,
            AnyMomentTable::Rational(t) => t.s_max,
            AnyMomentTable::Float(t) => t.s_max,
        }
    }

    /// `E[X_n^s]` as a real number.
    pub fn moment(&self, s: usize, n: usize) -> Real {
        match self {
            AnyMomentTable::Integer(t) => t.moment_exact(s, n),
            AnyMomentTable::Rational(t) => t.moment_exact(s, n),
            AnyMomentTable::Float(t) => Real::Approx(t.moment_float(s, n)),
        }
    }

    /// The coefficient `tau_n E[X_n^s]` rendered as a string.
    pub fn coefficient_string(&self, s: usize, n: usize, digits: usize) -> String {
        match self {
            AnyMomentTable::Integer(t) => t.mu[s].coeffs()[n].render(digits),
            AnyMomentTable::Rational(t) => t.mu[s].coeffs()[n].render(digits),
            AnyMomentTable::Float(t) => t.mu[s].coeffs()[n].render(digits),
        }
    }

    pub fn stats(&self, bits: u32) -> Result<Vec<CentralStats>> {
        match self {
            AnyMomentTable::Integer(t) => central_stats(t, bits),
            AnyMomentTable::Rational(t) => central_stats(t, bits),
            AnyMomentTable::Float(t) => central_stats(t, bits),
        }
    }
}

impl<T: Scalar> MomentTable<T> {
    /// `E[X_n^s]` exactly; panics on a float table.
    pub fn moment_exact(&self, s: usize, n: usize) -> Real {
        let c = self.mu[s].coeffs()[n].to_rational().expect("exact carrier");
        Real::Exact(c / Rational::from(&self.tau[n]))
    }

    pub fn moment_float(&self, s: usize, n: usize) -> Float {
        let bits = match self.mu[s].mode() {
            ArithmeticMode::BigFloat(b) => b,
            _ => 256,
        };
        let c = self.mu[s].coeffs()[n].to_float(bits);
        c / Float::with_val(bits, &self.tau[n])
    }
}

/// Builds moments `s = 0..=s_max` for `n = 0..=n_max`.
///
/// Exact mode settles on integers or rationals from the toll and initial
/// values and refuses tolls with irrational values.
pub fn exact_moments(
    toll: &TollSpec,
    table: &TreeCountTable,
    s_max: usize,
    n_max: usize,
    mode: MomentMode,
) -> Result<AnyMomentTable> {
    exact_moments_opts(toll, table, s_max, n_max, mode, false)
}

pub fn exact_moments_opts(
    toll: &TollSpec,
    table: &TreeCountTable,
    s_max: usize,
    n_max: usize,
    mode: MomentMode,
    keep_r: bool,
) -> Result<AnyMomentTable> {
    match mode {
        MomentMode::Exact => {
            let values = toll_values(toll, n_max, 64);
            let all: Vec<&Real> = values.iter().flatten().chain(toll.initial.iter()).collect();
            match resolve_exact_mode(all)? {
                ArithmeticMode::ExactInteger => {
                    moments_in::<Integer>(toll, table, s_max, n_max, (), keep_r).map(AnyMomentTable::Integer)
                }
                _ => moments_in::<Rational>(toll, table, s_max, n_max, (), keep_r).map(AnyMomentTable::Rational),
            }
        }
        MomentMode::Float(bits) => {
            moments_in::<Float>(toll, table, s_max, n_max, bits, keep_r).map(AnyMomentTable::Float)
        }
    }
}

/// `b_n` for `n <= n_max`, `None` below `m - 1`.
fn toll_values(toll: &TollSpec, n_max: usize, bits: u32) -> Vec<Option<Real>> {
    (0..=n_max)
        .map(|n| (n + 1 >= toll.m).then(|| toll.toll_value(n, bits)))
        .collect()
}

fn convert<T: Scalar>(ctx: T::Ctx, v: &Real, what: &str) -> Result<T> {
    T::from_real(ctx, v).ok_or_else(|| Error::Unrepresentable {
        mode: T::mode(ctx).to_string(),
        what: what.to_string(),
    })
}

/// Multisets of positive parts summing to `total` with at most `max_len`
/// parts, parts in nonincreasing order.
fn partitions(total: usize, max_len: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, cap: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        if left == 0 {
            return;
        }
        for p in (1..=cap.min(rest)).rev() {
            cur.push(p);
            rec(rest - p, p, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, total, max_len, &mut Vec::new(), &mut out);
    out
}

fn factorial(n: usize) -> Integer {
    Integer::from(Integer::factorial(n as u32))
}

/// `m! / ((m-k)! prod mult!) * t! / prod p!` for a partition `parts` of `t`.
fn partition_weight(m: usize, parts: &[usize]) -> Integer {
    let t: usize = parts.iter().sum();
    let k = parts.len();
    let mut w = factorial(m) / factorial(m - k);
    let mut i = 0;
    while i < parts.len() {
        let mut j = i;
        while j < parts.len() && parts[j] == parts[i] {
            j += 1;
        }
        w /= factorial(j - i);
        i = j;
    }
    let mut multinom = factorial(t);
    for &p in parts {
        multinom /= factorial(p);
    }
    w * multinom
}

struct Engine<'a, T: Scalar> {
    m: usize,
    len: usize,
    ctx: T::Ctx,
    tau_pow: Vec<Series<T>>,
    f: Vec<Series<T>>,
    products: HashMap<Vec<usize>, Series<T>>,
    _table: &'a TreeCountTable,
}

impl<T: Scalar> Engine<'_, T> {
    /// Product of `F_p` over the parts (memoised by prefix).
    fn product(&mut self, parts: &[usize]) -> Result<Series<T>> {
        if let Some(p) = self.products.get(parts) {
            return Ok(p.clone());
        }
        let value = if parts.len() == 1 {
            self.f[parts[0]].clone()
        } else {
            let head = self.product(&parts[..parts.len() - 1])?;
            convolve(&head, &self.f[parts[parts.len() - 1]], self.len - 1)?
        };
        self.products.insert(parts.to_vec(), value.clone());
        Ok(value)
    }

    /// `sum over (s_1..s_m) with sum t, optionally excluding the single-part
    /// term, of multinomial * prod F_{s_i}`.
    fn g(&mut self, t: usize, exclude_single: bool) -> Result<Series<T>> {
        let mut acc = Series::zeros(self.ctx, self.len);
        if t == 0 {
            return Ok(self.tau_pow[self.m].clone());
        }
        for parts in partitions(t, self.m) {
            if exclude_single && parts.len() == 1 {
                continue;
            }
            let prod = self.product(&parts)?;
            let rest = self.m - parts.len();
            let term = if rest == 0 {
                prod
            } else {
                convolve(&prod, &self.tau_pow[rest], self.len - 1)?
            };
            let w = T::from_integer(self.ctx, &partition_weight(self.m, &parts));
            acc.add_scaled(&term, &w)?;
        }
        Ok(acc)
    }
}

fn moments_in<T: Scalar>(
    toll: &TollSpec,
    table: &TreeCountTable,
    s_max: usize,
    n_max: usize,
    ctx: T::Ctx,
    keep_r: bool,
) -> Result<MomentTable<T>> {
    let m = toll.m;
    if table.m() != m {
        return Err(Error::InvalidParameter(format!(
            "toll is for m = {m} but the count table is for m = {}",
            table.m()
        )));
    }
    if s_max == 0 {
        return Err(Error::InvalidParameter("s_max must be >= 1".into()));
    }
    table.ensure_covers(n_max)?;
    if toll.initial.len() != m - 1 {
        return Err(Error::InvalidParameter(format!("need {} initial values", m - 1)));
    }
    let len = n_max + 1;
    let bits = match T::mode(ctx) {
        ArithmeticMode::BigFloat(b) => b,
        _ => 64,
    };
    let shift = m - 1;

    // Toll values b_n in the carrier, and their powers as needed.
    let mut b: Vec<T> = Vec::with_capacity(len);
    for (n, v) in toll_values(toll, n_max, bits).iter().enumerate() {
        b.push(match v {
            Some(v) => convert(ctx, v, &format!("the toll value at n = {n}"))?,
            None => T::zero(ctx),
        });
    }
    let x: Vec<T> = toll
        .initial
        .iter()
        .enumerate()
        .map(|(j, v)| convert(ctx, v, &format!("the initial value x_{j}")))
        .collect::<Result<_>>()?;

    let tau_pow: Vec<Series<T>> = (0..=m).map(|k| table.power_series::<T>(k, ctx, len)).collect();
    // Q = 1 / (1 - m z^{m-1} tau^{m-1})
    let mut u = tau_pow[m - 1].shifted(shift);
    u.scale_u64(m as u64);
    let q = Series::geometric_inverse(&u, len)?;

    let mut eng = Engine {
        m,
        len,
        ctx,
        tau_pow,
        f: vec![table.series::<T>(ctx, len)],
        products: HashMap::new(),
        _table: table,
    };
    // G_t for t < s, complete
    let mut g_full: Vec<Series<T>> = vec![eng.g(0, false)?];
    let mut r_rows = vec![Series::zeros(ctx, if keep_r { len } else { 0 })];
    let mut b_pow: Vec<T> = b.clone(); // b_n^{s0}, advanced per s0

    for s in 1..=s_max {
        let mut r = Series::<T>::zeros(ctx, len);
        // s0 >= 1 terms: C(s, s0) b_n^{s0} [z^{n-m+1}] G_{s-s0}
        b_pow.clone_from(&b);
        for s0 in 1..=s {
            if s0 > 1 {
                for (p, bn) in b_pow.iter_mut().zip(&b) {
                    *p = p.mul_ref(bn);
                }
            }
            let binom = T::from_integer(ctx, &Integer::from(Integer::binomial_u(s as u32, s0 as u32)));
            let g = &g_full[s - s0];
            let rc = r.coeffs_mut();
            for n in shift..len {
                if b_pow[n].is_zero() {
                    continue;
                }
                let gv = &g.coeffs()[n - shift];
                let term = b_pow[n].mul_ref(gv);
                rc[n].add_mul(&term, &binom);
            }
        }
        // s0 = 0 terms with every s_i < s
        let g_minus = eng.g(s, true)?;
        {
            let rc = r.coeffs_mut();
            for n in shift..len {
                rc[n].add_ref(&g_minus.coeffs()[n - shift]);
            }
        }
        let mut rhs = r.clone();
        for (j, xj) in x.iter().enumerate().take(len) {
            let mut p = T::one(ctx);
            for _ in 0..s {
                p = p.mul_ref(xj);
            }
            rhs.coeffs_mut()[j].add_ref(&p);
        }
        let fs = convolve(&q, &rhs, n_max)?;
        eng.f.push(fs);
        // complete G_s = G_s^- + m F_s tau^{m-1}
        let single = convolve(&eng.f[s], &eng.tau_pow[m - 1], n_max)?;
        let mut gs = g_minus;
        gs.add_scaled(&single, &T::from_integer(ctx, &Integer::from(m)))?;
        if s < s_max {
            g_full.push(gs);
        }
        r_rows.push(if keep_r { r } else { Series::zeros(ctx, 0) });
    }
    Ok(MomentTable {
        toll: toll.clone(),
        n_max,
        s_max,
        mu: eng.f,
        r: r_rows,
        tau: table.counts()[..len].to_vec(),
    })
}

/// The functional `X_n - c (n+1)`: same toll, initial values shifted to
/// `x_j - c (j+1)`.
pub fn centered_spec(toll: &TollSpec, c: &Real) -> TollSpec {
    let mut out = toll.clone();
    for (j, x) in out.initial.iter_mut().enumerate() {
        *x = x.sub_scaled(c, j as u64 + 1);
    }
    out
}

/// Mean, variance and standardized third and fourth central moments.
#[derive(Clone, Debug)]
pub struct CentralStats {
    pub n: usize,
    pub mean: Real,
    pub variance: Real,
    /// `None` when the variance is zero or fewer than three moments exist.
    pub skewness: Option<Float>,
    pub excess_kurtosis: Option<Float>,
}

/// Central statistics per `n`. In exact carriers the mean and variance
/// are exact; a float variance below `-tolerance` is reported as
/// cancellation, never clamped.
pub fn central_stats<T: Scalar>(mt: &MomentTable<T>, bits: u32) -> Result<Vec<CentralStats>> {
    if mt.s_max < 2 {
        return Err(Error::InvalidParameter("central statistics need s_max >= 2".into()));
    }
    let exact = T::mode(mt.mu[0].ctx()).is_exact();
    let mut out = Vec::with_capacity(mt.n_max + 1);
    for n in 0..=mt.n_max {
        let raw: Vec<Real> = (0..=mt.s_max.min(4))
            .map(|s| {
                if exact {
                    mt.moment_exact(s, n)
                } else {
                    Real::Approx(mt.moment_float(s, n))
                }
            })
            .collect();
        out.push(stats_from_raw(n, &raw, bits)?);
    }
    Ok(out)
}

/// Standardized moments from raw moments `E[X^0..X^k]`, `k` in 2..=4.
pub fn stats_from_raw(n: usize, raw: &[Real], bits: u32) -> Result<CentralStats> {
    let mean = raw[1].clone();
    let central: Vec<Real> = (0..raw.len()).map(|k| central_moment(raw, k, bits)).collect();
    let variance = central[2].clone();
    let var_f = variance.to_float(bits);
    match &variance {
        Real::Approx(v) => {
            let scale = raw[2].to_float(bits).abs();
            let tol = Float::with_val(bits, Float::i_exp(1, -(bits as i32) + 16)) * scale;
            if *v < -tol {
                return Err(Error::Numerical(format!(
                    "variance at n = {n} is {} after cancellation",
                    crate::scalar::decimal_string(v, 6)
                )));
            }
        }
        Real::Exact(v) => {
            if *v < 0 {
                return Err(Error::Numerical(format!("negative exact variance at n = {n}")));
            }
        }
    }
    let positive = match &variance {
        Real::Exact(v) => *v > 0,
        Real::Approx(v) => *v > 0,
    };
    let (skewness, excess_kurtosis) = if positive {
        let sd = Float::with_val(bits, var_f.sqrt_ref());
        let skew = (raw.len() > 3).then(|| central[3].to_float(bits) / Float::with_val(bits, Float::with_val(bits, sd.square_ref()) * &sd));
        let kurt = (raw.len() > 4).then(|| central[4].to_float(bits) / Float::with_val(bits, var_f.square_ref()) - 3u32);
        (skew, kurt)
    } else {
        (None, None)
    };
    Ok(CentralStats {
        n,
        mean,
        variance,
        skewness,
        excess_kurtosis,
    })
}

/// `E[(X - EX)^k]` by binomial expansion of the raw moments.
pub fn central_moment(raw: &[Real], k: usize, bits: u32) -> Real {
    let all_exact = raw.iter().all(|r| r.as_exact().is_some());
    if all_exact {
        let mu = raw[1].as_exact().unwrap().clone();
        let mut acc = Rational::new();
        for j in 0..=k {
            let c = Integer::from(Integer::binomial_u(k as u32, j as u32));
            let mut term = Rational::from(raw[j].as_exact().unwrap() * c);
            let p = Rational::from(rug::ops::Pow::pow(&mu, (k - j) as u32));
            term *= p;
            if (k - j) % 2 == 1 {
                acc -= term;
            } else {
                acc += term;
            }
        }
        Real::Exact(acc)
    } else {
        let mu = raw[1].to_float(bits);
        let mut acc = Float::new(bits);
        for j in 0..=k {
            let c = Integer::from(Integer::binomial_u(k as u32, j as u32));
            let mut term = raw[j].to_float(bits) * Float::with_val(bits, &c);
            term *= Float::with_val(bits, rug::ops::Pow::pow(&mu, (k - j) as u32));
            if (k - j) % 2 == 1 {
                acc -= term;
            } else {
                acc += term;
            }
        }
        Real::Approx(acc)
    }
}

/// Outcome of [`degeneracy_check`].
#[derive(Clone, Debug)]
pub struct DegeneracyReport {
    pub degenerate: bool,
    /// `(v0, v1) = (X_0, X_1)`; the deterministic value is `n v1 - (n-1) v0`.
    pub v0: Real,
    pub v1: Real,
    /// Smallest index where the toll or an initial value breaks the
    /// condition.
    pub first_violation: Option<usize>,
    /// Smallest `n <= n_max` with positive engine variance.
    pub positive_variance_at: Option<usize>,
    /// Indices `j <= m-2` where the toll's own `b_j` differs from `x_j`.
    pub convention_mismatch: Vec<usize>,
}

impl DegeneracyReport {
    /// Predicted deterministic value `n v1 - (n-1) v0`.
    pub fn predicted(&self, n: usize) -> Real {
        let v1 = self.v1.as_exact().cloned();
        let v0 = self.v0.as_exact().cloned();
        match (v0, v1) {
            (Some(v0), Some(v1)) => {
                let n = n as i64;
                Real::Exact((v1 * n) - (v0 * (n - 1)))
            }
            _ => {
                let bits = 128;
                let n = n as u32;
                Real::Approx(self.v1.to_float(bits) * n - self.v0.to_float(bits) * n.saturating_sub(1) + self.v0.to_float(bits) * u32::from(n == 0))
            }
        }
    }
}

fn reals_equal(a: &Real, b: &Real) -> bool {
    match (a, b) {
        (Real::Exact(x), Real::Exact(y)) => x == y,
        _ => {
            let bits = 128;
            let d = Float::with_val(bits, a.to_float(bits) - b.to_float(bits)).abs();
            d < Float::with_val(bits, Float::i_exp(1, -100))
        }
    }
}

/// Decides whether `X_n` is deterministic for every `n`.
///
/// With `v0 = X_0` and `v1 = X_1` the functional is degenerate exactly when
/// `x_n = n v1 - (n-1) v0` for `2 <= n <= m-2` and
/// `b_n = (m-1)(v1 - 2 v0)` for every `n >= m-1`; then `X_n = n v1 - (n-1) v0`.
/// When the initial values are `b_0..b_{m-2}` this is the classical
/// condition on the toll alone. The toll is inspected up to `n_max` and,
/// for custom tolls, through their rule beyond the table.
pub fn degeneracy_check(toll: &TollSpec, table: &TreeCountTable, n_max: usize) -> Result<DegeneracyReport> {
    let m = toll.m;
    let bits = 128;
    let x = &toll.initial;
    let v0 = x[0].clone();
    let v1 = if m >= 3 {
        x[1].clone()
    } else {
        // a single key over two empty subtrees
        add_reals(&add_reals(&v0, &v0), &toll.toll_value(1, bits))
    };
    let convention_mismatch = (0..m - 1)
        .filter(|&j| toll.natural_value(j).is_none_or(|b| !reals_equal(&b, &x[j])))
        .collect();

    let mut first_violation = None;
    let predicted = |n: usize| -> Real {
        let r = DegeneracyReport {
            degenerate: true,
            v0: v0.clone(),
            v1: v1.clone(),
            first_violation: None,
            positive_variance_at: None,
            convention_mismatch: Vec::new(),
        };
        r.predicted(n)
    };
    for (n, xn) in x.iter().enumerate().skip(2) {
        if !reals_equal(xn, &predicted(n)) {
            first_violation = Some(n);
            break;
        }
    }
    if first_violation.is_none() {
        let target = sub_reals(&v1, &add_reals(&v0, &v0)).scale(m as i64 - 1);
        let last = match &toll.kind {
            TollKind::Custom { values, .. } => n_max.max(values.len()),
            _ => n_max,
        };
        for n in (m - 1)..=last {
            if !reals_equal(&toll.toll_value(n, bits), &target) {
                first_violation = Some(n);
                break;
            }
        }
        if first_violation.is_none() {
            if let TollKind::Custom {
                beyond: TailRule::Zero, ..
            } = &toll.kind
            {
                if !reals_equal(&Real::zero(), &target) {
                    first_violation = Some(last + 1);
                }
            }
        }
    }
    let degenerate = first_violation.is_none();

    let mut positive_variance_at = None;
    if !degenerate {
        let mode = if toll_values(toll, n_max, 64).iter().flatten().chain(x.iter()).all(|v| v.as_exact().is_some()) {
            MomentMode::Exact
        } else {
            MomentMode::Float(256)
        };
        let mt = exact_moments(toll, table, 2, n_max, mode)?;
        for st in mt.stats(256)? {
            let pos = match &st.variance {
                Real::Exact(v) => *v > 0,
                Real::Approx(v) => *v > 1e-40,
            };
            if pos {
                positive_variance_at = Some(st.n);
                break;
            }
        }
    }
    Ok(DegeneracyReport {
        degenerate,
        v0,
        v1,
        first_violation,
        positive_variance_at,
        convention_mismatch,
    })
}

fn add_reals(a: &Real, b: &Real) -> Real {
    match (a, b) {
        (Real::Exact(x), Real::Exact(y)) => Real::Exact(Rational::from(x + y)),
        _ => Real::Approx(a.to_float(128) + b.to_float(128)),
    }
}

fn sub_reals(a: &Real, b: &Real) -> Real {
    match (a, b) {
        (Real::Exact(x), Real::Exact(y)) => Real::Exact(Rational::from(x - y)),
        _ => Real::Approx(a.to_float(128) - b.to_float(128)),
    }
}

trait Scale {
    fn scale(&self, k: i64) -> Real;
}

impl Scale for Real {
    fn scale(&self, k: i64) -> Real {
        match self {
            Real::Exact(x) => Real::Exact(Rational::from(x * k)),
            Real::Approx(f) => Real::Approx(Float::with_val(f.prec(), f * k)),
        }
    }
}

//! The dominant singularity of the counting series, the coefficients of the
//! singular expansion around it, and the toll-dependent constants built
//! from them.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Rational};

use crate::enumeration::ScaledCounts;
use crate::error::{Error, Result};
use crate::numerics::power_log_tail;
use crate::scalar::{decimal_string, digits_for_bits, Real, GUARD_BITS};
use crate::toll::{TailRule, TollKind, TollSpec};

/// Smallest precision accepted for constant computations.
pub const MIN_BITS: u32 = 24;

fn check_args(m: usize, bits: u32) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("branching factor m = {m} must be >= 2")));
    }
    if bits < MIN_BITS {
        return Err(Error::PrecisionStarvation(format!(
            "{bits} bits requested, at least {MIN_BITS} are needed"
        )));
    }
    Ok(())
}

/// `h(z) = m^{m/(m-1)} sum_{j=1}^{m-1} z^j - (m-1)`, the (m-1)-th root form
/// of the singularity equation; increasing on (0, 1). Returns `(h, h')`.
fn singularity_eq(m: usize, pm: &Float, z: &Float) -> (Float, Float) {
    let bits = z.prec();
    let mut sum = Float::new(bits);
    let mut dsum = Float::new(bits);
    let mut pw = Float::with_val(bits, 1); // z^{j-1}
    for j in 1..m {
        dsum += Float::with_val(bits, &pw * j as u32);
        pw *= z;
        sum += &pw;
    }
    let h = Float::with_val(bits, pm * &sum) - (m as u32 - 1);
    let dh = Float::with_val(bits, pm * &dsum);
    (h, dh)
}

/// `m^{m/(m-1)}` at `bits`.
fn m_pow(m: usize, bits: u32) -> Float {
    let e = Float::with_val(bits, Rational::from((m as u32, m as u32 - 1)));
    Float::with_val(bits, Float::with_val(bits, m as u32).pow(&e))
}

/// Root of the singularity equation with a certified sign-change bracket.
#[derive(Clone, Debug)]
pub struct RootCertificate {
    pub rho: Float,
    pub lo: Float,
    pub hi: Float,
    /// `|m^m (sum rho^j)^{m-1} - (m-1)^{m-1}|`
    pub residual: Float,
}

/// Bisection on (0, 1) to locate the root, then Newton to polish it, at
/// `bits` plus guard bits.
pub fn certified_singularity(m: usize, bits: u32) -> Result<RootCertificate> {
    check_args(m, bits)?;
    let wp = bits + GUARD_BITS;
    let pm = m_pow(m, wp);
    let mut lo = Float::with_val(wp, 0);
    let mut hi = Float::with_val(wp, 1);
    let (hlo, _) = singularity_eq(m, &pm, &lo);
    let (hhi, _) = singularity_eq(m, &pm, &hi);
    if !(hlo < 0 && hhi > 0) {
        return Err(Error::NotBracketed {
            lo: "0".into(),
            hi: "1".into(),
        });
    }
    for _ in 0..60 {
        let mid = Float::with_val(wp, &lo + &hi) / 2u32;
        let (h, _) = singularity_eq(m, &pm, &mid);
        if h < 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = Float::with_val(wp, &lo + &hi) / 2u32;
    let tol = Float::with_val(wp, Float::i_exp(1, -(wp as i32) + 2));
    for _ in 0..200 {
        let (h, dh) = singularity_eq(m, &pm, &z);
        let step = Float::with_val(wp, &h / &dh);
        z -= &step;
        if Float::with_val(wp, step.abs_ref()) <= Float::with_val(wp, &tol * &z) {
            break;
        }
    }
    let delta = Float::with_val(wp, Float::i_exp(1, -(bits as i32)));
    let lo = Float::with_val(wp, &z - &delta);
    let hi = Float::with_val(wp, &z + &delta);
    let (hl, _) = singularity_eq(m, &pm, &lo);
    let (hh, _) = singularity_eq(m, &pm, &hi);
    if !(hl < 0 && hh > 0) {
        return Err(Error::NotBracketed {
            lo: decimal_string(&lo, 30),
            hi: decimal_string(&hi, 30),
        });
    }
    let residual = original_residual(m, &z);
    Ok(RootCertificate { rho: z, lo, hi, residual })
}

/// Relative residual of the singularity equation in its original
/// polynomial form.
pub fn original_residual(m: usize, z: &Float) -> Float {
    let bits = z.prec();
    let mut sum = Float::new(bits);
    let mut pw = Float::with_val(bits, 1);
    for _ in 1..m {
        pw *= z;
        sum += &pw;
    }
    let mm = Float::with_val(bits, Float::with_val(bits, m as u32).pow(m as u32));
    let lhs = Float::with_val(bits, mm * Float::with_val(bits, sum.pow(m as u32 - 1)));
    let rhs = Float::with_val(bits, Float::with_val(bits, m as u32 - 1).pow(m as u32 - 1));
    Float::with_val(bits, Float::with_val(bits, lhs - &rhs) / rhs).abs()
}

/// The unique root in (0, 1) of `m^m (sum_{j=1}^{m-1} z^j)^{m-1} = (m-1)^{m-1}`.
pub fn dominant_singularity(m: usize, bits: u32) -> Result<Float> {
    certified_singularity(m, bits).map(|c| c.rho)
}

/// Singular-expansion data for fixed `m`. Values carry guard bits beyond
/// `precision_bits`.
#[derive(Clone, Debug)]
pub struct SingularData {
    pub m: usize,
    pub precision_bits: u32,
    pub rho: Float,
    pub w_rho: Float,
    pub a0: Float,
    pub a1: Float,
    pub a2: Float,
    pub alpha_star: Float,
    pub c0: Float,
    pub sigma_m: Float,
    pub bracket: (Float, Float),
    pub residual: Float,
}

pub fn expansion_coefficients(m: usize, bits: u32) -> Result<SingularData> {
    let cert = certified_singularity(m, bits)?;
    let wp = bits + GUARD_BITS;
    let rho = cert.rho.clone();
    let mf = m as u32;
    let pm = m_pow(m, wp);
    let p1 = Float::with_val(wp, &pm / mf); // m^{1/(m-1)}

    let a0 = Float::with_val(wp, Float::with_val(wp, &p1 * &rho).recip());
    let mut w_sum = Float::new(wp);
    let mut pw = Float::with_val(wp, 1);
    for _ in 0..m - 1 {
        w_sum += &pw;
        pw *= &rho;
    }
    let w_rho = Float::with_val(wp, w_sum * mf) / (mf - 1);

    let inv_rho_m1 = Float::with_val(wp, rho.recip_ref()) - 1u32;
    let alpha_star = Float::with_val(wp, mf) - Float::with_val(wp, Float::with_val(wp, &pm - 1u32) / &inv_rho_m1);
    let a1 = -Float::with_val(
        wp,
        Float::with_val(wp, Float::with_val(wp, &alpha_star * (2 * mf)).sqrt()) / Float::with_val(wp, &pm * &rho),
    );
    let a1sq = Float::with_val(wp, a1.square_ref());
    let a2 = Float::with_val(wp, &a0 - Float::with_val(wp, &a1sq * (mf - 2)) / Float::with_val(wp, &a0 * 6u32));
    let c0 = Float::with_val(wp, Rational::from((mf - 2, 3 * (mf - 1))));
    let sqrt2 = Float::with_val(wp, 2).sqrt();
    let sigma_m = Float::with_val(wp, -Float::with_val(wp, &a1 * (mf - 1))) / Float::with_val(wp, &sqrt2 * &a0);
    let sigma_alt = Float::with_val(wp, Float::with_val(wp, &alpha_star / mf).sqrt()) * (mf - 1);

    let tol = Float::with_val(wp, Float::i_exp(1, -(bits as i32) + 8));
    let rel = |a: &Float, b: &Float| Float::with_val(wp, Float::with_val(wp, a - b).abs() / b.clone().abs());
    if rel(&w_rho, &a0) > tol || rel(&sigma_m, &sigma_alt) > tol {
        return Err(Error::PrecisionStarvation(format!(
            "expansion invariants for m = {m} fail at {bits} bits"
        )));
    }
    if cert.residual > tol {
        return Err(Error::PrecisionStarvation(format!(
            "singularity residual {} exceeds tolerance at {bits} bits",
            decimal_string(&cert.residual, 6)
        )));
    }
    Ok(SingularData {
        m,
        precision_bits: bits,
        rho,
        w_rho,
        a0,
        a1,
        a2,
        alpha_star,
        c0,
        sigma_m,
        bracket: (cert.lo, cert.hi),
        residual: cert.residual,
    })
}

impl SingularData {
    pub fn working_bits(&self) -> u32 {
        self.rho.prec()
    }

    /// `sigma_m` through the second formula, `(m-1) (alpha*/m)^{1/2}`.
    pub fn sigma_m_alt(&self) -> Float {
        let wp = self.working_bits();
        Float::with_val(wp, Float::with_val(wp, &self.alpha_star / self.m as u32).sqrt()) * (self.m as u32 - 1)
    }

    /// `a0 (a0 - a2) / a1^2`, which should equal `(m-2)/6`.
    pub fn a2_relation(&self) -> Float {
        let wp = self.working_bits();
        let num = Float::with_val(wp, &self.a0 * Float::with_val(wp, &self.a0 - &self.a2));
        num / Float::with_val(wp, self.a1.square_ref())
    }

    /// `-a1 / (2 sqrt(pi))`, the limit of `tau_n rho^n n^{3/2}`.
    pub fn tau_lead(&self) -> Float {
        let wp = self.working_bits();
        let sqrt_pi = Float::with_val(wp, Constant::Pi).sqrt();
        Float::with_val(wp, -&self.a1) / Float::with_val(wp, sqrt_pi * 2u32)
    }

    /// `m^{m/(m-1)}`
    pub fn m_pow(&self) -> Float {
        m_pow(self.m, self.working_bits())
    }

    /// `2 a0 C / ((m-1) a1^2)`, the slope of the linear mean term for a
    /// series constant `C`.
    pub fn slope_for(&self, c: &Float) -> Float {
        let wp = self.working_bits();
        let num = Float::with_val(wp, &self.a0 * c) * 2u32;
        num / Float::with_val(wp, Float::with_val(wp, self.a1.square_ref()) * (self.m as u32 - 1))
    }

    pub fn scaled_counts(&self, n_max: usize) -> Result<ScaledCounts> {
        ScaledCounts::new(self.m, &self.rho, n_max)
    }

    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let d = digits_for_bits(self.precision_bits);
        vec![
            ("m", self.m.to_string()),
            ("precision_bits", self.precision_bits.to_string()),
            ("rho", decimal_string(&self.rho, d)),
            ("w_rho", decimal_string(&self.w_rho, d)),
            ("a0", decimal_string(&self.a0, d)),
            ("a1", decimal_string(&self.a1, d)),
            ("a2", decimal_string(&self.a2, d)),
            ("alpha_star", decimal_string(&self.alpha_star, d)),
            ("c0", decimal_string(&self.c0, d)),
            ("sigma_m", decimal_string(&self.sigma_m, d)),
            ("rho_bracket_lo", decimal_string(&self.bracket.0, d + 4)),
            ("rho_bracket_hi", decimal_string(&self.bracket.1, d + 4)),
            ("residual", decimal_string(&self.residual, 6)),
        ]
    }
}

/// Leading terms of `t_n = tau_n rho^n ~ K n^{-3/2} + K1 n^{-5/2} + K2 n^{-7/2}`.
#[derive(Clone, Debug)]
pub struct TailModel {
    pub k: Float,
    pub k1: Float,
    /// Change in `k1` between the last two extrapolation levels.
    pub k1_spread: Float,
    pub k2: Float,
}

impl TailModel {
    /// Fits `K1` and `K2` by Richardson extrapolation of
    /// `g(n) = n (t_n n^{3/2} - K)` at `n`, `n/2` and `n/4`.
    pub fn fit(sd: &SingularData, t: &ScaledCounts, n: usize) -> Result<TailModel> {
        if n / 4 < sd.m.max(8) || n > t.n_max() {
            return Err(Error::TableTooShort {
                needed: n,
                have: t.n_max(),
            });
        }
        let wp = t.bits();
        let k = sd.tau_lead();
        let g = |j: usize| {
            let jf = Float::with_val(wp, j);
            let scaled = Float::with_val(wp, &t.values()[j] * Float::with_val(wp, jf.clone().pow(Float::with_val(wp, 1.5))));
            Float::with_val(wp, (scaled - &k) * jf)
        };
        let (g1, g2, g4) = (g(n), g(n / 2), g(n / 4));
        let k1 = Float::with_val(wp, Float::with_val(wp, &g1 * 2u32) - &g2);
        let k1_prev = Float::with_val(wp, Float::with_val(wp, &g2 * 2u32) - &g4);
        let k1_spread = Float::with_val(wp, Float::with_val(wp, &k1 - &k1_prev).abs());
        let k2 = Float::with_val(wp, -Float::with_val(wp, Float::with_val(wp, &g1 - &g2) * n as u32));
        Ok(TailModel { k, k1, k1_spread, k2 })
    }

    /// `a3` implied by `K1`: `(K1 - 3K/8) 4 sqrt(pi) / 3`. Not certified.
    pub fn a3(&self) -> Float {
        let wp = self.k.prec();
        let sqrt_pi = Float::with_val(wp, Constant::Pi).sqrt();
        let d = Float::with_val(wp, &self.k1 - Float::with_val(wp, &self.k * 3u32) / 8u32);
        Float::with_val(wp, d * sqrt_pi) * 4u32 / 3u32
    }
}

/// A convergent series constant with the heuristic bound on its error.
#[derive(Clone, Debug)]
pub struct SeriesConstant {
    pub value: Float,
    pub tail_error_bound: Float,
    pub cutoff: usize,
    pub tail: Option<TailModel>,
}

/// Default largest cutoff tried by [`toll_series_constant`].
pub const DEFAULT_MAX_CUTOFF: usize = 8192;
const FIRST_CUTOFF: usize = 512;

/// Which constant a toll calls for.
enum SeriesForm {
    /// `sum b_n t_n` with the tail asymptotics of `b_n`
    Plain(TollAsymptotics),
    /// `sum (n^{1/2} t_n - K/n)`
    CompensatedHalf,
    Finite(usize),
}

/// `b_n ~ q ln n - l - s1/n - s2/(2 n^2)` (shape) or `b_n = c n^beta`.
enum TollAsymptotics {
    Power { c: Float, beta: Float },
    Log { q: u32, l: Float, s1: u32, s2: u32 },
}

fn series_form(toll: &TollSpec, bits: u32) -> Result<SeriesForm> {
    let m = toll.m;
    match &toll.kind {
        TollKind::Power(alpha) => {
            let half = Rational::from((1, 2));
            if *alpha > half {
                Err(Error::Divergent(format!(
                    "the series constant for n^alpha needs alpha <= 1/2, got {}",
                    crate::scalar::exact_string(alpha)
                )))
            } else if *alpha == half {
                Ok(SeriesForm::CompensatedHalf)
            } else {
                Ok(SeriesForm::Plain(TollAsymptotics::Power {
                    c: Float::with_val(bits, 1),
                    beta: Float::with_val(bits, alpha),
                }))
            }
        }
        TollKind::Shape => {
            let q = m as u32 - 1;
            // ln (m-1)!
            let mut lf = Float::new(bits);
            for i in 1..=q {
                lf += Float::with_val(bits, i).ln();
            }
            let s1 = (1..q).sum::<u32>();
            let s2 = (1..q).map(|i| i * i).sum::<u32>();
            Ok(SeriesForm::Plain(TollAsymptotics::Log { q, l: lf, s1, s2 }))
        }
        TollKind::Space => Ok(SeriesForm::Plain(TollAsymptotics::Power {
            c: Float::with_val(bits, 1),
            beta: Float::new(bits),
        })),
        TollKind::Leaves => Ok(SeriesForm::Finite(m - 1)),
        TollKind::Custom { values, beyond } => match beyond {
            TailRule::Zero => Ok(SeriesForm::Finite(values.len().max(m))),
            TailRule::Constant(c) => Ok(SeriesForm::Plain(TollAsymptotics::Power {
                c: c.to_float(bits),
                beta: Float::new(bits),
            })),
        },
    }
}

/// The constant `sum_{n >= m-1} b_n rho^n tau_n + sum_j x_j rho^j`, with the
/// compensated form for `b_n = n^{1/2}`. The sum runs to a cutoff `N` and the
/// rest is estimated from the asymptotics of `rho^n tau_n` through
/// Euler-Maclaurin tail sums. Cutoffs double from 512 up to `max_cutoff`
/// until the bound drops to `target_error`.
pub fn toll_series_constant(
    toll: &TollSpec,
    counts: &mut ScaledCounts,
    sd: &SingularData,
    target_error: f64,
    max_cutoff: usize,
) -> Result<SeriesConstant> {
    if toll.m != sd.m || counts.m() != sd.m {
        return Err(Error::InvalidParameter("toll, counts and singular data disagree on m".into()));
    }
    let wp = sd.working_bits();
    let form = series_form(toll, wp)?;
    if let SeriesForm::Finite(last) = form {
        counts.extend_to(last);
        let value = partial_sum(toll, counts, sd, last, false)?;
        let bound = rounding_bound(&value, last);
        return Ok(SeriesConstant {
            value,
            tail_error_bound: bound,
            cutoff: last,
            tail: None,
        });
    }
    let mut n = FIRST_CUTOFF.min(max_cutoff.max(64));
    loop {
        let c = series_at(toll, counts, sd, &form, n)?;
        if c.tail_error_bound.to_f64() <= target_error {
            return Ok(c);
        }
        if n * 2 > max_cutoff {
            return Err(Error::TargetUnreachable {
                target: format!("{target_error:e}"),
                achieved: decimal_string(&c.tail_error_bound, 6),
                cutoff: n,
            });
        }
        n *= 2;
    }
}

/// The estimate at one fixed cutoff.
pub fn toll_series_constant_at(
    toll: &TollSpec,
    counts: &mut ScaledCounts,
    sd: &SingularData,
    cutoff: usize,
) -> Result<SeriesConstant> {
    let form = series_form(toll, sd.working_bits())?;
    if let SeriesForm::Finite(_) = form {
        return toll_series_constant(toll, counts, sd, f64::INFINITY, cutoff);
    }
    series_at(toll, counts, sd, &form, cutoff)
}

fn rounding_bound(value: &Float, n: usize) -> Float {
    let wp = value.prec();
    let ulp = Float::with_val(wp, Float::i_exp(1, -(wp as i32) + 4));
    Float::with_val(wp, value.abs_ref()) * ulp * (n as u32 + 1)
}

fn partial_sum(toll: &TollSpec, counts: &ScaledCounts, sd: &SingularData, n: usize, compensated: bool) -> Result<Float> {
    let wp = sd.working_bits();
    let m = toll.m;
    let mut acc = Float::new(wp);
    let k = sd.tau_lead();
    for j in (m - 1)..=n {
        let t = &counts.values()[j];
        if compensated {
            let root = Float::with_val(wp, j).sqrt();
            acc += Float::with_val(wp, &root * t);
            acc -= Float::with_val(wp, &k / j as u32);
        } else {
            let b = toll.toll_value(j, wp);
            if let Real::Exact(r) = &b {
                if r.cmp0() == std::cmp::Ordering::Equal {
                    continue;
                }
            }
            acc += Float::with_val(wp, b.to_float(wp) * t);
        }
    }
    let mut pw = Float::with_val(wp, 1);
    for x in &toll.initial {
        acc += Float::with_val(wp, x.to_float(wp) * &pw);
        pw *= &sd.rho;
    }
    Ok(acc)
}

fn series_at(toll: &TollSpec, counts: &mut ScaledCounts, sd: &SingularData, form: &SeriesForm, n: usize) -> Result<SeriesConstant> {
    let wp = sd.working_bits();
    counts.extend_to(n);
    let tail = TailModel::fit(sd, counts, n)?;
    let start = n as u64 + 1;
    let h = |s: Float, r: u32| power_log_tail(&s, r, start);
    let f = |x: f64| Float::with_val(wp, x);
    let abs = |x: &Float| Float::with_val(wp, x.abs_ref());
    let k2 = abs(&tail.k2);
    let (head, tail_sum, err) = match form {
        SeriesForm::CompensatedHalf => {
            let head = partial_sum(toll, counts, sd, n, true)?;
            let h2 = h(f(2.0), 0)?;
            let h3 = h(f(3.0), 0)?;
            let tail_sum = Float::with_val(wp, &tail.k1 * &h2);
            let err = Float::with_val(wp, &tail.k1_spread * &h2) + Float::with_val(wp, &k2 * &h3);
            (head, tail_sum, err)
        }
        SeriesForm::Plain(TollAsymptotics::Power { c, beta }) => {
            let head = partial_sum(toll, counts, sd, n, false)?;
            let s1 = Float::with_val(wp, f(1.5) - beta);
            let hs1 = h(s1.clone(), 0)?;
            let hs2 = h(Float::with_val(wp, &s1 + 1u32), 0)?;
            let hs3 = h(Float::with_val(wp, &s1 + 2u32), 0)?;
            let tail_sum = Float::with_val(wp, &tail.k * &hs1) + Float::with_val(wp, &tail.k1 * &hs2);
            let tail_sum = Float::with_val(wp, tail_sum * c);
            let err = Float::with_val(wp, &tail.k1_spread * &hs2) + Float::with_val(wp, &k2 * &hs3);
            (head, tail_sum, Float::with_val(wp, err * abs(c)))
        }
        SeriesForm::Plain(TollAsymptotics::Log { q, l, s1, s2 }) => {
            let head = partial_sum(toll, counts, sd, n, false)?;
            let h30 = h(f(1.5), 0)?;
            let h31 = h(f(1.5), 1)?;
            let h50 = h(f(2.5), 0)?;
            let h51 = h(f(2.5), 1)?;
            let h70 = h(f(3.5), 0)?;
            let h71 = h(f(3.5), 1)?;
            let lead = Float::with_val(wp, Float::with_val(wp, &h31 * *q) - Float::with_val(wp, l * &h30));
            let next = Float::with_val(wp, Float::with_val(wp, &h51 * *q) - Float::with_val(wp, l * &h50));
            let mut tail_sum = Float::with_val(wp, &tail.k * &lead);
            tail_sum += Float::with_val(wp, &tail.k1 * &next);
            tail_sum -= Float::with_val(wp, &tail.k * &h50) * *s1;
            let next_abs = Float::with_val(wp, &h51 * *q) + Float::with_val(wp, l * &h50);
            let third_abs = Float::with_val(wp, &h71 * *q) + Float::with_val(wp, l * &h70);
            let mut err = Float::with_val(wp, &tail.k1_spread * &next_abs);
            err += Float::with_val(wp, &k2 * &third_abs);
            err += Float::with_val(wp, abs(&tail.k1) * &h70) * *s1;
            err += Float::with_val(wp, Float::with_val(wp, &tail.k * &h70) * *s2) / 2u32;
            (head, tail_sum, err)
        }
        SeriesForm::Finite(_) => unreachable!("finite sums never reach the tail model"),
    };
    let value = Float::with_val(wp, &head + &tail_sum);
    let bound = Float::with_val(wp, err * 4u32) + rounding_bound(&value, n);
    Ok(SeriesConstant {
        value,
        tail_error_bound: bound,
        cutoff: n,
        tail: Some(tail),
    })
}

/// Constants appearing in the limit theorems for one toll.
#[derive(Clone, Debug, Default)]
pub struct TheoremConstants {
    pub toll: String,
    pub m: usize,
    /// Series constant (`C_alpha`, `C'_{1/2}` or `C_ln`, or the generic
    /// `sum b_n rho^n tau_n + sum x_j rho^j`).
    pub c: Option<Float>,
    /// Slope of the linear centering `d1 (n+1)`.
    pub d1: Option<Float>,
    pub d0: Option<Float>,
    pub eta_half: Option<Float>,
    pub delta1: Option<Float>,
    pub b2: Option<Float>,
    pub sigma2: Option<Float>,
    pub tail_error_bound: Option<Float>,
    pub cutoff: Option<usize>,
    pub a3_estimate: Option<Float>,
}

impl TheoremConstants {
    pub fn fields(&self, digits: usize) -> Vec<(&'static str, String)> {
        let mut out = vec![("toll", self.toll.clone()), ("m", self.m.to_string())];
        let opt = [
            ("C", &self.c),
            ("d1", &self.d1),
            ("d0", &self.d0),
            ("eta_half", &self.eta_half),
            ("delta1", &self.delta1),
            ("B2", &self.b2),
            ("sigma2", &self.sigma2),
            ("tail_error_bound", &self.tail_error_bound),
            ("a3_estimate_uncertified", &self.a3_estimate),
        ];
        for (k, v) in opt {
            if let Some(v) = v {
                let d = if k == "tail_error_bound" { 6 } else { digits };
                out.push((k, decimal_string(v, d)));
            }
        }
        if let Some(c) = self.cutoff {
            out.push(("series_cutoff", c.to_string()));
        }
        out
    }
}

/// Evaluates every constant the theorems attach to `toll`, building scaled
/// counts as needed. `target_error` bounds the series constant.
pub fn theorem_constants(toll: &TollSpec, sd: &SingularData, target_error: f64, max_cutoff: usize) -> Result<TheoremConstants> {
    let needs_series = !matches!(&toll.kind, TollKind::Power(a) if *a > Rational::from((1, 2)));
    let series = if needs_series {
        let mut counts = sd.scaled_counts(FIRST_CUTOFF.min(max_cutoff))?;
        Some(toll_series_constant(toll, &mut counts, sd, target_error, max_cutoff)?)
    } else {
        None
    };
    theorem_constants_from(toll, sd, series.as_ref())
}

/// As [`theorem_constants`] with the series constant supplied.
pub fn theorem_constants_from(toll: &TollSpec, sd: &SingularData, series: Option<&SeriesConstant>) -> Result<TheoremConstants> {
    let wp = sd.working_bits();
    let m = sd.m;
    let mf = m as u32;
    let mut tc = TheoremConstants {
        toll: toll.label(),
        m,
        ..Default::default()
    };
    if let Some(s) = series {
        tc.c = Some(s.value.clone());
        tc.tail_error_bound = Some(s.tail_error_bound.clone());
        tc.cutoff = Some(s.cutoff);
        tc.a3_estimate = s.tail.as_ref().map(TailModel::a3);
    }
    let neg_a1 = Float::with_val(wp, -&sd.a1);
    let slope = tc.c.as_ref().map(|c| sd.slope_for(c));
    match &toll.kind {
        TollKind::Power(alpha) => {
            let half = Rational::from((1, 2));
            if *alpha < half {
                tc.d1 = slope;
            } else if *alpha == half {
                let c = tc.c.clone().ok_or_else(|| Error::InvalidParameter("missing C'_1/2".into()))?;
                tc.d0 = slope;
                let pi = Float::with_val(wp, Constant::Pi);
                let sqrt_pi = Float::with_val(wp, pi.sqrt_ref());
                let gamma = Float::with_val(wp, Constant::Euler);
                let ln2 = Float::with_val(wp, Constant::Log2);
                let first = Float::with_val(wp, &sd.a0 * Float::with_val(wp, gamma + Float::with_val(wp, ln2 * 2u32)))
                    / Float::with_val(wp, Float::with_val(wp, &pi * 2u32) * (mf - 1));
                let second = Float::with_val(wp, &sd.a0 * &c)
                    / Float::with_val(wp, Float::with_val(wp, &neg_a1 * &sqrt_pi) * (mf - 1));
                let pre = Float::with_val(wp, sqrt_pi * 2u32) / &neg_a1;
                tc.eta_half = Some(Float::with_val(wp, pre * Float::with_val(wp, first + second)));
            }
        }
        TollKind::Shape => {
            tc.d1 = slope;
            let ratio = Float::with_val(wp, &sd.a0 / &sd.a1);
            let one_minus_ln2 = Float::with_val(wp, 1) - Float::with_val(wp, Constant::Log2);
            tc.sigma2 = Some(Float::with_val(wp, Float::with_val(wp, ratio.square()) * one_minus_ln2) * 8u32);
        }
        TollKind::Space | TollKind::Leaves => {
            let d1 = slope.ok_or_else(|| Error::InvalidParameter("missing series constant".into()))?;
            let delta1 = delta1(toll, sd, &d1);
            let denom = Float::with_val(wp, &neg_a1 * (mf - 1));
            let b2 = if toll.kind == TollKind::Space {
                let corr = Float::with_val(wp, &sd.a0 / (mf * (mf - 1)));
                Float::with_val(wp, &sd.a0 * Float::with_val(wp, &delta1 - corr)) / &denom
            } else {
                let rpow = Float::with_val(wp, (&sd.rho).pow(mf - 1));
                Float::with_val(wp, &sd.a0 * Float::with_val(wp, rpow + &delta1)) / &denom
            };
            tc.sigma2 = Some(Float::with_val(wp, Float::with_val(wp, &b2 * 2u32) / &neg_a1));
            tc.d1 = Some(d1);
            tc.delta1 = Some(delta1);
            tc.b2 = Some(b2);
        }
        TollKind::Custom { .. } => {
            tc.d1 = slope;
        }
    }
    Ok(tc)
}

/// Theorem constants for the shape, space and leaves tolls without summing
/// a series: the space and leaves slopes have closed forms and the shape
/// variance does not involve the series constant.
pub fn closed_form_constants(toll: &TollSpec, sd: &SingularData) -> Result<TheoremConstants> {
    let standard = match toll.kind {
        TollKind::Space => TollSpec::space(toll.m)?,
        TollKind::Leaves => TollSpec::leaves(toll.m)?,
        TollKind::Shape => return theorem_constants_from(toll, sd, None),
        _ => return Err(Error::InvalidParameter(format!("no closed-form constants for {}", toll.label()))),
    };
    if standard.initial != toll.initial {
        return Err(Error::InvalidParameter("closed forms assume the standard initial values".into()));
    }
    let wp = sd.working_bits();
    let d1 = if toll.kind == TollKind::Space {
        space_slope_closed_form(sd)
    } else {
        leaves_slope_closed_form(sd)
    };
    // invert d1 = 2 a0 C / ((m-1) a1^2)
    let c = Float::with_val(wp, &d1 * Float::with_val(wp, sd.a1.square_ref())) * (sd.m as u32 - 1)
        / Float::with_val(wp, &sd.a0 * 2u32);
    let series = SeriesConstant {
        value: c,
        tail_error_bound: Float::new(wp),
        cutoff: 0,
        tail: None,
    };
    let mut tc = theorem_constants_from(toll, sd, Some(&series))?;
    tc.tail_error_bound = None;
    tc.cutoff = None;
    Ok(tc)
}

/// `sum_{j <= m-2} (x_j - d1 (j+1))^2 rho^j` for the toll's own initial values.
pub fn delta1(toll: &TollSpec, sd: &SingularData, d1: &Float) -> Float {
    let wp = sd.working_bits();
    let mut acc = Float::new(wp);
    let mut pw = Float::with_val(wp, 1);
    for (j, x) in toll.initial.iter().enumerate() {
        let shifted = Float::with_val(wp, x.to_float(wp) - Float::with_val(wp, d1 * (j as u32 + 1)));
        acc += Float::with_val(wp, shifted.square() * &pw);
        pw *= &sd.rho;
    }
    acc
}

/// Space slope in closed form: `m (1 - rho m^{1/(m-1)}) / ((m-1) alpha*)`.
pub fn space_slope_closed_form(sd: &SingularData) -> Float {
    let wp = sd.working_bits();
    let mf = sd.m as u32;
    let p1 = Float::with_val(wp, sd.m_pow() / mf);
    let num = Float::with_val(wp, Float::with_val(wp, 1) - Float::with_val(wp, &sd.rho * &p1)) * mf;
    num / Float::with_val(wp, &sd.alpha_star * (mf - 1))
}

/// Leaves slope in closed form: `rho / alpha*`.
pub fn leaves_slope_closed_form(sd: &SingularData) -> Float {
    Float::with_val(sd.working_bits(), &sd.rho / &sd.alpha_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Float, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol
    }

    #[test]
    fn binary_closed_forms() {
        let sd = expansion_coefficients(2, 128).unwrap();
        assert!(close(&sd.rho, 0.25, 1e-30));
        assert!(close(&sd.a0, 2.0, 1e-30));
        assert!(close(&sd.a1, -2.0, 1e-30));
        assert!(close(&sd.a2, 2.0, 1e-30));
        assert!(close(&sd.alpha_star, 1.0, 1e-30));
        assert!(close(&sd.sigma_m, 0.5f64.sqrt(), 1e-15));
        assert!(sd.bracket.0 < 0.25 && sd.bracket.1 > 0.25);
    }

    #[test]
    fn ternary_root_matches_quadratic() {
        // z^2 + z = 2/(3 sqrt 3)
        let rho = dominant_singularity(3, 200).unwrap();
        let want = (-1.0 + (1.0 + 8.0 / (3.0 * 3f64.sqrt())).sqrt()) / 2.0;
        assert!(close(&rho, want, 1e-15));
        let wp = 200;
        let c = Float::with_val(wp, 3).sqrt() * 3u32;
        let disc = Float::with_val(wp, Float::with_val(wp, 8u32) / c) + 1u32;
        let exact = (disc.sqrt() - 1u32) / 2u32;
        let diff = Float::with_val(wp, &rho - exact).abs();
        assert!(diff < Float::with_val(wp, Float::i_exp(1, -190)));
    }

    #[test]
    fn residual_and_relations_for_many_m() {
        for m in 2..=10 {
            let sd = expansion_coefficients(m, 160).unwrap();
            assert!(sd.residual < Float::with_val(64, Float::i_exp(1, -152)), "m = {m}");
            let rel = sd.a2_relation().to_f64() - (m as f64 - 2.0) / 6.0;
            assert!(rel.abs() < 1e-40, "m = {m}");
            let s = Float::with_val(200, &sd.sigma_m - sd.sigma_m_alt()).abs();
            assert!(s < 1e-40, "m = {m}");
            assert!(sd.a1 < 0);
        }
    }

    #[test]
    fn starvation_is_reported() {
        assert!(matches!(expansion_coefficients(3, 8), Err(Error::PrecisionStarvation(_))));
    }

    #[test]
    fn leaves_constant_at_m2() {
        let sd = expansion_coefficients(2, 128).unwrap();
        let toll = TollSpec::leaves(2).unwrap();
        let tc = theorem_constants(&toll, &sd, 1e-20, 1024).unwrap();
        assert!(close(tc.c.as_ref().unwrap(), 0.25, 1e-30));
        assert!(close(tc.d1.as_ref().unwrap(), 0.25, 1e-30));
    }

    #[test]
    fn space_slope_at_m2_is_one() {
        let sd = expansion_coefficients(2, 128).unwrap();
        assert!(close(&space_slope_closed_form(&sd), 1.0, 1e-30));
    }

    #[test]
    fn closed_form_slopes_match_series_at_m3() {
        let sd = expansion_coefficients(3, 128).unwrap();
        for toll in [TollSpec::leaves(3).unwrap(), TollSpec::space(3).unwrap()] {
            let series = theorem_constants(&toll, &sd, 1e-8, 8192).unwrap();
            let closed = closed_form_constants(&toll, &sd).unwrap();
            let d = series.d1.unwrap().to_f64() - closed.d1.unwrap().to_f64();
            assert!(d.abs() < 1e-8, "{}: {d}", toll.label());
            let b = series.b2.unwrap().to_f64() - closed.b2.unwrap().to_f64();
            assert!(b.abs() < 1e-7, "{}: {b}", toll.label());
        }
    }
}

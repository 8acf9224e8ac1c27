//! Special sums and quadrature used by the constant and limit-law modules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rug::ops::Pow;
use rug::{Float, Integer, Rational};

use crate::error::{Error, Result};

/// Bernoulli numbers `B_0..=B_n` (with `B_1 = -1/2`), exact.
pub fn bernoulli(n: usize) -> Vec<Rational> {
    let mut b: Vec<Rational> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k == 0 {
            b.push(Rational::from(1));
            continue;
        }
        let mut acc = Rational::new();
        let mut binom = Integer::from(1); // C(k+1, j)
        for (j, bj) in b.iter().enumerate() {
            acc += Rational::from(bj * &binom);
            binom *= (k + 1 - j) as u64;
            binom /= (j + 1) as u64;
        }
        b.push(-acc / (k as u64 + 1));
    }
    b
}

/// `sum_{n >= a} n^{-s} (ln n)^r` for `r` in `{0, 1}` and `s > 1`, by
/// Euler-Maclaurin at the precision of `s`. Intended for `a` in the
/// hundreds or beyond, where the correction terms fall off quickly.
pub fn power_log_tail(s: &Float, r: u32, a: u64) -> Result<Float> {
    if r > 1 {
        return Err(Error::InvalidParameter(format!("log power {r} not supported")));
    }
    if *s <= 1 {
        return Err(Error::Divergent(format!("sum of n^-s with s = {}", s.to_f64())));
    }
    if a == 0 {
        return Err(Error::InvalidParameter("tail must start at n >= 1".into()));
    }
    let bits = s.prec();
    let af = Float::with_val(bits, a);
    let ln_a = Float::with_val(bits, af.ln_ref());
    let sm1 = Float::with_val(bits, s - 1u32);
    let a_pow = Float::with_val(bits, (&af).pow(&Float::with_val(bits, -&sm1))); // a^{1-s}

    // Integral from a to infinity.
    let mut total = if r == 0 {
        Float::with_val(bits, &a_pow / &sm1)
    } else {
        let inv = Float::with_val(bits, sm1.recip_ref());
        Float::with_val(bits, &a_pow * (Float::with_val(bits, &ln_a * &inv) + Float::with_val(bits, inv.square_ref())))
    };

    // f(a) / 2
    let a_s = Float::with_val(bits, &a_pow / &af); // a^{-s}
    let fa = if r == 0 {
        a_s.clone()
    } else {
        Float::with_val(bits, &a_s * &ln_a)
    };
    total += Float::with_val(bits, &fa / 2u32);

    // - sum_k B_{2k}/(2k)! f^{(2k-1)}(a)
    const MAX_TERMS: usize = 40;
    let bern = bernoulli(2 * MAX_TERMS);
    let eps = Float::with_val(bits, Float::i_exp(1, -(bits as i32)));
    // rising factorial (s)_j, its s-derivative, and a^{-s-j}
    let mut rise = Float::with_val(bits, 1);
    let mut drise = Float::new(bits);
    let mut pw = a_s.clone();
    let mut fact = Integer::from(1);
    let mut last = None::<Float>;
    for j in 0..(2 * MAX_TERMS) {
        // advance to order j + 1
        let sj = Float::with_val(bits, s + j as u32);
        drise = Float::with_val(bits, &drise * &sj) + &rise;
        rise *= &sj;
        pw /= &af;
        fact *= (j + 1) as u64;
        let order = j + 1;
        if order % 2 == 0 {
            continue;
        }
        // f^{(order)}(a) with order odd, so the sign (-1)^order is -1.
        let deriv = if r == 0 {
            -Float::with_val(bits, &rise * &pw)
        } else {
            -Float::with_val(bits, (Float::with_val(bits, &rise * &ln_a) - &drise) * &pw)
        };
        let b2k = &bern[order + 1];
        let coeff = Float::with_val(bits, b2k) / Float::with_val(bits, Integer::from(&fact * (order as u64 + 1)));
        let term = Float::with_val(bits, coeff * &deriv);
        let mag = Float::with_val(bits, term.abs_ref());
        if let Some(prev) = &last {
            if mag > *prev {
                // asymptotic series started to diverge
                break;
            }
        }
        total -= &term;
        if mag <= Float::with_val(bits, &eps * Float::with_val(bits, total.abs_ref())) {
            return Ok(total);
        }
        last = Some(mag);
    }
    if a < 50 {
        return Err(Error::Numerical(format!("Euler-Maclaurin tail from n = {a} did not converge")));
    }
    Ok(total)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and the difference to the embedded 7-point Gauss rule.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature. Returns the value and
/// an error estimate; fails if `tol` is not met within the panel budget.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    const MAX_PANELS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    if !v.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, err: e });
    let mut err = e;
    while err > tol {
        if heap.len() >= MAX_PANELS {
            return Err(Error::Quadrature(format!(
                "tolerance {tol:e} not reached on [{a}, {b}]; estimate {err:e}"
            )));
        }
        let p = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // interval can no longer be split in f64
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&f, p.a, mid);
        let (v2, e2) = gk15(&f, mid, p.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Quadrature(format!("non-finite integrand near {mid}")));
        }
        err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: mid, value: v1, err: e1 });
        heap.push(Panel { a: mid, b: p.b, value: v2, err: e2 });
    }
    // re-sum to shed accumulated update rounding
    let total_sum: f64 = heap.iter().map(|p| p.value).sum();
    let err_sum: f64 = heap.iter().map(|p| p.err).sum();
    if err_sum > tol {
        return Err(Error::Quadrature(format!("tolerance {tol:e} not reached; estimate {err_sum:e}")));
    }
    Ok((total_sum, err_sum))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_bernoulli_numbers() {
        let b = bernoulli(8);
        let want = [(1, 1), (-1, 2), (1, 6), (0, 1), (-1, 30), (0, 1), (1, 42), (0, 1), (-1, 30)];
        for (got, (p, q)) in b.iter().zip(want) {
            assert_eq!(*got, Rational::from((p, q)));
        }
    }

    #[test]
    fn tail_of_zeta_two() {
        // sum_{n>=1} 1/n^2 = pi^2/6, so the tail from 100 is pi^2/6 - H_99^(2).
        let bits = 200;
        let s = Float::with_val(bits, 2);
        let tail = power_log_tail(&s, 0, 100).unwrap();
        let mut head = Float::new(bits);
        for n in 1..100u32 {
            head += Float::with_val(bits, n).square().recip();
        }
        let pi2_6 = Float::with_val(bits, rug::float::Constant::Pi).square() / 6u32;
        let diff = Float::with_val(bits, tail + head - pi2_6).abs();
        assert!(diff < 1e-50, "{diff}");
    }

    #[test]
    fn log_tail_matches_zeta_derivative_by_differencing() {
        // d/ds sum n^-s = -sum n^-s ln n; compare against a central difference.
        let bits = 256;
        let s = Float::with_val(bits, 1.5);
        let h = Float::with_val(bits, 1e-20);
        let up = power_log_tail(&Float::with_val(bits, &s + &h), 0, 400).unwrap();
        let dn = power_log_tail(&Float::with_val(bits, &s - &h), 0, 400).unwrap();
        let fd = Float::with_val(bits, (up - dn) / (h * 2u32));
        let lt = power_log_tail(&s, 1, 400).unwrap();
        let diff = Float::with_val(bits, fd + lt).abs();
        assert!(diff < 1e-30, "{diff}");
    }

    #[test]
    fn quadrature_beta_half_half() {
        // substitution-free check on a smooth integrand
        let (v, _) = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let (v, _) = integrate(|x: f64| -x.ln(), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }
}

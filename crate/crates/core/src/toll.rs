//! Toll sequences and initial values: the parameter of every analysis.

use std::fmt;
use std::str::FromStr;

use rug::ops::Pow;
use rug::{Float, Integer, Rational};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// What happens to a custom toll beyond its table.
#[derive(Clone, Debug, PartialEq)]
pub enum TailRule {
    Zero,
    Constant(Real),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TollKind {
    /// `b_n = n^alpha`
    Power(Rational),
    /// `b_n = ln C(n, m-1)`
    Shape,
    /// `b_n = 1` (node count)
    Space,
    /// `b_n = 1_{n = m-1}`
    Leaves,
    /// `b_n = values[n]` while the table lasts, then `beyond`.
    /// Indexed from `n = 0`; entries below `m - 1` are the toll's own
    /// notion of `b_0..b_{m-2}`, which may differ from the initial values.
    Custom { values: Vec<Real>, beyond: TailRule },
}

/// A toll `b_n` (used for `n >= m - 1`) together with the initial values
/// `x_0..x_{m-2}` taken by terminal subtrees.
#[derive(Clone, Debug, PartialEq)]
pub struct TollSpec {
    pub m: usize,
    pub kind: TollKind,
    pub initial: Vec<Real>,
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("branching factor m = {m} must be >= 2")));
    }
    Ok(())
}

fn ones_after_zero(m: usize) -> Vec<Real> {
    (0..m - 1).map(|j| Real::from_int(i64::from(j > 0))).collect()
}

impl TollSpec {
    pub fn power(m: usize, alpha: Rational) -> Result<Self> {
        check_m(m)?;
        if alpha < 0 {
            return Err(Error::InvalidParameter(format!("power toll needs alpha >= 0, got {alpha}")));
        }
        Ok(TollSpec {
            m,
            kind: TollKind::Power(alpha),
            initial: vec![Real::zero(); m - 1],
        })
    }

    pub fn shape(m: usize) -> Result<Self> {
        check_m(m)?;
        Ok(TollSpec {
            m,
            kind: TollKind::Shape,
            initial: vec![Real::zero(); m - 1],
        })
    }

    pub fn space(m: usize) -> Result<Self> {
        check_m(m)?;
        Ok(TollSpec {
            m,
            kind: TollKind::Space,
            initial: ones_after_zero(m),
        })
    }

    pub fn leaves(m: usize) -> Result<Self> {
        check_m(m)?;
        Ok(TollSpec {
            m,
            kind: TollKind::Leaves,
            initial: ones_after_zero(m),
        })
    }

    pub fn custom(m: usize, values: Vec<Real>, beyond: TailRule, initial: Vec<Real>) -> Result<Self> {
        check_m(m)?;
        if initial.len() != m - 1 {
            return Err(Error::InvalidParameter(format!(
                "need {} initial values, got {}",
                m - 1,
                initial.len()
            )));
        }
        Ok(TollSpec {
            m,
            kind: TollKind::Custom { values, beyond },
            initial,
        })
    }

    /// Builds one of the standard tolls from `power:ALPHA`, `shape`, `space`
    /// or `leaves`. `ALPHA` is parsed exactly as a decimal or fraction.
    pub fn parse(m: usize, text: &str) -> Result<Self> {
        let kind: StandardToll = text.parse()?;
        kind.spec(m)
    }

    /// `b_n` for `n >= m - 1`. Exact whenever the value is rational;
    /// otherwise a float at `bits` of precision.
    pub fn toll_value(&self, n: usize, bits: u32) -> Real {
        let m = self.m;
        match &self.kind {
            TollKind::Power(alpha) => power_value(n, alpha, bits),
            TollKind::Shape => {
                if n + 1 == m {
                    Real::zero()
                } else {
                    Real::Approx(ln_binomial(n, m - 1, bits))
                }
            }
            TollKind::Space => Real::from_int(1),
            TollKind::Leaves => Real::from_int(i64::from(n + 1 == m)),
            TollKind::Custom { values, beyond } => match values.get(n) {
                Some(v) => v.clone(),
                None => match beyond {
                    TailRule::Zero => Real::zero(),
                    TailRule::Constant(c) => c.clone(),
                },
            },
        }
    }

    /// `b_n` in double precision, for sampling.
    pub fn toll_f64(&self, n: usize) -> f64 {
        match &self.kind {
            TollKind::Shape => {
                let k = self.m - 1;
                if n <= k {
                    0.0
                } else {
                    (0..k).map(|i| ((n - i) as f64).ln()).sum::<f64>() - (1..=k).map(|i| (i as f64).ln()).sum::<f64>()
                }
            }
            _ => self.toll_value(n, 64).to_f64(),
        }
    }

    /// The toll formula evaluated below `m - 1`, where it does not enter the
    /// recurrence; `None` when the formula is undefined there.
    pub fn natural_value(&self, j: usize) -> Option<Real> {
        match &self.kind {
            TollKind::Power(alpha) => Some(if j == 0 {
                Real::from_int(i64::from(*alpha == 0))
            } else {
                power_value(j, alpha, 128)
            }),
            TollKind::Shape => None,
            TollKind::Space | TollKind::Leaves => Some(Real::zero()),
            TollKind::Custom { .. } => Some(self.toll_value(j, 128)),
        }
    }

    /// True when the toll vanishes for all `n` beyond some finite index.
    pub fn finite_support(&self) -> Option<usize> {
        match &self.kind {
            TollKind::Leaves => Some(self.m - 1),
            TollKind::Custom {
                values,
                beyond: TailRule::Zero,
            } => Some(values.len().saturating_sub(1).max(self.m - 1)),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            TollKind::Power(a) => format!("power:{}", crate::scalar::exact_string(a)),
            TollKind::Shape => "shape".into(),
            TollKind::Space => "space".into(),
            TollKind::Leaves => "leaves".into(),
            TollKind::Custom { .. } => "custom".into(),
        }
    }
}

fn power_value(n: usize, alpha: &Rational, bits: u32) -> Real {
    if alpha.is_integer() {
        let e = alpha.numer().to_u32().expect("integer exponent fits in u32");
        return Real::Exact(Rational::from(Integer::from(n).pow(e)));
    }
    // n^(p/q) is rational only when n is a perfect q-th power.
    if let (Some(q), Some(p)) = (alpha.denom().to_u32(), alpha.numer().to_u32()) {
        let root = Integer::from(n).root(q);
        if Integer::from((&root).pow(q)) == n {
            return Real::Exact(Rational::from(root.pow(p)));
        }
    }
    let a = Float::with_val(bits, alpha);
    Real::Approx(Float::with_val(bits, Float::with_val(bits, n).pow(&a)))
}

/// `ln C(n, k)` as `sum_{i<k} ln(n - i) - ln k!`, never through factorials.
pub fn ln_binomial(n: usize, k: usize, bits: u32) -> Float {
    let mut acc = Float::new(bits);
    for i in 0..k {
        acc += Float::with_val(bits, n - i).ln();
        acc -= Float::with_val(bits, i + 1).ln();
    }
    acc
}

/// Names accepted on the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum StandardToll {
    Power(Rational),
    Shape,
    Space,
    Leaves,
}

impl StandardToll {
    pub fn spec(&self, m: usize) -> Result<TollSpec> {
        match self {
            StandardToll::Power(a) => TollSpec::power(m, a.clone()),
            StandardToll::Shape => TollSpec::shape(m),
            StandardToll::Space => TollSpec::space(m),
            StandardToll::Leaves => TollSpec::leaves(m),
        }
    }
}

impl FromStr for StandardToll {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shape" => Ok(StandardToll::Shape),
            "space" => Ok(StandardToll::Space),
            "leaves" => Ok(StandardToll::Leaves),
            _ => match s.strip_prefix("power:") {
                Some(a) => Ok(StandardToll::Power(parse_rational(a)?)),
                None => Err(Error::InvalidParameter(format!(
                    "unknown toll {s:?}; expected power:ALPHA, shape, space or leaves"
                ))),
            },
        }
    }
}

impl fmt::Display for StandardToll {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StandardToll::Power(a) => write!(f, "power:{}", crate::scalar::exact_string(a)),
            StandardToll::Shape => write!(f, "shape"),
            StandardToll::Space => write!(f, "space"),
            StandardToll::Leaves => write!(f, "leaves"),
        }
    }
}

/// Parses `3`, `-0.25`, `1/3` or `1.5e-2` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let bad = || Error::InvalidParameter(format!("cannot parse {text:?} as a number"));
    let t = text.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p = Integer::from_str_radix(p.trim(), 10).map_err(|_| bad())?;
        let q = Integer::from_str_radix(q.trim(), 10).map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Rational::from((p, q)));
    }
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let mut r = Rational::from(Integer::from_str_radix(&digits, 10).map_err(|_| bad())?);
    let scale = exp - frac.len() as i32;
    let ten = Integer::from(10).pow(scale.unsigned_abs());
    if scale >= 0 {
        r *= ten;
    } else {
        r /= ten;
    }
    Ok(if neg { -r } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_initial_values() {
        let s = TollSpec::space(4).unwrap();
        assert_eq!(s.initial, vec![Real::from_int(0), Real::from_int(1), Real::from_int(1)]);
        let p = TollSpec::power(3, Rational::from((1, 4))).unwrap();
        assert_eq!(p.initial, vec![Real::zero(); 2]);
    }

    #[test]
    fn toll_values() {
        let l = TollSpec::leaves(3).unwrap();
        assert_eq!(l.toll_value(2, 64), Real::from_int(1));
        assert_eq!(l.toll_value(3, 64), Real::from_int(0));
        let p = TollSpec::power(2, Rational::from(2)).unwrap();
        assert_eq!(p.toll_value(7, 64), Real::from_int(49));
        let h = TollSpec::power(2, Rational::from((1, 2))).unwrap();
        assert_eq!(h.toll_value(9, 64), Real::from_int(3));
        assert!(h.toll_value(8, 64).as_exact().is_none());
        let sh = TollSpec::shape(3).unwrap();
        // ln C(5, 2) = ln 10
        assert!((sh.toll_value(5, 64).to_f64() - 10f64.ln()).abs() < 1e-15);
        assert!((sh.toll_f64(5) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_rational("0.25").unwrap(), Rational::from((1, 4)));
        assert_eq!(parse_rational("-1.5e1").unwrap(), Rational::from(-15));
        assert_eq!(parse_rational("1/3").unwrap(), Rational::from((1, 3)));
        assert!(parse_rational("x").is_err());
        assert_eq!("power:1".parse::<StandardToll>().unwrap(), StandardToll::Power(Rational::from(1)));
        assert!("bogus".parse::<StandardToll>().is_err());
        assert_eq!(TollSpec::parse(3, "power:0.5").unwrap().label(), "power:1/2");
    }
}

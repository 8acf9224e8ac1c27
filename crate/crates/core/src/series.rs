//! Truncated power series over a fixed coefficient carrier.

use rug::Integer;

use crate::error::{Error, Result};
use crate::par;
use crate::scalar::{ArithmeticMode, Scalar};

/// Coefficients `c[0..len]` of a power series truncated after degree `len - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series<T: Scalar> {
    coeffs: Vec<T>,
    ctx: T::Ctx,
}

impl<T: Scalar> Series<T> {
    pub fn zeros(ctx: T::Ctx, len: usize) -> Self {
        Series {
            coeffs: vec![T::zero(ctx); len],
            ctx,
        }
    }

    pub fn from_coeffs(ctx: T::Ctx, coeffs: Vec<T>) -> Result<Self> {
        if let Some(bad) = coeffs.iter().find(|c| c.ctx() != ctx) {
            return Err(Error::ModeMismatch(format!(
                "coefficient in {} inside a {} series",
                T::mode(bad.ctx()),
                T::mode(ctx)
            )));
        }
        Ok(Series { coeffs, ctx })
    }

    pub fn from_integers(ctx: T::Ctx, values: &[Integer]) -> Self {
        Series {
            coeffs: values.iter().map(|v| T::from_integer(ctx, v)).collect(),
            ctx,
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest degree held.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn ctx(&self) -> T::Ctx {
        self.ctx
    }

    pub fn mode(&self) -> ArithmeticMode {
        T::mode(self.ctx)
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn get(&self, n: usize) -> Option<&T> {
        self.coeffs.get(n)
    }

    /// Copy truncated (or zero-padded) to `len` coefficients.
    pub fn resized(&self, len: usize) -> Self {
        let mut coeffs: Vec<T> = self.coeffs.iter().take(len).cloned().collect();
        coeffs.resize(len, T::zero(self.ctx));
        Series { coeffs, ctx: self.ctx }
    }

    pub fn add_assign(&mut self, other: &Series<T>) -> Result<()> {
        check_compatible(self, other)?;
        if other.len() > self.len() {
            self.coeffs.resize(other.len(), T::zero(self.ctx));
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            a.add_ref(b);
        }
        Ok(())
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, other: &Series<T>, k: &T) -> Result<()> {
        check_compatible(self, other)?;
        if other.len() > self.len() {
            self.coeffs.resize(other.len(), T::zero(self.ctx));
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            a.add_mul(b, k);
        }
        Ok(())
    }

    pub fn scale_u64(&mut self, k: u64) {
        for c in &mut self.coeffs {
            c.mul_u64(k);
        }
    }

    /// Multiplies by `z^shift`, keeping the length.
    pub fn shifted(&self, shift: usize) -> Self {
        let len = self.len();
        let mut out = Series::zeros(self.ctx, len);
        for n in shift..len {
            out.coeffs[n] = self.coeffs[n - shift].clone();
        }
        out
    }

    /// Coefficients of `1 / (1 - u(z))` for a series with `u[0] = 0`, up to
    /// degree `len - 1`.
    pub fn geometric_inverse(u: &Series<T>, len: usize) -> Result<Self> {
        if u.get(0).is_some_and(|c| !c.is_zero()) {
            return Err(Error::InvalidParameter(
                "geometric inverse needs a series without constant term".into(),
            ));
        }
        let ctx = u.ctx;
        let mut q: Vec<T> = Vec::with_capacity(len);
        for n in 0..len {
            if n == 0 {
                q.push(T::one(ctx));
                continue;
            }
            let mut acc = T::zero(ctx);
            let top = n.min(u.len().saturating_sub(1));
            for j in 1..=top {
                acc.add_mul(&u.coeffs[j], &q[n - j]);
            }
            q.push(acc);
        }
        Ok(Series { coeffs: q, ctx })
    }
}

fn check_compatible<T: Scalar>(a: &Series<T>, b: &Series<T>) -> Result<()> {
    if a.ctx != b.ctx {
        return Err(Error::ModeMismatch(format!(
            "{} vs {}",
            T::mode(a.ctx),
            T::mode(b.ctx)
        )));
    }
    Ok(())
}

/// Cauchy product truncated after degree `max_degree`.
///
/// Schoolbook O(N^2); every output coefficient is an independent dot product
/// summed in increasing index order, so parallel and sequential builds agree
/// bit for bit.
pub fn convolve<T: Scalar>(a: &Series<T>, b: &Series<T>, max_degree: usize) -> Result<Series<T>> {
    check_compatible(a, b)?;
    let ctx = a.ctx;
    let len = max_degree + 1;
    let coeffs = par::map_indices(len, |n| dot_at(a.coeffs(), b.coeffs(), n, ctx));
    Ok(Series { coeffs, ctx })
}

/// `sum_{i+j=n} a[i] b[j]` over the available coefficients.
pub(crate) fn dot_at<T: Scalar>(a: &[T], b: &[T], n: usize, ctx: T::Ctx) -> T {
    let mut acc = T::zero(ctx);
    if a.is_empty() || b.is_empty() {
        return acc;
    }
    let lo = n.saturating_sub(b.len() - 1);
    let hi = n.min(a.len() - 1);
    if lo > hi {
        return acc;
    }
    for i in lo..=hi {
        acc.add_mul(&a[i], &b[n - i]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::{Float, Rational};

    fn ints(v: &[i64]) -> Series<Integer> {
        Series::from_coeffs((), v.iter().map(|&x| Integer::from(x)).collect()).unwrap()
    }

    #[test]
    fn binomial_square() {
        let s = ints(&[1, 1]);
        let c = convolve(&s, &s, 2).unwrap();
        assert_eq!(c, ints(&[1, 2, 1]));
    }

    #[test]
    fn identity_element_truncates() {
        let one = ints(&[1, 0, 0]);
        let s = ints(&[3, -1, 4, 1, 5]);
        assert_eq!(convolve(&one, &s, 2).unwrap(), ints(&[3, -1, 4]));
    }

    #[test]
    fn precision_mismatch_is_rejected() {
        let a = Series::<Float>::zeros(64, 3);
        let b = Series::<Float>::zeros(128, 3);
        assert!(matches!(convolve(&a, &b, 2), Err(Error::ModeMismatch(_))));
        assert!(Series::from_coeffs(64, vec![Float::new(128)]).is_err());
    }

    #[test]
    fn geometric_inverse_of_z() {
        // 1/(1-z) = 1 + z + z^2 + ...
        let u = ints(&[0, 1]);
        let q = Series::geometric_inverse(&u, 5).unwrap();
        assert_eq!(q, ints(&[1, 1, 1, 1, 1]));
        // 1/(1-2z^2)
        let u = Series::<Rational>::from_integers((), &[0.into(), 0.into(), 2.into()]);
        let q = Series::geometric_inverse(&u, 5).unwrap();
        let want: Vec<Rational> = [1, 0, 2, 0, 4].iter().map(|&x| Rational::from(x)).collect();
        assert_eq!(q.coeffs(), &want[..]);
    }
}

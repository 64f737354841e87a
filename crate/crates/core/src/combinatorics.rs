//! Exact binomial coefficients, Catalan numbers and the constant `D_n`.
//!
//! Every claim about `D_n` that involves a fractional power is restated as an
//! integer-power comparison before it is evaluated, so the certificates here
//! never touch floating point.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Fractional bits carried by [`DnValue`].
pub const DN_FRAC_BITS: u32 = 128;

/// Exact `C(n, k)`.
pub fn binom_int(n: u64, k: u64) -> Result<BigInt> {
    if k > n {
        return Err(Error::Domain(format!("binomial C({n}, {k}) needs k <= n")));
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        // acc * (n - i) is always divisible by (i + 1) at this point
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    Ok(acc)
}

/// The n-th Catalan number `C(2n, n) / (n + 1)`.
pub fn catalan(n: u64) -> BigInt {
    let central = binom_int(2 * n, n).expect("n <= 2n");
    let (q, r) = central.div_rem(&BigInt::from(n + 1));
    debug_assert!(r.is_zero());
    q
}

/// `D_n` as a fixed-point number with [`DN_FRAC_BITS`] fractional bits.
///
/// `fixed` is `floor(D_n * 2^DN_FRAC_BITS)`, obtained as an exact integer root,
/// so the absolute error is below `2^-128`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DnValue {
    pub n: u64,
    #[serde(serialize_with = "ser_biguint")]
    pub fixed: BigUint,
    pub frac_bits: u32,
    /// Result of `C(2n,n)^(n+2) <= 4^n C(2n+2,n)^n`, i.e. `D_n <= sqrt(2)`.
    pub certificate: bool,
}

fn ser_biguint<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_str_radix(16))
}

impl DnValue {
    pub fn value(&self) -> f64 {
        let scale = 2f64.powi(self.frac_bits as i32);
        self.fixed.to_f64().unwrap_or(f64::INFINITY) / scale
    }

    /// Decimal expansion truncated to `digits` places.
    pub fn to_decimal(&self, digits: usize) -> String {
        let int_part = &self.fixed >> self.frac_bits;
        let mask = (BigUint::one() << self.frac_bits) - BigUint::one();
        let mut frac = &self.fixed & &mask;
        let mut s = format!("{int_part}.");
        for _ in 0..digits {
            frac *= 10u32;
            let d = &frac >> self.frac_bits;
            s.push_str(&d.to_string());
            frac &= &mask;
        }
        s
    }
}

fn to_biguint(x: BigInt) -> BigUint {
    x.to_biguint().expect("non-negative")
}

/// Numerator and denominator of `D_n^(2n) = C(2n,n)^(n+2) / (2^n C(2n+2,n)^n)`.
pub fn dn_power_ratio(n: u64) -> (BigUint, BigUint) {
    let central = to_biguint(binom_int(2 * n, n).expect("valid"));
    let shifted = to_biguint(binom_int(2 * n + 2, n).expect("valid"));
    let num = Pow::pow(&central, (n + 2) as u32);
    let den = (BigUint::one() << n) * Pow::pow(&shifted, n as u32);
    (num, den)
}

/// `D_n = (1/sqrt 2) C(2n,n)^(1/2 + 1/n) / C(2n+2,n)^(1/2)`.
pub fn dn(n: u64) -> Result<DnValue> {
    if n == 0 {
        return Err(Error::Domain("D_n is defined for n >= 1".into()));
    }
    let (num, den) = dn_power_ratio(n);
    let root = (2 * n) as u32;
    let scaled = (num << (DN_FRAC_BITS as u64 * 2 * n)) / den;
    let fixed = scaled.nth_root(root);
    Ok(DnValue {
        n,
        fixed,
        frac_bits: DN_FRAC_BITS,
        certificate: dn_le_sqrt2_exact(n)?,
    })
}

/// Exact test of `D_n <= sqrt(2)` in the form `C(2n,n)^(n+2) <= 4^n C(2n+2,n)^n`.
pub fn dn_le_sqrt2_exact(n: u64) -> Result<bool> {
    if n == 0 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    let central = binom_int(2 * n, n)?;
    let shifted = binom_int(2 * n + 2, n)?;
    let lhs = Pow::pow(&central, (n + 2) as u32);
    let rhs = (BigInt::one() << (2 * n)) * Pow::pow(&shifted, n as u32);
    Ok(lhs <= rhs)
}

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Left side of the auxiliary inequality
/// `4n/(n+2) * (n(n+1)/((n-1)(n+2)))^(n-1) * n^2/(2n-1)^2` as an exact rational.
///
/// For `n = 1` the bracket has base `0/0` and exponent 0; it is taken as 1.
pub fn lemma41_lhs(n: u64) -> Result<BigRational> {
    if n == 0 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    let n = n as i64;
    let head = rat(4 * n, n + 2);
    let tail = rat(n * n, (2 * n - 1) * (2 * n - 1));
    let bracket = if n == 1 {
        BigRational::one()
    } else {
        Pow::pow(rat(n * (n + 1), (n - 1) * (n + 2)), (n - 1) as u32)
    };
    Ok(head * bracket * tail)
}

pub fn lemma41_holds(n: u64) -> Result<bool> {
    Ok(lemma41_lhs(n)? >= BigRational::one())
}

/// `(16n/(n+2))^n >= (n+1)^2 C_n^2`.
pub fn lemma42_holds(n: u64) -> Result<bool> {
    if n == 0 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    let lhs = Pow::pow(rat(16 * n as i64, n as i64 + 2), n as u32);
    let c = catalan(n) * BigInt::from(n + 1);
    let rhs = BigRational::from_integer(&c * &c);
    Ok(lhs >= rhs)
}

/// `D_1 .. D_{n_max}`.
pub fn dn_table(n_max: u64) -> Result<Vec<DnValue>> {
    if n_max == 0 {
        return Err(Error::Domain("n_max must be >= 1".into()));
    }
    (1..=n_max).map(dn).collect()
}

/// `2 C(2n+2,n) / C(2n,n)^(1+2/n)`, whose infimum over n is 1/2. Equals `1 / D_n^2`.
pub fn reciprocal_dn_squared(n: u64) -> Result<f64> {
    let v = dn(n)?.value();
    Ok(1.0 / (v * v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomials() {
        assert_eq!(binom_int(4, 2).unwrap(), BigInt::from(6));
        assert_eq!(binom_int(2, 1).unwrap(), BigInt::from(2));
        assert_eq!(binom_int(6, 2).unwrap(), BigInt::from(15));
        assert_eq!(binom_int(0, 0).unwrap(), BigInt::from(1));
        assert!(binom_int(2, 3).is_err());
    }

    fn factorial(n: u64) -> BigInt {
        (1..=n).fold(BigInt::one(), |a, k| a * BigInt::from(k))
    }

    #[test]
    fn binomial_matches_factorials() {
        for n in 0..40u64 {
            for k in 0..=n {
                let f = factorial(n) / (factorial(k) * factorial(n - k));
                assert_eq!(binom_int(n, k).unwrap(), f);
            }
        }
    }

    #[test]
    fn catalan_values_and_recurrence() {
        assert_eq!(catalan(1), BigInt::from(1));
        assert_eq!(catalan(2), BigInt::from(2));
        assert_eq!(catalan(3), BigInt::from(5));
        assert_eq!(catalan(4), BigInt::from(14));
        for n in 1..200u64 {
            let lhs = catalan(n + 1) * BigInt::from(n + 2);
            let rhs = catalan(n) * BigInt::from(2 * (2 * n + 1));
            assert_eq!(lhs, rhs, "n = {n}");
        }
    }

    #[test]
    fn dn_small_values() {
        assert_eq!(dn(1).unwrap().value(), 1.0);
        let d2 = dn(2).unwrap().value();
        assert!((d2 - 6.0 / 30f64.sqrt()).abs() < 1e-15);
        let d3 = dn(3).unwrap().value();
        let expect = (20f64).powf(5.0 / 6.0) / 56f64.sqrt() / 2f64.sqrt();
        assert!((d3 - expect).abs() < 1e-14, "{d3} vs {expect}");
        assert!(dn(0).is_err());
    }

    #[test]
    fn dn_fixed_point_is_exact_floor() {
        for n in [1u64, 2, 3, 7, 20, 64] {
            let d = dn(n).unwrap();
            let (num, den) = dn_power_ratio(n);
            let shift = DN_FRAC_BITS as u64 * 2 * n;
            let e = (2 * n) as u32;
            let lo = Pow::pow(&d.fixed, e) * &den;
            let hi = Pow::pow(&(&d.fixed + 1u32), e) * &den;
            let target = num << shift;
            assert!(lo <= target && target < hi, "n = {n}");
        }
    }

    #[test]
    fn certificates_small() {
        assert!(dn_le_sqrt2_exact(1).unwrap());
        assert!(dn_le_sqrt2_exact(2).unwrap());
        assert!(dn_le_sqrt2_exact(100).unwrap());
    }

    #[test]
    fn lemma41_exact_values() {
        assert_eq!(lemma41_lhs(1).unwrap(), rat(4, 3));
        assert_eq!(lemma41_lhs(2).unwrap(), rat(4, 3));
        assert!(lemma41_holds(50).unwrap());
    }

    #[test]
    fn lemma42_small() {
        for n in 1..=3 {
            assert!(lemma42_holds(n).unwrap());
        }
        // (48/5)^3 against 16 * 25
        let lhs = Pow::pow(rat(48, 5), 3u32);
        assert!(lhs >= BigRational::from_integer(BigInt::from(400)));
    }

    #[test]
    fn table_and_decimal() {
        let t = dn_table(3).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].to_decimal(5), "1.00000");
        assert!(t[1].to_decimal(6).starts_with("1.095445"));
        assert!(dn_table(0).is_err());
    }
}

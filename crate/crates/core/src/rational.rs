//! Exact rational arithmetic helpers.
//!
//! Every quantity the engines reason about (prices, budgets, qualities,
//! fractional assignments) is a [`Rat`]: an arbitrary-precision fraction kept
//! in lowest terms with a positive denominator. Floating point never appears
//! in a decision path.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// Arbitrary-precision rational, always normalized (lowest terms, positive
/// denominator) by construction.
pub type Rat = num_rational::BigRational;

/// Rational from an integer.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Rational from an unsigned integer.
pub fn rat_u(n: u64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Rational `n/d`. Panics if `d == 0`; intended for literals in code and tests.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Parse a canonical rational string: either an integer (`"3"`, `"-2"`) or a
/// fraction (`"3/4"`, `"-1/2"`). Whitespace is not accepted.
pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let parse_int = |t: &str, what: &str| -> Result<BigInt, String> {
        t.parse::<BigInt>()
            .map_err(|_| format!("invalid {what} {t:?} in rational {s:?}"))
    };
    match s.split_once('/') {
        None => Ok(Rat::from_integer(parse_int(s, "integer")?)),
        Some((num, den)) => {
            let num = parse_int(num, "numerator")?;
            let den = parse_int(den, "denominator")?;
            if den.is_zero() {
                return Err(format!("zero denominator in rational {s:?}"));
            }
            Ok(Rat::new(num, den))
        }
    }
}

/// Canonical string form: `"n"` when the denominator is 1, `"n/d"` otherwise.
/// Since values are stored in lowest terms this form is unique per value and
/// round-trips bit-exactly through [`parse_rat`].
pub fn fmt_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Least common multiple of the denominators of the given values.
pub fn lcm_denoms<'a>(values: impl Iterator<Item = &'a Rat>) -> BigInt {
    let mut acc = BigInt::one();
    for v in values {
        acc = acc.lcm(v.denom());
    }
    acc
}

/// `⌊r⌋` as a big integer.
pub fn floor_int(r: &Rat) -> BigInt {
    r.floor().to_integer()
}

/// Whether `r` is a non-negative integer.
pub fn is_nonneg_integer(r: &Rat) -> bool {
    r.denom().is_one() && !r.numer().is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["0", "3", "-2", "3/4", "-1/2", "11"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(fmt_rat(&r), s);
        }
        // Non-canonical inputs normalize.
        assert_eq!(fmt_rat(&parse_rat("4/2").unwrap()), "2");
        assert_eq!(fmt_rat(&parse_rat("2/-4").unwrap()), "-1/2");
        assert_eq!(fmt_rat(&parse_rat("3/1").unwrap()), "3");
    }

    #[test]
    fn zero_denominator_rejected() {
        let err = parse_rat("1/0").unwrap_err();
        assert!(err.contains("zero denominator"), "{err}");
    }

    #[test]
    fn garbage_rejected() {
        assert!(parse_rat("a/b").is_err());
        assert!(parse_rat("1/2/3").is_err());
        assert!(parse_rat("1.5").is_err());
    }

    #[test]
    fn lcm_of_denominators() {
        let vals = [rat(1, 2), rat(1, 3), rat(5, 6)];
        assert_eq!(lcm_denoms(vals.iter()), BigInt::from(6));
        let ints = [rat_int(4), rat_int(7)];
        assert_eq!(lcm_denoms(ints.iter()), BigInt::from(1));
    }

    proptest! {
        // Normalization round-trips: building n/d, then re-multiplying by d,
        // recovers n exactly.
        #[test]
        fn normalization_round_trip(n in -1000i64..1000, d in 1i64..1000) {
            let r = rat(n, d);
            prop_assert_eq!(r.clone() * rat_int(d), rat_int(n));
            prop_assert!(r.denom().is_positive() || r.numer().is_zero());
            // fmt/parse is the identity on canonical values
            prop_assert_eq!(parse_rat(&fmt_rat(&r)).unwrap(), r);
        }
    }
}

//! LZ-complexity string distances.
//!
//! `d(X,Y) = max{c(XY) − c(X), c(YX) − c(Y)}` and the normalized
//! `d**(X,Y) = (c(XY) − min{c(X), c(Y)}) / max{c(X), c(Y)}`.
//!
//! `d**` is computed for the concatenation order `XY` only and is neither
//! symmetric nor a metric.

use serde::{Deserialize, Serialize};

use crate::complexity::{lz76_complexity, SymbolString};
use crate::error::{Error, Result};

/// A string together with its LZ76 complexity, so it can be reused across
/// many distance evaluations without re-parsing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCachedString {
    string: SymbolString,
    complexity: usize,
}

impl ComplexityCachedString {
    pub fn new(string: SymbolString) -> Self {
        let complexity = lz76_complexity(string.as_slice());
        Self { string, complexity }
    }

    /// Rebuild from a stored complexity. Debug builds re-parse and panic on a
    /// stale value; use [`ComplexityCachedString::verified`] to get an error.
    pub fn from_parts(string: SymbolString, complexity: usize) -> Self {
        debug_assert_eq!(
            complexity,
            lz76_complexity(string.as_slice()),
            "stale complexity cache"
        );
        Self { string, complexity }
    }

    /// Rebuild from a stored complexity, rejecting it if it is stale.
    pub fn verified(id: &str, string: SymbolString, complexity: usize) -> Result<Self> {
        let actual = lz76_complexity(string.as_slice());
        if actual != complexity {
            return Err(Error::StaleCache {
                id: id.to_string(),
                cached: complexity,
                actual,
            });
        }
        Ok(Self { string, complexity })
    }

    pub fn string(&self) -> &SymbolString {
        &self.string
    }

    pub fn complexity(&self) -> usize {
        self.complexity
    }

    pub fn is_empty(&self) -> bool {
        self.string.is_empty()
    }
}

impl From<SymbolString> for ComplexityCachedString {
    fn from(s: SymbolString) -> Self {
        Self::new(s)
    }
}

/// `c(x·y)`, parsing the concatenation into a scratch buffer.
pub fn joint_complexity(x: &[u8], y: &[u8]) -> usize {
    let mut buf = Vec::with_capacity(x.len() + y.len());
    buf.extend_from_slice(x);
    buf.extend_from_slice(y);
    lz76_complexity(&buf)
}

/// Raw LZ distance `max{c(XY) − c(X), c(YX) − c(Y)}`.
pub fn d_raw(x: &SymbolString, y: &SymbolString) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyString);
    }
    let (x, y) = (x.as_slice(), y.as_slice());
    let cx = lz76_complexity(x);
    let cy = lz76_complexity(y);
    let xy = joint_complexity(x, y) - cx;
    let yx = joint_complexity(y, x) - cy;
    Ok(xy.max(yx))
}

/// `(joint − min(left, right)) / max(left, right)` as one rounded division.
///
/// Both operands are exact small integers in f64, so the result is the
/// correctly rounded value of the rational.
pub fn normalized_distance(joint: usize, left: usize, right: usize) -> f64 {
    let lo = left.min(right);
    let hi = left.max(right);
    (joint as f64 - lo as f64) / hi as f64
}

/// Normalized distance `d**(X, Y)` using cached complexities of `X` and `Y`.
pub fn d_star_star(x: &ComplexityCachedString, y: &ComplexityCachedString) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyString);
    }
    let joint = joint_complexity(x.string.as_slice(), y.string.as_slice());
    Ok(normalized_distance(joint, x.complexity, y.complexity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::lz76_complexity_naive;
    use proptest::prelude::*;

    fn cs(s: &str) -> ComplexityCachedString {
        ComplexityCachedString::new(s.into())
    }

    #[test]
    fn raw_distance_examples() {
        let x: SymbolString = "aacgtacc".into();
        let cxx = lz76_complexity_naive(b"aacgtaccaacgtacc");
        assert_eq!(d_raw(&x, &x).unwrap(), cxx - 5);
        assert_eq!(d_raw(&"a".into(), &"a".into()).unwrap(), 1);
    }

    #[test]
    fn rejects_empty() {
        assert!(matches!(d_raw(&"".into(), &"a".into()), Err(Error::EmptyString)));
        assert!(matches!(d_star_star(&cs("a"), &cs("")), Err(Error::EmptyString)));
    }

    #[test]
    fn self_distance() {
        let cxx = lz76_complexity_naive(b"aacgtaccaacgtacc");
        let d = d_star_star(&cs("aacgtacc"), &cs("aacgtacc")).unwrap();
        assert_eq!(d, (cxx as f64 - 5.0) / 5.0);
        assert!(d > 0.0 && d < 1.0);
    }

    #[test]
    fn mutually_compressible_is_zero() {
        // c("aaaa") = c("aa") = c("aaaaaa") = 2.
        assert_eq!(d_star_star(&cs("aaaa"), &cs("aa")).unwrap(), 0.0);
    }

    #[test]
    fn random_strings_near_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut gen = || {
            let v: Vec<u8> = (0..500).map(|_| rng.random()).collect();
            ComplexityCachedString::new(v.into())
        };
        let (x, y) = (gen(), gen());
        let d = d_star_star(&x, &y).unwrap();
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn verified_rejects_stale() {
        let err = ComplexityCachedString::verified("p1", "abc".into(), 2).unwrap_err();
        assert!(matches!(err, Error::StaleCache { cached: 2, actual: 3, .. }));
    }

    #[test]
    #[cfg(debug_assertions)]
    #[should_panic(expected = "stale complexity cache")]
    fn from_parts_checks_in_debug() {
        ComplexityCachedString::from_parts("abc".into(), 9);
    }

    proptest! {
        #[test]
        fn raw_is_symmetric(x in proptest::collection::vec(0u8..4, 1..80),
                            y in proptest::collection::vec(0u8..4, 1..80)) {
            let (x, y) = (SymbolString::new(x), SymbolString::new(y));
            prop_assert_eq!(d_raw(&x, &y).unwrap(), d_raw(&y, &x).unwrap());
        }

        #[test]
        fn literal_arithmetic(x in proptest::collection::vec(0u8..8, 1..120),
                              y in proptest::collection::vec(0u8..8, 1..120)) {
            let joint = lz76_complexity_naive(&[x.as_slice(), y.as_slice()].concat()) as f64;
            let (cx, cy) = (lz76_complexity_naive(&x) as f64, lz76_complexity_naive(&y) as f64);
            let expected = (joint - cx.min(cy)) / cx.max(cy);
            let got = d_star_star(&ComplexityCachedString::new(x.into()),
                                  &ComplexityCachedString::new(y.into())).unwrap();
            prop_assert_eq!(got.to_bits(), expected.to_bits());
        }
    }
}

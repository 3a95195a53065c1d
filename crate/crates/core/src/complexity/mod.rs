//! Lempel-Ziv (1976) complexity of symbol strings.
//!
//! A string is parsed into its unique exhaustive history: each component is
//! the longest extension reproducible from the already parsed prefix (the copy
//! source must start inside that prefix but may run into the extension
//! itself), closed by one innovation symbol. The last component may stop
//! short of its innovation when the string ends mid-copy. The complexity
//! `c(S)` is the number of components.
//!
//! Two parsers ship. [`exhaustive_history_naive`] scans every earlier start
//! position and is the correctness anchor; [`exhaustive_history`] reads the
//! component lengths off a longest-previous-factor table built from a suffix
//! array, O(n log n) overall.

use std::cell::Cell;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub mod suffix;

/// A finite sequence over the byte alphabet `{0, …, 255}`.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolString(Vec<u8>);

impl SymbolString {
    pub fn new(symbols: Vec<u8>) -> Self {
        Self(symbols)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self · other`.
    pub fn concat(&self, other: &SymbolString) -> SymbolString {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Self(v)
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Debug for SymbolString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|b| b.is_ascii_graphic()) {
            write!(f, "SymbolString({:?})", String::from_utf8_lossy(&self.0))
        } else {
            f.debug_tuple("SymbolString").field(&self.0).finish()
        }
    }
}

impl From<Vec<u8>> for SymbolString {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl From<&[u8]> for SymbolString {
    fn from(v: &[u8]) -> Self {
        Self(v.to_vec())
    }
}

impl From<&str> for SymbolString {
    fn from(v: &str) -> Self {
        Self(v.as_bytes().to_vec())
    }
}

/// The exhaustive history `H(S)` of a string.
///
/// Stores the component end points `h_1 < h_2 < … < h_m`. Read 1-based these
/// are the inclusive component ends; read 0-based they are exclusive ends, so
/// component `i` covers `ends[i-1]..ends[i]` of the underlying slice.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExhaustiveHistory {
    ends: Vec<usize>,
}

impl ExhaustiveHistory {
    /// Component end points `h_i`, 1-based inclusive.
    pub fn boundaries(&self) -> &[usize] {
        &self.ends
    }

    /// `c(S)`, the number of components.
    pub fn complexity(&self) -> usize {
        self.ends.len()
    }

    /// Components as `(start, end)` pairs, 1-based and inclusive.
    pub fn components(&self) -> Vec<(usize, usize)> {
        self.ranges().map(|r| (r.start + 1, r.end)).collect()
    }

    /// Components as 0-based half-open ranges.
    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        let starts = std::iter::once(0).chain(self.ends.iter().copied());
        starts.zip(self.ends.iter().copied()).map(|(s, e)| s..e)
    }

    /// The components of `s` as subslices. `s` must be the string parsed.
    pub fn split<'a>(&'a self, s: &'a [u8]) -> impl Iterator<Item = &'a [u8]> + 'a {
        self.ranges().map(move |r| &s[r])
    }
}

thread_local! {
    static PARSES: Cell<u64> = const { Cell::new(0) };
}

/// Number of fast-parser invocations on the current thread so far.
///
/// Exposed so callers can account for which complexities were served from
/// caches instead of being re-parsed.
pub fn parse_count() -> u64 {
    PARSES.with(|c| c.get())
}

/// `seed → seed·extension`: some `p` in `1..=l(seed)` makes
/// `extension(k) == R(p + k - 1)` for every `k`, with `R = seed·extension`.
///
/// This is the literal definition, kept for tests and auditing. An empty seed
/// never reproduces anything; an empty extension is reproduced by any
/// nonempty seed.
pub fn is_reproducible(seed: &[u8], extension: &[u8]) -> bool {
    if seed.is_empty() {
        return false;
    }
    let r: Vec<u8> = seed.iter().chain(extension).copied().collect();
    (1..=seed.len()).any(|p| (1..=extension.len()).all(|k| extension[k - 1] == r[p + k - 2]))
}

/// History via the longest-previous-factor table.
pub fn exhaustive_history(s: &[u8]) -> ExhaustiveHistory {
    PARSES.with(|c| c.set(c.get() + 1));
    if s.is_empty() {
        return ExhaustiveHistory::default();
    }
    let lpf = suffix::longest_previous_factor(s);
    let mut ends = Vec::new();
    let mut i = 0;
    while i < s.len() {
        i = (i + lpf[i] as usize + 1).min(s.len());
        ends.push(i);
    }
    ExhaustiveHistory { ends }
}

/// Reference parser: for each component, try every earlier start position.
///
/// Worst case quadratic. Used as the oracle for [`exhaustive_history`].
pub fn exhaustive_history_naive(s: &[u8]) -> ExhaustiveHistory {
    let n = s.len();
    let mut ends = Vec::new();
    let mut i = 0;
    while i < n {
        let mut best = 0;
        for p in 0..i {
            let mut k = 0;
            while i + k < n && s[p + k] == s[i + k] {
                k += 1;
            }
            best = best.max(k);
            if i + best == n {
                break;
            }
        }
        i = (i + best + 1).min(n);
        ends.push(i);
    }
    ExhaustiveHistory { ends }
}

/// `c(S)` with the fast parser. Zero for the empty string.
pub fn lz76_complexity(s: &[u8]) -> usize {
    exhaustive_history(s).complexity()
}

/// `c(S)` with the reference parser.
pub fn lz76_complexity_naive(s: &[u8]) -> usize {
    exhaustive_history_naive(s).complexity()
}

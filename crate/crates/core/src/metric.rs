//! Exact similarity between conjunctive scenarios.
//!
//! For conjunctions the xor-count of two scenarios depends only on three
//! quantities: the number of tags only in the left scenario (`k1`), only in
//! the right one (`k2`), and the size of their union (`k`). Tags outside the
//! union contribute the same factor to numerator and denominator, so the
//! universe size never appears:
//!
//! ```text
//! mu(a, b)   = 1 - (2^k1 + 2^k2 - 2) / 2^k
//! mu_w(a, b) = 1 - (z1 + z2) / z
//!   z1 = prod_{right only} (w0 + w1) - prod_{right only} w0
//!   z2 = prod_{left only}  (w0 + w1) - prod_{left only}  w0
//!   z  = prod_{union}      (w0 + w1)
//! ```
//!
//! All values are reduced big rationals so that neighbor sets and ties are
//! decided exactly.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Scenario, TagId};

/// Partition of two scenarios' tags into left-only, right-only and shared.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DifferenceProfile {
    pub only_left: Vec<TagId>,
    pub only_right: Vec<TagId>,
    pub shared: Vec<TagId>,
}

impl DifferenceProfile {
    pub fn k1(&self) -> usize {
        self.only_left.len()
    }

    pub fn k2(&self) -> usize {
        self.only_right.len()
    }

    /// Size of the union.
    pub fn k(&self) -> usize {
        self.only_left.len() + self.only_right.len() + self.shared.len()
    }

    /// Tags in the union, ascending.
    pub fn union(&self) -> Vec<TagId> {
        let mut all: Vec<TagId> = self
            .only_left
            .iter()
            .chain(&self.only_right)
            .chain(&self.shared)
            .copied()
            .collect();
        all.sort_unstable();
        all
    }
}

pub fn difference_profile(a: &Scenario, b: &Scenario) -> Result<DifferenceProfile, ModelError> {
    if !a.same_universe(b) {
        return Err(ModelError::UniverseMismatch);
    }
    Ok(profile_of(a.members(), b.members()))
}

// Merge walk over two ascending id lists.
fn profile_of(left: &[TagId], right: &[TagId]) -> DifferenceProfile {
    let mut p = DifferenceProfile {
        only_left: Vec::new(),
        only_right: Vec::new(),
        shared: Vec::new(),
    };
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        match left[i].cmp(&right[j]) {
            Ordering::Less => {
                p.only_left.push(left[i]);
                i += 1;
            }
            Ordering::Greater => {
                p.only_right.push(right[j]);
                j += 1;
            }
            Ordering::Equal => {
                p.shared.push(left[i]);
                i += 1;
                j += 1;
            }
        }
    }
    p.only_left.extend_from_slice(&left[i..]);
    p.only_right.extend_from_slice(&right[j..]);
    p
}

/// An exact similarity in `(0, 1]`; higher is closer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Similarity(BigRational);

impl Similarity {
    pub fn one() -> Self {
        Similarity(BigRational::one())
    }

    pub fn from_ratio(numer: i64, denom: i64) -> Self {
        Similarity(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Parses `n/d` (or a bare integer).
    pub fn parse(text: &str) -> Option<Self> {
        let (n, d) = match text.split_once('/') {
            Some((n, d)) => (
                n.trim().parse::<BigInt>().ok()?,
                d.trim().parse::<BigInt>().ok()?,
            ),
            None => (text.trim().parse::<BigInt>().ok()?, BigInt::one()),
        };
        if d.is_zero() {
            return None;
        }
        Some(Similarity(BigRational::new(n, d)))
    }
}

/// Always `numer/denom`, including `1/1`.
impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl Serialize for Similarity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Similarity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Similarity::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad fraction {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("InvalidWeight: weights must be positive integers, got ({w0}, {w1})")]
pub struct InvalidWeight {
    pub w0: u64,
    pub w1: u64,
}

/// Weights of one tag when its variable is 0 (`w0`) and 1 (`w1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightPair {
    w0: u64,
    w1: u64,
}

impl WeightPair {
    pub const UNIT: WeightPair = WeightPair { w0: 1, w1: 1 };

    pub fn new(w0: u64, w1: u64) -> Result<Self, InvalidWeight> {
        if w0 == 0 || w1 == 0 {
            return Err(InvalidWeight { w0, w1 });
        }
        Ok(WeightPair { w0, w1 })
    }

    pub fn w0(self) -> u64 {
        self.w0
    }

    pub fn w1(self) -> u64 {
        self.w1
    }

    fn sum(self) -> BigInt {
        BigInt::from(self.w0) + BigInt::from(self.w1)
    }
}

impl Default for WeightPair {
    fn default() -> Self {
        WeightPair::UNIT
    }
}

/// Per-tag weights. Tags without an entry weigh `(1, 1)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WeightTable {
    pairs: Vec<WeightPair>,
}

impl WeightTable {
    pub fn unit() -> Self {
        WeightTable::default()
    }

    pub fn from_pairs(pairs: Vec<WeightPair>) -> Self {
        WeightTable { pairs }
    }

    pub fn set(&mut self, tag: TagId, pair: WeightPair) {
        if self.pairs.len() <= tag.index() {
            self.pairs.resize(tag.index() + 1, WeightPair::UNIT);
        }
        self.pairs[tag.index()] = pair;
    }

    pub fn get(&self, tag: TagId) -> WeightPair {
        self.pairs
            .get(tag.index())
            .copied()
            .unwrap_or(WeightPair::UNIT)
    }

    pub fn is_unit(&self) -> bool {
        self.pairs.iter().all(|p| *p == WeightPair::UNIT)
    }
}

/// Unweighted similarity.
pub fn mu(a: &Scenario, b: &Scenario) -> Result<Similarity, ModelError> {
    let p = difference_profile(a, b)?;
    Ok(mu_of_profile(&p))
}

pub(crate) fn mu_of_profile(p: &DifferenceProfile) -> Similarity {
    let pow2 = |e: usize| BigInt::one() << e;
    let numer = pow2(p.k1()) + pow2(p.k2()) - BigInt::from(2);
    let denom = pow2(p.k());
    Similarity(BigRational::one() - BigRational::new(numer, denom))
}

/// Weighted similarity.
pub fn mu_weighted(a: &Scenario, b: &Scenario, w: &WeightTable) -> Result<Similarity, ModelError> {
    if !a.same_universe(b) {
        return Err(ModelError::UniverseMismatch);
    }
    Ok(mu_weighted_unchecked(a, b, w))
}

pub(crate) fn mu_weighted_unchecked(a: &Scenario, b: &Scenario, w: &WeightTable) -> Similarity {
    let p = profile_of(a.members(), b.members());
    if w.is_unit() {
        return mu_of_profile(&p);
    }
    let diff_term = |ids: &[TagId]| {
        let mut full = BigInt::one();
        let mut zeros = BigInt::one();
        for &id in ids {
            let pair = w.get(id);
            full *= pair.sum();
            zeros *= BigInt::from(pair.w0());
        }
        full - zeros
    };
    let z1 = diff_term(&p.only_right);
    let z2 = diff_term(&p.only_left);
    let z: BigInt = p.union().into_iter().map(|id| w.get(id).sum()).product();
    Similarity(BigRational::one() - BigRational::new(z1 + z2, z))
}

pub mod oracle {
    //! Enumeration ground truth for the closed forms.
    //!
    //! Counts assignments over the union of two scenarios' tags on which
    //! exactly one of the two conjunctions holds. Tags outside the union are
    //! free in both functions and scale numerator and denominator alike, so
    //! they are left out of the enumeration.

    use thiserror::Error;

    use crate::model::Scenario;

    /// Enumeration is refused above this many union tags.
    pub const MAX_ORACLE_TAGS: usize = 24;

    #[derive(Debug, Clone, PartialEq, Eq, Error)]
    pub enum OracleError {
        #[error("TooLargeForOracle: union has {0} tags (limit {MAX_ORACLE_TAGS})")]
        TooLargeForOracle(usize),
        #[error("UniverseMismatch")]
        UniverseMismatch,
    }

    /// `satisfying` of `assignments` (= 2^k) assignments make `a xor b` true.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct XorCount {
        pub satisfying: u64,
        pub assignments: u64,
    }

    pub fn oracle_xor_count(a: &Scenario, b: &Scenario) -> Result<XorCount, OracleError> {
        if a.universe_key() != b.universe_key() {
            return Err(OracleError::UniverseMismatch);
        }
        let mut union: Vec<_> = a.members().iter().chain(b.members()).copied().collect();
        union.sort_unstable();
        union.dedup();
        if union.len() > MAX_ORACLE_TAGS {
            return Err(OracleError::TooLargeForOracle(union.len()));
        }
        let mask_of = |s: &Scenario| -> u32 {
            s.members()
                .iter()
                .map(|t| 1u32 << union.binary_search(t).expect("member of union"))
                .fold(0, |acc, bit| acc | bit)
        };
        let (ma, mb) = (mask_of(a), mask_of(b));
        let total = 1u64 << union.len();
        let satisfying = (0..total as u32)
            .filter(|&sigma| ((sigma & ma) == ma) != ((sigma & mb) == mb))
            .count() as u64;
        Ok(XorCount {
            satisfying,
            assignments: total,
        })
    }
}

//! Products of replica overlaps (`c12·c23²…`) and of spins (`σ1σ2…`).
//!
//! Text forms use 1-based labels: `"1"`, `"c12"`, `"c12^2*c34"`, `"s1*s2"`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest replica label accepted by the text form.
pub const MAX_REPLICAS: usize = 9;

/// Product of overlaps between replicas, `Π c_{ab}^{k}`. Replicas are
/// 0-based internally; factors are kept merged and sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct OverlapMonomial {
    factors: Vec<(usize, usize, u32)>,
}

impl OverlapMonomial {
    pub fn one() -> Self {
        Self {
            factors: Vec::new(),
        }
    }

    /// `c_{ab}^power` for 1-based labels `a != b`.
    pub fn pair(a: usize, b: usize, power: u32) -> Result<Self> {
        if a == 0 || b == 0 || a == b || a > MAX_REPLICAS || b > MAX_REPLICAS {
            return Err(Error::InvalidMonomial(format!("bad replica pair ({a}, {b})")));
        }
        if power == 0 {
            return Ok(Self::one());
        }
        Ok(Self {
            factors: alloc::vec![(a.min(b) - 1, a.max(b) - 1, power)],
        })
    }

    pub fn times(&self, other: &Self) -> Self {
        let mut map: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for &(a, b, k) in self.factors.iter().chain(&other.factors) {
            *map.entry((a, b)).or_default() += k;
        }
        Self {
            factors: map.into_iter().map(|((a, b), k)| (a, b, k)).collect(),
        }
    }

    /// `(a, b, power)` with `a < b`, 0-based.
    pub fn factors(&self) -> &[(usize, usize, u32)] {
        &self.factors
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|f| f.2).sum()
    }

    pub fn max_power(&self) -> u32 {
        self.factors.iter().map(|f| f.2).max().unwrap_or(0)
    }

    /// Number of replicas needed: the largest label used.
    pub fn arity(&self) -> usize {
        self.factors.iter().map(|f| f.1 + 1).max().unwrap_or(0)
    }

    /// True when the replica graph has no cycle, so the thermal expectation
    /// factorizes along a tree of XOR correlations.
    pub fn is_forest(&self) -> bool {
        let n = self.arity();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b, _) in &self.factors {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return false;
            }
            parent[ra] = rb;
        }
        true
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::InvalidMonomial("empty monomial".into()));
        }
        let mut out = Self::one();
        for raw in text.split('*') {
            let tok = raw.trim();
            if tok == "1" {
                continue;
            }
            let (base, power) = split_power(tok)?;
            let digits = base
                .strip_prefix('c')
                .ok_or_else(|| Error::InvalidMonomial(format!("expected c<a><b>, got {tok:?}")))?;
            let labels: Vec<usize> = digits
                .chars()
                .filter(|c| *c != ',' && *c != '_')
                .map(|c| c.to_digit(10).map(|d| d as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::InvalidMonomial(format!("bad labels in {tok:?}")))?;
            if labels.len() != 2 {
                return Err(Error::InvalidMonomial(format!(
                    "overlap factor needs two replica labels, got {tok:?}"
                )));
            }
            out = out.times(&Self::pair(labels[0], labels[1], power)?);
        }
        Ok(out)
    }
}

fn split_power(tok: &str) -> Result<(&str, u32)> {
    match tok.split_once('^') {
        None => Ok((tok, 1)),
        Some((base, p)) => p
            .trim()
            .parse::<u32>()
            .map(|p| (base.trim(), p))
            .map_err(|_| Error::InvalidMonomial(format!("bad exponent in {tok:?}"))),
    }
}

impl fmt::Display for OverlapMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        for (k, &(a, b, p)) in self.factors.iter().enumerate() {
            if k > 0 {
                f.write_str("*")?;
            }
            write!(f, "c{}{}", a + 1, b + 1)?;
            if p != 1 {
                write!(f, "^{p}")?;
            }
        }
        Ok(())
    }
}

impl TryFrom<String> for OverlapMonomial {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<OverlapMonomial> for String {
    fn from(m: OverlapMonomial) -> String {
        format!("{m}")
    }
}

/// An overlap monomial times optional energy insertions `H(σ^a)^k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicaObservable {
    pub monomial: OverlapMonomial,
    /// `(replica, power)`, 0-based replica.
    pub insertions: Vec<(usize, u32)>,
}

impl ReplicaObservable {
    pub fn plain(monomial: OverlapMonomial) -> Self {
        Self {
            monomial,
            insertions: Vec::new(),
        }
    }

    pub fn with_energy(monomial: OverlapMonomial, replica: usize, power: u32) -> Self {
        Self {
            monomial,
            insertions: alloc::vec![(replica, power)],
        }
    }

    pub fn arity(&self) -> usize {
        self.insertions
            .iter()
            .map(|&(r, _)| r + 1)
            .chain(core::iter::once(self.monomial.arity()))
            .max()
            .unwrap_or(0)
    }
}

/// Product of distinct spins `σ_{i1} σ_{i2} …` (0-based, sorted).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpinMonomial {
    sites: Vec<usize>,
}

impl SpinMonomial {
    pub fn new(mut sites: Vec<usize>) -> Result<Self> {
        sites.sort_unstable();
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidMonomial("spin monomial repeats a site".into()));
        }
        Ok(Self { sites })
    }

    /// `σ_1 σ_2 … σ_k` (first `k` sites).
    pub fn first(k: usize) -> Self {
        Self {
            sites: (0..k).collect(),
        }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn degree(&self) -> usize {
        self.sites.len()
    }

    /// Bit mask of the sites, for `N <= 64`.
    pub fn mask(&self) -> u64 {
        self.sites.iter().fold(0u64, |m, &i| m | 1 << i)
    }

    /// Value `±1` on the configuration with bit pattern `index`.
    #[inline]
    pub fn eval_index(&self, index: u64) -> f64 {
        let mask = self.mask();
        // σ_i = -1 where the bit is clear
        let down = (mask & !index).count_ones();
        if down % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::InvalidMonomial("empty monomial".into()));
        }
        let mut sites = Vec::new();
        for raw in text.split('*') {
            let tok = raw.trim();
            if tok == "1" {
                continue;
            }
            let idx = tok
                .strip_prefix('s')
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&i| i >= 1)
                .ok_or_else(|| Error::InvalidMonomial(format!("expected s<i>, got {tok:?}")))?;
            sites.push(idx - 1);
        }
        Self::new(sites)
    }
}

impl fmt::Display for SpinMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sites.is_empty() {
            return f.write_str("1");
        }
        for (k, i) in self.sites.iter().enumerate() {
            if k > 0 {
                f.write_str("*")?;
            }
            write!(f, "s{}", i + 1)?;
        }
        Ok(())
    }
}

impl TryFrom<String> for SpinMonomial {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<SpinMonomial> for String {
    fn from(m: SpinMonomial) -> String {
        format!("{m}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn parse_and_display() {
        let m = OverlapMonomial::parse("c23 * c12^2*c21").unwrap();
        assert_eq!(m.to_string(), "c12^3*c23");
        assert_eq!(m.arity(), 3);
        assert_eq!(m.degree(), 4);
        assert!(m.is_forest());
        assert_eq!(OverlapMonomial::parse("1").unwrap(), OverlapMonomial::one());
        let tri = OverlapMonomial::parse("c12*c23*c13").unwrap();
        assert!(!tri.is_forest());
    }

    #[test]
    fn malformed_monomials_fail() {
        for bad in ["", "c11", "c1", "x12", "c12^a", "c0 1", "c1x"] {
            assert!(OverlapMonomial::parse(bad).is_err(), "{bad}");
        }
        assert!(SpinMonomial::parse("s1*s1").is_err());
        assert!(SpinMonomial::parse("s0").is_err());
    }

    #[test]
    fn spin_monomial_evaluation() {
        let m = SpinMonomial::parse("s1*s3").unwrap();
        assert_eq!(m.to_string(), "s1*s3");
        assert_eq!(m.eval_index(0b000), 1.0);
        assert_eq!(m.eval_index(0b001), -1.0);
        assert_eq!(m.eval_index(0b101), 1.0);
        assert_eq!(SpinMonomial::first(0).eval_index(0b11), 1.0);
    }
}

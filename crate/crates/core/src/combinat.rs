//! Contraction vectors, the dot-association rule and non-crossing structures.
//!
//! A product `I_{q_1}(f_1) ... I_{q_p}(f_p)` of multiple Wigner integrals is
//! expanded by iterating the product formula; every term is indexed by a
//! vector `r = (r_1, ..., r_{p-1})` of contraction orders. The term is a
//! scalar exactly when all `q_1 + ... + q_p` variables are contracted away.
//! For such an `r`, laying the variables out as dots grouped in blocks and
//! pairing them block by block (leftmost available dot of the current block
//! with the rightmost available dot of the preceding blocks) yields a
//! non-crossing pairing; `alpha[i][j]` counts the pairs joining blocks `i`
//! and `j`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default bound on `q_1 + ... + q_p` for contraction enumeration.
pub const DEFAULT_DOT_BOUND: usize = 40;
pub const MAX_PAIRING_N: usize = 16;
pub const MAX_PARTITION_N: usize = 12;

/// Orders `(q_1, ..., q_p)` of the integrals in a product.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BlockProfile(Vec<usize>);

impl BlockProfile {
    pub fn new(q_list: Vec<usize>) -> Result<Self> {
        if q_list.len() < 2 {
            return Err(Error::domain(format!("a block profile needs p >= 2 blocks, got {}", q_list.len())));
        }
        if let Some(i) = q_list.iter().position(|&q| q == 0) {
            return Err(Error::domain(format!("block {} has order 0; every q_i must be >= 1", i + 1)));
        }
        Ok(BlockProfile(q_list))
    }

    /// `p` copies of the same order.
    pub fn uniform(q: usize, p: usize) -> Result<Self> {
        Self::new(vec![q; p])
    }

    pub fn orders(&self) -> &[usize] {
        &self.0
    }

    pub fn p(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

/// Pair counts between blocks, stored as a full `p x p` array with only
/// the strict upper triangle populated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct AlphaMatrix {
    p: usize,
    data: Vec<u32>,
}

impl AlphaMatrix {
    fn zeros(p: usize) -> Self {
        AlphaMatrix { p, data: vec![0; p * p] }
    }

    /// `alpha_{ij}` for `i < j` (0-based). Symmetric access is allowed.
    pub fn get(&self, i: usize, j: usize) -> u32 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if a == b {
            return 0;
        }
        self.data[a * self.p + b]
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Non-zero entries as `(i, j, alpha_ij)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                let a = self.get(i, j);
                if a > 0 {
                    out.push((i, j, a));
                }
            }
        }
        out
    }

    pub fn total(&self) -> u32 {
        self.data.iter().sum()
    }

    /// Row-major upper triangle `(alpha_12, alpha_13, ..., alpha_{p-1,p})`.
    pub fn flatten(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.p * (self.p - 1) / 2);
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContractionVector {
    pub r: Vec<usize>,
    /// Whether `r` contracts every variable (membership in the scalar set).
    pub scalar: bool,
    pub alpha: Option<AlphaMatrix>,
}

fn check_chain(profile: &BlockProfile, r: &[usize]) -> Result<()> {
    let q = profile.orders();
    if r.len() + 1 != q.len() {
        return Err(Error::domain(format!(
            "contraction vector has length {} but the profile has {} blocks",
            r.len(),
            q.len()
        )));
    }
    let mut free = q[0];
    for (k, &rk) in r.iter().enumerate() {
        if rk > q[k + 1] || rk > free {
            return Err(Error::domain(format!(
                "r_{} = {rk} violates the bound min(q_{}, {free})",
                k + 1,
                k + 2
            )));
        }
        free = free + q[k + 1] - 2 * rk;
    }
    Ok(())
}

/// Whether `r` is admissible and contracts every variable.
pub fn is_scalar(profile: &BlockProfile, r: &[usize]) -> bool {
    check_chain(profile, r).is_ok() && 2 * r.iter().sum::<usize>() == profile.total()
}

/// Runs the association rule and tallies the pairs between blocks.
pub fn alpha_matrix(profile: &BlockProfile, r: &[usize]) -> Result<AlphaMatrix> {
    check_chain(profile, r)?;
    if 2 * r.iter().sum::<usize>() != profile.total() {
        return Err(Error::domain(format!(
            "r = {r:?} leaves {} variables uncontracted; alpha is defined only for scalar contractions",
            profile.total() - 2 * r.iter().sum::<usize>()
        )));
    }
    let q = profile.orders();
    let p = q.len();
    let mut alpha = AlphaMatrix::zeros(p);
    // Available dots, left to right, tagged by their block; the top of the
    // stack is the right-most available dot among the preceding blocks.
    let mut stack: Vec<usize> = vec![0; q[0]];
    for j in 1..p {
        let take = r[j - 1];
        for _ in 0..take {
            let i = stack.pop().expect("chain bounds guarantee an available dot");
            alpha.data[i * p + j] += 1;
        }
        stack.extend(std::iter::repeat_n(j, q[j] - take));
    }
    debug_assert!(stack.is_empty());
    Ok(alpha)
}

/// Enumerates the admissible contraction vectors in lexicographic order of `r`.
pub fn enumerate_contractions(profile: &BlockProfile, scalar_only: bool) -> Result<Vec<ContractionVector>> {
    enumerate_contractions_bounded(profile, scalar_only, DEFAULT_DOT_BOUND)
}

pub fn enumerate_contractions_bounded(
    profile: &BlockProfile,
    scalar_only: bool,
    bound: usize,
) -> Result<Vec<ContractionVector>> {
    let total = profile.total();
    if total > bound {
        return Err(Error::size(format!(
            "sum of block orders {total} exceeds the enumeration bound {bound}"
        )));
    }
    let q = profile.orders();
    let mut out = Vec::new();
    if scalar_only && total % 2 == 1 {
        return Ok(out);
    }
    let mut r = Vec::with_capacity(q.len() - 1);
    dfs(profile, q, q[0], &mut r, scalar_only, &mut out);
    Ok(out)
}

fn dfs(
    profile: &BlockProfile,
    q: &[usize],
    free: usize,
    r: &mut Vec<usize>,
    scalar_only: bool,
    out: &mut Vec<ContractionVector>,
) {
    let k = r.len();
    if k + 1 == q.len() {
        let scalar = free == 0;
        if scalar_only && !scalar {
            return;
        }
        let alpha = if scalar { Some(alpha_matrix(profile, r).expect("admissible by construction")) } else { None };
        out.push(ContractionVector { r: r.clone(), scalar, alpha });
        return;
    }
    let next = q[k + 1];
    let remaining: usize = q[k + 2..].iter().sum();
    for rk in 0..=next.min(free) {
        let after = free + next - 2 * rk;
        // Everything still free must be absorbed by the remaining blocks.
        if scalar_only && after > remaining {
            continue;
        }
        r.push(rk);
        dfs(profile, q, after, r, scalar_only, out);
        r.pop();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NcKind {
    Pairing,
    Partition,
}

impl std::str::FromStr for NcKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairing" => Ok(NcKind::Pairing),
            "partition" => Ok(NcKind::Partition),
            other => Err(Error::Parse(format!("unknown structure kind `{other}` (expected pairing|partition)"))),
        }
    }
}

/// A non-crossing pairing or partition of `{1, ..., n}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NcStructure {
    pub kind: NcKind,
    /// Blocks of 1-based indices, each sorted, ordered by smallest element.
    pub blocks: Vec<Vec<usize>>,
}

impl NcStructure {
    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Checks the partition and non-crossing properties.
    pub fn is_valid(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n + 1];
        for b in &self.blocks {
            if b.is_empty() {
                return false;
            }
            for &x in b {
                if x == 0 || x > n || seen[x] {
                    return false;
                }
                seen[x] = true;
            }
            if self.kind == NcKind::Pairing && b.len() != 2 {
                return false;
            }
        }
        for (u, a) in self.blocks.iter().enumerate() {
            for b in &self.blocks[u + 1..] {
                if crosses(a, b) {
                    return false;
                }
            }
        }
        true
    }
}

/// Whether two disjoint blocks cross (`a < b < c < d` with `a, c` in one and `b, d` in the other).
pub fn crosses(x: &[usize], y: &[usize]) -> bool {
    for &a in x {
        for &c in x {
            if a >= c {
                continue;
            }
            for &b in y {
                for &d in y {
                    if a < b && b < c && c < d {
                        return true;
                    }
                    if b < a && a < d && d < c {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Complete, duplicate-free enumeration of NC pairings or partitions of `{1..n}`.
pub fn enumerate_nc(kind: NcKind, n: usize) -> Result<Vec<NcStructure>> {
    match kind {
        NcKind::Pairing => {
            if n > MAX_PAIRING_N {
                return Err(Error::size(format!("pairing enumeration is limited to n <= {MAX_PAIRING_N}")));
            }
            if n % 2 == 1 {
                return Ok(Vec::new());
            }
            Ok(nc_pairings(n)
                .into_iter()
                .map(|pairs| {
                    let mut blocks: Vec<Vec<usize>> = pairs.into_iter().map(|(a, b)| vec![a + 1, b + 1]).collect();
                    blocks.sort();
                    NcStructure { kind, blocks }
                })
                .collect())
        }
        NcKind::Partition => {
            if n > MAX_PARTITION_N {
                return Err(Error::size(format!("partition enumeration is limited to n <= {MAX_PARTITION_N}")));
            }
            Ok(nc_partitions(n)
                .into_iter()
                .map(|blocks| NcStructure {
                    kind,
                    blocks: blocks.into_iter().map(|b| b.into_iter().map(|x| x + 1).collect()).collect(),
                })
                .collect())
        }
    }
}

/// NC pairings of `0..n` as lists of `(left, right)` pairs. `n` must be even.
pub fn nc_pairings(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(lo: usize, hi: usize) -> Vec<Vec<(usize, usize)>> {
        if lo >= hi {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        // `lo` pairs with some `m`; inside and outside are independent.
        let mut m = lo + 1;
        while m < hi {
            let inner = rec(lo + 1, m);
            let outer = rec(m + 1, hi);
            for a in &inner {
                for b in &outer {
                    let mut v = Vec::with_capacity(1 + a.len() + b.len());
                    v.push((lo, m));
                    v.extend_from_slice(a);
                    v.extend_from_slice(b);
                    out.push(v);
                }
            }
            m += 2;
        }
        out
    }
    if n % 2 == 1 {
        return Vec::new();
    }
    rec(0, n)
}

/// NC partitions of `0..n`, blocks sorted and ordered by least element.
pub fn nc_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    // Partitions of the ordered set `items` (already increasing).
    fn rec(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
        if items.is_empty() {
            return vec![Vec::new()];
        }
        let first = items[0];
        let rest = &items[1..];
        let mut out = Vec::new();
        // Choose the other members of `first`'s block as a subset of `rest`;
        // the gaps between consecutive members are partitioned independently.
        let m = rest.len();
        for mask in 0u32..(1u32 << m) {
            let chosen: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let mut block = vec![first];
            block.extend(chosen.iter().map(|&i| rest[i]));
            let mut segments: Vec<&[usize]> = Vec::new();
            let mut start = 0;
            for &i in &chosen {
                segments.push(&rest[start..i]);
                start = i + 1;
            }
            segments.push(&rest[start..]);
            let mut partial: Vec<Vec<Vec<usize>>> = vec![vec![block]];
            for seg in segments {
                let subs = rec(seg);
                let mut next = Vec::with_capacity(partial.len() * subs.len());
                for p in &partial {
                    for s in &subs {
                        let mut v = p.clone();
                        v.extend(s.iter().cloned());
                        next.push(v);
                    }
                }
                partial = next;
            }
            out.extend(partial);
        }
        out
    }
    let items: Vec<usize> = (0..n).collect();
    let mut all = rec(&items);
    for p in all.iter_mut() {
        p.sort();
    }
    all
}

/// `C_k = binom(2k, k) / (k + 1)`.
pub fn catalan(k: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c
}

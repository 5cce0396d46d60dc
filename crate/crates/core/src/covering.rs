//! Site partitions and the non pair-covering / non tuple-covering predicates.
//!
//! Blocks are stored as sorted site lists. Partitions may leave sites
//! uncovered; an uncovered site belongs to no block and never causes an
//! intersection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on candidate evaluations for the tuple predicate.
pub const DEFAULT_TUPLE_CAP: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    n_sites: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Unchecked: each block is sorted, nothing else. See [`validate_partition`].
    pub fn new(n_sites: usize, blocks: Vec<Vec<usize>>) -> Self {
        let blocks = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        Self { n_sites, blocks }
    }

    pub fn checked(n_sites: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let p = Self::new(n_sites, blocks);
        p.ensure_valid()?;
        Ok(p)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn covered_sites(&self) -> BTreeSet<usize> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn is_complete(&self) -> bool {
        self.covered_sites().len() == self.n_sites && validate_partition(self).valid
    }

    fn ensure_valid(&self) -> Result<()> {
        let v = validate_partition(self);
        if v.valid {
            Ok(())
        } else {
            Err(Error::InvalidPartition(v.describe()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionValidation {
    pub valid: bool,
    pub complete: bool,
    pub empty_blocks: Vec<usize>,
    pub out_of_range: Vec<usize>,
    /// Sites listed more than once, within or across blocks.
    pub overlaps: Vec<usize>,
    pub uncovered: Vec<usize>,
}

impl PartitionValidation {
    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if !self.empty_blocks.is_empty() {
            parts.push(format!("empty blocks {:?}", self.empty_blocks));
        }
        if !self.out_of_range.is_empty() {
            parts.push(format!("sites out of range {:?}", self.out_of_range));
        }
        if !self.overlaps.is_empty() {
            parts.push(format!("overlap at sites {:?}", self.overlaps));
        }
        parts.join("; ")
    }
}

pub fn validate_partition(p: &Partition) -> PartitionValidation {
    let mut count = vec![0usize; p.n_sites];
    let mut out_of_range = BTreeSet::new();
    let mut empty_blocks = Vec::new();
    for (i, b) in p.blocks.iter().enumerate() {
        if b.is_empty() {
            empty_blocks.push(i);
        }
        for &s in b {
            match count.get_mut(s) {
                Some(c) => *c += 1,
                None => {
                    out_of_range.insert(s);
                }
            }
        }
    }
    let overlaps: Vec<usize> = (0..p.n_sites).filter(|&s| count[s] > 1).collect();
    let uncovered: Vec<usize> = (0..p.n_sites).filter(|&s| count[s] == 0).collect();
    let valid = empty_blocks.is_empty() && out_of_range.is_empty() && overlaps.is_empty();
    PartitionValidation {
        valid,
        complete: valid && uncovered.is_empty(),
        empty_blocks,
        out_of_range: out_of_range.into_iter().collect(),
        overlaps,
        uncovered,
    }
}

pub(crate) fn disjoint(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return false,
        }
    }
    true
}

/// One quantified instance of a covering predicate.
///
/// For the pair predicate, `over` is the partition whose blocks are
/// quantified (`tuple = [f, f′]`) and `choice` holds the single block of the
/// other partition. For the tuple predicate, `over` is `None`, `tuple` has
/// one block index per partition and `choice` the primed blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QuantifiedCase {
    pub over: Option<usize>,
    pub tuple: Vec<usize>,
    pub choice: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CoveringReport {
    pub holds: bool,
    pub witnesses: Vec<QuantifiedCase>,
    /// First violating case in enumeration order; `choice` is empty.
    pub counterexample: Option<QuantifiedCase>,
    pub cases_checked: u64,
}

fn check_same_sites(parts: &[&Partition]) -> Result<usize> {
    let n = parts[0].n_sites();
    for p in parts {
        if p.n_sites() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: p.n_sites() });
        }
        p.ensure_valid()?;
    }
    Ok(n)
}

/// ∀f,f′∈𝓕 ∃g∈𝓖 with f∩g = f′∩g = ∅, and the same with roles swapped.
pub fn non_pair_covering(f_part: &Partition, g_part: &Partition) -> Result<CoveringReport> {
    check_same_sites(&[f_part, g_part])?;
    let mut witnesses = Vec::new();
    let mut counterexample = None;
    let mut cases = 0u64;
    for (over, (a, b)) in [(f_part, g_part), (g_part, f_part)].into_iter().enumerate() {
        for f in 0..a.len() {
            for fp in 0..a.len() {
                cases += 1;
                let found = (0..b.len()).find(|&g| disjoint(a.block(f), b.block(g)) && disjoint(a.block(fp), b.block(g)));
                match found {
                    Some(g) => witnesses.push(QuantifiedCase { over: Some(over), tuple: vec![f, fp], choice: vec![g] }),
                    None if counterexample.is_none() => {
                        counterexample = Some(QuantifiedCase { over: Some(over), tuple: vec![f, fp], choice: vec![] })
                    }
                    None => {}
                }
            }
        }
    }
    Ok(CoveringReport { holds: counterexample.is_none(), witnesses, counterexample, cases_checked: cases })
}

/// Which disjointness equalities the tuple predicate requires.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TupleMode {
    /// Every primed block avoids all primed and unprimed blocks of the other
    /// partitions.
    #[default]
    Maximal,
    /// Primed blocks only need to avoid the unprimed blocks of the others.
    UnprimedOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TupleOptions {
    pub mode: TupleMode,
    /// Worst-case candidate evaluations allowed (tuples × candidates).
    pub cap: u128,
}

impl Default for TupleOptions {
    fn default() -> Self {
        Self { mode: TupleMode::Maximal, cap: DEFAULT_TUPLE_CAP }
    }
}

/// Pairwise block disjointness between partitions `p` and `q`.
struct DisjointTable {
    table: Vec<Vec<Vec<Vec<bool>>>>,
}

impl DisjointTable {
    fn new(parts: &[&Partition]) -> Self {
        let table = parts
            .iter()
            .map(|p| {
                parts
                    .iter()
                    .map(|q| {
                        p.blocks()
                            .iter()
                            .map(|a| q.blocks().iter().map(|b| disjoint(a, b)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { table }
    }

    #[inline]
    fn get(&self, p: usize, i: usize, q: usize, j: usize) -> bool {
        self.table[p][q][i][j]
    }
}

fn search_primed(table: &DisjointTable, sizes: &[usize], tuple: &[usize], mode: TupleMode) -> Option<Vec<usize>> {
    let k = sizes.len();
    let mut choice = vec![0usize; k];
    fn fits(table: &DisjointTable, tuple: &[usize], choice: &[usize], p: usize, c: usize, mode: TupleMode) -> bool {
        for (q, &t) in tuple.iter().enumerate() {
            if q != p && !table.get(p, c, q, t) {
                return false;
            }
        }
        if mode == TupleMode::Maximal {
            for (q, &cq) in choice.iter().enumerate().take(p) {
                if !table.get(p, c, q, cq) {
                    return false;
                }
            }
        }
        true
    }
    fn rec(
        table: &DisjointTable,
        sizes: &[usize],
        tuple: &[usize],
        choice: &mut Vec<usize>,
        p: usize,
        mode: TupleMode,
    ) -> bool {
        if p == sizes.len() {
            return true;
        }
        for c in 0..sizes[p] {
            if fits(table, tuple, choice, p, c, mode) {
                choice[p] = c;
                if rec(table, sizes, tuple, choice, p + 1, mode) {
                    return true;
                }
            }
        }
        false
    }
    rec(table, sizes, tuple, &mut choice, 0, mode).then_some(choice)
}

/// Lexicographically smallest primed tuple for the given unprimed tuple.
pub fn tuple_substitutes(parts: &[&Partition], tuple: &[usize], mode: TupleMode) -> Result<Option<Vec<usize>>> {
    check_same_sites(parts)?;
    if tuple.len() != parts.len() || tuple.iter().zip(parts).any(|(&t, p)| t >= p.len()) {
        return Err(Error::InvalidPartition(format!("tuple {tuple:?} does not index the partitions")));
    }
    let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
    Ok(search_primed(&DisjointTable::new(parts), &sizes, tuple, mode))
}

pub fn non_tuple_covering(parts: &[&Partition], opts: TupleOptions) -> Result<CoveringReport> {
    if parts.len() < 2 {
        return Err(Error::InvalidPartition("at least two partitions are required".into()));
    }
    check_same_sites(parts)?;
    let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
    let tuples: u128 = sizes.iter().map(|&s| s as u128).product();
    let needed = tuples.saturating_mul(tuples);
    if needed > opts.cap {
        return Err(Error::LimitExceeded { needed, cap: opts.cap });
    }
    let table = DisjointTable::new(parts);
    let mut witnesses = Vec::new();
    let mut counterexample = None;
    let mut cases = 0u64;
    let mut tuple = vec![0usize; parts.len()];
    if sizes.contains(&0) {
        return Ok(CoveringReport { holds: true, witnesses, counterexample, cases_checked: 0 });
    }
    loop {
        cases += 1;
        match search_primed(&table, &sizes, &tuple, opts.mode) {
            Some(choice) => witnesses.push(QuantifiedCase { over: None, tuple: tuple.clone(), choice }),
            None if counterexample.is_none() => {
                counterexample = Some(QuantifiedCase { over: None, tuple: tuple.clone(), choice: vec![] })
            }
            None => {}
        }
        // Odometer, last partition fastest.
        let mut k = parts.len();
        loop {
            if k == 0 {
                return Ok(CoveringReport { holds: counterexample.is_none(), witnesses, counterexample, cases_checked: cases });
            }
            k -= 1;
            tuple[k] += 1;
            if tuple[k] < sizes[k] {
                break;
            }
            tuple[k] = 0;
        }
    }
}

/// Substitute blocks (f′, g′) with f∩g′ = f′∩g′ = g∩f′ = ∅, lexicographically
/// smallest. Returns `Ok(None)` when no such pair exists.
pub fn theorem1_substitutes(f_part: &Partition, g_part: &Partition, f: usize, g: usize) -> Result<Option<(usize, usize)>> {
    check_same_sites(&[f_part, g_part])?;
    if f >= f_part.len() || g >= g_part.len() {
        return Err(Error::InvalidPartition(format!("block index ({f}, {g}) out of range")));
    }
    for fp in 0..f_part.len() {
        if !disjoint(f_part.block(fp), g_part.block(g)) {
            continue;
        }
        for gp in 0..g_part.len() {
            let gb = g_part.block(gp);
            if disjoint(f_part.block(f), gb) && disjoint(f_part.block(fp), gb) {
                return Ok(Some((fp, gp)));
            }
        }
    }
    Ok(None)
}

/// Re-checks a witness of either predicate by direct set intersection.
pub fn witness_is_sound(parts: &[&Partition], case: &QuantifiedCase, mode: TupleMode) -> bool {
    match case.over {
        Some(over) => {
            let (a, b) = (parts[over], parts[1 - over]);
            let g = b.block(case.choice[0]);
            disjoint(a.block(case.tuple[0]), g) && disjoint(a.block(case.tuple[1]), g)
        }
        None => (0..parts.len()).all(|p| {
            let primed = parts[p].block(case.choice[p]);
            (0..parts.len()).filter(|&q| q != p).all(|q| {
                disjoint(primed, parts[q].block(case.tuple[q]))
                    && (mode == TupleMode::UnprimedOnly || disjoint(primed, parts[q].block(case.choice[q])))
            })
        }),
    }
}

/// Re-checks a counterexample by trying every possible choice directly.
pub fn counterexample_is_sound(parts: &[&Partition], case: &QuantifiedCase, mode: TupleMode) -> bool {
    match case.over {
        Some(over) => {
            let b = parts[1 - over];
            (0..b.len()).all(|g| {
                !witness_is_sound(parts, &QuantifiedCase { over: Some(over), tuple: case.tuple.clone(), choice: vec![g] }, mode)
            })
        }
        None => {
            let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
            if sizes.contains(&0) {
                return false;
            }
            let mut choice = vec![0usize; parts.len()];
            loop {
                let c = QuantifiedCase { over: None, tuple: case.tuple.clone(), choice: choice.clone() };
                if witness_is_sound(parts, &c, mode) {
                    return false;
                }
                let mut k = parts.len();
                loop {
                    if k == 0 {
                        return true;
                    }
                    k -= 1;
                    choice[k] += 1;
                    if choice[k] < sizes[k] {
                        break;
                    }
                    choice[k] = 0;
                }
            }
        }
    }
}

/// Partitions made of the blanket as block 0 plus blocks of `block_size`
/// drawn from the remaining sites. When the remainder does not divide
/// evenly, every choice of leftover sites is emitted.
pub fn blanket_avoiding_partitions(blanket: &[usize], n_sites: usize, block_size: usize) -> Result<Vec<Partition>> {
    const MAX_PARTITIONS: u128 = 100_000;
    let mut q: Vec<usize> = blanket.to_vec();
    q.sort_unstable();
    if let Some(&s) = q.iter().find(|&&s| s >= n_sites) {
        return Err(Error::SiteOutOfRange { index: s, n_sites });
    }
    if let Some(w) = q.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateSite(w[0]));
    }
    let rest: Vec<usize> = (0..n_sites).filter(|s| q.binary_search(s).is_err()).collect();
    if q.is_empty() || block_size == 0 || rest.len() < block_size {
        return Err(Error::Infeasible(format!(
            "cannot form blocks of size {block_size} from {} sites outside the blanket",
            rest.len()
        )));
    }
    let n_blocks = rest.len() / block_size;
    let count = partition_count(rest.len(), n_blocks, block_size);
    if count > MAX_PARTITIONS {
        return Err(Error::LimitExceeded { needed: count, cap: MAX_PARTITIONS });
    }
    let mut out = Vec::new();
    for covered in combinations(&rest, n_blocks * block_size) {
        for split in equal_splits(&covered, block_size) {
            let mut blocks = vec![q.clone()];
            blocks.extend(split);
            out.push(Partition::new(n_sites, blocks));
        }
    }
    Ok(out)
}

fn partition_count(m: usize, k: usize, b: usize) -> u128 {
    // C(m, kb) · (kb)! / ((b!)^k k!)
    let choose = |n: usize, r: usize| -> u128 { (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1)) };
    let mut total = choose(m, k * b);
    let mut left = k * b;
    for _ in 0..k {
        total = total.saturating_mul(choose(left - 1, b - 1));
        left -= b;
    }
    total
}

fn combinations(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    if items.len() < r {
        return vec![];
    }
    let mut out: Vec<Vec<usize>> = combinations(&items[1..], r - 1)
        .into_iter()
        .map(|mut c| {
            c.insert(0, items[0]);
            c
        })
        .collect();
    out.extend(combinations(&items[1..], r));
    out
}

/// All ways to split `items` into blocks of size `b`; the first item always
/// opens the next block so each set partition appears once.
fn equal_splits(items: &[usize], b: usize) -> Vec<Vec<Vec<usize>>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let (head, tail) = (items[0], &items[1..]);
    let mut out = Vec::new();
    for mates in combinations(tail, b - 1) {
        let rest: Vec<usize> = tail.iter().copied().filter(|s| !mates.contains(s)).collect();
        let mut block = vec![head];
        block.extend(&mates);
        for mut split in equal_splits(&rest, b) {
            split.insert(0, block.clone());
            out.push(split);
        }
    }
    out
}

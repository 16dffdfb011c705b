//! Frequent itemset search.
//!
//! [`mine_oracle`] walks the itemset lattice depth first, one prefix
//! equivalence class at a time, and only extends itemsets that met the
//! threshold (anti-monotonicity makes that exact). What an itemset's measure
//! is comes from a [`FrequencyOracle`]: transaction-id lists for the data
//! ([`DataOracle`], which makes the search Eclat) or per-component log
//! products for a fitted mixture ([`ModelOracle`]).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::dataset::{Itemset, TransactionDataset};
use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::special::log_sum_exp;

/// Largest number of itemsets [`brute_force_frequencies`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// A minimum frequency threshold in (0, 1].
///
/// Support counts are compared against the threshold as an exact decimal
/// fraction (the shortest decimal that prints as the given `f64`), so
/// `0.1` on ten transactions admits a count of exactly one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinSupport {
    value: f64,
    /// `value == num / den` when the decimal expansion is short enough.
    ratio: Option<(u128, u128)>,
}

impl MinSupport {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::Argument(format!(
                "minimum support must lie in (0, 1], got {value}"
            )));
        }
        Ok(MinSupport {
            value,
            ratio: decimal_ratio(value),
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Whether `count` of `n` transactions meets the threshold.
    pub fn admits_count(&self, count: usize, n: usize) -> bool {
        match self.ratio {
            Some((num, den)) => count as u128 * den >= num * n as u128,
            None => count as f64 >= self.value * n as f64,
        }
    }

    /// Whether a model probability meets the threshold (no epsilon).
    pub fn admits_probability(&self, p: f64) -> bool {
        p >= self.value
    }
}

impl fmt::Display for MinSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

fn decimal_ratio(value: f64) -> Option<(u128, u128)> {
    let text = value.to_string();
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    if frac.len() > 30 {
        return None;
    }
    let den = 10u128.checked_pow(frac.len() as u32)?;
    let digits: u128 = format!("{int}{frac}").parse().ok()?;
    Some((digits, den))
}

/// Where the measures of an [`ItemsetCollection`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    DataExact,
    ModelPredicted,
    BruteForce,
}

/// All itemsets meeting a threshold, sorted by length then lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemsetCollection {
    pub minsup: f64,
    pub itemsets: Vec<Itemset>,
    pub source: Source,
}

impl ItemsetCollection {
    pub fn new(minsup: f64, mut itemsets: Vec<Itemset>, source: Source) -> Self {
        sort_canonical(&mut itemsets);
        ItemsetCollection {
            minsup,
            itemsets,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.itemsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.itemsets.is_empty()
    }

    /// `counts[l]` is the number of itemsets of length `l` (index 0 unused).
    pub fn counts_by_length(&self) -> Vec<usize> {
        let max = self.itemsets.iter().map(Itemset::len).max().unwrap_or(0);
        let mut counts = vec![0; max + 1];
        for s in &self.itemsets {
            counts[s.len()] += 1;
        }
        counts
    }

    /// Item lists mapped to their measures.
    pub fn to_map(&self) -> BTreeMap<Vec<usize>, f64> {
        self.itemsets
            .iter()
            .map(|s| (s.items.clone(), s.measure))
            .collect()
    }

    /// Every nonempty proper subset of every member is also a member.
    pub fn is_downward_closed(&self) -> bool {
        let keys: std::collections::HashSet<&[usize]> =
            self.itemsets.iter().map(|s| s.items.as_slice()).collect();
        self.itemsets.iter().filter(|s| s.len() > 1).all(|s| {
            (0..s.len()).all(|drop| {
                let sub: Vec<usize> = s
                    .items
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != drop)
                    .map(|(_, &i)| i)
                    .collect();
                keys.contains(sub.as_slice())
            })
        })
    }

    /// One itemset per line: space-separated labels, a tab, the measure with
    /// six fractional digits.
    pub fn write<W: Write>(&self, labels: &[u64], mut out: W) -> std::io::Result<()> {
        let mut line = String::new();
        for s in &self.itemsets {
            line.clear();
            for (j, &i) in s.items.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&labels[i].to_string());
            }
            line.push('\t');
            line.push_str(&format!("{:.6}\n", s.measure));
            out.write_all(line.as_bytes())?;
        }
        out.flush()
    }

    /// Parses the format written by [`ItemsetCollection::write`]; `labels`
    /// maps identifiers back to item indices.
    pub fn read<R: BufRead>(
        reader: R,
        labels: &[u64],
        minsup: f64,
        source: Source,
    ) -> Result<Self> {
        let mut itemsets = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let parse_err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let line = line.map_err(|e| parse_err(e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (items, measure) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected '<items>\\t<measure>'".into()))?;
            let measure: f64 = measure
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad measure {measure:?}")))?;
            let mut idx = Vec::new();
            for tok in items.split(' ').filter(|t| !t.is_empty()) {
                let label: u64 = tok
                    .parse()
                    .map_err(|_| parse_err(format!("bad item {tok:?}")))?;
                let i = labels
                    .binary_search(&label)
                    .map_err(|_| parse_err(format!("unknown item label {label}")))?;
                idx.push(i);
            }
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(parse_err("items must be strictly ascending".into()));
            }
            itemsets.push(Itemset::new(idx, measure));
        }
        Ok(ItemsetCollection::new(minsup, itemsets, source))
    }
}

pub(crate) fn sort_canonical(itemsets: &mut [Itemset]) {
    itemsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.items.cmp(&b.items)));
}

/// An anti-monotone measure over itemsets that the lattice search can query.
///
/// `State` is whatever the oracle needs to carry from an itemset to its
/// extensions. The search builds P∪{i,j} from the states of its two parents
/// P∪{i} and P∪{j}, so `join` receives both plus the item `j`.
pub trait FrequencyOracle: Sync {
    type State: Send + Sync;

    fn item_count(&self) -> usize;

    fn singleton(&self, item: usize) -> Self::State;

    fn join(&self, left: &Self::State, right_item: usize, right: &Self::State) -> Self::State;

    /// Frequency or probability of the itemset behind `state`, in [0, 1].
    fn measure(&self, state: &Self::State) -> f64;

    fn is_frequent(&self, _state: &Self::State, measure: f64, minsup: &MinSupport) -> bool {
        minsup.admits_probability(measure)
    }
}

/// Exact data frequencies backed by sorted transaction-id lists.
pub struct DataOracle {
    tid_lists: Vec<Vec<u32>>,
    n: usize,
}

impl DataOracle {
    pub fn new(ds: &TransactionDataset) -> Self {
        DataOracle {
            tid_lists: ds.tid_lists(),
            n: ds.n_transactions(),
        }
    }
}

/// Linear merge of two ascending id lists.
pub fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[x]);
                x += 1;
                y += 1;
            }
        }
    }
    out
}

impl FrequencyOracle for DataOracle {
    type State = Vec<u32>;

    fn item_count(&self) -> usize {
        self.tid_lists.len()
    }

    fn singleton(&self, item: usize) -> Vec<u32> {
        self.tid_lists[item].clone()
    }

    fn join(&self, left: &Vec<u32>, _right_item: usize, right: &Vec<u32>) -> Vec<u32> {
        intersect_sorted(left, right)
    }

    fn measure(&self, state: &Vec<u32>) -> f64 {
        state.len() as f64 / self.n as f64
    }

    fn is_frequent(&self, state: &Vec<u32>, _measure: f64, minsup: &MinSupport) -> bool {
        minsup.admits_count(state.len(), self.n)
    }
}

/// Mixture itemset probabilities, carrying ln π_k + Σ ln φ_ik per component.
pub struct ModelOracle<'a> {
    model: &'a MixtureModel,
    ln_phi: Vec<f64>,
}

impl<'a> ModelOracle<'a> {
    pub fn new(model: &'a MixtureModel) -> Self {
        let ln_phi = (0..model.n_items())
            .flat_map(|i| model.bernoulli_row(i).iter().map(|p| p.ln()))
            .collect();
        ModelOracle { model, ln_phi }
    }

    fn ln_row(&self, item: usize) -> &[f64] {
        let k = self.model.n_components();
        &self.ln_phi[item * k..(item + 1) * k]
    }
}

impl FrequencyOracle for ModelOracle<'_> {
    type State = Vec<f64>;

    fn item_count(&self) -> usize {
        self.model.n_items()
    }

    fn singleton(&self, item: usize) -> Vec<f64> {
        self.model
            .weights()
            .iter()
            .zip(self.ln_row(item))
            .map(|(w, lp)| w.ln() + lp)
            .collect()
    }

    fn join(&self, left: &Vec<f64>, right_item: usize, _right: &Vec<f64>) -> Vec<f64> {
        left.iter()
            .zip(self.ln_row(right_item))
            .map(|(a, lp)| a + lp)
            .collect()
    }

    fn measure(&self, state: &Vec<f64>) -> f64 {
        log_sum_exp(state).exp().min(1.0)
    }
}

/// Adapts a plain `measure(items)` function. The state is the item list.
pub struct FnOracle<F> {
    n_items: usize,
    f: F,
}

impl<F: Fn(&[usize]) -> f64 + Sync> FnOracle<F> {
    pub fn new(n_items: usize, f: F) -> Self {
        FnOracle { n_items, f }
    }
}

impl<F: Fn(&[usize]) -> f64 + Sync> FrequencyOracle for FnOracle<F> {
    type State = (Vec<usize>, f64);

    fn item_count(&self) -> usize {
        self.n_items
    }

    fn singleton(&self, item: usize) -> Self::State {
        (vec![item], (self.f)(&[item]))
    }

    fn join(&self, left: &Self::State, right_item: usize, _right: &Self::State) -> Self::State {
        let mut items = left.0.clone();
        items.push(right_item);
        let m = (self.f)(&items);
        (items, m)
    }

    fn measure(&self, state: &Self::State) -> f64 {
        state.1
    }
}

struct Member<S> {
    item: usize,
    state: S,
}

fn checked_measure<O: FrequencyOracle>(oracle: &O, state: &O::State) -> Result<f64> {
    let m = oracle.measure(state);
    if (0.0..=1.0).contains(&m) {
        Ok(m)
    } else {
        Err(Error::Contract(format!("oracle returned {m}, outside [0, 1]")))
    }
}

/// All itemsets whose oracle measure meets `minsup`.
///
/// Top-level prefix classes are explored in parallel on the current rayon
/// pool; the result is sorted canonically, so it does not depend on
/// scheduling.
pub fn mine_oracle<O: FrequencyOracle>(oracle: &O, minsup: f64) -> Result<ItemsetCollection> {
    mine_with_source(oracle, minsup, Source::ModelPredicted)
}

fn mine_with_source<O: FrequencyOracle>(
    oracle: &O,
    minsup: f64,
    source: Source,
) -> Result<ItemsetCollection> {
    let threshold = MinSupport::new(minsup)?;
    let mut found = Vec::new();
    let mut level1 = Vec::new();
    for item in 0..oracle.item_count() {
        let state = oracle.singleton(item);
        let m = checked_measure(oracle, &state)?;
        if oracle.is_frequent(&state, m, &threshold) {
            found.push(Itemset::new(vec![item], m));
            level1.push(Member { item, state });
        }
    }

    let deeper: Vec<Vec<Itemset>> = (0..level1.len())
        .into_par_iter()
        .map(|a| {
            let mut out = Vec::new();
            let mut prefix = vec![level1[a].item];
            extend_class(oracle, &threshold, &mut prefix, &level1[a], &level1[a + 1..], &mut out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    found.extend(deeper.into_iter().flatten());
    Ok(ItemsetCollection::new(minsup, found, source))
}

/// Joins `head` with each later sibling, records the frequent results and
/// recurses into the new class.
fn extend_class<O: FrequencyOracle>(
    oracle: &O,
    threshold: &MinSupport,
    prefix: &mut Vec<usize>,
    head: &Member<O::State>,
    siblings: &[Member<O::State>],
    out: &mut Vec<Itemset>,
) -> Result<()> {
    let mut class = Vec::new();
    for sib in siblings {
        let state = oracle.join(&head.state, sib.item, &sib.state);
        let m = checked_measure(oracle, &state)?;
        if oracle.is_frequent(&state, m, threshold) {
            let mut items = prefix.clone();
            items.push(sib.item);
            out.push(Itemset::new(items, m));
            class.push(Member {
                item: sib.item,
                state,
            });
        }
    }
    for a in 0..class.len() {
        prefix.push(class[a].item);
        extend_class(oracle, threshold, prefix, &class[a], &class[a + 1..], out)?;
        prefix.pop();
    }
    Ok(())
}

/// Exact frequent itemsets of a dataset (Eclat over tid-lists).
pub fn mine_exact(ds: &TransactionDataset, minsup: f64) -> Result<ItemsetCollection> {
    MinSupport::new(minsup)?;
    if ds.n_transactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    mine_with_source(&DataOracle::new(ds), minsup, Source::DataExact)
}

/// Itemsets predicted frequent by a fitted model.
pub fn mine_model(model: &MixtureModel, minsup: f64) -> Result<ItemsetCollection> {
    mine_oracle(&ModelOracle::new(model), minsup)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, j| acc.saturating_mul(n - j) / (j + 1))
}

/// Counts every itemset of length 1..=`max_len` by scanning all rows.
/// Intended as a test oracle for small item universes.
pub fn brute_force_frequencies(
    ds: &TransactionDataset,
    max_len: usize,
) -> Result<BTreeMap<Vec<usize>, f64>> {
    if ds.n_transactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = ds.n_items();
    let max_len = max_len.min(d);
    let candidates: u128 = (1..=max_len as u128)
        .map(|l| binomial(d as u128, l))
        .fold(0u128, u128::saturating_add);
    if candidates > BRUTE_FORCE_LIMIT {
        return Err(Error::EnumerationLimit {
            candidates,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let dense: Vec<Vec<bool>> = (0..ds.n_transactions()).map(|mu| ds.dense_row(mu)).collect();
    let n = ds.n_transactions() as f64;
    let mut out = BTreeMap::new();
    let mut combo = Vec::with_capacity(max_len);
    enumerate_combinations(d, max_len, 0, &mut combo, &mut |items| {
        let count = dense
            .iter()
            .filter(|row| items.iter().all(|&i| row[i]))
            .count();
        out.insert(items.to_vec(), count as f64 / n);
    });
    Ok(out)
}

fn enumerate_combinations(
    d: usize,
    max_len: usize,
    start: usize,
    combo: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    for i in start..d {
        combo.push(i);
        visit(combo);
        if combo.len() < max_len {
            enumerate_combinations(d, max_len, i + 1, combo, visit);
        }
        combo.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FitInfo;

    fn four_rows() -> TransactionDataset {
        TransactionDataset::new(vec![vec![0, 1], vec![0, 2], vec![0, 1, 2], vec![1, 2]], 3).unwrap()
    }

    fn as_pairs(c: &ItemsetCollection) -> Vec<(Vec<usize>, f64)> {
        c.itemsets.iter().map(|s| (s.items.clone(), s.measure)).collect()
    }

    #[test]
    fn mine_exact_four_rows() {
        let c = mine_exact(&four_rows(), 0.5).unwrap();
        assert_eq!(
            as_pairs(&c),
            vec![
                (vec![0], 0.75),
                (vec![1], 0.75),
                (vec![2], 0.75),
                (vec![0, 1], 0.5),
                (vec![0, 2], 0.5),
                (vec![1, 2], 0.5),
            ]
        );
        assert_eq!(c.source, Source::DataExact);
        assert!(c.is_downward_closed());
    }

    #[test]
    fn minsup_bounds() {
        assert!(mine_exact(&four_rows(), 1.0 + 1e-9).is_err());
        assert!(mine_exact(&four_rows(), 0.0).is_err());
        let ds = TransactionDataset::new(vec![vec![0]; 3], 1).unwrap();
        assert_eq!(as_pairs(&mine_exact(&ds, 1.0).unwrap()), vec![(vec![0], 1.0)]);
        let empty = TransactionDataset::new(vec![], 2).unwrap();
        assert!(mine_exact(&empty, 0.5).is_err());
    }

    #[test]
    fn decimal_threshold_is_exact() {
        // 0.1 as f64 is slightly above 1/10; one row in ten still qualifies.
        let t = MinSupport::new(0.1).unwrap();
        assert!(t.admits_count(1, 10));
        assert!(!t.admits_count(0, 10));
        let t = MinSupport::new(0.3).unwrap();
        assert!(t.admits_count(3, 10));
        assert!(!t.admits_count(2999, 10000));
        assert!(t.admits_count(3000, 10000));
    }

    #[test]
    fn oracle_matches_exact_on_data() {
        let ds = four_rows();
        let via_oracle = mine_oracle(&DataOracle::new(&ds), 0.5).unwrap();
        assert_eq!(via_oracle.itemsets, mine_exact(&ds, 0.5).unwrap().itemsets);
    }

    #[test]
    fn model_oracle_independent() {
        let m = MixtureModel::independent(&[0.9, 0.9, 0.1]).unwrap();
        let c = mine_model(&m, 0.5).unwrap();
        let got = as_pairs(&c);
        assert_eq!(got.len(), 3);
        assert_eq!(got[0].0, vec![0]);
        assert_eq!(got[1].0, vec![1]);
        assert_eq!(got[2].0, vec![0, 1]);
        assert!((got[0].1 - 0.9).abs() < 1e-15);
        assert!((got[2].1 - 0.81).abs() < 1e-15);
    }

    #[test]
    fn nothing_frequent_at_depth_one() {
        let m = MixtureModel::independent(&[0.2, 0.3]).unwrap();
        assert!(mine_model(&m, 0.5).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_oracle_is_a_contract_violation() {
        let bad = FnOracle::new(2, |items: &[usize]| if items.len() == 2 { 1.5 } else { 0.9 });
        assert!(matches!(mine_oracle(&bad, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn brute_force_examples() {
        let bf = brute_force_frequencies(&four_rows(), 3).unwrap();
        assert_eq!(bf.len(), 7);
        assert_eq!(bf[&vec![0, 1, 2]], 0.25);
        assert_eq!(bf[&vec![1]], 0.75);
        let single = TransactionDataset::new(vec![vec![0]], 1).unwrap();
        assert_eq!(brute_force_frequencies(&single, 1).unwrap()[&vec![0]], 1.0);
        let empty = TransactionDataset::new(vec![], 1).unwrap();
        assert!(brute_force_frequencies(&empty, 1).is_err());
        let wide = TransactionDataset::new(vec![vec![]], 100).unwrap();
        assert!(matches!(
            brute_force_frequencies(&wide, 5),
            Err(Error::EnumerationLimit { .. })
        ));
    }

    #[test]
    fn write_and_read_itemsets() {
        let ds = TransactionDataset::parse_fimi("5 7\n5 9\n5 7 9\n7 9\n".as_bytes(), None).unwrap();
        let c = mine_exact(&ds, 0.5).unwrap();
        let mut buf = Vec::new();
        c.write(ds.item_labels(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("5\t0.750000\n7\t0.750000\n9\t0.750000\n5 7\t0.500000\n"));
        let back = ItemsetCollection::read(&buf[..], ds.item_labels(), 0.5, Source::DataExact).unwrap();
        assert_eq!(back, c);
        assert!(ItemsetCollection::read("4\t0.5\n".as_bytes(), ds.item_labels(), 0.5, Source::DataExact).is_err());
    }

    #[test]
    fn model_mining_matches_direct_probabilities() {
        let m = MixtureModel::new(
            vec![0.5, 0.5],
            vec![vec![0.99, 0.6]; 6],
            FitInfo::manual(),
        )
        .unwrap();
        let c = mine_model(&m, 0.3).unwrap();
        for s in &c.itemsets {
            let direct = m.itemset_probability(&s.items).unwrap();
            assert!((direct - s.measure).abs() < 1e-14);
        }
        assert!(c.is_downward_closed());
    }
}

//! Binary transaction data: FIMI parsing and writing, item frequencies,
//! train/test splitting and sampling from a fitted mixture.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::special::sample_categorical;

/// A set of items together with its frequency (when counted in data) or its
/// probability (when predicted by a model).
#[derive(Debug, Clone, PartialEq)]
pub struct Itemset {
    pub items: Vec<usize>,
    pub measure: f64,
}

impl Itemset {
    pub fn new(items: Vec<usize>, measure: f64) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        Itemset { items, measure }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// N transactions over D items, stored as sorted item-index lists.
///
/// Item indices are dense in `0..D`. `item_labels[i]` is the identifier item
/// `i` had in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionDataset {
    rows: Vec<Vec<usize>>,
    n_items: usize,
    item_labels: Vec<u64>,
}

impl TransactionDataset {
    /// Builds a dataset from rows that are already strictly ascending and in
    /// range. Labels default to the indices themselves.
    pub fn new(rows: Vec<Vec<usize>>, n_items: usize) -> Result<Self> {
        for (mu, row) in rows.iter().enumerate() {
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Argument(format!(
                    "transaction {mu} is not strictly ascending"
                )));
            }
            if let Some(&last) = row.last() {
                if last >= n_items {
                    return Err(Error::Argument(format!(
                        "transaction {mu} has item {last} but D = {n_items}"
                    )));
                }
            }
        }
        Ok(TransactionDataset {
            rows,
            n_items,
            item_labels: (0..n_items as u64).collect(),
        })
    }

    /// Like [`TransactionDataset::new`] but sorts and deduplicates each row.
    pub fn from_unsorted(rows: Vec<Vec<usize>>, n_items: usize) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|mut r| {
                r.sort_unstable();
                r.dedup();
                r
            })
            .collect();
        Self::new(rows, n_items)
    }

    /// Replaces the label map. There must be one strictly ascending label per item.
    pub fn with_labels(mut self, labels: Vec<u64>) -> Result<Self> {
        if labels.len() != self.n_items {
            return Err(Error::Argument(format!(
                "{} labels for {} items",
                labels.len(),
                self.n_items
            )));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("item labels must be strictly ascending".into()));
        }
        self.item_labels = labels;
        Ok(self)
    }

    pub fn n_transactions(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn row(&self, mu: usize) -> &[usize] {
        &self.rows[mu]
    }

    pub fn item_labels(&self) -> &[u64] {
        &self.item_labels
    }

    /// Total number of ones in the binary matrix.
    pub fn n_ones(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Fraction of ones in the N×D matrix.
    pub fn density(&self) -> f64 {
        if self.rows.is_empty() || self.n_items == 0 {
            return 0.0;
        }
        self.n_ones() as f64 / (self.rows.len() as f64 * self.n_items as f64)
    }

    /// Number of transactions containing each item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items];
        for row in &self.rows {
            for &i in row {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Fraction of transactions containing each item.
    pub fn item_frequencies(&self) -> Result<Vec<f64>> {
        if self.rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = self.rows.len() as f64;
        Ok(self.item_counts().into_iter().map(|c| c as f64 / n).collect())
    }

    /// Transaction-id list of every item.
    pub fn tid_lists(&self) -> Vec<Vec<u32>> {
        let mut lists = vec![Vec::new(); self.n_items];
        for (mu, row) in self.rows.iter().enumerate() {
            for &i in row {
                lists[i].push(mu as u32);
            }
        }
        lists
    }

    /// Dense 0/1 view of one transaction.
    pub fn dense_row(&self, mu: usize) -> Vec<bool> {
        let mut x = vec![false; self.n_items];
        for &i in &self.rows[mu] {
            x[i] = true;
        }
        x
    }

    /// Sub-dataset with the given rows, keeping D and the label map.
    pub fn subset(&self, indices: &[usize]) -> Self {
        TransactionDataset {
            rows: indices.iter().map(|&mu| self.rows[mu].clone()).collect(),
            n_items: self.n_items,
            item_labels: self.item_labels.clone(),
        }
    }

    /// Seeded random partition. The first part holds `round(fraction · N)`
    /// rows; both parts keep the original row order.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Argument(format!(
                "split fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let n = self.rows.len();
        let take = (fraction * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut crate::seeded_rng(seed));
        let (first, second) = order.split_at(take);
        let mut first = first.to_vec();
        let mut second = second.to_vec();
        first.sort_unstable();
        second.sort_unstable();
        Ok((self.subset(&first), self.subset(&second)))
    }

    /// Draws `n` transactions from the mixture: a component with probability
    /// π_k, then each item independently with probability φ_ik.
    pub fn sample_from_model(model: &MixtureModel, n: usize, seed: u64) -> Self {
        let mut rng = crate::seeded_rng(seed);
        let d = model.n_items();
        let rows = (0..n)
            .map(|_| {
                let k = sample_categorical(model.weights(), &mut rng);
                (0..d)
                    .filter(|&i| rng.random::<f64>() < model.bernoulli(i, k))
                    .collect()
            })
            .collect();
        TransactionDataset {
            rows,
            n_items: d,
            item_labels: model.item_labels(),
        }
    }

    /// Parses FIMI text. Without `n_items`, labels are compacted to dense
    /// indices in ascending label order; with it, labels are used as indices
    /// directly and must be below `n_items`.
    pub fn parse_fimi<R: BufRead>(reader: R, n_items: Option<usize>) -> Result<Self> {
        let mut raw: Vec<Vec<u64>> = Vec::new();
        for (lineno, line) in reader.split(b'\n').enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let text = std::str::from_utf8(&line).map_err(|_| Error::Parse {
                line: lineno + 1,
                message: "invalid UTF-8".into(),
            })?;
            let mut row = Vec::new();
            for tok in text.split_ascii_whitespace() {
                let label: u64 = tok.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("not a non-negative integer: {tok:?}"),
                })?;
                row.push(label);
            }
            row.sort_unstable();
            row.dedup();
            raw.push(row);
        }

        match n_items {
            Some(d) => {
                let rows = raw
                    .into_iter()
                    .enumerate()
                    .map(|(mu, row)| {
                        row.into_iter()
                            .map(|l| {
                                if l < d as u64 {
                                    Ok(l as usize)
                                } else {
                                    Err(Error::Parse {
                                        line: mu + 1,
                                        message: format!("item {l} out of range for D = {d}"),
                                    })
                                }
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                TransactionDataset::new(rows, d)
            }
            None => {
                let labels: Vec<u64> = raw
                    .iter()
                    .flatten()
                    .copied()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let rows = raw
                    .into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|l| labels.binary_search(&l).expect("label collected above"))
                            .collect()
                    })
                    .collect();
                let d = labels.len();
                TransactionDataset::new(rows, d)?.with_labels(labels)
            }
        }
    }

    /// Writes one line per transaction with space-separated item labels.
    pub fn write_fimi<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (j, &i) in row.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&self.item_labels[i].to_string());
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        out.flush()
    }

    pub fn save_fimi(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_fimi(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads a FIMI file, compacting item labels.
pub fn load_fimi(path: impl AsRef<Path>) -> Result<TransactionDataset> {
    load_fimi_with_items(path, None)
}

/// Reads a FIMI file; see [`TransactionDataset::parse_fimi`] for `n_items`.
pub fn load_fimi_with_items(
    path: impl AsRef<Path>,
    n_items: Option<usize>,
) -> Result<TransactionDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    TransactionDataset::parse_fimi(BufReader::new(file), n_items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> TransactionDataset {
        TransactionDataset::parse_fimi(text.as_bytes(), None).unwrap()
    }

    #[test]
    fn parses_and_compacts_labels() {
        let ds = parse("1 3\n2\n1 2 3\n");
        assert_eq!(ds.n_transactions(), 3);
        assert_eq!(ds.n_items(), 3);
        assert_eq!(ds.rows(), &[vec![0, 2], vec![1], vec![0, 1, 2]]);
        assert_eq!(ds.item_labels(), &[1, 2, 3]);
    }

    #[test]
    fn empty_file() {
        let ds = parse("");
        assert_eq!((ds.n_transactions(), ds.n_items()), (0, 0));
    }

    #[test]
    fn keeps_empty_lines_and_handles_crlf_tabs_duplicates() {
        let ds = parse("7\t7  9\r\n\r\n9\n");
        assert_eq!(ds.rows(), &[vec![0, 1], vec![], vec![1]]);
        assert_eq!(ds.item_labels(), &[7, 9]);
    }

    #[test]
    fn malformed_token_reports_line() {
        let err = TransactionDataset::parse_fimi("1 2\n3 x\n".as_bytes(), None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(TransactionDataset::parse_fimi("-1\n".as_bytes(), None).is_err());
    }

    #[test]
    fn explicit_item_count_uses_labels_as_indices() {
        let ds = TransactionDataset::parse_fimi("0 4\n\n".as_bytes(), Some(6)).unwrap();
        assert_eq!(ds.n_items(), 6);
        assert_eq!(ds.rows(), &[vec![0, 4], vec![]]);
        assert!(TransactionDataset::parse_fimi("6\n".as_bytes(), Some(6)).is_err());
    }

    #[test]
    fn item_frequencies_basic() {
        let ds = parse("1 3\n2\n1 2 3\n");
        for f in ds.item_frequencies().unwrap() {
            assert!((f - 2.0 / 3.0).abs() < 1e-15);
        }
        let ds = TransactionDataset::new(vec![vec![], vec![]], 1).unwrap();
        assert_eq!(ds.item_frequencies().unwrap(), vec![0.0]);
        let empty = TransactionDataset::new(vec![], 3).unwrap();
        assert!(matches!(empty.item_frequencies(), Err(Error::EmptyDataset)));
    }

    #[test]
    fn split_partitions_deterministically() {
        let rows: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
        let ds = TransactionDataset::new(rows, 4).unwrap();
        let (a, b) = ds.split(0.5, 11).unwrap();
        assert_eq!((a.n_transactions(), b.n_transactions()), (2, 2));
        let mut all: Vec<_> = a.rows().iter().chain(b.rows()).cloned().collect();
        all.sort();
        assert_eq!(all, ds.rows());
        assert_eq!(ds.split(0.5, 11).unwrap(), (a, b));
        assert!(ds.split(0.0, 1).is_err());
        assert!(ds.split(1.0, 1).is_err());
    }

    #[test]
    fn split_rounding_on_odd_count() {
        let ds = TransactionDataset::new(vec![vec![]; 3197], 0).unwrap();
        let (a, b) = ds.split(0.5, 3).unwrap();
        // 1598.5 rounds half away from zero.
        assert_eq!((a.n_transactions(), b.n_transactions()), (1599, 1598));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let ds = parse("10 30\n\n20 30 10\n40\n");
        let mut buf = Vec::new();
        ds.write_fimi(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "10 30\n\n10 20 30\n40\n");
        assert_eq!(TransactionDataset::parse_fimi(&buf[..], None).unwrap(), ds);
    }

    #[test]
    fn rejects_unsorted_or_out_of_range_rows() {
        assert!(TransactionDataset::new(vec![vec![1, 0]], 2).is_err());
        assert!(TransactionDataset::new(vec![vec![0, 0]], 2).is_err());
        assert!(TransactionDataset::new(vec![vec![2]], 2).is_err());
        let ds = TransactionDataset::from_unsorted(vec![vec![1, 0, 1]], 2).unwrap();
        assert_eq!(ds.rows(), &[vec![0, 1]]);
    }
}

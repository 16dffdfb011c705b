//! Scoring predicted frequent itemsets against exact mining.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::miner::ItemsetCollection;
use crate::model::MixtureModel;

/// Set-level agreement between truth and prediction, measures ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetComparison {
    /// True itemsets the prediction missed (N_M).
    pub n_missed: usize,
    /// Predicted itemsets that are not truly frequent (N_F).
    pub n_false: usize,
    /// Itemsets in both (N_C).
    pub n_correct: usize,
    /// N_M / (N_M + N_C); `None` when both are zero.
    pub f_neg: Option<f64>,
    /// N_F / (N_F + N_C); `None` when both are zero.
    pub f_pos: Option<f64>,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_threshold(truth: &ItemsetCollection, predicted: &ItemsetCollection) -> Result<()> {
    if truth.minsup != predicted.minsup {
        return Err(Error::Argument(format!(
            "threshold mismatch: truth mined at {} but prediction at {}",
            truth.minsup, predicted.minsup
        )));
    }
    Ok(())
}

pub fn compare_sets(truth: &ItemsetCollection, predicted: &ItemsetCollection) -> Result<SetComparison> {
    check_threshold(truth, predicted)?;
    let t: BTreeSet<&[usize]> = truth.itemsets.iter().map(|s| s.items.as_slice()).collect();
    let p: BTreeSet<&[usize]> = predicted.itemsets.iter().map(|s| s.items.as_slice()).collect();
    let n_correct = t.intersection(&p).count();
    let n_missed = t.len() - n_correct;
    let n_false = p.len() - n_correct;
    Ok(SetComparison {
        n_missed,
        n_false,
        n_correct,
        f_neg: rate(n_missed, n_missed + n_correct),
        f_pos: rate(n_false, n_false + n_correct),
    })
}

/// (p_M(I) − f(I)) / f(I) for every true itemset, in collection order.
fn signed_relative_differences(truth: &ItemsetCollection, model: &MixtureModel) -> Result<Vec<f64>> {
    truth
        .itemsets
        .par_iter()
        .map(|s| {
            if !(s.measure > 0.0) {
                return Err(Error::Argument(format!(
                    "true itemset {:?} has frequency {}",
                    s.items, s.measure
                )));
            }
            let p = model.itemset_probability(&s.items)?;
            Ok((p - s.measure) / s.measure)
        })
        .collect()
}

/// Ê: mean of |p_M(I) − f(I)| / f(I) over every true frequent itemset,
/// whether or not the model would have mined it.
pub fn relative_error(truth: &ItemsetCollection, model: &MixtureModel) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Argument("relative error needs at least one true itemset".into()));
    }
    let diffs = signed_relative_differences(truth, model)?;
    Ok(diffs.iter().map(|d| d.abs()).sum::<f64>() / diffs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthProfile {
    /// True frequent itemsets of this length.
    pub count: usize,
    /// Signed mean relative difference; negative means under-estimation.
    pub d_hat: f64,
}

/// D̂_L for each itemset length L present in the truth.
pub fn relative_difference_by_length(
    truth: &ItemsetCollection,
    model: &MixtureModel,
) -> Result<BTreeMap<usize, LengthProfile>> {
    let diffs = signed_relative_differences(truth, model)?;
    let mut sums: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for (s, d) in truth.itemsets.iter().zip(diffs) {
        let e = sums.entry(s.len()).or_default();
        e.0 += 1;
        e.1 += d;
    }
    Ok(sums
        .into_iter()
        .map(|(len, (count, total))| {
            (
                len,
                LengthProfile {
                    count,
                    d_hat: total / count as f64,
                },
            )
        })
        .collect())
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let pairs = |n: usize| (n * n.saturating_sub(1) / 2) as f64;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len());
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub truth_name: String,
    pub model_name: String,
    pub minsup: f64,
    pub n_truth: usize,
    pub n_predicted: usize,
    pub comparison: SetComparison,
    /// Absent when no model was supplied or the truth is empty.
    pub e_hat: Option<f64>,
    pub by_length: BTreeMap<usize, LengthProfile>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    /// Compares `predicted` to `truth`; with a model, also Ê and D̂.
    pub fn evaluate(
        truth: &ItemsetCollection,
        predicted: &ItemsetCollection,
        model: Option<&MixtureModel>,
        truth_name: &str,
        model_name: &str,
    ) -> Result<Self> {
        let comparison = compare_sets(truth, predicted)?;
        let (e_hat, by_length) = match model {
            Some(m) if !truth.is_empty() => (
                Some(relative_error(truth, m)?),
                relative_difference_by_length(truth, m)?,
            ),
            _ => (None, BTreeMap::new()),
        };
        Ok(EvalReport {
            truth_name: truth_name.to_string(),
            model_name: model_name.to_string(),
            minsup: truth.minsup,
            n_truth: truth.len(),
            n_predicted: predicted.len(),
            comparison,
            e_hat,
            by_length,
        })
    }

    fn metrics(&self) -> Vec<(&'static str, Option<f64>)> {
        let c = &self.comparison;
        vec![
            ("minsup", Some(self.minsup)),
            ("n_truth", Some(self.n_truth as f64)),
            ("n_predicted", Some(self.n_predicted as f64)),
            ("n_missed", Some(c.n_missed as f64)),
            ("n_false", Some(c.n_false as f64)),
            ("n_correct", Some(c.n_correct as f64)),
            ("f_neg", c.f_neg),
            ("f_pos", c.f_pos),
            ("e_hat", self.e_hat),
        ]
    }

    pub fn to_text(&self) -> String {
        let c = &self.comparison;
        let mut s = String::new();
        let _ = writeln!(s, "truth: {}", self.truth_name);
        let _ = writeln!(s, "model: {}", self.model_name);
        let _ = writeln!(s, "minsup: {}", self.minsup);
        let _ = writeln!(s, "true itemsets: {}", self.n_truth);
        let _ = writeln!(s, "predicted itemsets: {}", self.n_predicted);
        let _ = writeln!(s, "missed (N_M): {}", c.n_missed);
        let _ = writeln!(s, "false (N_F): {}", c.n_false);
        let _ = writeln!(s, "correct (N_C): {}", c.n_correct);
        let _ = writeln!(s, "F-: {}", fmt_opt(c.f_neg));
        let _ = writeln!(s, "F+: {}", fmt_opt(c.f_pos));
        let _ = writeln!(s, "E_hat: {}", fmt_opt(self.e_hat));
        for (len, p) in &self.by_length {
            let _ = writeln!(s, "D_hat[{len}]: {:.6} ({} itemsets)", p.d_hat, p.count);
        }
        s
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (name, v) in self.metrics() {
            let _ = writeln!(s, "{name},{}", v.map_or_else(|| "n/a".to_string(), |x| x.to_string()));
        }
        s
    }

    /// `length,count,d_hat` rows.
    pub fn length_csv(&self) -> String {
        let mut s = String::from("length,count,d_hat\n");
        for (len, p) in &self.by_length {
            let _ = writeln!(s, "{len},{},{}", p.count, p.d_hat);
        }
        s
    }
}

/// Mean and sample standard deviation of the values present.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

/// Per-metric mean±std across several runs, as `metric,mean,std,runs` CSV.
/// Absent values are left out of their metric's statistics.
pub fn aggregate_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("metric,mean,std,runs\n");
    let Some(first) = reports.first() else {
        return s;
    };
    let mut rows: Vec<(String, Vec<f64>)> = first
        .metrics()
        .iter()
        .enumerate()
        .map(|(j, (name, _))| {
            let vals = reports.iter().filter_map(|r| r.metrics()[j].1).collect();
            (name.to_string(), vals)
        })
        .collect();
    let lengths: BTreeSet<usize> = reports.iter().flat_map(|r| r.by_length.keys().copied()).collect();
    for len in lengths {
        let vals = reports
            .iter()
            .filter_map(|r| r.by_length.get(&len).map(|p| p.d_hat))
            .collect();
        rows.push((format!("d_hat_{len}"), vals));
    }
    for (name, vals) in rows {
        match mean_std(&vals) {
            Some((m, sd)) => {
                let _ = writeln!(s, "{name},{m},{sd},{}", vals.len());
            }
            None => {
                let _ = writeln!(s, "{name},n/a,n/a,0");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Itemset, TransactionDataset};
    use crate::miner::{mine_exact, Source};

    fn coll(sets: &[&[usize]], minsup: f64) -> ItemsetCollection {
        ItemsetCollection::new(
            minsup,
            sets.iter().map(|s| Itemset::new(s.to_vec(), 0.5)).collect(),
            Source::DataExact,
        )
    }

    fn correlated_toy() -> TransactionDataset {
        let mut rows = vec![vec![0, 1]; 50];
        rows.extend(vec![vec![]; 50]);
        TransactionDataset::new(rows, 2).unwrap()
    }

    #[test]
    fn rates_from_counts() {
        // 9 true sets, 10 predicted, 8 shared.
        let truth: Vec<Vec<usize>> = (0..9).map(|i| vec![i]).collect();
        let mut pred: Vec<Vec<usize>> = (0..8).map(|i| vec![i]).collect();
        pred.push(vec![20]);
        pred.push(vec![21]);
        let t = coll(&truth.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), 0.3);
        let p = coll(&pred.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), 0.3);
        let c = compare_sets(&t, &p).unwrap();
        assert_eq!((c.n_missed, c.n_false, c.n_correct), (1, 2, 8));
        assert_eq!(c.f_neg, Some(1.0 / 9.0));
        assert_eq!(c.f_pos, Some(0.2));

        let swapped = compare_sets(&p, &t).unwrap();
        assert_eq!(swapped.f_neg, c.f_pos);
        assert_eq!(swapped.f_pos, c.f_neg);
    }

    #[test]
    fn boundary_rates() {
        let t = coll(&[&[0], &[1], &[0, 1]], 0.4);
        let same = compare_sets(&t, &t).unwrap();
        assert_eq!((same.f_neg, same.f_pos), (Some(0.0), Some(0.0)));
        let empty = compare_sets(&t, &coll(&[], 0.4)).unwrap();
        assert_eq!((empty.f_neg, empty.f_pos), (Some(1.0), None));
        assert!(compare_sets(&t, &coll(&[], 0.5)).is_err());
    }

    #[test]
    fn single_itemset_error() {
        let truth = ItemsetCollection::new(0.4, vec![Itemset::new(vec![0], 0.5)], Source::DataExact);
        let m = MixtureModel::independent(&[0.45]).unwrap();
        assert!((relative_error(&truth, &m).unwrap() - 0.1).abs() < 1e-12);
        let empty = ItemsetCollection::new(0.4, vec![], Source::DataExact);
        assert!(relative_error(&empty, &m).is_err());
    }

    #[test]
    fn correlated_toy_profile() {
        let data = correlated_toy();
        let truth = mine_exact(&data, 0.4).unwrap();
        assert_eq!(truth.len(), 3);
        let indep = MixtureModel::independent(&data.item_frequencies().unwrap()).unwrap();
        let e = relative_error(&truth, &indep).unwrap();
        assert!((e - 0.5 / 3.0).abs() < 1e-12);
        let d = relative_difference_by_length(&truth, &indep).unwrap();
        assert_eq!(d[&1].count, 2);
        assert!(d[&1].d_hat.abs() < 1e-12);
        assert!((d[&2].d_hat + 0.5).abs() < 1e-12);

        // The exact two-component model reproduces every frequency.
        let exact = MixtureModel::new(
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            crate::model::FitInfo::manual(),
        )
        .unwrap();
        assert_eq!(relative_error(&truth, &exact).unwrap(), 0.0);
    }

    #[test]
    fn report_renders_absent_rates() {
        let t = coll(&[&[0]], 0.4);
        let r = EvalReport::evaluate(&t, &coll(&[], 0.4), None, "t", "p").unwrap();
        assert!(r.to_text().contains("F+: n/a"));
        assert!(r.to_csv().contains("f_pos,n/a\n"));
        assert!(r.to_csv().contains("e_hat,n/a\n"));
        assert_eq!(r.length_csv(), "length,count,d_hat\n");
    }

    #[test]
    fn aggregation_columns() {
        let data = correlated_toy();
        let truth = mine_exact(&data, 0.4).unwrap();
        let a = MixtureModel::independent(&[0.5, 0.5]).unwrap();
        let b = MixtureModel::independent(&[0.6, 0.5]).unwrap();
        let reports: Vec<_> = [a, b]
            .iter()
            .map(|m| EvalReport::evaluate(&truth, &truth, Some(m), "t", "m").unwrap())
            .collect();
        let csv = aggregate_csv(&reports);
        assert!(csv.starts_with("metric,mean,std,runs\n"));
        assert!(csv.contains("f_neg,0,0,2\n"));
        assert!(csv.contains("d_hat_2,"));
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
        // Hand value: contingency [[2,1],[0,2]].
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1], &[0, 0, 1, 1, 1]);
        let (index, a, b, total) = (2.0, 4.0, 4.0, 10.0);
        let expected = a * b / total;
        assert!((ari - (index - expected) / (0.5 * (a + b) - expected)).abs() < 1e-15);
    }
}

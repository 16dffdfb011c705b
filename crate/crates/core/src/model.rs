//! The fitted Bernoulli mixture: the single artifact every trainer produces
//! and the miner queries.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::TransactionDataset;
use crate::error::{Error, Result};
use crate::special::log_sum_exp;

pub const FORMAT_VERSION: u64 = 1;

/// Tolerance on Σ π_k = 1.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Which trainer produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Em,
    Gibbs,
    Vb,
    DpGibbs,
    DpVb,
    /// Built by hand or by a generator rather than fitted.
    Manual,
}

impl Method {
    pub const TRAINERS: [Method; 5] = [
        Method::Em,
        Method::Gibbs,
        Method::Vb,
        Method::DpGibbs,
        Method::DpVb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Em => "em",
            Method::Gibbs => "gibbs",
            Method::Vb => "vb",
            Method::DpGibbs => "dp-gibbs",
            Method::DpVb => "dp-vb",
            Method::Manual => "manual",
        }
    }

    pub fn is_bayesian(self) -> bool {
        !matches!(self, Method::Em | Method::Manual)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "em" => Method::Em,
            "gibbs" => Method::Gibbs,
            "vb" => Method::Vb,
            "dp-gibbs" => Method::DpGibbs,
            "dp-vb" => Method::DpVb,
            "manual" => Method::Manual,
            other => return Err(Error::Argument(format!("unknown method {other:?}"))),
        })
    }
}

/// Prior hyperparameters: concentration α and per-item Beta pseudo-counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Hyperparams {
    pub fn new(alpha: f64, beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let h = Hyperparams { alpha, beta, gamma };
        h.validate()?;
        Ok(h)
    }

    /// The same β and γ for every item.
    pub fn symmetric(alpha: f64, beta: f64, gamma: f64, n_items: usize) -> Result<Self> {
        Self::new(alpha, vec![beta; n_items], vec![gamma; n_items])
    }

    /// β_i = item frequency and γ_i = 1 − β_i, both floored at `floor` so
    /// items that are always or never present keep a proper prior.
    pub fn from_item_frequencies(alpha: f64, frequencies: &[f64], floor: f64) -> Result<Self> {
        let beta = frequencies.iter().map(|&f| f.max(floor)).collect();
        let gamma = frequencies.iter().map(|&f| (1.0 - f).max(floor)).collect();
        Self::new(alpha, beta, gamma)
    }

    pub fn n_items(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Argument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.beta.len() != self.gamma.len() {
            return Err(Error::Argument("beta and gamma lengths differ".into()));
        }
        if let Some(v) = self
            .beta
            .iter()
            .chain(&self.gamma)
            .find(|v| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::Argument(format!(
                "beta/gamma entries must be positive, got {v}"
            )));
        }
        Ok(())
    }
}

/// Provenance recorded alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    pub method: Method,
    pub hyper: Option<Hyperparams>,
    pub seed: u64,
    pub iterations: usize,
}

impl FitInfo {
    pub fn manual() -> Self {
        FitInfo {
            method: Method::Manual,
            hyper: None,
            seed: 0,
            iterations: 0,
        }
    }
}

/// K mixing weights π and a D×K matrix φ of per-component item probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    weights: Vec<f64>,
    /// Item-major: `phi[i * k + c]`.
    phi: Vec<f64>,
    n_items: usize,
    item_labels: Option<Vec<u64>>,
    info: FitInfo,
}

impl MixtureModel {
    /// `bernoulli[i][k]` is P(item i | component k).
    pub fn new(weights: Vec<f64>, bernoulli: Vec<Vec<f64>>, info: FitInfo) -> Result<Self> {
        let k = weights.len();
        if bernoulli.iter().any(|row| row.len() != k) {
            return Err(Error::Argument(format!(
                "every bernoulli row must have K = {k} entries"
            )));
        }
        let n_items = bernoulli.len();
        let phi = bernoulli.into_iter().flatten().collect();
        Self::from_flat(weights, phi, n_items, info)
    }

    pub(crate) fn from_flat(
        weights: Vec<f64>,
        phi: Vec<f64>,
        n_items: usize,
        info: FitInfo,
    ) -> Result<Self> {
        let m = MixtureModel {
            weights,
            phi,
            n_items,
            item_labels: None,
            info,
        };
        m.validate()?;
        Ok(m)
    }

    /// One component with φ_i equal to the given item probabilities.
    pub fn independent(probabilities: &[f64]) -> Result<Self> {
        Self::new(
            vec![1.0],
            probabilities.iter().map(|&p| vec![p]).collect(),
            FitInfo::manual(),
        )
    }

    /// Attaches original item identifiers (used when writing itemsets).
    pub fn with_item_labels(mut self, labels: Vec<u64>) -> Result<Self> {
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
        let identity = labels.iter().enumerate().all(|(i, &l)| l == i as u64);
        self.item_labels = if identity { None } else { Some(labels) };
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::Contract("a mixture needs at least one component".into()));
        }
        if self.phi.len() != k * self.n_items {
            return Err(Error::Contract("bernoulli matrix has the wrong shape".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Contract(format!("negative or non-finite weight {w}")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Contract(format!("weights sum to {total}, not 1")));
        }
        if let Some(p) = self.phi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Contract(format!("bernoulli parameter {p} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn bernoulli(&self, item: usize, component: usize) -> f64 {
        self.phi[item * self.weights.len() + component]
    }

    /// φ_i· for one item across all components.
    pub fn bernoulli_row(&self, item: usize) -> &[f64] {
        let k = self.weights.len();
        &self.phi[item * k..(item + 1) * k]
    }

    /// φ_·k for one component across all items.
    pub fn bernoulli_column(&self, component: usize) -> Vec<f64> {
        (0..self.n_items)
            .map(|i| self.bernoulli(i, component))
            .collect()
    }

    pub fn info(&self) -> &FitInfo {
        &self.info
    }

    pub fn method(&self) -> Method {
        self.info.method
    }

    /// Item identifiers; the indices themselves when none were attached.
    pub fn item_labels(&self) -> Vec<u64> {
        match &self.item_labels {
            Some(l) => l.clone(),
            None => (0..self.n_items as u64).collect(),
        }
    }

    /// Number of free parameters, K(D + 1) − 1.
    pub fn free_parameter_count(&self) -> usize {
        self.weights.len() * (self.n_items + 1) - 1
    }

    /// Marginal item probabilities Σ_k π_k φ_ik.
    pub fn item_marginals(&self) -> Vec<f64> {
        (0..self.n_items)
            .map(|i| {
                self.bernoulli_row(i)
                    .iter()
                    .zip(&self.weights)
                    .map(|(p, w)| p * w)
                    .sum()
            })
            .collect()
    }

    fn check_items(&self, items: &[usize]) -> Result<()> {
        match items.iter().find(|&&i| i >= self.n_items) {
            Some(i) => Err(Error::Argument(format!(
                "item {i} out of range for D = {}",
                self.n_items
            ))),
            None => Ok(()),
        }
    }

    /// ln Σ_k π_k Π_{i∈I} φ_ik, with the products accumulated as log sums.
    pub fn log_itemset_probability(&self, items: &[usize]) -> Result<f64> {
        self.check_items(items)?;
        let k = self.weights.len();
        let mut acc: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        for &i in items {
            let row = &self.phi[i * k..(i + 1) * k];
            for (a, p) in acc.iter_mut().zip(row) {
                *a += p.ln();
            }
        }
        Ok(log_sum_exp(&acc))
    }

    /// P(I) = Σ_k π_k Π_{i∈I} φ_ik. The empty itemset has probability 1.
    pub fn itemset_probability(&self, items: &[usize]) -> Result<f64> {
        Ok(self.log_itemset_probability(items)?.exp().min(1.0))
    }

    /// Probability of one full binary transaction.
    pub fn transaction_probability(&self, row: &[bool]) -> Result<f64> {
        if row.len() != self.n_items {
            return Err(Error::Argument(format!(
                "transaction has {} entries but D = {}",
                row.len(),
                self.n_items
            )));
        }
        let items: Vec<usize> = (0..row.len()).filter(|&i| row[i]).collect();
        let tables = LogTables::new(self);
        let mut buf = vec![0.0; self.weights.len()];
        tables.joint_log_weights(&items, &mut buf);
        Ok(log_sum_exp(&buf).exp())
    }

    /// Σ_μ ln p(X^μ). Returns −∞ when some transaction has probability zero.
    pub fn log_likelihood(&self, ds: &TransactionDataset) -> Result<f64> {
        if ds.n_items() != self.n_items {
            return Err(Error::Argument(format!(
                "dataset has D = {} but model has D = {}",
                ds.n_items(),
                self.n_items
            )));
        }
        let tables = LogTables::new(self);
        let mut buf = vec![0.0; self.weights.len()];
        let mut total = 0.0;
        for row in ds.rows() {
            tables.joint_log_weights(row, &mut buf);
            total += log_sum_exp(&buf);
        }
        Ok(total)
    }

    pub fn to_json(&self) -> String {
        let k = self.weights.len();
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            method: self.info.method.as_str().to_string(),
            k,
            d: self.n_items,
            weights: self.weights.clone(),
            bernoulli: self.phi.chunks(k.max(1)).map(<[f64]>::to_vec).collect(),
            hyperparams: self.info.hyper.clone(),
            seed: self.info.seed,
            iterations: self.info.iterations as u64,
            item_labels: self.item_labels.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Schema("missing integer format_version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        if file.weights.len() != file.k {
            return Err(Error::Schema(format!(
                "K = {} but {} weights",
                file.k,
                file.weights.len()
            )));
        }
        if file.bernoulli.len() != file.d {
            return Err(Error::Schema(format!(
                "D = {} but {} bernoulli rows",
                file.d,
                file.bernoulli.len()
            )));
        }
        let method: Method = file
            .method
            .parse()
            .map_err(|_| Error::Schema(format!("unknown method {:?}", file.method)))?;
        if let Some(h) = &file.hyperparams {
            if h.n_items() != file.d {
                return Err(Error::Schema("hyperparameter vectors must have D entries".into()));
            }
            h.validate().map_err(|e| Error::Schema(e.to_string()))?;
        }
        let info = FitInfo {
            method,
            hyper: file.hyperparams,
            seed: file.seed,
            iterations: file.iterations as usize,
        };
        let model = MixtureModel::new(file.weights, file.bernoulli, info)?;
        match file.item_labels {
            Some(labels) => model
                .with_item_labels(labels)
                .map_err(|e| Error::Schema(e.to_string())),
            None => Ok(model),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u64,
    method: String,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: usize,
    weights: Vec<f64>,
    bernoulli: Vec<Vec<f64>>,
    hyperparams: Option<Hyperparams>,
    seed: u64,
    iterations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    item_labels: Option<Vec<u64>>,
}

/// Precomputed logarithms for evaluating ln π_k + ln p(X | component k).
///
/// A transaction's per-component log-likelihood is
/// `Σ_i ln(1 − φ_ik) + Σ_{i ∈ X} [ln φ_ik − ln(1 − φ_ik)]`, which touches
/// only the items present. Components with some φ exactly 0 or 1 fall back
/// to the dense sum so that −∞ terms never meet +∞ ones.
pub(crate) struct LogTables {
    k: usize,
    n_items: usize,
    ln_weight: Vec<f64>,
    ln_phi: Vec<f64>,
    ln_one_minus: Vec<f64>,
    base: Vec<f64>,
    degenerate: Vec<bool>,
}

impl LogTables {
    pub(crate) fn new(model: &MixtureModel) -> Self {
        let k = model.n_components();
        let d = model.n_items();
        let ln_phi: Vec<f64> = model.phi.iter().map(|p| p.ln()).collect();
        let ln_one_minus: Vec<f64> = model.phi.iter().map(|p| (1.0 - p).ln()).collect();
        let mut base = vec![0.0; k];
        let mut degenerate = vec![false; k];
        for i in 0..d {
            for c in 0..k {
                let p = model.phi[i * k + c];
                base[c] += ln_one_minus[i * k + c];
                if p == 0.0 || p == 1.0 {
                    degenerate[c] = true;
                }
            }
        }
        LogTables {
            k,
            n_items: d,
            ln_weight: model.weights.iter().map(|w| w.ln()).collect(),
            ln_phi,
            ln_one_minus,
            base,
            degenerate,
        }
    }

    /// Writes ln π_k + ln p(X | k) for every component into `out`.
    pub(crate) fn joint_log_weights(&self, row: &[usize], out: &mut [f64]) {
        let k = self.k;
        for c in 0..k {
            out[c] = self.ln_weight[c] + self.base[c];
        }
        for &i in row {
            for c in 0..k {
                out[c] += self.ln_phi[i * k + c] - self.ln_one_minus[i * k + c];
            }
        }
        for c in (0..k).filter(|&c| self.degenerate[c]) {
            out[c] = self.ln_weight[c] + self.dense_component(row, c);
        }
    }

    fn dense_component(&self, row: &[usize], c: usize) -> f64 {
        let k = self.k;
        let mut present = row.iter().peekable();
        let mut acc = 0.0;
        for i in 0..self.n_items {
            if present.peek() == Some(&&i) {
                present.next();
                acc += self.ln_phi[i * k + c];
            } else {
                acc += self.ln_one_minus[i * k + c];
            }
        }
        acc
    }
}

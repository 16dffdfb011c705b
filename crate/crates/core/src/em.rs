//! Maximum-likelihood training by expectation–maximization.

use rayon::prelude::*;

use crate::dataset::TransactionDataset;
use crate::error::{Error, Result};
use crate::model::{FitInfo, LogTables, Method, MixtureModel};
use crate::special::{flat_dirichlet, normalize_log_weights};

/// Row-stochastic N×K matrix of component memberships τ_k^μ.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    /// Row-major values; each row must be nonnegative and sum to one.
    pub fn new(n: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() != n * k {
            return Err(Error::Argument(format!(
                "responsibilities need {n}×{k} values, got {}",
                values.len()
            )));
        }
        for (mu, row) in values.chunks(k).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|t| !(*t >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!("responsibility row {mu} is not a distribution")));
            }
        }
        Ok(Responsibilities { n, k, values })
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        Responsibilities {
            n,
            k,
            values: vec![1.0 / k as f64; n * k],
        }
    }

    /// Rows drawn independently from the flat Dirichlet, seeded.
    pub fn random(n: usize, k: usize, seed: u64) -> Self {
        let mut rng = crate::seeded_rng(seed);
        let values = (0..n).flat_map(|_| flat_dirichlet(k, &mut rng)).collect();
        Responsibilities { n, k, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.k
    }

    pub fn row(&self, mu: usize) -> &[f64] {
        &self.values[mu * self.k..(mu + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column `c` of the result is column `perm[c]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let values = self
            .values
            .chunks(self.k)
            .flat_map(|row| perm.iter().map(move |&p| row[p]))
            .collect();
        Responsibilities {
            n: self.n,
            k: self.k,
            values,
        }
    }

    /// Σ_μ τ_k^μ for each component.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.k];
        for row in self.values.chunks(self.k) {
            for (a, t) in s.iter_mut().zip(row) {
                *a += t;
            }
        }
        s
    }

    /// Σ_μ τ_k^μ x_i^μ, item-major D×K.
    pub fn weighted_item_counts(&self, ds: &TransactionDataset) -> Vec<f64> {
        let k = self.k;
        let mut s = vec![0.0; ds.n_items() * k];
        for (row, tau) in ds.rows().iter().zip(self.values.chunks(k)) {
            for &i in row {
                for (a, t) in s[i * k..(i + 1) * k].iter_mut().zip(tau) {
                    *a += t;
                }
            }
        }
        s
    }
}

/// Per-iteration record of a fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    /// Log-likelihood (EM), ELBO (variational) or complete-data log
    /// posterior (Gibbs), one entry per iteration or sweep.
    pub objective: Vec<f64>,
    /// Occupied components after each Gibbs sweep; empty for other trainers.
    pub k_active: Vec<usize>,
    pub converged: bool,
    /// E-step rows whose every component had zero likelihood.
    pub degenerate_rows: usize,
    /// M-step components that received no responsibility and were reset.
    pub repaired_components: usize,
}

impl FitTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }

    /// `iteration,<objective_name>` rows, 1-based.
    pub fn to_csv(&self, objective_name: &str) -> String {
        let mut s = format!("iteration,{objective_name}\n");
        for (t, v) in self.objective.iter().enumerate() {
            s.push_str(&format!("{},{}\n", t + 1, v));
        }
        s
    }
}

/// Result of one E-step.
#[derive(Debug, Clone)]
pub struct EStep {
    pub tau: Responsibilities,
    /// Log-likelihood of the model that produced `tau`.
    pub log_likelihood: f64,
    pub degenerate_rows: usize,
}

/// Posterior component memberships under `model`, normalized in log space.
/// Rows with no support under any component fall back to uniform.
pub fn e_step(model: &MixtureModel, ds: &TransactionDataset) -> Result<EStep> {
    if model.n_items() != ds.n_items() {
        return Err(Error::Argument(format!(
            "model has D = {} but data has D = {}",
            model.n_items(),
            ds.n_items()
        )));
    }
    let k = model.n_components();
    let tables = LogTables::new(model);
    let mut values = vec![0.0; ds.n_transactions() * k];
    let row_ll: Vec<f64> = values
        .par_chunks_mut(k)
        .zip(ds.rows().par_iter())
        .map(|(out, row)| {
            tables.joint_log_weights(row, out);
            normalize_log_weights(out)
        })
        .collect();
    let degenerate_rows = row_ll.iter().filter(|l| **l == f64::NEG_INFINITY).count();
    Ok(EStep {
        tau: Responsibilities {
            n: ds.n_transactions(),
            k,
            values,
        },
        log_likelihood: row_ll.iter().sum(),
        degenerate_rows,
    })
}

/// Result of one M-step.
#[derive(Debug, Clone)]
pub struct MStep {
    pub model: MixtureModel,
    /// Components with zero total responsibility; their φ column was set to
    /// the item frequencies and their weight to zero.
    pub repaired: Vec<usize>,
}

/// Maximum-likelihood π and φ given memberships.
pub fn m_step(tau: &Responsibilities, ds: &TransactionDataset) -> Result<MStep> {
    let n = ds.n_transactions();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if tau.n_rows() != n {
        return Err(Error::Argument(format!(
            "{} responsibility rows for {n} transactions",
            tau.n_rows()
        )));
    }
    let k = tau.n_components();
    let mass = tau.column_sums();
    let mut phi = tau.weighted_item_counts(ds);
    let freqs = ds.item_frequencies()?;
    let mut repaired = Vec::new();
    for c in 0..k {
        if mass[c] > 0.0 {
            for i in 0..ds.n_items() {
                phi[i * k + c] = (phi[i * k + c] / mass[c]).min(1.0);
            }
        } else {
            repaired.push(c);
            for (i, f) in freqs.iter().enumerate() {
                phi[i * k + c] = *f;
            }
        }
    }
    let weights = mass.iter().map(|m| m / n as f64).collect();
    let model = MixtureModel::from_flat(weights, phi, ds.n_items(), FitInfo::manual())?;
    Ok(MStep { model, repaired })
}

#[derive(Debug, Clone)]
pub struct EmOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once |ΔL / L| falls below this.
    pub tol: f64,
}

impl EmOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        EmOptions {
            k,
            seed,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    if !prev.is_finite() || !cur.is_finite() {
        return f64::INFINITY;
    }
    let scale = prev.abs();
    if scale == 0.0 {
        (cur - prev).abs()
    } else {
        (cur - prev).abs() / scale
    }
}

/// EM from seeded random responsibilities (an M-step runs first).
pub fn fit_em(ds: &TransactionDataset, opts: &EmOptions) -> Result<(MixtureModel, FitTrace)> {
    if opts.k == 0 {
        return Err(Error::Argument("K must be at least 1".into()));
    }
    let tau = Responsibilities::random(ds.n_transactions(), opts.k, opts.seed);
    fit_em_from(ds, tau, opts)
}

/// EM from the given initial responsibilities.
pub fn fit_em_from(
    ds: &TransactionDataset,
    initial: Responsibilities,
    opts: &EmOptions,
) -> Result<(MixtureModel, FitTrace)> {
    if ds.n_transactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut trace = FitTrace::default();
    let first = m_step(&initial, ds)?;
    trace.repaired_components += first.repaired.len();
    let mut model = first.model;
    for _ in 0..opts.max_iters.max(1) {
        let e = e_step(&model, ds)?;
        trace.degenerate_rows += e.degenerate_rows;
        let prev = trace.objective.last().copied();
        trace.objective.push(e.log_likelihood);
        if let Some(prev) = prev {
            if relative_change(prev, e.log_likelihood) < opts.tol {
                trace.converged = true;
                break;
            }
        }
        let m = m_step(&e.tau, ds)?;
        trace.repaired_components += m.repaired.len();
        model = m.model;
    }
    let info = FitInfo {
        method: Method::Em,
        hyper: None,
        seed: opts.seed,
        iterations: trace.iterations(),
    };
    let model = MixtureModel::from_flat(
        model.weights().to_vec(),
        (0..ds.n_items())
            .flat_map(|i| model.bernoulli_row(i).to_vec())
            .collect(),
        ds.n_items(),
        info,
    )?
    .with_item_labels(ds.item_labels().to_vec())?;
    Ok((model, trace))
}

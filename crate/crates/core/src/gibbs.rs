//! Collapsed Gibbs sampling for the finite Bayesian Bernoulli mixture and
//! for the Dirichlet-process mixture.
//!
//! Mixing weights and Bernoulli parameters are integrated out; only the
//! component assignment of each transaction is sampled. Each draw conditions
//! on the per-component counts with the current transaction removed, so the
//! Beta–Bernoulli predictive for item i in component k is
//! `(β_i + S_ik) / (β_i + γ_i + N_k)` with exclusive counts throughout.

use crate::dataset::TransactionDataset;
use crate::em::FitTrace;
use crate::error::{Error, Result};
use crate::model::{FitInfo, Hyperparams, Method, MixtureModel};
use crate::special::{ln_beta, ln_gamma, normalize_log_weights, sample_categorical};
use crate::SeededRng;

/// Assignments plus the sufficient statistics they imply.
///
/// For every component k the state keeps N_k and S_ik (the number of its
/// transactions containing item i), and caches the log predictive pieces
/// `base_k = Σ_i ln[(γ_i + N_k − S_ik) / (β_i + γ_i + N_k)]` and
/// `delta_ik = ln[(β_i + S_ik) / (γ_i + N_k − S_ik)]`, so scoring a
/// transaction against a component costs one add per present item.
#[derive(Debug, Clone)]
pub struct GibbsState {
    z: Vec<usize>,
    counts: Vec<usize>,
    stats: Vec<Vec<u32>>,
    hyper: Hyperparams,
    rng: SeededRng,
    base: Vec<f64>,
    delta: Vec<Vec<f64>>,
    prior_base: f64,
    prior_delta: Vec<f64>,
    removed: Option<usize>,
}

const UNASSIGNED: usize = usize::MAX;

impl GibbsState {
    /// State from explicit assignments, each below `n_components`.
    pub fn new(
        ds: &TransactionDataset,
        hyper: Hyperparams,
        assignments: Vec<usize>,
        n_components: usize,
        seed: u64,
    ) -> Result<Self> {
        if hyper.n_items() != ds.n_items() {
            return Err(Error::Argument(format!(
                "hyperparameters cover {} items but data has D = {}",
                hyper.n_items(),
                ds.n_items()
            )));
        }
        if assignments.len() != ds.n_transactions() {
            return Err(Error::Argument("one assignment per transaction required".into()));
        }
        if assignments.iter().any(|&k| k >= n_components) {
            return Err(Error::Argument("assignment out of range".into()));
        }
        let d = ds.n_items();
        let mut prior_base = 0.0;
        let mut prior_delta = Vec::with_capacity(d);
        for i in 0..d {
            let (b, g) = (hyper.beta[i], hyper.gamma[i]);
            prior_base += (g / (b + g)).ln();
            prior_delta.push((b / g).ln());
        }
        let mut state = GibbsState {
            z: assignments,
            counts: vec![0; n_components],
            stats: vec![vec![0; d]; n_components],
            hyper,
            rng: crate::seeded_rng(seed),
            base: vec![0.0; n_components],
            delta: vec![vec![0.0; d]; n_components],
            prior_base,
            prior_delta,
            removed: None,
        };
        for (mu, &k) in state.z.iter().enumerate() {
            state.counts[k] += 1;
            for &i in ds.row(mu) {
                state.stats[k][i] += 1;
            }
        }
        for k in 0..n_components {
            state.refresh(k);
        }
        Ok(state)
    }

    /// Uniformly random assignments over `k` components.
    pub fn random(ds: &TransactionDataset, hyper: Hyperparams, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Argument("K must be at least 1".into()));
        }
        let mut state = Self::new(ds, hyper, vec![0; ds.n_transactions()], k, seed)?;
        let z: Vec<usize> = (0..ds.n_transactions())
            .map(|_| sample_categorical(&vec![1.0 / k as f64; k], &mut state.rng))
            .collect();
        let rng = state.rng.clone();
        let mut state = Self::new(ds, state.hyper, z, k, seed)?;
        state.rng = rng;
        Ok(state)
    }

    /// Every transaction in one component (the Dirichlet-process start).
    pub fn single_component(ds: &TransactionDataset, hyper: Hyperparams, seed: u64) -> Result<Self> {
        let k = usize::from(ds.n_transactions() > 0);
        Self::new(ds, hyper, vec![0; ds.n_transactions()], k, seed)
    }

    pub fn assignments(&self) -> &[usize] {
        &self.z
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// S_ik as `stats()[k][i]`.
    pub fn stats(&self) -> &[Vec<u32>] {
        &self.stats
    }

    pub fn n_components(&self) -> usize {
        self.counts.len()
    }

    /// Components holding at least one transaction.
    pub fn n_occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    fn n_assigned(&self) -> usize {
        self.counts.iter().sum()
    }

    fn refresh(&mut self, k: usize) {
        let n_k = self.counts[k] as f64;
        let mut base = 0.0;
        let stats = &self.stats[k];
        let delta = &mut self.delta[k];
        for (i, &s) in stats.iter().enumerate() {
            let s = s as f64;
            let (b, g) = (self.hyper.beta[i], self.hyper.gamma[i]);
            let off = (g + n_k - s).ln();
            base += off - (b + g + n_k).ln();
            delta[i] = (b + s).ln() - off;
        }
        self.base[k] = base;
    }

    /// Collapsed log predictive of `row` under component k.
    fn log_predictive(&self, k: usize, row: &[usize]) -> f64 {
        let delta = &self.delta[k];
        self.base[k] + row.iter().map(|&i| delta[i]).sum::<f64>()
    }

    fn log_prior_predictive(&self, row: &[usize]) -> f64 {
        self.prior_base + row.iter().map(|&i| self.prior_delta[i]).sum::<f64>()
    }

    /// Takes transaction `mu` out of its component. With `drop_empty`, a
    /// component left empty is deleted by moving the last component into
    /// its slot.
    pub fn remove(&mut self, ds: &TransactionDataset, mu: usize, drop_empty: bool) {
        assert!(self.removed.is_none(), "a transaction is already removed");
        let k = self.z[mu];
        self.counts[k] -= 1;
        for &i in ds.row(mu) {
            self.stats[k][i] -= 1;
        }
        self.z[mu] = UNASSIGNED;
        self.removed = Some(mu);
        if drop_empty && self.counts[k] == 0 {
            let last = self.counts.len() - 1;
            self.counts.swap_remove(k);
            self.stats.swap_remove(k);
            self.base.swap_remove(k);
            self.delta.swap_remove(k);
            if k != last {
                for zk in self.z.iter_mut().filter(|zk| **zk == last) {
                    *zk = k;
                }
            }
        } else {
            self.refresh(k);
        }
    }

    /// Puts the removed transaction `mu` into component `k`; `k` equal to
    /// the current component count opens a new component.
    pub fn insert(&mut self, ds: &TransactionDataset, mu: usize, k: usize) {
        assert_eq!(self.removed, Some(mu), "transaction {mu} is not the removed one");
        if k == self.counts.len() {
            let d = ds.n_items();
            self.counts.push(0);
            self.stats.push(vec![0; d]);
            self.base.push(0.0);
            self.delta.push(vec![0.0; d]);
        }
        self.counts[k] += 1;
        for &i in ds.row(mu) {
            self.stats[k][i] += 1;
        }
        self.z[mu] = k;
        self.removed = None;
        self.refresh(k);
    }

    /// p(z = k | rest) for the finite mixture with K = current component
    /// count: ∝ (N_k + α/K) · Π_i predictive. The queried transaction must
    /// already be removed.
    pub fn conditional_finite(&self, row: &[usize]) -> Vec<f64> {
        let k_total = self.counts.len() as f64;
        let prior = self.hyper.alpha / k_total;
        let mut w: Vec<f64> = (0..self.counts.len())
            .map(|k| (self.counts[k] as f64 + prior).ln() + self.log_predictive(k, row))
            .collect();
        normalize_log_weights(&mut w);
        w
    }

    /// p(z = k | rest) under the Pólya urn: existing components ∝ N_k ·
    /// predictive, and a final entry for a new component ∝ α · prior
    /// predictive. Empty components must already be deleted.
    pub fn conditional_dp(&self, row: &[usize]) -> Vec<f64> {
        let mut w: Vec<f64> = (0..self.counts.len())
            .map(|k| (self.counts[k] as f64).ln() + self.log_predictive(k, row))
            .collect();
        w.push(self.hyper.alpha.ln() + self.log_prior_predictive(row));
        normalize_log_weights(&mut w);
        w
    }

    /// One systematic scan over all transactions for the finite mixture.
    pub fn sweep_finite(&mut self, ds: &TransactionDataset) {
        for mu in 0..ds.n_transactions() {
            self.remove(ds, mu, false);
            let p = self.conditional_finite(ds.row(mu));
            let k = sample_categorical(&p, &mut self.rng);
            self.insert(ds, mu, k);
        }
    }

    /// One systematic scan for the Dirichlet-process mixture; components
    /// appear and vanish as transactions move.
    pub fn sweep_dp(&mut self, ds: &TransactionDataset) {
        for mu in 0..ds.n_transactions() {
            self.remove(ds, mu, true);
            let p = self.conditional_dp(ds.row(mu));
            let k = sample_categorical(&p, &mut self.rng);
            self.insert(ds, mu, k);
        }
    }

    /// Whether the counts and statistics equal a from-scratch recount.
    pub fn is_consistent(&self, ds: &TransactionDataset) -> bool {
        let k = self.counts.len();
        let mut counts = vec![0usize; k];
        let mut stats = vec![vec![0u32; ds.n_items()]; k];
        for (mu, &zk) in self.z.iter().enumerate() {
            if zk == UNASSIGNED {
                continue;
            }
            if zk >= k {
                return false;
            }
            counts[zk] += 1;
            for &i in ds.row(mu) {
                stats[zk][i] += 1;
            }
        }
        counts == self.counts
            && stats == self.stats
            && self
                .stats
                .iter()
                .zip(&self.counts)
                .all(|(s, &n)| s.iter().all(|&x| x as usize <= n))
    }

    /// ln p(T | Z) with parameters integrated out.
    fn log_marginal_data(&self) -> f64 {
        let mut total = 0.0;
        for (k, stats) in self.stats.iter().enumerate() {
            let n_k = self.counts[k] as f64;
            for (i, &s) in stats.iter().enumerate() {
                let (b, g) = (self.hyper.beta[i], self.hyper.gamma[i]);
                total += ln_beta(b + s as f64, g + n_k - s as f64) - ln_beta(b, g);
            }
        }
        total
    }

    /// ln p(Z) + ln p(T | Z) under the symmetric Dirichlet(α/K) prior.
    pub fn log_joint_finite(&self) -> f64 {
        let n = self.n_assigned() as f64;
        let alpha = self.hyper.alpha;
        let a_k = alpha / self.counts.len() as f64;
        let prior = ln_gamma(alpha) - ln_gamma(n + alpha)
            + self
                .counts
                .iter()
                .map(|&c| ln_gamma(c as f64 + a_k) - ln_gamma(a_k))
                .sum::<f64>();
        prior + self.log_marginal_data()
    }

    /// ln p(Z) + ln p(T | Z) under the Chinese-restaurant prior.
    pub fn log_joint_dp(&self) -> f64 {
        let n = self.n_assigned() as f64;
        let alpha = self.hyper.alpha;
        let occupied: Vec<usize> = self.counts.iter().copied().filter(|&c| c > 0).collect();
        let prior = occupied.len() as f64 * alpha.ln() + ln_gamma(alpha) - ln_gamma(n + alpha)
            + occupied.iter().map(|&c| ln_gamma(c as f64)).sum::<f64>();
        prior + self.log_marginal_data()
    }

    fn posterior_bernoulli(&self) -> Vec<f64> {
        let k = self.counts.len();
        let d = self.hyper.n_items();
        let mut phi = vec![0.0; d * k];
        for c in 0..k {
            let n_k = self.counts[c] as f64;
            for i in 0..d {
                let (b, g) = (self.hyper.beta[i], self.hyper.gamma[i]);
                phi[i * k + c] = (b + self.stats[c][i] as f64) / (b + g + n_k);
            }
        }
        phi
    }

    /// Point model from the finite state: π_k = (N_k + α/K)/(N + α) and
    /// φ_ik = (β_i + S_ik)/(β_i + γ_i + N_k).
    pub fn extract_finite(&self, info: FitInfo) -> Result<MixtureModel> {
        let n = self.n_assigned() as f64;
        let k = self.counts.len();
        let alpha = self.hyper.alpha;
        let weights = self
            .counts
            .iter()
            .map(|&c| (c as f64 + alpha / k as f64) / (n + alpha))
            .collect();
        MixtureModel::from_flat(weights, self.posterior_bernoulli(), self.hyper.n_items(), info)
    }

    /// Point model from the Dirichlet-process state. The urn gives occupied
    /// component k mass N_k/(N + α); the new-component mass α/(N + α) is
    /// dropped and the rest renormalized, leaving π_k = N_k / N. With no
    /// transactions the model is a single component at the prior mean.
    pub fn extract_dp(&self, info: FitInfo) -> Result<MixtureModel> {
        let n = self.n_assigned();
        let d = self.hyper.n_items();
        if n == 0 {
            let phi = (0..d)
                .map(|i| self.hyper.beta[i] / (self.hyper.beta[i] + self.hyper.gamma[i]))
                .collect();
            return MixtureModel::from_flat(vec![1.0], phi, d, info);
        }
        let weights = self.counts.iter().map(|&c| c as f64 / n as f64).collect();
        MixtureModel::from_flat(weights, self.posterior_bernoulli(), d, info)
    }
}

#[derive(Debug, Clone)]
pub struct GibbsOptions {
    pub hyper: Hyperparams,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl GibbsOptions {
    pub fn new(hyper: Hyperparams, seed: u64) -> Self {
        GibbsOptions {
            hyper,
            sweeps: 200,
            burn_in: 100,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sweeps <= self.burn_in {
            return Err(Error::Argument(format!(
                "sweeps ({}) must exceed burn-in ({})",
                self.sweeps, self.burn_in
            )));
        }
        self.hyper.validate()
    }
}

/// `sweep,k_active,log_posterior` rows for a Gibbs trace.
pub fn trace_csv(trace: &FitTrace) -> String {
    let mut s = String::from("sweep,k_active,log_posterior\n");
    for (t, (k, lp)) in trace.k_active.iter().zip(&trace.objective).enumerate() {
        s.push_str(&format!("{},{},{}\n", t + 1, k, lp));
    }
    s
}

/// Mean occupied-component count over the sweeps after burn-in.
pub fn mean_active_components(trace: &FitTrace, burn_in: usize) -> f64 {
    let tail = &trace.k_active[burn_in.min(trace.k_active.len())..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().sum::<usize>() as f64 / tail.len() as f64
}

fn finish(
    ds: &TransactionDataset,
    model: MixtureModel,
    trace: FitTrace,
) -> Result<(MixtureModel, FitTrace)> {
    Ok((model.with_item_labels(ds.item_labels().to_vec())?, trace))
}

/// Collapsed Gibbs for the finite mixture from random assignments; the
/// returned model is extracted from the final sweep.
pub fn fit_gibbs_finite(
    ds: &TransactionDataset,
    k: usize,
    opts: &GibbsOptions,
) -> Result<(MixtureModel, FitTrace)> {
    opts.validate()?;
    let mut state = GibbsState::random(ds, opts.hyper.clone(), k, opts.seed)?;
    let mut trace = FitTrace::default();
    for _ in 0..opts.sweeps {
        state.sweep_finite(ds);
        trace.objective.push(state.log_joint_finite());
        trace.k_active.push(state.n_occupied());
    }
    let info = FitInfo {
        method: Method::Gibbs,
        hyper: Some(opts.hyper.clone()),
        seed: opts.seed,
        iterations: opts.sweeps,
    };
    let model = state.extract_finite(info)?;
    finish(ds, model, trace)
}

/// Collapsed Gibbs for the Dirichlet-process mixture, starting from one
/// component holding every transaction.
pub fn fit_gibbs_dp(ds: &TransactionDataset, opts: &GibbsOptions) -> Result<(MixtureModel, FitTrace)> {
    opts.validate()?;
    let mut state = GibbsState::single_component(ds, opts.hyper.clone(), opts.seed)?;
    let mut trace = FitTrace::default();
    for _ in 0..opts.sweeps {
        state.sweep_dp(ds);
        trace.objective.push(state.log_joint_dp());
        trace.k_active.push(state.n_occupied());
    }
    let info = FitInfo {
        method: Method::DpGibbs,
        hyper: Some(opts.hyper.clone()),
        seed: opts.seed,
        iterations: opts.sweeps,
    };
    let model = state.extract_dp(info)?;
    finish(ds, model, trace)
}

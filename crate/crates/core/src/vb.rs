//! Variational EM for the finite Bayesian Bernoulli mixture and for the
//! truncated stick-breaking Dirichlet-process mixture.
//!
//! q factorizes into per-transaction memberships τ, a Dirichlet (finite) or
//! Beta sticks (DP) over the weights, and Beta(η_ik, ν_ik) over each φ_ik.
//! The state keeps the global factors consistent with τ: after every update
//! `η_ik = β_i + Σ_μ τ_k^μ x_i^μ` and `ν_ik = γ_i + Σ_μ τ_k^μ (1 − x_i^μ)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::TransactionDataset;
use crate::em::{relative_change, FitTrace, Responsibilities};
use crate::error::{Error, Result};
use crate::model::{FitInfo, Hyperparams, Method, MixtureModel};
use crate::special::{digamma, ln_beta, ln_gamma, normalize_log_weights};

/// How the finite Dirichlet factor absorbs the prior concentration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoUpdate {
    /// ρ_k = α/K + Σ_μ τ_k^μ, conjugate to the Dir(α/K, …, α/K) prior.
    #[default]
    Conjugate,
    /// ρ_k = α + Σ_μ τ_k^μ, i.e. a Dir(α, …, α) prior.
    FullAlpha,
}

impl RhoUpdate {
    pub fn as_str(self) -> &'static str {
        match self {
            RhoUpdate::Conjugate => "conjugate",
            RhoUpdate::FullAlpha => "full-alpha",
        }
    }
}

impl fmt::Display for RhoUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RhoUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conjugate" => Ok(RhoUpdate::Conjugate),
            "full-alpha" => Ok(RhoUpdate::FullAlpha),
            other => Err(Error::Argument(format!(
                "unknown rho update '{other}' (expected conjugate or full-alpha)"
            ))),
        }
    }
}

/// Weight factor of q.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFactor {
    /// Dirichlet(ρ).
    Finite { rho: Vec<f64>, rule: RhoUpdate },
    /// Beta(ρ1_k, ρ2_k) sticks for k < K; v_K is fixed at 1.
    Sticks { rho1: Vec<f64>, rho2: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct VariationalState {
    tau: Responsibilities,
    weights: WeightFactor,
    /// Item-major D×K.
    eta: Vec<f64>,
    nu: Vec<f64>,
    hyper: Hyperparams,
}

impl VariationalState {
    /// Finite-mixture state whose global factors follow from `tau`.
    pub fn finite(
        ds: &TransactionDataset,
        hyper: Hyperparams,
        tau: Responsibilities,
        rule: RhoUpdate,
    ) -> Result<Self> {
        let k = tau.n_components();
        Self::build(ds, hyper, tau, WeightFactor::Finite { rho: vec![0.0; k], rule })
    }

    /// Truncated DP state whose global factors follow from `tau`; the
    /// truncation level is the column count of `tau`.
    pub fn dp(ds: &TransactionDataset, hyper: Hyperparams, tau: Responsibilities) -> Result<Self> {
        let k = tau.n_components();
        Self::build(
            ds,
            hyper,
            tau,
            WeightFactor::Sticks {
                rho1: vec![0.0; k - 1],
                rho2: vec![0.0; k - 1],
            },
        )
    }

    fn build(
        ds: &TransactionDataset,
        hyper: Hyperparams,
        tau: Responsibilities,
        weights: WeightFactor,
    ) -> Result<Self> {
        hyper.validate()?;
        if hyper.n_items() != ds.n_items() {
            return Err(Error::Argument(format!(
                "hyperparameters cover {} items but data has D = {}",
                hyper.n_items(),
                ds.n_items()
            )));
        }
        if tau.n_rows() != ds.n_transactions() {
            return Err(Error::Argument(format!(
                "{} responsibility rows for {} transactions",
                tau.n_rows(),
                ds.n_transactions()
            )));
        }
        let dk = ds.n_items() * tau.n_components();
        let mut state = VariationalState {
            tau,
            weights,
            eta: vec![0.0; dk],
            nu: vec![0.0; dk],
            hyper,
        };
        state.update_globals(ds);
        Ok(state)
    }

    pub fn n_components(&self) -> usize {
        self.tau.n_components()
    }

    pub fn tau(&self) -> &Responsibilities {
        &self.tau
    }

    pub fn weight_factor(&self) -> &WeightFactor {
        &self.weights
    }

    /// η, item-major D×K.
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// ν, item-major D×K.
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    fn dirichlet_prior(&self, rule: RhoUpdate) -> f64 {
        match rule {
            RhoUpdate::Conjugate => self.hyper.alpha / self.n_components() as f64,
            RhoUpdate::FullAlpha => self.hyper.alpha,
        }
    }

    /// Recomputes the weight factor, η and ν from τ.
    fn update_globals(&mut self, ds: &TransactionDataset) {
        let k = self.n_components();
        let mass = self.tau.column_sums();
        let counts = self.tau.weighted_item_counts(ds);
        for i in 0..ds.n_items() {
            let (b, g) = (self.hyper.beta[i], self.hyper.gamma[i]);
            for c in 0..k {
                let s = counts[i * k + c];
                self.eta[i * k + c] = b + s;
                self.nu[i * k + c] = g + (mass[c] - s).max(0.0);
            }
        }
        let alpha = self.hyper.alpha;
        let prior = match &self.weights {
            WeightFactor::Finite { rule, .. } => self.dirichlet_prior(*rule),
            WeightFactor::Sticks { .. } => 0.0,
        };
        match &mut self.weights {
            WeightFactor::Finite { rho, .. } => {
                for (r, m) in rho.iter_mut().zip(&mass) {
                    *r = prior + m;
                }
            }
            WeightFactor::Sticks { rho1, rho2 } => {
                let mut tail: f64 = mass.iter().sum();
                for c in 0..k - 1 {
                    tail -= mass[c];
                    rho1[c] = 1.0 + mass[c];
                    rho2[c] = alpha + tail.max(0.0);
                }
            }
        }
    }

    /// E_q[ln π_k].
    fn expected_log_weights(&self) -> Vec<f64> {
        match &self.weights {
            WeightFactor::Finite { rho, .. } => {
                let total = digamma(rho.iter().sum());
                rho.iter().map(|&r| digamma(r) - total).collect()
            }
            WeightFactor::Sticks { rho1, rho2 } => {
                let mut out = Vec::with_capacity(rho1.len() + 1);
                let mut rest = 0.0;
                for (&a, &b) in rho1.iter().zip(rho2) {
                    let both = digamma(a + b);
                    out.push(digamma(a) - both + rest);
                    rest += digamma(b) - both;
                }
                out.push(rest);
                out
            }
        }
    }

    /// (E ln φ, E ln(1−φ)), item-major.
    fn expected_log_bernoulli(&self) -> (Vec<f64>, Vec<f64>) {
        self.eta
            .iter()
            .zip(&self.nu)
            .map(|(&e, &n)| {
                let both = digamma(e + n);
                (digamma(e) - both, digamma(n) - both)
            })
            .unzip()
    }

    /// Recomputes every τ row from the current global factors.
    fn update_tau(&mut self, ds: &TransactionDataset) {
        let k = self.n_components();
        let elog_pi = self.expected_log_weights();
        let (elog_phi, elog_off) = self.expected_log_bernoulli();
        let mut base = elog_pi;
        for i in 0..ds.n_items() {
            for c in 0..k {
                base[c] += elog_off[i * k + c];
            }
        }
        let delta: Vec<f64> = elog_phi.iter().zip(&elog_off).map(|(a, b)| a - b).collect();
        self.tau
            .as_mut_slice()
            .par_chunks_mut(k)
            .zip(ds.rows().par_iter())
            .for_each(|(out, row)| {
                out.copy_from_slice(&base);
                for &i in row {
                    for (o, d) in out.iter_mut().zip(&delta[i * k..(i + 1) * k]) {
                        *o += d;
                    }
                }
                normalize_log_weights(out);
            });
    }

    /// One coordinate-ascent cycle: τ from the global factors, then the
    /// global factors from τ.
    pub fn update(&mut self, ds: &TransactionDataset) {
        self.update_tau(ds);
        self.update_globals(ds);
    }

    /// Evidence lower bound E_q[ln p(T, Z, weights, φ)] − E_q[ln q].
    pub fn elbo(&self, ds: &TransactionDataset) -> f64 {
        let k = self.n_components();
        let elog_pi = self.expected_log_weights();
        let (elog_phi, elog_off) = self.expected_log_bernoulli();
        let mass = self.tau.column_sums();
        let counts = self.tau.weighted_item_counts(ds);

        let mut total = 0.0;
        // Memberships and data.
        for c in 0..k {
            total += mass[c] * elog_pi[c];
        }
        for i in 0..ds.n_items() {
            for c in 0..k {
                let j = i * k + c;
                total += counts[j] * elog_phi[j] + (mass[c] - counts[j]) * elog_off[j];
            }
        }
        // Entropy of q(Z).
        total -= self
            .tau
            .as_slice()
            .iter()
            .filter(|&&t| t > 0.0)
            .map(|&t| t * t.ln())
            .sum::<f64>();
        // Bernoulli parameters: E ln p(φ) − E ln q(φ).
        for i in 0..ds.n_items() {
            let (b, g) = (self.hyper.beta[i], self.hyper.gamma[i]);
            for c in 0..k {
                let j = i * k + c;
                let (e, n) = (self.eta[j], self.nu[j]);
                total += ln_beta(e, n) - ln_beta(b, g)
                    + (b - e) * elog_phi[j]
                    + (g - n) * elog_off[j];
            }
        }
        // Weights.
        match &self.weights {
            WeightFactor::Finite { rho, rule } => {
                let a = self.dirichlet_prior(*rule);
                let rho_sum: f64 = rho.iter().sum();
                total += ln_gamma(a * k as f64) - k as f64 * ln_gamma(a) - ln_gamma(rho_sum)
                    + rho.iter().map(|&r| ln_gamma(r)).sum::<f64>()
                    + rho
                        .iter()
                        .zip(&elog_pi)
                        .map(|(&r, &e)| (a - r) * e)
                        .sum::<f64>();
            }
            WeightFactor::Sticks { rho1, rho2 } => {
                let alpha = self.hyper.alpha;
                for (&a, &b) in rho1.iter().zip(rho2) {
                    let both = digamma(a + b);
                    let (elog_v, elog_rest) = (digamma(a) - both, digamma(b) - both);
                    // Beta(1, α) prior against Beta(a, b).
                    total += alpha.ln() + (alpha - 1.0) * elog_rest + ln_beta(a, b)
                        - (a - 1.0) * elog_v
                        - (b - 1.0) * elog_rest;
                }
            }
        }
        total
    }

    /// Expected weights under q: ρ/Σρ, or the stick products
    /// E[v_k] Π_{l<k} E[1 − v_l] with v_K = 1.
    pub fn expected_weights(&self) -> Vec<f64> {
        match &self.weights {
            WeightFactor::Finite { rho, .. } => {
                let total: f64 = rho.iter().sum();
                rho.iter().map(|r| r / total).collect()
            }
            WeightFactor::Sticks { rho1, rho2 } => {
                let mut out = Vec::with_capacity(rho1.len() + 1);
                let mut rest = 1.0;
                for (&a, &b) in rho1.iter().zip(rho2) {
                    out.push(rest * a / (a + b));
                    rest *= b / (a + b);
                }
                out.push(rest);
                out
            }
        }
    }

    /// Point model from the posterior means of q.
    pub fn extract(&self, info: FitInfo) -> Result<MixtureModel> {
        let phi = self.eta.iter().zip(&self.nu).map(|(e, n)| e / (e + n)).collect();
        MixtureModel::from_flat(self.expected_weights(), phi, self.hyper.n_items(), info)
    }
}

#[derive(Debug, Clone)]
pub struct VbOptions {
    /// Component count, or the truncation level for the DP variant.
    pub k: usize,
    pub hyper: Hyperparams,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the relative ELBO change falls below this.
    pub tol: f64,
    pub rho_update: RhoUpdate,
}

impl VbOptions {
    pub fn new(k: usize, hyper: Hyperparams, seed: u64) -> Self {
        VbOptions {
            k,
            hyper,
            seed,
            max_iters: 500,
            tol: 1e-6,
            rho_update: RhoUpdate::Conjugate,
        }
    }
}

/// Runs update cycles until the ELBO settles.
pub fn run_to_convergence(
    state: &mut VariationalState,
    ds: &TransactionDataset,
    max_iters: usize,
    tol: f64,
) -> FitTrace {
    let mut trace = FitTrace::default();
    for _ in 0..max_iters.max(1) {
        state.update(ds);
        let elbo = state.elbo(ds);
        let prev = trace.objective.last().copied();
        trace.objective.push(elbo);
        if let Some(prev) = prev {
            if relative_change(prev, elbo) < tol {
                trace.converged = true;
                break;
            }
        }
    }
    trace
}

fn fit(
    ds: &TransactionDataset,
    opts: &VbOptions,
    method: Method,
) -> Result<(MixtureModel, FitTrace)> {
    if opts.k == 0 {
        return Err(Error::Argument("K must be at least 1".into()));
    }
    let tau = Responsibilities::random(ds.n_transactions(), opts.k, opts.seed);
    let mut state = match method {
        Method::DpVb => VariationalState::dp(ds, opts.hyper.clone(), tau)?,
        _ => VariationalState::finite(ds, opts.hyper.clone(), tau, opts.rho_update)?,
    };
    let trace = run_to_convergence(&mut state, ds, opts.max_iters, opts.tol);
    let info = FitInfo {
        method,
        hyper: Some(opts.hyper.clone()),
        seed: opts.seed,
        iterations: trace.iterations(),
    };
    let model = state.extract(info)?.with_item_labels(ds.item_labels().to_vec())?;
    Ok((model, trace))
}

/// Finite variational EM from seeded random memberships (the same draw EM
/// uses for that seed).
pub fn fit_vb_finite(ds: &TransactionDataset, opts: &VbOptions) -> Result<(MixtureModel, FitTrace)> {
    fit(ds, opts, Method::Vb)
}

/// Truncated stick-breaking variational EM with truncation `opts.k`.
pub fn fit_vb_dp(ds: &TransactionDataset, opts: &VbOptions) -> Result<(MixtureModel, FitTrace)> {
    fit(ds, opts, Method::DpVb)
}

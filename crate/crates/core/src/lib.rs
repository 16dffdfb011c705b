//! Bernoulli mixture models for frequent itemset discovery.
//!
//! Five trainers fit a [`MixtureModel`] to binary transaction data:
//! maximum-likelihood EM, a finite Bayesian mixture by collapsed Gibbs
//! sampling or by variational EM, and a Dirichlet-process mixture by
//! collapsed Gibbs sampling or by truncated stick-breaking variational EM.
//! The fitted model predicts every itemset's probability, so the frequent
//! itemsets can be generated from the model with the same lattice search
//! ([`miner`]) that mines them exactly from the data, and the two answers
//! compared ([`eval`]).
//!
//! ```
//! use bmfim::{em, miner, TransactionDataset};
//!
//! let ds = TransactionDataset::parse_fimi("1 2\n1 3\n1 2 3\n2 3\n".as_bytes(), None)?;
//! let exact = miner::mine_exact(&ds, 0.5)?;
//! assert_eq!(exact.len(), 6);
//!
//! let (model, _trace) = em::fit_em(&ds, &em::EmOptions::new(2, 7))?;
//! let predicted = miner::mine_model(&model, 0.5)?;
//! assert!(predicted.is_downward_closed());
//! # Ok::<(), bmfim::Error>(())
//! ```

pub mod cli;
pub mod dataset;
pub mod em;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod miner;
pub mod model;
pub mod special;
pub mod vb;

pub use dataset::{load_fimi, Itemset, TransactionDataset};
pub use error::{Error, Result};
pub use miner::{ItemsetCollection, MinSupport};
pub use model::{Hyperparams, Method, MixtureModel};

use rand::SeedableRng;

/// The generator behind every seeded operation in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub(crate) fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

// The book's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/mining.md")]
    mod mining {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/em.md")]
    mod em {}
    #[doc = include_str!("../../../book/src/gibbs.md")]
    mod gibbs {}
    #[doc = include_str!("../../../book/src/variational.md")]
    mod variational {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

#![allow(dead_code)]

use bmfim::model::FitInfo;
use bmfim::{MixtureModel, TransactionDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1};

/// K-component generator with φ_ik ~ Beta(a, a) and flat-Dirichlet weights.
pub fn random_generator(k: usize, d: usize, a: f64, seed: u64) -> MixtureModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let beta = Beta::new(a, a).unwrap();
    let phi = (0..d).map(|_| (0..k).map(|_| beta.sample(&mut rng)).collect()).collect();
    MixtureModel::new(weights, phi, FitInfo::manual()).unwrap()
}

/// The 15-component, 30-item synthetic replica with 10,000 transactions.
pub fn syn15() -> (MixtureModel, TransactionDataset) {
    let model = random_generator(15, 30, 0.5, 15);
    let ds = TransactionDataset::sample_from_model(&model, 10_000, 15);
    (model, ds)
}

/// Well-separated generator: component c switches on its own block of items.
pub fn block_generator(k: usize, d: usize, on: f64, off: f64) -> MixtureModel {
    let phi = (0..d)
        .map(|i| (0..k).map(|c| if i * k / d == c { on } else { off }).collect())
        .collect();
    MixtureModel::new(vec![1.0 / k as f64; k], phi, FitInfo::manual()).unwrap()
}

/// Samples rows and remembers which component produced each.
pub fn sample_labelled(model: &MixtureModel, n: usize, seed: u64) -> (TransactionDataset, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut z = model.n_components() - 1;
        for (c, w) in model.weights().iter().enumerate() {
            acc += w;
            if u < acc {
                z = c;
                break;
            }
        }
        let row = (0..model.n_items())
            .filter(|&i| rng.random::<f64>() < model.bernoulli(i, z))
            .collect();
        rows.push(row);
        labels.push(z);
    }
    (TransactionDataset::new(rows, model.n_items()).unwrap(), labels)
}

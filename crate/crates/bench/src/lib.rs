//! Fixtures shared by the criterion benchmarks.

use wrmc_core::model::{AcceptanceRule, Model};
use wrmc_core::rng;
use wrmc_core::synth::{self, SelectionKind};

/// Metropolis chain on a path of `n` states with geometric target.
pub fn path_model(n: usize) -> Model {
    synth::gibbs_path(n, 0.3, AcceptanceRule::Metropolis)
}

/// Random Boltzmann multi-proposal model on `n` states.
pub fn multi_model(n: usize) -> Model {
    let mut r = rng::stream(0xbe7c, n as u64);
    synth::random_multi(&mut r, n, SelectionKind::Boltzmann)
}

/// Deterministic observable with values spread over [-1, 1).
pub fn observable(n: usize) -> Vec<f64> {
    let mut r = rng::stream(0xf00d, n as u64);
    synth::random_function(&mut r, n)
}

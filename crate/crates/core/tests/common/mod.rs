#![allow(dead_code)]

use std::path::PathBuf;

use csfl::cli::{validate_config, ExperimentConfig};
use csfl::data::{generate_synthetic, partition, Dataset, SyntheticSpec};
use csfl::model::{ArchSpec, RawBatch};
use csfl::sim::SystemState;
use csfl::system::UserProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn reference_config() -> ExperimentConfig {
    validate_config(configs_dir().join("reference.toml")).expect("reference config")
}

pub fn profile(user_id: usize, cpu_rate: f64) -> UserProfile {
    UserProfile {
        user_id,
        cpu_rate,
        data_quality: 1.0,
        uplink_rate: 1e7,
        d2d_rate: 2e7,
        link_latency: 0.005,
    }
}

/// Small random network shape drawn from `rng`.
pub fn random_arch(rng: &mut ChaCha8Rng) -> ArchSpec {
    let client_layers = rng.random_range(1..=3);
    let server_layers = rng.random_range(0..=2);
    ArchSpec {
        num_numeric_features: rng.random_range(1..=4),
        vocab1: rng.random_range(1..=3),
        vocab2: rng.random_range(1..=3),
        wide_out_dim: rng.random_range(1..=3),
        embed_dim1: rng.random_range(1..=2),
        embed_dim2: rng.random_range(1..=2),
        client_hidden: (0..client_layers).map(|_| rng.random_range(1..=4)).collect(),
        server_hidden: (0..server_layers).map(|_| rng.random_range(1..=4)).collect(),
        output_dim: 1,
        split_layer: 1 + client_layers,
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, arch: &ArchSpec, rows: usize) -> RawBatch {
    let numeric = ndarray::Array2::from_shape_fn((rows, arch.num_numeric_features), |_| {
        rng.random_range(-2.0..2.0)
    });
    RawBatch {
        numeric,
        cat1: (0..rows).map(|_| rng.random_range(0..arch.vocab1)).collect(),
        cat2: (0..rows).map(|_| rng.random_range(0..arch.vocab2)).collect(),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Synthetic data and a fresh state for users with the given cpu rates.
pub fn small_system(cpus: &[f64], per_user: usize, seed: u64) -> (Dataset, SystemState) {
    let spec = SyntheticSpec::default();
    let dataset = generate_synthetic(seed, cpus.len() * per_user + 16, &spec).unwrap();
    let arch = ArchSpec::wide_and_deep(spec.num_numeric, spec.vocab1, spec.vocab2);
    let shards = partition(&dataset, cpus.len(), per_user, seed + 1).unwrap();
    let profiles = cpus.iter().enumerate().map(|(i, &c)| profile(i, c)).collect();
    let state = SystemState::new(arch, seed + 2, seed + 3, profiles, shards).unwrap();
    (dataset, state)
}

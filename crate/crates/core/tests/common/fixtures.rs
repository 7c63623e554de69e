#![allow(dead_code)]

use adgan_core::dataset::{prepare, PreparedData};
use adgan_core::features::CategoryScheme;
use adgan_core::synthgen::{default_desk_preset, generate, SynthConfig};

/// A few hundred consumers; fast enough for short training runs.
pub fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_total: 600,
        n_paired: 120,
        collision_count: 5,
        seed,
        ..default_desk_preset()
    }
}

pub fn prepared(config: &SynthConfig) -> PreparedData {
    let d = generate(config).unwrap();
    prepare(
        &d.transactions,
        &d.surveys,
        &d.labels,
        &CategoryScheme::default(),
        0.3,
        0,
    )
    .unwrap()
}

pub fn small_dataset(seed: u64) -> PreparedData {
    prepared(&small_config(seed))
}

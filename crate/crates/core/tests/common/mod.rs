#![allow(dead_code)]

use coopbd::{ConstraintScheme, PrecodingMode, ProblemInstance, SystemConfig};

pub const SCHEMES: [ConstraintScheme; 3] = [
    ConstraintScheme::PerBs,
    ConstraintScheme::PerAntenna,
    ConstraintScheme::SumPower,
];

/// Small mixed configurations with `M ≤ 6`, `K ≤ 3` and `M ≥ N·K`.
pub fn mixed_config(i: usize) -> SystemConfig {
    const SHAPES: [(usize, usize, usize, usize); 8] = [
        (2, 1, 2, 1),
        (3, 1, 3, 1),
        (2, 2, 2, 2),
        (3, 2, 3, 2),
        (2, 3, 3, 1),
        (3, 2, 2, 2),
        (2, 2, 1, 2),
        (6, 1, 3, 1),
    ];
    let (a, mb, k, n) = SHAPES[i % SHAPES.len()];
    let weights = (0..k).map(|j| 1.0 + 0.25 * ((i + j) % 3) as f64).collect();
    SystemConfig::new(a, mb, k, n, [1.0, 10.0, 4.0][i % 3])
        .with_scheme(SCHEMES[(i / 2) % 3])
        .with_weights(weights)
}

pub fn instance(config: SystemConfig, seed: u64) -> ProblemInstance {
    ProblemInstance::generate(config, seed).expect("valid instance")
}

pub fn zf_dpc(config: SystemConfig) -> SystemConfig {
    config.with_mode(PrecodingMode::ZfDpc)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

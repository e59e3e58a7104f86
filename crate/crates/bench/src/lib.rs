//! Fixed instances shared by the solver benchmarks.

use coopbd::{ConstraintScheme, ProblemInstance, SystemConfig};

/// Two cells of four antennas serving four two-antenna users.
pub fn two_cell_mimo(seed: u64) -> ProblemInstance {
    ProblemInstance::generate(SystemConfig::new(2, 4, 4, 2, 10.0), seed).expect("valid fixture")
}

/// Eight single-antenna transmitters under per-antenna budgets, two users.
pub fn per_antenna_miso(seed: u64) -> ProblemInstance {
    let cfg = SystemConfig::new(8, 1, 2, 1, 10.0).with_scheme(ConstraintScheme::PerAntenna);
    ProblemInstance::generate(cfg, seed).expect("valid fixture")
}

/// `A` single-antenna cells with two single-antenna users.
pub fn miso_sweep(num_bs: usize, seed: u64) -> ProblemInstance {
    ProblemInstance::generate(SystemConfig::new(num_bs, 1, 2, 1, 10.0), seed)
        .expect("valid fixture")
}

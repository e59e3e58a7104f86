mod common;

use coopbd::bd_optimal::solve_optimal;
use coopbd::bd_suboptimal::solve_suboptimal;
use coopbd::evaluate::{check_invariants, oracle_solve, OracleOptions};
use coopbd::numerics;
use coopbd::zfbf::{collinearity, optimal_miso_beams, pseudo_inverse_beams};
use coopbd::{ConstraintScheme, SolveOptions, SystemConfig};

use common::{instance, mixed_config, rel, zf_dpc};

#[test]
fn reference_solver_agrees_on_mixed_instances() {
    let opts = SolveOptions::default();
    for i in 0..25 {
        let p = instance(mixed_config(i), 100 + i as u64);
        let sol = solve_optimal(&p, &opts).unwrap();
        let reference = oracle_solve(&p, &OracleOptions::default()).unwrap();
        assert!(
            reference.converged,
            "instance {i}: reference solver did not settle ({} steps, violation {:e}, value {} vs {})",
            reference.steps,
            reference.max_violation,
            reference.value,
            sol.primal_value
        );
        let err = rel(sol.primal_value, reference.value);
        assert!(
            err <= 1e-4,
            "instance {i}: {} vs {} ({err:e})",
            sol.primal_value,
            reference.value
        );
    }
}

#[test]
fn reference_solver_agrees_under_zf_dpc() {
    let opts = SolveOptions::default();
    for i in 0..8 {
        let p = instance(zf_dpc(mixed_config(i)), 300 + i as u64);
        let sol = solve_optimal(&p, &opts).unwrap();
        let reference = oracle_solve(&p, &OracleOptions::default()).unwrap();
        assert!(
            rel(sol.primal_value, reference.value) <= 1e-4,
            "instance {i}"
        );
    }
}

#[test]
fn zf_dpc_zero_forces_later_users_and_never_loses_to_bd() {
    let opts = SolveOptions::default();
    for i in 0..25 {
        let cfg = mixed_config(i);
        let seed = 500 + i as u64;
        let bd = solve_optimal(&instance(cfg.clone(), seed), &opts).unwrap();
        let p = instance(zf_dpc(cfg), seed);
        let dpc = solve_optimal(&p, &opts).unwrap();
        for k in 0..p.num_users() {
            for j in k + 1..p.num_users() {
                let leak = numerics::frobenius(&(p.channel(j) * &dpc.precoders[k]));
                assert!(leak <= 1e-8, "instance {i}: H_{j} T_{k} = {leak:e}");
            }
        }
        let report = check_invariants(&p, &dpc).unwrap();
        assert!(
            report.violations().is_empty(),
            "instance {i}: {:?}",
            report.violations()
        );
        assert!(
            dpc.primal_value >= bd.primal_value - 1e-8,
            "instance {i}: ZF-DPC {} < BD {}",
            dpc.primal_value,
            bd.primal_value
        );
    }
}

#[test]
fn sum_power_makes_both_methods_coincide() {
    let opts = SolveOptions::default();
    for seed in 1..=20 {
        for dims in [(2, 2, 2, 2), (4, 1, 2, 1), (3, 2, 3, 1)] {
            let (a, mb, k, n) = dims;
            let cfg = SystemConfig::new(a, mb, k, n, 5.0).with_scheme(ConstraintScheme::SumPower);
            let p = instance(cfg, seed);
            let opt = solve_optimal(&p, &opts).unwrap();
            let sub = solve_suboptimal(&p, &opts).unwrap();
            assert!(
                (opt.primal_value - sub.primal_value).abs() <= 1e-6,
                "{dims:?} seed {seed}"
            );
            let report = check_invariants(&p, &opt).unwrap();
            assert!(report.column_coupling.unwrap() <= 1e-8);
        }
    }
}

#[test]
fn square_miso_systems_make_both_methods_coincide() {
    let opts = SolveOptions::default();
    for seed in 1..=30 {
        for scheme in common::SCHEMES {
            let p = instance(
                SystemConfig::new(2, 1, 2, 1, 10.0).with_scheme(scheme),
                seed,
            );
            let opt = solve_optimal(&p, &opts).unwrap();
            let sub = solve_suboptimal(&p, &opts).unwrap();
            assert!(
                (opt.sum_rate() - sub.sum_rate()).abs() <= 1e-6,
                "seed {seed} {scheme:?}"
            );
            let beams = optimal_miso_beams(&p, &opts).unwrap();
            let pinv = pseudo_inverse_beams(&p, &opts).unwrap();
            for k in 0..2 {
                let (a, b) = (&beams.beams[k], &pinv.beams[k]);
                if a.norm() < 1e-12 {
                    // Switched-off user.
                    assert!(b.norm() < 1e-6, "seed {seed} {scheme:?} user {k}");
                    continue;
                }
                assert!(
                    collinearity(a, b) > 1.0 - 1e-8,
                    "seed {seed} {scheme:?} user {k}"
                );
            }
        }
    }
}

#[test]
fn pseudo_inverse_beams_lose_under_per_antenna_budgets() {
    let opts = SolveOptions::default();
    let cfg = SystemConfig::new(4, 1, 2, 1, 10.0).with_scheme(ConstraintScheme::PerAntenna);
    let mut strictly_below = 0;
    for seed in 1..=100 {
        let p = instance(cfg.clone(), seed);
        let opt = optimal_miso_beams(&p, &opts).unwrap();
        let pinv = pseudo_inverse_beams(&p, &opts).unwrap();
        assert!(
            pinv.weighted_sum_rate <= opt.weighted_sum_rate + 1e-8,
            "seed {seed}"
        );
        if pinv.weighted_sum_rate < opt.weighted_sum_rate * (1.0 - 1e-9) {
            strictly_below += 1;
        }
    }
    assert!(
        strictly_below >= 95,
        "only {strictly_below}/100 strictly below"
    );
}

#[test]
fn pseudo_inverse_beams_are_optimal_under_sum_power() {
    let opts = SolveOptions::default();
    for seed in 1..=20 {
        let cfg = SystemConfig::new(5, 1, 3, 1, 8.0).with_scheme(ConstraintScheme::SumPower);
        let p = instance(cfg, seed);
        let opt = solve_optimal(&p, &opts).unwrap();
        let pinv = pseudo_inverse_beams(&p, &opts).unwrap();
        assert!(
            (opt.primal_value - pinv.weighted_sum_rate).abs() <= 1e-6,
            "seed {seed}"
        );
    }
}

#[test]
fn miso_covariances_are_rank_one() {
    let opts = SolveOptions::default();
    for seed in 1..=20 {
        for scheme in common::SCHEMES {
            let p = instance(
                SystemConfig::new(6, 1, 3, 1, 10.0).with_scheme(scheme),
                seed,
            );
            let sol = solve_optimal(&p, &opts).unwrap();
            let report = check_invariants(&p, &sol).unwrap();
            assert!(
                report.rank_one_ratio.unwrap() < 1e-8,
                "seed {seed} {scheme:?}"
            );
        }
    }
}

#[test]
fn active_group_bounds_hold_on_per_antenna_miso() {
    let opts = SolveOptions::default();
    let cfg = SystemConfig::new(8, 1, 2, 1, 10.0).with_scheme(ConstraintScheme::PerAntenna);
    for seed in 1..=30 {
        let p = instance(cfg.clone(), seed);
        let budgets = p.budgets();
        let opt = solve_optimal(&p, &opts).unwrap();
        let sub = solve_suboptimal(&p, &opts).unwrap();
        assert!(opt.active_groups(&budgets) >= 7, "seed {seed}");
        assert!(opt.positive_duals() >= 7, "seed {seed}");
        assert!(sub.active_groups(&budgets) <= 2, "seed {seed}");
    }
}

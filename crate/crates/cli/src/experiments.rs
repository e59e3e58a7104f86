//! The experiment runners behind `coopbd run`.

use coopbd::bd_optimal::solve_optimal;
use coopbd::bd_suboptimal::solve_suboptimal;
use coopbd::evaluate::{check_invariants, InvariantReport};
use coopbd::solution::SolutionDocument;
use coopbd::{ConstraintScheme, PrecodingMode, ProblemInstance, Solution, SystemConfig};
use rayon::prelude::*;

use crate::args::Experiment;
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Metadata, Table};
use crate::settings::RunSettings;

/// Invariant outcome for one solved instance.
#[derive(Clone, Debug)]
pub struct InstanceCheck {
    pub label: String,
    pub report: InvariantReport,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub metadata: Metadata,
    pub table: Table,
    pub checks: Vec<InstanceCheck>,
    pub solves: usize,
    pub nonconverged: usize,
    /// Full solutions, kept for the custom experiment's JSON output.
    pub solutions: Vec<serde_json::Value>,
}

/// Both methods on one channel realization.
pub struct SeedSolve {
    pub seed: u64,
    pub problem: ProblemInstance,
    pub optimal: Option<Solution>,
    pub suboptimal: Option<Solution>,
}

impl SeedSolve {
    fn solutions(&self) -> impl Iterator<Item = &Solution> {
        self.optimal.iter().chain(self.suboptimal.iter())
    }
}

fn scheme_name(s: ConstraintScheme) -> &'static str {
    match s {
        ConstraintScheme::PerBs => "per-bs",
        ConstraintScheme::PerAntenna => "per-antenna",
        ConstraintScheme::SumPower => "sum",
    }
}

fn mode_name(m: PrecodingMode) -> &'static str {
    match m {
        PrecodingMode::Bd => "bd",
        PrecodingMode::ZfDpc => "zf-dpc",
    }
}

/// `1-100` for contiguous runs, otherwise a comma list.
fn seed_summary(seeds: &[u64]) -> String {
    let contiguous = seeds.windows(2).all(|w| w[1] == w[0] + 1);
    match seeds {
        [first, .., last] if contiguous => format!("{first}-{last}"),
        _ => seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn metadata(s: &RunSettings) -> Metadata {
    let c = &s.config;
    let mut meta: Metadata = vec![
        ("kind".into(), s.experiment.kind().into()),
        ("A".into(), c.num_bs.to_string()),
        ("MB".into(), c.antennas_per_bs.to_string()),
        ("K".into(), c.num_ms.to_string()),
        ("N".into(), c.antennas_per_ms.to_string()),
        ("P".into(), c.power_budget.to_string()),
        ("weights".into(), join(&c.weights)),
        ("scheme".into(), scheme_name(c.scheme).into()),
        ("mode".into(), mode_name(c.mode).into()),
        ("method".into(), format!("{:?}", s.method).to_lowercase()),
        ("tol".into(), s.solve.tol.to_string()),
        ("max_iter".into(), s.solve.max_iter.to_string()),
        ("unit".into(), if s.bits { "bits" } else { "nats" }.into()),
        ("seeds".into(), seed_summary(&s.seeds)),
    ];
    match s.experiment {
        Experiment::Fig2 => meta.push(("M".into(), join(&s.m_list))),
        Experiment::Fig4 => meta.push(("p_grid".into(), join(&s.p_grid))),
        _ => {}
    }
    meta
}

pub fn solve_instance(
    problem: ProblemInstance,
    seed: u64,
    s: &RunSettings,
) -> CliResult<SeedSolve> {
    let optimal = s
        .method
        .optimal()
        .then(|| solve_optimal(&problem, &s.solve))
        .transpose()?;
    let suboptimal = s
        .method
        .suboptimal()
        .then(|| solve_suboptimal(&problem, &s.solve))
        .transpose()?;
    Ok(SeedSolve {
        seed,
        problem,
        optimal,
        suboptimal,
    })
}

/// Solves every seed (in parallel) for one configuration, in seed order.
pub fn solve_seeds(config: &SystemConfig, s: &RunSettings) -> CliResult<Vec<SeedSolve>> {
    s.seeds
        .par_iter()
        .map(|&seed| {
            let problem = ProblemInstance::generate(config.clone(), seed)?;
            solve_instance(problem, seed, s)
        })
        .collect()
}

struct Collector {
    checks: Vec<InstanceCheck>,
    solves: usize,
    nonconverged: usize,
}

impl Collector {
    fn new() -> Self {
        Self {
            checks: Vec::new(),
            solves: 0,
            nonconverged: 0,
        }
    }

    fn record(&mut self, context: &str, batch: &[SeedSolve]) -> CliResult<()> {
        for run in batch {
            for sol in run.solutions() {
                self.solves += 1;
                if !sol.converged {
                    self.nonconverged += 1;
                }
                let report = check_invariants(&run.problem, sol)?;
                self.checks.push(InstanceCheck {
                    label: format!("{context} seed={} {}", run.seed, sol.method.label()),
                    violations: report.violations(),
                    report,
                });
            }
        }
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn power_label(scheme: ConstraintScheme, a: usize) -> String {
    match scheme {
        ConstraintScheme::PerBs => format!("power_bs{}", a + 1),
        ConstraintScheme::PerAntenna => format!("power_ant{}", a + 1),
        ConstraintScheme::SumPower => "power_total".into(),
    }
}

fn fig1(s: &RunSettings, out: &mut Collector) -> CliResult<Table> {
    let batch = solve_seeds(&s.config, s)?;
    out.record("fig1", &batch)?;
    let groups = batch[0].problem.masks.count();
    let mut columns = vec!["seed".to_string(), "iteration".into(), "sum_rate".into()];
    columns.extend((0..groups).map(|a| power_label(s.config.scheme, a)));
    columns.extend((0..groups).map(|a| format!("mu{}", a + 1)));
    columns.push("dual_value".into());
    let mut table = Table::new(columns);
    let scale = s.rate_scale();
    for run in &batch {
        let Some(sol) = &run.optimal else { continue };
        for rec in &sol.trace {
            let mut row: Vec<Cell> = vec![
                run.seed.into(),
                rec.iteration.into(),
                rec.weighted_sum_rate.map(|r| r * scale).into(),
            ];
            for a in 0..groups {
                row.push(rec.group_powers.as_ref().map(|p| p[a]).into());
            }
            row.extend(rec.mu.iter().map(|&m| Cell::Real(m)));
            row.push(rec.dual_value.into());
            table.push(row);
        }
    }
    Ok(table)
}

/// Mean optimal and suboptimal weighted sum-rates over a batch.
fn means(batch: &[SeedSolve], scale: f64) -> (Option<f64>, Option<f64>) {
    (
        mean(
            batch
                .iter()
                .filter_map(|r| r.optimal.as_ref())
                .map(|s| s.primal_value * scale),
        ),
        mean(
            batch
                .iter()
                .filter_map(|r| r.suboptimal.as_ref())
                .map(|s| s.primal_value * scale),
        ),
    )
}

fn comparison_row(key: Cell, seeds: usize, opt: Option<f64>, sub: Option<f64>) -> Vec<Cell> {
    let gap = opt.zip(sub).map(|(o, s)| o - s);
    let rel = opt.zip(gap).map(|(o, g)| g / o);
    vec![
        key,
        seeds.into(),
        opt.into(),
        sub.into(),
        gap.into(),
        rel.into(),
    ]
}

fn fig2(s: &RunSettings, out: &mut Collector) -> CliResult<Table> {
    let mut table = Table::new(["M", "seeds", "optimal", "suboptimal", "gap", "relative_gap"]);
    for &m in &s.m_list {
        let mut config = s.config.clone();
        config.num_bs = m / config.antennas_per_bs;
        config
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let batch = solve_seeds(&config, s)?;
        out.record(&format!("fig2 M={m}"), &batch)?;
        let (opt, sub) = means(&batch, s.rate_scale());
        table.push(comparison_row(m.into(), batch.len(), opt, sub));
    }
    Ok(table)
}

fn fig3(s: &RunSettings, out: &mut Collector) -> CliResult<Table> {
    let batch = solve_seeds(&s.config, s)?;
    out.record("fig3", &batch)?;
    let mut table = Table::new([
        "seed",
        "optimal_active",
        "suboptimal_active",
        "optimal_positive_duals",
    ]);
    for run in &batch {
        let budgets = run.problem.budgets();
        let count = |sol: &Option<Solution>| match sol {
            Some(x) => Cell::from(x.active_groups(&budgets)),
            None => Cell::Real(f64::NAN),
        };
        let duals = match &run.optimal {
            Some(x) => Cell::from(x.positive_duals()),
            None => Cell::Real(f64::NAN),
        };
        table.push(vec![
            run.seed.into(),
            count(&run.optimal),
            count(&run.suboptimal),
            duals,
        ]);
    }
    Ok(table)
}

fn fig4(s: &RunSettings, out: &mut Collector) -> CliResult<Table> {
    let mut table = Table::new(["P", "seeds", "optimal", "suboptimal", "gap", "relative_gap"]);
    for &p in &s.p_grid {
        let mut config = s.config.clone();
        config.power_budget = p;
        let batch = solve_seeds(&config, s)?;
        out.record(&format!("fig4 P={p}"), &batch)?;
        let (opt, sub) = means(&batch, s.rate_scale());
        table.push(comparison_row(p.into(), batch.len(), opt, sub));
    }
    Ok(table)
}

fn custom(
    s: &RunSettings,
    out: &mut Collector,
    docs: &mut Vec<serde_json::Value>,
) -> CliResult<Table> {
    let batch = match &s.instance {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let problem = ProblemInstance::from_json(&text)?;
            let seed = problem.channels.seed;
            vec![solve_instance(problem, seed, s)?]
        }
        None => solve_seeds(&s.config, s)?,
    };
    out.record("custom", &batch)?;
    let config = &batch[0].problem.config;
    let groups = batch[0].problem.masks.count();
    let mut columns: Vec<String> = [
        "seed",
        "method",
        "weighted_sum_rate",
        "sum_rate",
        "dual_value",
        "duality_gap",
        "iterations",
        "converged",
        "active_groups",
        "positive_duals",
    ]
    .iter()
    .map(|c| c.to_string())
    .collect();
    columns.extend((0..groups).map(|a| power_label(config.scheme, a)));
    let mut table = Table::new(columns);
    let scale = s.rate_scale();
    for run in &batch {
        let budgets = run.problem.budgets();
        for sol in run.solutions() {
            let mut row = vec![
                run.seed.into(),
                sol.method.label().into(),
                (sol.primal_value * scale).into(),
                (sol.sum_rate() * scale).into(),
                (sol.dual_value * scale).into(),
                (sol.duality_gap * scale).into(),
                sol.iterations.into(),
                Cell::Int(sol.converged as i64),
                sol.active_groups(&budgets).into(),
                sol.positive_duals().into(),
            ];
            row.extend(sol.group_powers.iter().map(|&p| Cell::Real(p)));
            table.push(row);
            if s.json {
                let mut doc = serde_json::to_value(SolutionDocument::from(sol))
                    .expect("solution documents always serialize");
                doc["seed"] = run.seed.into();
                docs.push(doc);
            }
        }
    }
    Ok(table)
}

pub fn run_experiment(s: &RunSettings) -> CliResult<ExperimentOutput> {
    let mut collector = Collector::new();
    let mut solutions = Vec::new();
    let table = match s.experiment {
        Experiment::Fig1 => fig1(s, &mut collector)?,
        Experiment::Fig2 => fig2(s, &mut collector)?,
        Experiment::Fig3 => fig3(s, &mut collector)?,
        Experiment::Fig4 => fig4(s, &mut collector)?,
        Experiment::Custom => custom(s, &mut collector, &mut solutions)?,
    };
    let mut meta = metadata(s);
    meta.push(("nonconverged".into(), collector.nonconverged.to_string()));
    Ok(ExperimentOutput {
        metadata: meta,
        table,
        checks: collector.checks,
        solves: collector.solves,
        nonconverged: collector.nonconverged,
        solutions,
    })
}

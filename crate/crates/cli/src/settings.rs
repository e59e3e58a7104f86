//! Resolution of flags, config files and per-experiment defaults into one
//! fully specified run.

use std::path::{Path, PathBuf};

use clap::Parser;
use coopbd::{ConstraintScheme, PrecodingMode, SolveOptions, SystemConfig};

use crate::args::{Cli, Command, Experiment, MethodArg, RunArgs};
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct RunSettings {
    pub experiment: Experiment,
    /// Base configuration; sweeps override `num_bs` or `power_budget`.
    pub config: SystemConfig,
    pub method: MethodArg,
    pub seeds: Vec<u64>,
    pub solve: SolveOptions,
    pub p_grid: Vec<f64>,
    pub m_list: Vec<usize>,
    pub out: Option<PathBuf>,
    pub json: bool,
    pub bits: bool,
    pub instance: Option<PathBuf>,
}

impl RunSettings {
    /// Factor applied to every reported rate.
    pub fn rate_scale(&self) -> f64 {
        if self.bits {
            std::f64::consts::LOG2_E
        } else {
            1.0
        }
    }
}

/// Reads a flat `key = value` file into the same structure as the flags.
pub fn parse_config_file(path: &Path) -> CliResult<RunArgs> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> CliResult<RunArgs> {
    let mut argv = vec!["coopbd".to_string(), "run".to_string()];
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected key=value, got {line:?}",
                n + 1
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "experiment" => argv.insert(2, value.to_string()),
            "json" | "bits" => match value {
                "true" | "1" | "yes" => argv.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => {
                    return Err(CliError::Usage(format!(
                        "config line {}: {key} expects true or false",
                        n + 1
                    )))
                }
            },
            "config" => {
                return Err(CliError::Usage(
                    "config files cannot include other config files".into(),
                ))
            }
            _ => {
                let flag = key.replace('_', "-");
                argv.push(format!("--{flag}"));
                argv.push(value.to_string());
            }
        }
    }
    match Cli::try_parse_from(&argv) {
        Ok(Cli {
            command: Command::Run(args),
        }) => Ok(args),
        Err(e) => Err(CliError::Usage(format!("config file: {}", e.render()))),
    }
}

/// Flags win over file values.
pub fn merge(flags: RunArgs, file: RunArgs) -> RunArgs {
    RunArgs {
        experiment: flags.experiment.or(file.experiment),
        num_bs: flags.num_bs.or(file.num_bs),
        antennas_per_bs: flags.antennas_per_bs.or(file.antennas_per_bs),
        num_ms: flags.num_ms.or(file.num_ms),
        antennas_per_ms: flags.antennas_per_ms.or(file.antennas_per_ms),
        power: flags.power.or(file.power),
        weights: flags.weights.or(file.weights),
        scheme: flags.scheme.or(file.scheme),
        mode: flags.mode.or(file.mode),
        method: flags.method.or(file.method),
        seeds: flags.seeds.or(file.seeds),
        seed_list: flags.seed_list.or(file.seed_list),
        tol: flags.tol.or(file.tol),
        max_iter: flags.max_iter.or(file.max_iter),
        p_grid: flags.p_grid.or(file.p_grid),
        m_list: flags.m_list.or(file.m_list),
        out: flags.out.or(file.out),
        json: flags.json || file.json,
        bits: flags.bits || file.bits,
        config: flags.config,
        instance: flags.instance.or(file.instance),
    }
}

struct Defaults {
    dims: (usize, usize, usize, usize),
    scheme: ConstraintScheme,
    method: MethodArg,
    seeds: usize,
    tol: f64,
    max_iter: usize,
}

fn defaults(experiment: Experiment) -> Defaults {
    let base = Defaults {
        dims: (2, 4, 4, 2),
        scheme: ConstraintScheme::PerBs,
        method: MethodArg::Both,
        seeds: 100,
        tol: 1e-6,
        max_iter: 20_000,
    };
    match experiment {
        Experiment::Fig1 => Defaults {
            method: MethodArg::Optimal,
            seeds: 1,
            tol: 1e-10,
            max_iter: 100,
            ..base
        },
        Experiment::Fig2 => Defaults {
            dims: (2, 1, 2, 1),
            ..base
        },
        Experiment::Fig3 => Defaults {
            dims: (8, 1, 2, 1),
            scheme: ConstraintScheme::PerAntenna,
            ..base
        },
        Experiment::Fig4 => Defaults {
            dims: (4, 1, 2, 2),
            ..base
        },
        Experiment::Custom => Defaults { seeds: 1, ..base },
    }
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!(
            "--{name} must be positive, got {v}"
        )))
    }
}

pub fn resolve(args: RunArgs) -> CliResult<RunSettings> {
    let args = match &args.config {
        Some(path) => merge(args.clone(), parse_config_file(path)?),
        None => args,
    };
    let experiment = args.experiment.ok_or_else(|| {
        CliError::Usage("no experiment given (fig1, fig2, fig3, fig4 or custom)".into())
    })?;
    let d = defaults(experiment);
    let (a, mb, k, n) = d.dims;
    let power = positive("P", args.power.unwrap_or(10.0))?;
    let mut config = SystemConfig::new(
        args.num_bs.unwrap_or(a),
        args.antennas_per_bs.unwrap_or(mb),
        args.num_ms.unwrap_or(k),
        args.antennas_per_ms.unwrap_or(n),
        power,
    )
    .with_scheme(args.scheme.map_or(d.scheme, Into::into))
    .with_mode(args.mode.map_or(PrecodingMode::Bd, Into::into));
    if let Some(w) = args.weights {
        config = config.with_weights(w);
    }

    let seeds = match (args.seed_list, args.seeds) {
        (Some(list), _) if list.is_empty() => {
            return Err(CliError::Usage("--seed-list is empty".into()))
        }
        (Some(list), _) => list,
        (None, Some(0)) => return Err(CliError::Usage("--seeds must be at least 1".into())),
        (None, count) => (1..=count.unwrap_or(d.seeds) as u64).collect(),
    };
    let solve = SolveOptions {
        tol: positive("tol", args.tol.unwrap_or(d.tol))?,
        max_iter: args.max_iter.unwrap_or(d.max_iter),
        record_trace: experiment == Experiment::Fig1,
        ..SolveOptions::default()
    };
    if solve.max_iter == 0 {
        return Err(CliError::Usage("--max-iter must be at least 1".into()));
    }
    let p_grid = args.p_grid.unwrap_or_else(|| vec![0.1, 1.0, 10.0, 100.0]);
    for &p in &p_grid {
        positive("p-grid", p)?;
    }
    let m_list = args.m_list.unwrap_or_else(|| (2..=10).collect());
    if experiment == Experiment::Fig2 {
        for &m in &m_list {
            if m == 0 || m % config.antennas_per_bs != 0 {
                return Err(CliError::Usage(format!(
                    "--m-list entry {m} is not a positive multiple of MB = {}",
                    config.antennas_per_bs
                )));
            }
        }
    }
    if args.instance.is_some() && experiment != Experiment::Custom {
        return Err(CliError::Usage(
            "--instance only applies to the custom experiment".into(),
        ));
    }
    if args.instance.is_none() {
        config
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(RunSettings {
        experiment,
        config,
        method: args.method.unwrap_or(d.method),
        seeds,
        solve,
        p_grid,
        m_list,
        out: args.out,
        json: args.json,
        bits: args.bits,
        instance: args.instance,
    })
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coopbd::{ConstraintScheme, PrecodingMode};

#[derive(Debug, Parser)]
#[command(
    name = "coopbd",
    version,
    about = "Block-diagonalization precoding experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a named experiment or a custom configuration.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Dual-solver convergence trace.
    #[value(name = "fig1", alias = "fig1_convergence")]
    Fig1,
    /// Sum-rate versus transmit antennas, single-antenna users.
    #[value(name = "fig2", alias = "fig2_miso_sweep")]
    Fig2,
    /// Active per-antenna constraints per realization.
    #[value(name = "fig3", alias = "fig3_active_histogram")]
    Fig3,
    /// Sum-rate versus power budget, multi-antenna users.
    #[value(name = "fig4", alias = "fig4_mimo_power_sweep")]
    Fig4,
    Custom,
}

impl Experiment {
    pub fn kind(self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1_convergence",
            Experiment::Fig2 => "fig2_miso_sweep",
            Experiment::Fig3 => "fig3_active_histogram",
            Experiment::Fig4 => "fig4_mimo_power_sweep",
            Experiment::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    PerBs,
    PerAntenna,
    Sum,
}

impl From<SchemeArg> for ConstraintScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::PerBs => ConstraintScheme::PerBs,
            SchemeArg::PerAntenna => ConstraintScheme::PerAntenna,
            SchemeArg::Sum => ConstraintScheme::SumPower,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Bd,
    ZfDpc,
}

impl From<ModeArg> for PrecodingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Bd => PrecodingMode::Bd,
            ModeArg::ZfDpc => PrecodingMode::ZfDpc,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Optimal,
    Suboptimal,
    Both,
}

impl MethodArg {
    pub fn optimal(self) -> bool {
        self != MethodArg::Suboptimal
    }

    pub fn suboptimal(self) -> bool {
        self != MethodArg::Optimal
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    #[arg(value_enum)]
    pub experiment: Option<Experiment>,
    /// Number of base stations.
    #[arg(long = "A")]
    pub num_bs: Option<usize>,
    /// Antennas per base station.
    #[arg(long = "MB")]
    pub antennas_per_bs: Option<usize>,
    /// Number of users.
    #[arg(long = "K")]
    pub num_ms: Option<usize>,
    /// Antennas per user.
    #[arg(long = "N")]
    pub antennas_per_ms: Option<usize>,
    /// Power budget per constraint group (linear).
    #[arg(long = "P")]
    pub power: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Use seeds 1..=COUNT.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Explicit comma-separated seeds (overrides --seeds).
    #[arg(long, value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,
    /// Dual-gap tolerance of the ellipsoid phase.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Power budgets swept by fig4.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    /// Total antenna counts swept by fig2.
    #[arg(long, value_delimiter = ',')]
    pub m_list: Option<Vec<usize>>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
    /// Report rates in bits instead of nats.
    #[arg(long)]
    pub bits: bool,
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Solve a saved instance (custom only).
    #[arg(long)]
    pub instance: Option<PathBuf>,
}

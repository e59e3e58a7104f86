//! Command-line front end for the `coopbd` precoders.
//!
//! `coopbd run <experiment>` builds instances from flags or a key=value
//! config file, solves them and writes one table as CSV (a `#` metadata line,
//! then a header row) or JSON.

pub mod args;
pub mod error;
pub mod experiments;
pub mod output;
pub mod settings;

pub use args::{Cli, Command, Experiment, RunArgs};
pub use error::{CliError, CliResult};
pub use experiments::{run_experiment, ExperimentOutput};
pub use settings::{resolve, RunSettings};

/// Runs one `coopbd run` invocation end to end, writing its output.
pub fn execute(args: RunArgs) -> CliResult<ExperimentOutput> {
    let settings = resolve(args)?;
    let result = run_experiment(&settings)?;
    let text = if settings.json {
        let solutions =
            (settings.experiment == Experiment::Custom).then(|| result.solutions.clone());
        output::render_json(&result.metadata, &result.table, solutions)
    } else {
        output::render_csv(&result.metadata, &result.table)
    };
    output::write_output(settings.out.as_deref(), &text)?;
    if result.nonconverged > 0 {
        return Err(CliError::NonConvergence {
            count: result.nonconverged,
            total: result.solves,
        });
    }
    Ok(result)
}

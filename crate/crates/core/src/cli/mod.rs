//! Command-line front end shared by the `mzi` binary and the tests.
//!
//! [`run`] takes the argument list and two writers and returns the process
//! exit code: 0 on success, 1 for usage or configuration errors, 2 for I/O
//! errors and 3 when the single-framework rule refuses a requested
//! probability or combination.

mod commands;
mod options;
pub mod scan;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use options::{parse_probe_list, Format, Options, ParamRange, Scope};

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mzi",
    version,
    about = "Nested Mach-Zehnder simulator: exact and Monte Carlo statistics, consistent histories, weak values"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse and compile an interferometer description and check unitarity.
    Validate {
        /// Description file (defaults to --itf, then the built-in device).
        path: Option<PathBuf>,
    },
    /// Exact joint detector/probe distribution.
    Simulate,
    /// Monte Carlo coincidence counts.
    Mc,
    /// Decoherence matrices, consistency and conditional probabilities.
    Histories,
    /// Weak values and the weak-trace presence table.
    Weak,
    /// Side-by-side histories vs weak-trace verdicts.
    Compare,
    /// Grid search over beam-splitter parameters.
    Scan,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Simulate => "simulate",
            Command::Mc => "mc",
            Command::Histories => "histories",
            Command::Weak => "weak",
            Command::Compare => "compare",
            Command::Scan => "scan",
        }
    }
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(crate::Error),
    Io(String),
    /// A report was produced but a requested probability was refused.
    Refused(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Refused(_) => EXIT_REFUSED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(e) => write!(f, "error: {e}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Refused(m) => write!(f, "REFUSED: {m}"),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Config(e)
    }
}

/// Run the command line `args` (program name first). Reports go to `stdout`
/// unless `--output` names a file; diagnostics go to `stderr`.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = match options::splice_config(args) {
        Ok(a) => a,
        Err(e) => return report_error(&e, stderr),
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(output) => emit(&cli, &output, stdout, stderr),
        Err((partial, e)) => {
            if let Some(text) = partial {
                let code = emit(&cli, &text, stdout, stderr);
                if code != EXIT_OK {
                    return code;
                }
            }
            report_error(&e, stderr)
        }
    }
}

fn report_error(e: &CliError, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "{e}");
    e.exit_code()
}

fn emit(cli: &Cli, text: &str, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.options.output {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(m) => report_error(&CliError::Io(m), stderr),
    }
}

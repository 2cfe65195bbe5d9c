//! Command-line front end: config parsing, dispatch and deterministic
//! report emission.

pub mod commands;
pub mod manifest;
pub mod output;
pub mod suite;
pub mod verify;

use std::path::Path;

use clap::Parser;
use thiserror::Error;

pub use commands::Cli;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Core(#[from] iterfield::Error),
    #[error("internal: {0}")]
    Internal(String),
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// One file to write under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Result of a command: what to print, what to write and whether the
/// checked claims held.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub artifacts: Vec<Artifact>,
    pub pass: bool,
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    for a in artifacts {
        output::write_atomic(&dir.join(&a.name), a.contents.as_bytes())?;
    }
    Ok(())
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 when every checked claim held, 1 on a verified failure, 2 on usage or
/// configuration errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let out_dir = cli.out_dir().map(Path::to_path_buf);
    let outcome = commands::execute(&cli).and_then(|o| {
        if let Some(dir) = &out_dir {
            write_artifacts(dir, &o.artifacts)?;
        }
        Ok(o)
    });
    match outcome {
        Ok(o) => {
            print!("{}", o.stdout);
            if o.pass {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

//! Command-line front end.

use clap::{Args, Parser, Subcommand};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::archive::TraceArchive;
use crate::error::{Error, Result};
use crate::runner::{analyze, run, summary, write_fingerprint, write_outputs};
use crate::scenario::{has_errors, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cotdr", version, about = "Correlation OTDR simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Scenario file (JSON).
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario and print diagnostics.
    Validate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Synthesize, correlate and analyze; write all outputs.
    Run(Overrides),
    /// Synthesize and write only the fingerprint.
    Fingerprint(Overrides),
    /// Re-run the analyses on an existing trace archive.
    Analyze {
        #[command(flatten)]
        common: Overrides,
        /// Trace archive; defaults to traces.cotd in the output directory.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>, frames: Option<usize>) -> std::result::Result<Scenario, i32> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Err(EXIT_INVALID);
        }
    };
    let mut scn = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Err(EXIT_INVALID);
        }
    };
    if let Some(s) = seed {
        scn.seed = s;
    }
    if let Some(f) = frames {
        scn.frames = f;
    }
    let diags = scn.validate_with_source(Some(&text));
    for d in &diags {
        eprintln!("{}: {d}", path.display());
    }
    if has_errors(&diags) {
        return Err(EXIT_INVALID);
    }
    Ok(scn)
}

fn runtime(result: Result<()>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Execute a parsed command line and return the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate { scenario, seed, frames } => match load(&scenario, seed, frames) {
            Ok(_) => {
                println!("{}: ok", scenario.display());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run(o) => {
            let scn = match load(&o.scenario, o.seed, o.frames) {
                Ok(s) => s,
                Err(code) => return code,
            };
            runtime(run(&scn).and_then(|r| {
                write_outputs(&scn, &r, &o.out_dir)?;
                print!("{}", summary(&scn, &r));
                Ok(())
            }))
        }
        Command::Fingerprint(o) => {
            let scn = match load(&o.scenario, o.seed, o.frames) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let scn = Scenario {
                analyses: Vec::new(),
                ..scn
            };
            runtime(run(&scn).and_then(|r| {
                std::fs::create_dir_all(&o.out_dir)?;
                let mut w = BufWriter::new(File::create(o.out_dir.join("fingerprint.csv"))?);
                write_fingerprint(&r.fingerprint, &mut w)?;
                print!("{}", summary(&scn, &r));
                Ok(())
            }))
        }
        Command::Analyze { common: o, archive } => {
            let scn = match load(&o.scenario, o.seed, o.frames) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let path = archive.unwrap_or_else(|| o.out_dir.join("traces.cotd"));
            runtime((|| {
                let arc = TraceArchive::read(std::io::BufReader::new(File::open(&path)?))?;
                let expected = 1.0 / scn.probe.sample_rate();
                if ((1.0 / arc.sample_rate) - expected).abs() > 1e-9 * expected {
                    return Err(Error::Archive(format!(
                        "archive sample rate {} Hz does not match the scenario",
                        arc.sample_rate
                    )));
                }
                let r = analyze(&scn, arc.to_traces(1.0 / scn.frame_rate))?;
                write_outputs(&scn, &r, &o.out_dir)?;
                print!("{}", summary(&scn, &r));
                Ok(())
            })())
        }
    }
}

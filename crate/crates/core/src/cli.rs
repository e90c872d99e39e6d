//! `qkdnet` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 protocol abort.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::derive_seed;
use crate::netsim::{run_network, sweep_attenuation, write_sweep_csv, NetError, SweepRow};
use crate::router::{build_assignment, wdm_requirements, RouterError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

/// Below this many frames statistical outputs are mostly noise.
pub const MIN_STATISTICAL_FRAMES: u64 = 1000;

pub const DEFAULT_OUT_DIR: &str = "qkdnet-out";

#[derive(Debug, Parser)]
#[command(
    name = "qkdnet",
    version,
    about = "Wavelength-addressed QKD network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; the built-in 4-user network when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Physics {
    /// Frames per session (overrides the config file).
    #[arg(long)]
    n_frames: Option<u64>,
    /// Mean photon number per pulse.
    #[arg(long)]
    mu: Option<f64>,
    /// Optical misalignment error probability.
    #[arg(long)]
    e_opt: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the wavelength assignment of an N-port router.
    RouterTable {
        /// Number of router ports (at least 2)
        #[arg(long)]
        ports: usize,
        /// Directory for assignment.txt and assignment.toml.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one key-agreement session over the simulated network.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        physics: Physics,
        /// unicast, multicast or broadcast.
        #[arg(long)]
        mode: Option<String>,
        /// Directory for key files and the event log.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the extra attenuation and tabulate QBER per wavelength.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        physics: Physics,
        /// First extra attenuation in dB (default 0)
        #[arg(long)]
        start_db: Option<f64>,
        /// Last extra attenuation in dB, inclusive (default 25)
        #[arg(long)]
        stop_db: Option<f64>,
        /// Attenuation step in dB (default 5)
        #[arg(long)]
        step_db: Option<f64>,
        /// CSV output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("output: {0}")]
    Output(#[from] io::Error),
    #[error("{0}")]
    Abort(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Abort(_) => EXIT_ABORT,
            _ => EXIT_USAGE,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::RouterTable {
            ports, out: dir, ..
        } => router_table(ports, dir.as_deref(), out),
        Command::Simulate {
            common,
            physics,
            mode,
            out: dir,
        } => simulate(&common, &physics, mode, dir, out, err),
        Command::Sweep {
            common,
            physics,
            start_db,
            stop_db,
            step_db,
            out: file,
        } => sweep(
            &common,
            &physics,
            [start_db, stop_db, step_db],
            file,
            out,
            err,
        ),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn router_table(ports: usize, dir: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let a = build_assignment(ports)?.with_default_grid();
    let text = format!(
        "{}\n{}\n",
        a.to_text_table().trim_end(),
        wdm_requirements(ports)?
    );
    let toml = a.to_toml();
    write!(out, "{text}\n{toml}")?;
    if let Some(dir) = dir {
        create_dir(dir)?;
        write_file(&dir.join("assignment.txt"), text.as_bytes())?;
        write_file(&dir.join("assignment.toml"), toml.as_bytes())?;
    }
    Ok(())
}

fn load_config(
    common: &Common,
    physics: &Physics,
    err: &mut dyn Write,
) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(n) = physics.n_frames {
        cfg.session.n_frames = n;
        cfg.sweep.n_frames = Some(n);
    }
    if let Some(mu) = physics.mu {
        cfg.source.mean_photon_number = mu;
    }
    if let Some(e) = physics.e_opt {
        cfg.source.optical_error = e;
    }
    let source = cfg.source_model()?;
    if source.above_single_photon_level() {
        writeln!(
            err,
            "warning: mean photon number {} is above the single-photon level",
            source.mean_photon_number()
        )?;
    }
    Ok(cfg)
}

fn warn_frames(n: u64, err: &mut dyn Write) -> io::Result<()> {
    if n < MIN_STATISTICAL_FRAMES {
        writeln!(
            err,
            "warning: {n} frames is below {MIN_STATISTICAL_FRAMES}; statistics will be poor"
        )?;
    }
    Ok(())
}

/// `bits N` header, then the bits MSB-first as hex, zero-padded to a nibble.
pub fn key_to_hex(bits: &[bool]) -> String {
    let mut s = format!("bits {}\n", bits.len());
    for nibble in bits.chunks(4) {
        let v = nibble
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &b)| acc | (b as u32) << (3 - i));
        s.push(char::from_digit(v, 16).expect("nibble"));
    }
    s.push('\n');
    s
}

fn simulate(
    common: &Common,
    physics: &Physics,
    mode: Option<String>,
    dir: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let mut cfg = load_config(common, physics, err)?;
    if let Some(m) = mode {
        cfg.session.mode = m;
    }
    let seed = cfg.seed();
    let spec = cfg.network_spec()?;
    let session = cfg.session_config(&spec, derive_seed(seed, 0))?;
    warn_frames(session.n_frames, err)?;
    let dir = dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    create_dir(&dir)?;

    let run = run_network(&spec, &session, derive_seed(seed, 1))?;
    let mut log = Vec::new();
    run.log.write_to(&mut log)?;
    write_file(&dir.join("events.log"), &log)?;

    writeln!(
        out,
        "session {} {} from {} seed {seed}",
        session.session_id, session.mode, spec.server
    )?;
    match run.outcome {
        Ok(result) => {
            for l in &result.links {
                writeln!(out, "{} ({}) {l}", spec.clients[&l.client].name, l.client)?;
            }
            for (port, key) in &result.client_keys {
                write_file(
                    &dir.join(format!("key_{}.hex", port.label())),
                    key_to_hex(key).as_bytes(),
                )?;
            }
            writeln!(
                out,
                "agreed on {} key bits, reference {}; keys written to {}",
                result.shared_key.len(),
                result.reference,
                dir.display()
            )?;
            Ok(())
        }
        Err(e) => {
            for l in e.link_reports() {
                writeln!(out, "{} ({}) {l}", spec.clients[&l.client].name, l.client)?;
            }
            Err(CliError::Abort(format!("session aborted: {e}")))
        }
    }
}

fn sweep(
    common: &Common,
    physics: &Physics,
    [start, stop, step]: [Option<f64>; 3],
    file: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let mut cfg = load_config(common, physics, err)?;
    if let Some(v) = start {
        cfg.sweep.start_db = v;
    }
    if let Some(v) = stop {
        cfg.sweep.stop_db = v;
    }
    if let Some(v) = step {
        cfg.sweep.step_db = v;
    }
    let points = cfg.sweep_db_points()?;
    let seed = cfg.seed();
    let spec = cfg.network_spec()?;
    let mut session = cfg.session_config(&spec, 0)?;
    session.n_frames = cfg.sweep_frames();
    warn_frames(session.n_frames, err)?;
    let rows = sweep_attenuation(
        &spec,
        &session,
        &points,
        seed,
        cfg.sweep.fiber_alpha_db_per_km,
    )?;

    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv)?;
    let summary = summarize(&rows);
    match file {
        Some(path) => {
            write_file(&path, &csv)?;
            out.write_all(summary.as_bytes())?;
        }
        None => {
            out.write_all(&csv)?;
            err.write_all(summary.as_bytes())?;
        }
    }
    Ok(())
}

/// Min/max QBER per channel, one line each.
fn summarize(rows: &[SweepRow]) -> String {
    let mut by_channel: BTreeMap<_, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        by_channel.entry(r.channel).or_default().push(r);
    }
    let mut s = String::new();
    for (ch, rs) in by_channel {
        let nm = rs[0]
            .channel_nm
            .map_or(String::new(), |v| format!(" {v} nm"));
        let measured: Vec<(f64, f64)> = rs
            .iter()
            .filter_map(|r| r.qber.map(|q| (r.atten_db, q)))
            .collect();
        let line = match (
            measured.iter().min_by(|a, b| a.1.total_cmp(&b.1)),
            measured.iter().max_by(|a, b| a.1.total_cmp(&b.1)),
        ) {
            (Some(lo), Some(hi)) => format!(
                "QBER min {:.4} at {} dB, max {:.4} at {} dB",
                lo.1, lo.0, hi.1, hi.0
            ),
            _ => "no QBER measured".into(),
        };
        let failed = rs
            .iter()
            .filter(|r| r.status != crate::netsim::PointStatus::Ok)
            .count();
        s.push_str(&format!("{ch}{nm} ({}): {line}", rs[0].client));
        if failed > 0 {
            s.push_str(&format!(", {failed} point(s) without agreed key"));
        }
        s.push('\n');
    }
    s
}

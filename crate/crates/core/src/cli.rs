//! Command-line front end.
//!
//! Every data-producing command writes its CSV files and a `manifest.json`
//! into the output directory. `--from-manifest` replays the resolved job
//! stored in a manifest.
//!
//! CSV schemas:
//!
//! | command         | file                | header                                          |
//! |-----------------|---------------------|-------------------------------------------------|
//! | `angle-opt`     | `angle_opt.csv`     | `theta_deg,dmin`                                |
//! | `ber`           | `ber.csv`           | `snr_db,bit_errors,bits,ber,std_err`            |
//! | `sweep-theta`   | `sweep_theta.csv`   | `theta_deg,snr_db,bit_errors,bits,ber,std_err`  |
//! | `abep`          | `abep.csv`          | `snr_db,abep`                                   |
//! | `constellation` | `constellation.csv` | `index,re,im,set_label`                         |

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::abep_curve;
use crate::channel::SnrReference;
use crate::constellation::{
    make_alphabet, minkowski_sum, optimize_rotation, rotate_set, union, write_sets_csv,
    AlphabetKind, RotationAngle,
};
use crate::detector::complexity_count;
use crate::error::{Error, Result};
use crate::modem::{Scheme, SchemeConfig};
use crate::montecarlo::{
    run_ber_curve, sweep_rotation, with_workers, write_ber_csv, write_sweep_csv, SimConfig,
    DEFAULT_BATCH,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_DIR_ENV: &str = "CQSM_OUT_DIR";

const CONVENTIONS: &str =
    "SNR = E_ref / sigma_n^2; E_ref is the mean transmit energy per channel use \
(snr_reference channel-use) or one unit symbol energy (symbol); sigma_h^2 per channel entry; \
angles stored in radians";

#[derive(Debug, Parser)]
#[command(name = "cqsm", version, about = "CQSM link-level simulation")]
pub struct Cli {
    /// Directory for CSV and manifest output.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for Monte Carlo runs. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Replay the job recorded in a manifest.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grid search for the rotation maximizing d_min of the effective set.
    AngleOpt {
        #[arg(long)]
        alphabet: AlphabetKind,
        #[arg(long, default_value_t = 0.1)]
        step_deg: f64,
        #[arg(long, default_value_t = 0.0)]
        lo_deg: f64,
        #[arg(long, default_value_t = 90.0)]
        hi_deg: f64,
    },
    /// Monte Carlo BER curve.
    Ber(SimArgs),
    /// Monte Carlo BER against the rotation angle at one SNR.
    SweepTheta {
        #[command(flatten)]
        sim: SimArgs,
        /// Angle grid in degrees, `start:step:stop` or a comma list.
        #[arg(long)]
        theta_grid_deg: Option<String>,
    },
    /// Union-bound ABEP curve.
    Abep(SimArgs),
    /// Export Ω_a, Ω_b and their Minkowski sum.
    Constellation {
        #[arg(long)]
        alphabet: AlphabetKind,
        #[arg(long, default_value_t = 0.0)]
        theta_deg: f64,
    },
    /// Real operation counts of exhaustive ML detection.
    Complexity {
        #[arg(long)]
        nr: usize,
        #[arg(long)]
        m: usize,
    },
}

/// Simulation flags. The same keys (kebab-case) are accepted in a `--config`
/// JSON file; flags given on the command line win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimArgs {
    /// JSON file with default values for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub nu: Option<usize>,
    #[arg(long)]
    pub nr: Option<usize>,
    #[arg(long)]
    pub alphabet: Option<AlphabetKind>,
    #[arg(long)]
    pub theta_deg: Option<f64>,
    /// SNR grid in dB, `start:step:stop` or a comma list.
    #[arg(long)]
    pub snr: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_trials: Option<u64>,
    #[arg(long)]
    pub target_errors: Option<u64>,
    /// Stop the curve after the first point whose BER falls below this.
    #[arg(long)]
    pub ber_floor: Option<f64>,
    #[arg(long)]
    pub sigma_h_sq: Option<f64>,
    #[arg(long)]
    pub batch: Option<u64>,
    /// `channel-use` (default) or `symbol`.
    #[arg(long)]
    pub snr_reference: Option<SnrReference>,
    /// Leave CQSM vectors unscaled (two unit-energy symbols per use).
    #[arg(long)]
    #[serde(rename = "no-normalize")]
    pub no_normalize: bool,
    /// Accept a CQSM rotation that makes the mapping ambiguous.
    #[arg(long)]
    pub allow_degenerate: bool,
}

impl SimArgs {
    fn merged(&self) -> Result<SimArgs> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let file: SimArgs = serde_json::from_str(&fs::read_to_string(path)?)?;
        Ok(SimArgs {
            config: None,
            scheme: self.scheme.or(file.scheme),
            nt: self.nt.or(file.nt),
            nu: self.nu.or(file.nu),
            nr: self.nr.or(file.nr),
            alphabet: self.alphabet.or(file.alphabet),
            theta_deg: self.theta_deg.or(file.theta_deg),
            snr: self.snr.clone().or(file.snr),
            seed: self.seed.or(file.seed),
            max_trials: self.max_trials.or(file.max_trials),
            target_errors: self.target_errors.or(file.target_errors),
            ber_floor: self.ber_floor.or(file.ber_floor),
            sigma_h_sq: self.sigma_h_sq.or(file.sigma_h_sq),
            batch: self.batch.or(file.batch),
            snr_reference: self.snr_reference.or(file.snr_reference),
            no_normalize: self.no_normalize || file.no_normalize,
            allow_degenerate: self.allow_degenerate || file.allow_degenerate,
        })
    }

    fn resolve(&self) -> Result<SimConfig> {
        let a = self.merged()?;
        let missing = |name: &str| Error::InvalidConfig(format!("missing --{name}"));
        let scheme = a.scheme.ok_or_else(|| missing("scheme"))?;
        let n_t = a.nt.ok_or_else(|| missing("nt"))?;
        let alphabet = a.alphabet.ok_or_else(|| missing("alphabet"))?;
        let theta = RotationAngle::from_degrees(a.theta_deg.unwrap_or(0.0));
        let mut cfg = match scheme {
            Scheme::Sm => SchemeConfig::sm(alphabet, n_t),
            Scheme::Gsm => SchemeConfig::gsm(alphabet, n_t, a.nu.ok_or_else(|| missing("nu"))?),
            Scheme::Qsm => SchemeConfig::qsm(alphabet, n_t),
            Scheme::Cqsm => SchemeConfig::cqsm(alphabet, n_t, theta),
        }
        .with_normalization(!a.no_normalize);
        if a.allow_degenerate {
            cfg = cfg.allowing_degenerate();
        }
        let snr = parse_grid(a.snr.as_deref().ok_or_else(|| missing("snr"))?)?;
        let mut sim = SimConfig::new(
            cfg,
            a.nr.ok_or_else(|| missing("nr"))?,
            snr,
            a.seed.unwrap_or(0),
        );
        if let Some(v) = a.max_trials {
            sim.max_trials = v;
        }
        if let Some(v) = a.target_errors {
            sim.target_error_events = v;
        }
        if let Some(v) = a.ber_floor {
            sim.max_ber_floor = v;
        }
        if let Some(v) = a.sigma_h_sq {
            sim.sigma_h_sq = v;
        }
        sim.batch_trials = a.batch.unwrap_or(DEFAULT_BATCH);
        sim.snr_reference = a.snr_reference.unwrap_or_default();
        sim.validate()?;
        Ok(sim)
    }
}

/// A fully resolved job, as stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    AngleOpt {
        alphabet: AlphabetKind,
        lo: RotationAngle,
        hi: RotationAngle,
        step: f64,
    },
    Ber(SimConfig),
    SweepTheta(SimConfig),
    Abep(SimConfig),
    Constellation {
        alphabet: AlphabetKind,
        theta: RotationAngle,
    },
    Complexity {
        n_r: usize,
        m: usize,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::AngleOpt { .. } => "angle-opt",
            Job::Ber(_) => "ber",
            Job::SweepTheta(_) => "sweep-theta",
            Job::Abep(_) => "abep",
            Job::Constellation { .. } => "constellation",
            Job::Complexity { .. } => "complexity",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Job::Ber(c) | Job::SweepTheta(c) => Some(c.master_seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub job: Job,
    pub master_seed: Option<u64>,
    pub tool_version: String,
    pub timestamp_unix: u64,
    pub conventions: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported manifest schema version {}",
                m.schema_version
            )));
        }
        Ok(m)
    }
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidGrid(format!("not a number: {s:?}")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if !(step > 0.0 && step.is_finite() && start.is_finite() && stop >= start) {
                return Err(Error::InvalidGrid(format!("bad range {text:?}")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => Err(Error::InvalidGrid(format!("bad grid {text:?}"))),
    }
}

fn resolve(cmd: &Command) -> Result<Job> {
    Ok(match cmd {
        Command::AngleOpt {
            alphabet,
            step_deg,
            lo_deg,
            hi_deg,
        } => Job::AngleOpt {
            alphabet: *alphabet,
            lo: RotationAngle::from_degrees(*lo_deg),
            hi: RotationAngle::from_degrees(*hi_deg),
            step: step_deg.to_radians(),
        },
        Command::Ber(a) => Job::Ber(a.resolve()?),
        Command::Abep(a) => Job::Abep(a.resolve()?),
        Command::SweepTheta {
            sim,
            theta_grid_deg,
        } => {
            let grid = parse_grid(
                theta_grid_deg
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("missing --theta-grid-deg".into()))?,
            )?;
            let mut sim = sim.merged()?;
            sim.theta_deg = grid.first().copied();
            let mut cfg = sim.resolve()?;
            cfg.theta_grid = Some(grid.into_iter().map(RotationAngle::from_degrees).collect());
            Job::SweepTheta(cfg)
        }
        Command::Constellation {
            alphabet,
            theta_deg,
        } => Job::Constellation {
            alphabet: *alphabet,
            theta: RotationAngle::from_degrees(*theta_deg),
        },
        Command::Complexity { nr, m } => Job::Complexity { n_r: *nr, m: *m },
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

fn fmt_deg(t: RotationAngle) -> String {
    t.rounded_degrees().to_string()
}

/// Named file contents produced by a job.
pub type JobFiles = Vec<(&'static str, Vec<u8>)>;

/// Runs a job, returning the files to write and the lines to print.
pub fn execute(job: &Job, workers: usize) -> Result<(JobFiles, Vec<String>)> {
    let mut files = Vec::new();
    let mut lines = Vec::new();
    match job {
        Job::AngleOpt {
            alphabet,
            lo,
            hi,
            step,
        } => {
            let search = optimize_rotation(*alphabet, *lo, *hi, *step)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["theta_deg", "dmin"])?;
            for (t, d) in &search.curve {
                w.write_record([fmt_deg(*t), d.to_string()])?;
            }
            files.push((
                "angle_opt.csv",
                w.into_inner().map_err(|e| Error::Io(e.to_string()))?,
            ));
            let optima: Vec<String> = search.angles.iter().map(|t| fmt_deg(*t)).collect();
            if optima.len() > 8 {
                lines.push(format!(
                    "alphabet={} plateau_deg={}:{} points={} dmin={}",
                    alphabet.name(),
                    optima[0],
                    optima[optima.len() - 1],
                    optima.len(),
                    search.dmin
                ));
            } else {
                lines.push(format!(
                    "alphabet={} optima_deg={} dmin={}",
                    alphabet.name(),
                    optima.join(","),
                    search.dmin
                ));
            }
        }
        Job::Ber(cfg) => {
            let points = with_workers(workers, || run_ber_curve(cfg))??;
            let mut buf = Vec::new();
            write_ber_csv(&mut buf, &points)?;
            files.push(("ber.csv", buf));
            lines.push(format!("points={}", points.len()));
        }
        Job::SweepTheta(cfg) => {
            let sweep = with_workers(workers, || sweep_rotation(cfg))??;
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, &sweep)?;
            files.push(("sweep_theta.csv", buf));
            let plateau: Vec<String> = sweep.plateau.iter().map(|t| fmt_deg(*t)).collect();
            lines.push(format!(
                "theta_opt_deg={} plateau_deg={}",
                fmt_deg(sweep.theta_opt),
                plateau.join(",")
            ));
        }
        Job::Abep(cfg) => {
            let curve = abep_curve(
                &cfg.scheme,
                &cfg.snr_grid,
                cfg.n_r,
                cfg.sigma_h_sq,
                cfg.snr_reference,
            )?;
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            files.push(("abep.csv", buf));
        }
        Job::Constellation { alphabet, theta } => {
            let a = make_alphabet(*alphabet);
            let b = rotate_set(&a, *theta);
            let c = minkowski_sum(&a, &b);
            let d = union(&[&a, &b, &c]);
            let mut buf = Vec::new();
            write_sets_csv(&mut buf, &[&a, &b, &c])?;
            files.push(("constellation.csv", buf));
            lines.push(format!(
                "points={} dmin={}",
                d.len(),
                crate::constellation::min_distance(&d)?
            ));
        }
        Job::Complexity { n_r, m } => {
            if *n_r == 0 || *m > 62 {
                return Err(Error::InvalidConfig("need nr >= 1 and m <= 62".into()));
            }
            let r = complexity_count(*n_r, *m);
            lines.push(format!(
                "mults={} adds={}",
                r.real_multiplications, r.real_additions
            ));
        }
    }
    Ok((files, lines))
}

fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let job = match (&cli.from_manifest, &cli.command) {
        (Some(path), None) => RunManifest::load(path)?.job,
        (None, Some(cmd)) => resolve(cmd)?,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "--from-manifest takes no subcommand".into(),
            ))
        }
        (None, None) => return Err(Error::InvalidConfig("no subcommand given".into())),
    };
    if cli.workers == 0 {
        return Err(Error::InvalidConfig("--workers must be at least 1".into()));
    }
    let (files, lines) = execute(&job, cli.workers)?;
    if !files.is_empty() {
        fs::create_dir_all(&cli.out_dir)?;
        let mut outputs = Vec::new();
        for (name, bytes) in &files {
            let path = cli.out_dir.join(name);
            write_atomic(&path, bytes)?;
            outputs.push(path);
        }
        let manifest_path = cli.out_dir.join(MANIFEST_FILE);
        outputs.push(manifest_path.clone());
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: job.name().to_string(),
            master_seed: job.seed(),
            job,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            conventions: CONVENTIONS.to_string(),
            outputs,
        };
        write_atomic(&manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;
    }
    for line in lines {
        writeln!(stdout, "{line}")?;
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs it. Returns the exit status.
pub fn run_cli<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

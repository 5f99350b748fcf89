//! Deterministic Monte Carlo BER harness.
//!
//! A trial is one channel use: fresh random bits, a fresh channel and fresh
//! noise, all drawn from the stream selected by `(master_seed, point, trial)`.
//! Trials run in fixed-size batches; the stopping rule is only checked between
//! batches and counters are integer sums, so the result does not depend on the
//! number of workers.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel, stream_rng, transmit, SnrReference, SnrSpec};
use crate::constellation::RotationAngle;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::modem::{Modem, Scheme, SchemeConfig, TxHypothesis};

/// Trials per stopping-rule check.
pub const DEFAULT_BATCH: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scheme: SchemeConfig,
    pub n_r: usize,
    /// SNR points in dB. `inf` gives a noiseless point.
    pub snr_grid: Vec<f64>,
    #[serde(default)]
    pub theta_grid: Option<Vec<RotationAngle>>,
    pub master_seed: u64,
    pub max_trials: u64,
    #[serde(default = "default_target")]
    pub target_error_events: u64,
    /// Points after the first one whose BER falls below this value are skipped.
    #[serde(default)]
    pub max_ber_floor: f64,
    #[serde(default = "default_sigma_h")]
    pub sigma_h_sq: f64,
    #[serde(default = "default_batch")]
    pub batch_trials: u64,
    #[serde(default)]
    pub snr_reference: SnrReference,
}

fn default_target() -> u64 {
    200
}

fn default_sigma_h() -> f64 {
    1.0
}

fn default_batch() -> u64 {
    DEFAULT_BATCH
}

impl SimConfig {
    pub fn new(scheme: SchemeConfig, n_r: usize, snr_grid: Vec<f64>, master_seed: u64) -> Self {
        SimConfig {
            scheme,
            n_r,
            snr_grid,
            theta_grid: None,
            master_seed,
            max_trials: 1_000_000,
            target_error_events: default_target(),
            max_ber_floor: 0.0,
            sigma_h_sq: 1.0,
            batch_trials: DEFAULT_BATCH,
            snr_reference: SnrReference::ChannelUse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.snr_grid.is_empty() {
            return bad("SNR grid is empty");
        }
        if self
            .snr_grid
            .iter()
            .any(|s| s.is_nan() || *s == f64::NEG_INFINITY)
        {
            return bad("SNR values must be numbers or +inf");
        }
        if matches!(&self.theta_grid, Some(g) if g.is_empty()) {
            return bad("theta grid is empty");
        }
        if self.max_trials == 0 {
            return bad("max_trials must be at least 1");
        }
        if self.batch_trials == 0 {
            return bad("batch_trials must be at least 1");
        }
        if self.n_r == 0 {
            return bad("n_r must be at least 1");
        }
        if self.sigma_h_sq.is_nan() || self.sigma_h_sq <= 0.0 {
            return bad("sigma_h_sq must be positive");
        }
        self.scheme.validate()
    }

    fn snr_spec(&self, snr_db: f64) -> SnrSpec {
        SnrSpec::for_config(snr_db, &self.scheme, self.snr_reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits_simulated: u64,
    pub trials: u64,
    pub ber: f64,
    pub std_error: f64,
}

impl BerPoint {
    pub fn from_counts(snr_db: f64, bit_errors: u64, bits_simulated: u64, trials: u64) -> Self {
        let ber = if bits_simulated == 0 {
            0.0
        } else {
            bit_errors as f64 / bits_simulated as f64
        };
        let std_error = if bits_simulated == 0 {
            0.0
        } else {
            (ber * (1.0 - ber) / bits_simulated as f64).sqrt()
        };
        BerPoint {
            snr_db,
            bit_errors,
            bits_simulated,
            trials,
            ber,
            std_error,
        }
    }
}

/// Runs batches of `trial` until `target_errors` or `max_trials` is reached.
///
/// `trial` maps a per-trial stream to `(bit_errors, bits)`. This is the
/// engine under every BER estimate and can be driven by any generator.
pub fn simulate_point<F>(
    master_seed: u64,
    point: u64,
    max_trials: u64,
    target_errors: u64,
    batch: u64,
    trial: F,
) -> (u64, u64, u64)
where
    F: Fn(&mut ChaCha8Rng) -> (u64, u64) + Sync,
{
    let (mut errors, mut bits, mut done) = (0u64, 0u64, 0u64);
    while done < max_trials && errors < target_errors {
        let end = (done + batch).min(max_trials);
        let (e, b) = (done..end)
            .into_par_iter()
            .map(|t| trial(&mut stream_rng(master_seed, point, t)))
            .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
        errors += e;
        bits += b;
        done = end;
    }
    (errors, bits, done)
}

fn link_trial(
    detector: &Detector,
    n_r: usize,
    sigma_h_sq: f64,
    snr: &SnrSpec,
    rng: &mut ChaCha8Rng,
) -> (u64, u64) {
    let modem = detector.modem();
    let sent = rng.gen_range(0..modem.message_count());
    let h = sample_channel(n_r, modem.config().n_t, sigma_h_sq, rng);
    let tx = modem.modulate_index(sent);
    let y = transmit(&h, &tx, snr, rng).expect("dimensions fixed by configuration");
    let (got, _) = detector.search_fast(&y, &h);
    (
        (sent ^ got).count_ones() as u64,
        modem.bits_per_use() as u64,
    )
}

/// One BER point per SNR in `config.snr_grid`.
pub fn run_ber_curve(config: &SimConfig) -> Result<Vec<BerPoint>> {
    config.validate()?;
    let detector = Detector::new(config.scheme)?;
    let mut out = Vec::with_capacity(config.snr_grid.len());
    for (i, &snr_db) in config.snr_grid.iter().enumerate() {
        let p = simulate_ber_point(config, &detector, snr_db, i as u64);
        let stop = config.max_ber_floor > 0.0 && p.ber < config.max_ber_floor;
        out.push(p);
        if stop {
            break;
        }
    }
    Ok(out)
}

fn simulate_ber_point(
    config: &SimConfig,
    detector: &Detector,
    snr_db: f64,
    point: u64,
) -> BerPoint {
    let snr = config.snr_spec(snr_db);
    let (errors, bits, trials) = simulate_point(
        config.master_seed,
        point,
        config.max_trials,
        config.target_error_events,
        config.batch_trials,
        |rng| link_trial(detector, config.n_r, config.sigma_h_sq, &snr, rng),
    );
    BerPoint::from_counts(snr_db, errors, bits, trials)
}

/// Runs `f` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<(RotationAngle, BerPoint)>,
    /// Angle of the lowest observed BER (first on ties).
    pub theta_opt: RotationAngle,
    /// Angles whose BER is within one combined standard error of the minimum.
    pub plateau: Vec<RotationAngle>,
}

/// BER against θ at the first SNR of the grid.
pub fn sweep_rotation(config: &SimConfig) -> Result<SweepResult> {
    if config.scheme.scheme != Scheme::Cqsm {
        return Err(Error::InvalidConfig(
            "rotation sweeps need a CQSM configuration".into(),
        ));
    }
    let grid = config
        .theta_grid
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("rotation sweep needs a theta grid".into()))?;
    let snr_db = *config
        .snr_grid
        .first()
        .ok_or_else(|| Error::InvalidConfig("SNR grid is empty".into()))?;
    let mut points = Vec::with_capacity(grid.len());
    for &theta in grid {
        let mut cfg = config.clone();
        cfg.scheme.theta = theta;
        cfg.validate()?;
        let detector = Detector::new(cfg.scheme)?;
        // Streams are keyed by the SNR index, so every angle sees the same
        // bits, channels and noise.
        points.push((theta, simulate_ber_point(&cfg, &detector, snr_db, 0)));
    }
    let (theta_opt, best) = points
        .iter()
        .fold(
            None::<(RotationAngle, BerPoint)>,
            |acc, &(t, p)| match acc {
                Some((_, b)) if b.ber <= p.ber => acc,
                _ => Some((t, p)),
            },
        )
        .expect("grid is non-empty");
    let plateau = points
        .iter()
        .filter(|(_, p)| p.ber - best.ber <= (p.std_error.powi(2) + best.std_error.powi(2)).sqrt())
        .map(|&(t, _)| t)
        .collect();
    Ok(SweepResult {
        points,
        theta_opt,
        plateau,
    })
}

/// Fractions of random CQSM messages with `α = β` and with `α ≠ β`.
pub fn empirical_probabilities(config: &SimConfig, trials: u64) -> Result<(f64, f64)> {
    if config.scheme.scheme != Scheme::Cqsm {
        return Err(Error::InvalidConfig(
            "collision statistics need a CQSM configuration".into(),
        ));
    }
    let modem = Modem::new(config.scheme)?;
    let (hits, _, n) = simulate_point(
        config.master_seed,
        u64::MAX,
        trials,
        u64::MAX,
        config.batch_trials.max(1),
        |rng| {
            let idx = rng.gen_range(0..modem.message_count());
            match modem.hypothesis(idx) {
                TxHypothesis::Cqsm { alpha, beta, .. } => ((alpha == beta) as u64, 1),
                _ => unreachable!("CQSM modem"),
            }
        },
    );
    let p = hits as f64 / n as f64;
    Ok((p, 1.0 - p))
}

/// CSV with header `snr_db,bit_errors,bits,ber,std_err`.
pub fn write_ber_csv<W: Write>(out: W, points: &[BerPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["snr_db", "bit_errors", "bits", "ber", "std_err"])?;
    for p in points {
        w.write_record([
            p.snr_db.to_string(),
            p.bit_errors.to_string(),
            p.bits_simulated.to_string(),
            p.ber.to_string(),
            p.std_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `theta_deg,snr_db,bit_errors,bits,ber,std_err`.
pub fn write_sweep_csv<W: Write>(out: W, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "theta_deg",
        "snr_db",
        "bit_errors",
        "bits",
        "ber",
        "std_err",
    ])?;
    for (t, p) in &sweep.points {
        w.write_record([
            t.rounded_degrees().to_string(),
            p.snr_db.to_string(),
            p.bit_errors.to_string(),
            p.bits_simulated.to_string(),
            p.ber.to_string(),
            p.std_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// SNR (dB) where `log10(BER)` crosses `log10(target)`, by linear
/// interpolation between the first bracketing pair of points.
pub fn snr_at_ber(points: &[BerPoint], target: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        if a.ber >= target && b.ber < target && b.ber > 0.0 {
            let (la, lb, lt) = (a.ber.log10(), b.ber.log10(), target.log10());
            Some(a.snr_db + (la - lt) / (la - lb) * (b.snr_db - a.snr_db))
        } else {
            None
        }
    })
}

//! Union-bound error analysis over i.i.d. Rayleigh fading.
//!
//! For two received hypotheses `g` and `ĝ` the conditional pairwise error
//! probability is `Q(√ζ)` with `ζ = ‖g − ĝ‖² / (2σ_n²)`. Averaged over the
//! channel, each receive antenna contributes an exponential term of mean
//! `ζ̄` (computed by [`expected_zeta`]), and [`average_pep`] gives the exact
//! average for `n_R` independent branches. [`abep_bound`] weights every pair
//! by its Hamming distance.

use std::io::Write;

use num_complex::Complex64;

use crate::channel::{SnrReference, SnrSpec};
use crate::error::{Error, Result};
use crate::modem::{Modem, Scheme, SchemeConfig, TxHypothesis};

/// Largest spectral efficiency [`abep_bound`] will enumerate. The cost is `O(4^M)`.
pub const MAX_BOUND_BITS: usize = 16;

/// Gaussian tail probability `Q(x) = ½ erfc(x/√2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// A transmitted and a competing hypothesis, each as two antenna/amplitude pairs.
///
/// Amplitudes are radiated values. For CQSM `x_a`, `x_b` are the two symbols;
/// for QSM they are the real part and `j` times the imaginary part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisPair {
    pub alpha: usize,
    pub beta: usize,
    pub alpha_hat: usize,
    pub beta_hat: usize,
    pub x_a: Complex64,
    pub x_b: Complex64,
    pub x_a_hat: Complex64,
    pub x_b_hat: Complex64,
}

impl HypothesisPair {
    /// The pair with true and competing hypotheses exchanged.
    pub fn swapped(&self) -> Self {
        HypothesisPair {
            alpha: self.alpha_hat,
            beta: self.beta_hat,
            alpha_hat: self.alpha,
            beta_hat: self.beta,
            x_a: self.x_a_hat,
            x_b: self.x_b_hat,
            x_a_hat: self.x_a,
            x_b_hat: self.x_b,
        }
    }

    /// Builds the pair for messages `i` (sent) and `k` (decided).
    pub fn from_messages(modem: &Modem, i: u64, k: u64) -> Result<Self> {
        let (alpha, beta, x_a, x_b) = two_entry_form(modem, i)?;
        let (alpha_hat, beta_hat, x_a_hat, x_b_hat) = two_entry_form(modem, k)?;
        Ok(HypothesisPair {
            alpha,
            beta,
            alpha_hat,
            beta_hat,
            x_a,
            x_b,
            x_a_hat,
            x_b_hat,
        })
    }

    /// Per-antenna coefficients of `g − ĝ` in units of the channel columns.
    fn column_coefficients(&self) -> Vec<(usize, Complex64)> {
        let mut out: Vec<(usize, Complex64)> = Vec::with_capacity(4);
        let terms = [
            (self.alpha, self.x_a),
            (self.beta, self.x_b),
            (self.alpha_hat, -self.x_a_hat),
            (self.beta_hat, -self.x_b_hat),
        ];
        for (a, c) in terms {
            match out.iter_mut().find(|(b, _)| *b == a) {
                Some((_, acc)) => *acc += c,
                None => out.push((a, c)),
            }
        }
        out
    }

    /// True when a true-side antenna coincides with the *other* competing
    /// antenna (`α = β̂` or `β = α̂`) without the rows already accounting for it.
    pub fn has_cross_coincidence(&self) -> bool {
        let same_true = self.alpha == self.beta;
        let same_hat = self.alpha_hat == self.beta_hat;
        if same_true || same_hat {
            return false;
        }
        self.alpha == self.beta_hat || self.beta == self.alpha_hat
    }
}

fn two_entry_form(modem: &Modem, index: u64) -> Result<(usize, usize, Complex64, Complex64)> {
    let scale = modem.scale();
    match modem.hypothesis(index) {
        TxHypothesis::Cqsm {
            alpha,
            beta,
            s_a,
            s_b,
        } => Ok((alpha, beta, s_a * scale, s_b * scale)),
        TxHypothesis::Qsm {
            real_antenna,
            imag_antenna,
            symbol,
        } => Ok((
            real_antenna,
            imag_antenna,
            Complex64::new(symbol.re * scale, 0.0),
            Complex64::new(0.0, symbol.im * scale),
        )),
        _ => Err(Error::InvalidConfig(format!(
            "closed-form analysis covers CQSM and QSM, not {}",
            modem.config().scheme
        ))),
    }
}

/// Which of the twelve index-equality rows a pair falls into.
///
/// The flags are `(α = β, α̂ = β̂, α = α̂, β = β̂)`; the four combinations
/// that are logically impossible are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ZetaCase {
    pub row: usize,
}

impl ZetaCase {
    pub const ROWS: usize = 12;

    /// Flag tuple of each row, in table order.
    pub const FLAGS: [(bool, bool, bool, bool); 12] = [
        (false, false, false, false),
        (false, false, true, false),
        (false, false, false, true),
        (false, false, true, true),
        (true, false, false, false),
        (true, false, true, false),
        (true, false, false, true),
        (false, true, false, false),
        (false, true, true, false),
        (false, true, false, true),
        (true, true, false, false),
        (true, true, true, true),
    ];

    pub fn classify(pair: &HypothesisPair) -> ZetaCase {
        let flags = (
            pair.alpha == pair.beta,
            pair.alpha_hat == pair.beta_hat,
            pair.alpha == pair.alpha_hat,
            pair.beta == pair.beta_hat,
        );
        let row = Self::FLAGS
            .iter()
            .position(|f| *f == flags)
            .expect("index equalities are transitive, so only twelve flag tuples occur")
            + 1;
        ZetaCase { row }
    }

    /// The row's energy term, before the `σ_h²/(2σ_n²)` prefactor.
    pub fn energy(self, p: &HypothesisPair) -> f64 {
        let (xa, xb, ya, yb) = (p.x_a, p.x_b, p.x_a_hat, p.x_b_hat);
        let n = |z: Complex64| z.norm_sqr();
        match self.row {
            1 => n(xa) + n(xb) + n(ya) + n(yb),
            2 => n(xa - ya) + n(xb) + n(yb),
            3 => n(xb - yb) + n(xa) + n(ya),
            4 => n(xa - ya) + n(xb - yb),
            5 => n(xa + xb) + n(ya) + n(yb),
            6 => n(xa + xb - ya) + n(yb),
            7 => n(xa + xb - yb) + n(ya),
            8 => n(ya + yb) + n(xa) + n(xb),
            9 => n(xa - ya - yb) + n(xb),
            10 => n(xb - ya - yb) + n(xa),
            11 => n(xa + xb) + n(ya + yb),
            12 => n(xa + xb - ya - yb),
            _ => unreachable!("rows are 1..=12"),
        }
    }
}

/// `E‖g − ĝ‖²` per receive antenna divided by `σ_h²`, from the exact column
/// coefficients. Agrees with [`ZetaCase::energy`] whenever there is no cross
/// coincidence.
pub fn difference_energy(pair: &HypothesisPair) -> f64 {
    pair.column_coefficients()
        .iter()
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// Mean of ζ for one receive antenna.
///
/// Uses the twelve-row table; pairs with a cross coincidence (`α = β̂` or
/// `β = α̂` with both sides on distinct antennas) share a channel column the
/// table does not model, so they fall back to the exact column coefficients.
pub fn expected_zeta(pair: &HypothesisPair, sigma_h_sq: f64, sigma_n_sq: f64) -> f64 {
    let energy = if pair.has_cross_coincidence() {
        difference_energy(pair)
    } else {
        ZetaCase::classify(pair).energy(pair)
    };
    sigma_h_sq / (2.0 * sigma_n_sq) * energy
}

/// Exact average PEP over `n_r` i.i.d. Rayleigh branches with per-branch mean `zeta_bar`.
pub fn average_pep(zeta_bar: f64, n_r: usize) -> f64 {
    assert!(n_r >= 1, "need at least one receive antenna");
    if zeta_bar.is_infinite() {
        return 0.0;
    }
    let half = zeta_bar / 2.0;
    let gamma = 0.5 * (1.0 - (half / (1.0 + half)).sqrt());
    // term_k = C(n_r − 1 + k, k) (1 − γ)^k, built by its ratio to term_{k−1}.
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..n_r {
        term *= (n_r - 1 + k) as f64 / k as f64 * (1.0 - gamma);
        sum += term;
    }
    gamma.powi(n_r as i32) * sum
}

/// Union bound on the bit-error probability for CQSM or QSM.
pub fn abep_bound(
    config: &SchemeConfig,
    snr: &SnrSpec,
    n_r: usize,
    sigma_h_sq: f64,
) -> Result<f64> {
    if !matches!(config.scheme, Scheme::Cqsm | Scheme::Qsm) {
        return Err(Error::InvalidConfig(format!(
            "closed-form analysis covers CQSM and QSM, not {}",
            config.scheme
        )));
    }
    let modem = Modem::new(*config)?;
    let m = modem.bits_per_use();
    if m > MAX_BOUND_BITS {
        return Err(Error::BoundTooLarge {
            m,
            max: MAX_BOUND_BITS,
        });
    }
    let count = modem.message_count();
    let forms: Vec<_> = (0..count)
        .map(|i| two_entry_form(&modem, i))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for i in 0..count {
        let (alpha, beta, x_a, x_b) = forms[i as usize];
        let mut row = 0.0;
        for k in 0..count {
            if k == i {
                continue;
            }
            let (alpha_hat, beta_hat, x_a_hat, x_b_hat) = forms[k as usize];
            let pair = HypothesisPair {
                alpha,
                beta,
                alpha_hat,
                beta_hat,
                x_a,
                x_b,
                x_a_hat,
                x_b_hat,
            };
            let zeta = expected_zeta(&pair, sigma_h_sq, snr.sigma_n_sq);
            row += average_pep(zeta, n_r) * (i ^ k).count_ones() as f64;
        }
        total += row;
    }
    Ok(total / (count as f64 * m as f64))
}

/// `(snr_db, abep)` points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AbepCurve {
    pub points: Vec<(f64, f64)>,
}

impl AbepCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["snr_db", "abep"])?;
        for (snr, p) in &self.points {
            w.write_record([snr.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The bound on an SNR grid.
pub fn abep_curve(
    config: &SchemeConfig,
    snr_grid: &[f64],
    n_r: usize,
    sigma_h_sq: f64,
    reference: SnrReference,
) -> Result<AbepCurve> {
    let points = snr_grid
        .iter()
        .map(|&db| {
            let snr = SnrSpec::for_config(db, config, reference);
            abep_bound(config, &snr, n_r, sigma_h_sq).map(|p| (db, p))
        })
        .collect::<Result<_>>()?;
    Ok(AbepCurve { points })
}

//! Rayleigh fading and AWGN.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::{SchemeConfig, TxVector};

/// A counter-derived random stream.
///
/// Each `(master_seed, point, trial)` triple selects its own ChaCha8 stream,
/// so a trial's draws do not depend on which worker runs it or in what order.
pub fn stream_rng(master_seed: u64, point: u64, trial: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&point.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(trial);
    rng
}

/// A standard circularly symmetric complex Gaussian draw scaled to variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let sd = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sd, im * sd)
}

/// An `n_r × n_t` channel, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    n_r: usize,
    n_t: usize,
    data: Vec<Complex64>,
}

impl ChannelMatrix {
    /// Builds a matrix from its columns.
    pub fn from_columns(columns: Vec<Vec<Complex64>>) -> Result<Self> {
        let n_t = columns.len();
        let n_r = columns.first().map_or(0, Vec::len);
        if n_t == 0 || n_r == 0 || columns.iter().any(|c| c.len() != n_r) {
            return Err(Error::Dimension(
                "columns must be non-empty and equal length".into(),
            ));
        }
        Ok(ChannelMatrix {
            n_r,
            n_t,
            data: columns.into_iter().flatten().collect(),
        })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Column for a 1-based antenna index.
    pub fn column(&self, antenna: usize) -> &[Complex64] {
        let k = antenna - 1;
        &self.data[k * self.n_r..(k + 1) * self.n_r]
    }

    /// Entry at 0-based (row, col).
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[col * self.n_r + row]
    }

    /// Dense product `H x`.
    pub fn mul_dense(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n_t {
            return Err(Error::Dimension(format!(
                "vector has {} entries, channel has {} columns",
                x.len(),
                self.n_t
            )));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.n_r];
        for (col, xi) in x.iter().enumerate() {
            for (row, yr) in y.iter_mut().enumerate() {
                *yr += self.get(row, col) * xi;
            }
        }
        Ok(y)
    }
}

/// Draws an i.i.d. CN(0, σ_h²) channel.
pub fn sample_channel<R: Rng + ?Sized>(
    n_r: usize,
    n_t: usize,
    sigma_h_sq: f64,
    rng: &mut R,
) -> ChannelMatrix {
    assert!(n_r >= 1 && n_t >= 1, "channel dimensions must be positive");
    assert!(sigma_h_sq > 0.0, "channel variance must be positive");
    let data = (0..n_r * n_t)
        .map(|_| complex_gaussian(rng, sigma_h_sq))
        .collect();
    ChannelMatrix { n_r, n_t, data }
}

/// The energy an SNR value is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrReference {
    /// Mean ‖s‖² per channel use.
    #[default]
    ChannelUse,
    /// Unit energy per modulated symbol. An unnormalized CQSM vector then
    /// carries twice the reference energy.
    Symbol,
}

impl std::str::FromStr for SnrReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channel-use" => Ok(SnrReference::ChannelUse),
            "symbol" => Ok(SnrReference::Symbol),
            _ => Err(Error::InvalidConfig(format!(
                "SNR reference must be channel-use or symbol, got {s:?}"
            ))),
        }
    }
}

/// Operating point: SNR = 10 log10(E_tx / σ_n²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrSpec {
    pub snr_db: f64,
    pub sigma_n_sq: f64,
}

impl SnrSpec {
    /// `tx_energy` is the mean ‖s‖² per channel use.
    pub fn from_db(snr_db: f64, tx_energy: f64) -> Self {
        SnrSpec {
            snr_db,
            sigma_n_sq: tx_energy / 10f64.powf(snr_db / 10.0),
        }
    }

    /// SNR for `config` measured against `reference`. `+inf` is noiseless.
    pub fn for_config(snr_db: f64, config: &SchemeConfig, reference: SnrReference) -> Self {
        if snr_db == f64::INFINITY {
            return SnrSpec::noiseless();
        }
        let energy = match reference {
            SnrReference::ChannelUse => config.transmit_energy(),
            SnrReference::Symbol => 1.0,
        };
        SnrSpec::from_db(snr_db, energy)
    }

    pub fn noiseless() -> Self {
        SnrSpec {
            snr_db: f64::INFINITY,
            sigma_n_sq: 0.0,
        }
    }
}

/// `y = Σ h_a s_a + n`, summing only the active columns.
pub fn transmit<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    s: &TxVector,
    snr: &SnrSpec,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if s.n_t != h.n_t {
        return Err(Error::Dimension(format!(
            "transmit vector spans {} antennas, channel has {}",
            s.n_t, h.n_t
        )));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); h.n_r];
    for (antenna, amp) in s.radiated() {
        if antenna == 0 || antenna > h.n_t {
            return Err(Error::AntennaIndex {
                index: antenna,
                n_t: h.n_t,
            });
        }
        for (yr, hr) in y.iter_mut().zip(h.column(antenna)) {
            *yr += hr * amp;
        }
    }
    if snr.sigma_n_sq > 0.0 {
        for yr in y.iter_mut() {
            *yr += complex_gaussian(rng, snr.sigma_n_sq);
        }
    }
    Ok(y)
}

//! Bit mapping for SM, GSM, QSM and CQSM.
//!
//! Every scheme splits a bit block, most significant bit first, into a
//! signal part and a spatial part:
//!
//! | scheme | layout |
//! |--------|--------|
//! | SM     | `[symbol: q][antenna: log2 nT]` |
//! | GSM    | `[symbol: q][combination: floor(log2 C(nT, nU))]` |
//! | QSM    | `[symbol: q][real antenna: log2 nT][imag antenna: log2 nT]` |
//! | CQSM   | `[s_a: q][s_b: q][alpha: log2 nT][beta: log2 nT]` |
//!
//! Antenna fields are natural binary with offset one (`00` is antenna 1).
//! A message index is the bit block read as an unsigned integer, so
//! enumerating `0..2^M` enumerates messages in bit-block order.
//!
//! Symbols are held in *raw* coordinates: QPSK on `±1 ± j`, 16QAM on the
//! `{±1, ±3}²` grid, PSK on the unit circle. [`TxVector::scale`] carries the
//! factor that brings the raw entries to the radiated amplitude.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::{AlphabetKind, ComplexSymbol, RotationAngle, DUPLICATE_TOLERANCE};
use crate::error::{Error, Result};

/// Largest spectral efficiency the modem accepts; message indices are `u64`.
pub const MAX_BITS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Sm,
    Gsm,
    Qsm,
    Cqsm,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sm => "SM",
            Scheme::Gsm => "GSM",
            Scheme::Qsm => "QSM",
            Scheme::Cqsm => "CQSM",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sm" => Ok(Scheme::Sm),
            "gsm" => Ok(Scheme::Gsm),
            "qsm" => Ok(Scheme::Qsm),
            "cqsm" => Ok(Scheme::Cqsm),
            _ => Err(Error::UnsupportedScheme(s.to_string())),
        }
    }
}

/// Transmitter configuration shared by modulator, detector and analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub n_t: usize,
    /// Active antennas per channel use (GSM only).
    #[serde(default = "one")]
    pub n_u: usize,
    pub alphabet: AlphabetKind,
    /// Rotation of the second CQSM alphabet.
    #[serde(default = "zero_angle")]
    pub theta: RotationAngle,
    /// Scale CQSM vectors by 1/√2 so every scheme radiates unit energy per channel use.
    #[serde(default = "yes")]
    pub normalize_power: bool,
    /// Accept an ambiguous CQSM rotation. Only meant for reproducing the
    /// unrotated illustration where both symbols share one alphabet.
    #[serde(default)]
    pub allow_degenerate: bool,
}

fn one() -> usize {
    1
}

fn zero_angle() -> RotationAngle {
    RotationAngle::ZERO
}

fn yes() -> bool {
    true
}

impl SchemeConfig {
    pub fn sm(alphabet: AlphabetKind, n_t: usize) -> Self {
        SchemeConfig {
            scheme: Scheme::Sm,
            n_t,
            n_u: 1,
            alphabet,
            theta: RotationAngle::ZERO,
            normalize_power: true,
            allow_degenerate: false,
        }
    }

    pub fn gsm(alphabet: AlphabetKind, n_t: usize, n_u: usize) -> Self {
        SchemeConfig {
            scheme: Scheme::Gsm,
            n_u,
            ..Self::sm(alphabet, n_t)
        }
    }

    pub fn qsm(alphabet: AlphabetKind, n_t: usize) -> Self {
        SchemeConfig {
            scheme: Scheme::Qsm,
            ..Self::sm(alphabet, n_t)
        }
    }

    pub fn cqsm(alphabet: AlphabetKind, n_t: usize, theta: RotationAngle) -> Self {
        SchemeConfig {
            scheme: Scheme::Cqsm,
            theta,
            ..Self::sm(alphabet, n_t)
        }
    }

    pub fn with_normalization(mut self, on: bool) -> Self {
        self.normalize_power = on;
        self
    }

    /// Test-only escape hatch for the unrotated CQSM illustration.
    pub fn allowing_degenerate(mut self) -> Self {
        self.allow_degenerate = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_t == 0 {
            return bad("n_t must be at least 1".into());
        }
        match self.scheme {
            Scheme::Gsm => {
                if self.n_u == 0 || self.n_u > self.n_t {
                    return bad(format!("GSM needs 1 <= n_u <= n_t, got n_u = {}", self.n_u));
                }
            }
            _ => {
                if !self.n_t.is_power_of_two() {
                    return bad(format!(
                        "{} needs a power-of-two n_t, got {}",
                        self.scheme, self.n_t
                    ));
                }
            }
        }
        if self.scheme == Scheme::Qsm && self.n_t > 1 {
            let map = BitMap::for_alphabet(self.alphabet);
            let on_axis = map
                .points
                .iter()
                .any(|p| p.re.abs() < 1e-12 || p.im.abs() < 1e-12);
            if on_axis {
                return bad(format!(
                    "QSM cannot use {}: a symbol with a zero component leaves its antenna bits unobservable",
                    self.alphabet.name()
                ));
            }
        }
        if self.scheme == Scheme::Cqsm {
            let t = self.theta.radians();
            if !(0.0..=FRAC_PI_2 + 1e-12).contains(&t) {
                return bad(format!(
                    "CQSM rotation must lie in [0, 90] deg, got {}",
                    self.theta.degrees()
                ));
            }
            if !self.allow_degenerate && cqsm_is_ambiguous(self.alphabet, self.theta) {
                return Err(Error::DegenerateAngle {
                    alphabet: self.alphabet.name().into(),
                    theta_deg: self.theta.degrees(),
                });
            }
        }
        let m = spectral_efficiency(self);
        if m > MAX_BITS {
            return bad(format!("spectral efficiency {m} exceeds {MAX_BITS} bits"));
        }
        Ok(())
    }

    /// log2(n_t) for the power-of-two schemes.
    pub fn antenna_bits(&self) -> usize {
        self.n_t.trailing_zeros() as usize
    }

    /// Mean ‖s‖² per channel use under this configuration.
    pub fn transmit_energy(&self) -> f64 {
        match self.scheme {
            Scheme::Cqsm if !self.normalize_power => 2.0,
            _ => 1.0,
        }
    }
}

/// Bits per channel use (M).
pub fn spectral_efficiency(config: &SchemeConfig) -> usize {
    let q = config.alphabet.bits_per_symbol() as usize;
    match config.scheme {
        Scheme::Sm => q + config.antenna_bits(),
        Scheme::Gsm => q + gsm_combination_bits(config.n_t, config.n_u),
        Scheme::Qsm => q + 2 * config.antenna_bits(),
        Scheme::Cqsm => 2 * q + 2 * config.antenna_bits(),
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// ⌊log2 C(n_t, n_u)⌋.
pub fn gsm_combination_bits(n_t: usize, n_u: usize) -> usize {
    let c = binomial(n_t, n_u);
    if c == 0 {
        0
    } else {
        (127 - c.leading_zeros()) as usize
    }
}

/// The first `count` n_u-subsets of `1..=n_t` in lexicographic order.
pub fn gsm_combinations(n_t: usize, n_u: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    if n_u == 0 || n_u > n_t {
        return out;
    }
    let mut comb: Vec<usize> = (1..=n_u).collect();
    while out.len() < count {
        out.push(comb.clone());
        // Advance to the next combination.
        let mut i = n_u;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if comb[i] < n_t - (n_u - 1 - i) {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..n_u {
            comb[j] = comb[j - 1] + 1;
        }
    }
    out
}

/// An ordered list of bits, most significant first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitBlock(Vec<u8>);

impl BitBlock {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidConfig(format!("bit value {b} is not 0 or 1")));
        }
        Ok(BitBlock(bits))
    }

    pub fn from_index(index: u64, len: usize) -> Self {
        BitBlock((0..len).rev().map(|k| ((index >> k) & 1) as u8).collect())
    }

    pub fn to_index(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&[u8]> for BitBlock {
    fn from(bits: &[u8]) -> Self {
        BitBlock::new(bits.to_vec()).expect("bits must be 0 or 1")
    }
}

/// Sparse transmit vector. Entry antennas are 1-based and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct TxVector {
    pub n_t: usize,
    pub entries: Vec<(usize, ComplexSymbol)>,
    /// Factor applied to every entry before radiation.
    pub scale: f64,
}

impl TxVector {
    /// Radiated `(antenna, amplitude)` pairs.
    pub fn radiated(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.entries.iter().map(move |&(a, s)| (a, s * self.scale))
    }

    /// ‖s‖² of the radiated vector.
    pub fn energy(&self) -> f64 {
        self.radiated().map(|(_, s)| s.norm_sqr()).sum()
    }

    /// Dense radiated vector of length `n_t`.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.n_t];
        for (a, s) in self.radiated() {
            v[a - 1] += s;
        }
        v
    }
}

/// The indices and raw symbols a transmit vector (or a detector decision) stands for.
#[derive(Debug, Clone, PartialEq)]
pub enum TxHypothesis {
    Sm {
        antenna: usize,
        symbol: ComplexSymbol,
    },
    Gsm {
        antennas: Vec<usize>,
        symbol: ComplexSymbol,
    },
    Qsm {
        real_antenna: usize,
        imag_antenna: usize,
        symbol: ComplexSymbol,
    },
    Cqsm {
        alpha: usize,
        beta: usize,
        s_a: ComplexSymbol,
        s_b: ComplexSymbol,
    },
}

/// Raw points of a Gray-coded alphabet, indexed by symbol bits, plus the
/// factor that brings them to unit average power.
#[derive(Debug, Clone, PartialEq)]
pub struct BitMap {
    pub points: Vec<ComplexSymbol>,
    pub unit_scale: f64,
}

fn gray_to_binary(g: usize) -> usize {
    let mut b = g;
    let mut shift = g >> 1;
    while shift != 0 {
        b ^= shift;
        shift >>= 1;
    }
    b
}

impl BitMap {
    /// * BPSK: `0 → −1`, `1 → +1`.
    /// * QPSK: `(b1, b2) → (2b1 − 1) − j(2b2 − 1)`, so `11 → 1 − j` and `01 → −1 − j`.
    /// * 16QAM: `b1b2` Gray-selects the in-phase level, `b3b4` the negated quadrature level.
    /// * 8PSK: Gray code around the circle starting at phase 0.
    pub fn for_alphabet(kind: AlphabetKind) -> Self {
        let order = kind.order();
        match kind {
            AlphabetKind::Bpsk => BitMap {
                points: vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)],
                unit_scale: 1.0,
            },
            AlphabetKind::Qpsk => BitMap {
                points: (0..order)
                    .map(|i| {
                        let (b1, b2) = ((i >> 1) & 1, i & 1);
                        Complex64::new(2.0 * b1 as f64 - 1.0, -(2.0 * b2 as f64 - 1.0))
                    })
                    .collect(),
                unit_scale: FRAC_1_SQRT_2,
            },
            AlphabetKind::Qam16 => {
                let level = |g: usize| 2.0 * gray_to_binary(g) as f64 - 3.0;
                BitMap {
                    points: (0..order)
                        .map(|i| Complex64::new(level(i >> 2), -level(i & 3)))
                        .collect(),
                    unit_scale: 10f64.sqrt().recip(),
                }
            }
            AlphabetKind::Psk8 => BitMap {
                points: (0..order)
                    .map(|i| Complex64::from_polar(1.0, gray_to_binary(i) as f64 * FRAC_PI_4))
                    .collect(),
                unit_scale: 1.0,
            },
        }
    }

    pub fn rotated(&self, theta: RotationAngle) -> BitMap {
        let p = theta.phasor();
        BitMap {
            points: self.points.iter().map(|s| s * p).collect(),
            unit_scale: self.unit_scale,
        }
    }

    /// Index of the point equal to `s`.
    pub fn index_of(&self, s: ComplexSymbol) -> Option<usize> {
        self.points
            .iter()
            .position(|p| (p - s).norm() <= DUPLICATE_TOLERANCE * p.norm().max(1.0))
    }
}

/// True when two CQSM messages would produce the same transmit vector:
/// Ω_a and Ω_b share a point, or two (s_a, s_b) pairs have the same sum.
pub fn cqsm_is_ambiguous(kind: AlphabetKind, theta: RotationAngle) -> bool {
    let a = BitMap::for_alphabet(kind);
    let b = a.rotated(theta);
    let tol = DUPLICATE_TOLERANCE;
    let shared = a
        .points
        .iter()
        .any(|p| b.points.iter().any(|q| (p - q).norm() < tol));
    if shared {
        return true;
    }
    let sums: Vec<Complex64> = a
        .points
        .iter()
        .flat_map(|p| b.points.iter().map(move |q| p + q))
        .collect();
    sums.iter()
        .enumerate()
        .any(|(i, p)| sums[i + 1..].iter().any(|q| (p - q).norm() < tol))
}

/// A validated configuration with its lookup tables.
#[derive(Debug, Clone)]
pub struct Modem {
    config: SchemeConfig,
    bits: usize,
    map_a: BitMap,
    map_b: BitMap,
    combinations: Vec<Vec<usize>>,
    scale: f64,
}

impl Modem {
    pub fn new(config: SchemeConfig) -> Result<Self> {
        config.validate()?;
        let bits = spectral_efficiency(&config);
        let map_a = BitMap::for_alphabet(config.alphabet);
        let map_b = if config.scheme == Scheme::Cqsm {
            map_a.rotated(config.theta)
        } else {
            map_a.clone()
        };
        let combinations = if config.scheme == Scheme::Gsm {
            let count = 1usize << gsm_combination_bits(config.n_t, config.n_u);
            gsm_combinations(config.n_t, config.n_u, count)
        } else {
            Vec::new()
        };
        let mut scale = map_a.unit_scale;
        match config.scheme {
            Scheme::Cqsm if config.normalize_power => scale *= FRAC_1_SQRT_2,
            Scheme::Gsm => scale /= (config.n_u as f64).sqrt(),
            _ => {}
        }
        Ok(Modem {
            config,
            bits,
            map_a,
            map_b,
            combinations,
            scale,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    /// Spectral efficiency M.
    pub fn bits_per_use(&self) -> usize {
        self.bits
    }

    pub fn message_count(&self) -> u64 {
        1u64 << self.bits
    }

    /// Factor from raw entries to radiated amplitude.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn map_a(&self) -> &BitMap {
        &self.map_a
    }

    /// The second (rotated) CQSM alphabet; equals `map_a` for other schemes.
    pub fn map_b(&self) -> &BitMap {
        &self.map_b
    }

    pub fn combinations(&self) -> &[Vec<usize>] {
        &self.combinations
    }

    fn symbol_bits(&self) -> usize {
        self.config.alphabet.bits_per_symbol() as usize
    }

    /// Splits a message index into the scheme's hypothesis.
    pub fn hypothesis(&self, index: u64) -> TxHypothesis {
        let q = self.symbol_bits();
        let k = self.config.antenna_bits();
        let field =
            |shift: usize, width: usize| ((index >> shift) & ((1u64 << width) - 1)) as usize;
        match self.config.scheme {
            Scheme::Sm => TxHypothesis::Sm {
                antenna: field(0, k) + 1,
                symbol: self.map_a.points[field(k, q)],
            },
            Scheme::Gsm => {
                let c = self.bits - q;
                TxHypothesis::Gsm {
                    antennas: self.combinations[field(0, c)].clone(),
                    symbol: self.map_a.points[field(c, q)],
                }
            }
            Scheme::Qsm => TxHypothesis::Qsm {
                real_antenna: field(k, k) + 1,
                imag_antenna: field(0, k) + 1,
                symbol: self.map_a.points[field(2 * k, q)],
            },
            Scheme::Cqsm => TxHypothesis::Cqsm {
                alpha: field(k, k) + 1,
                beta: field(0, k) + 1,
                s_a: self.map_a.points[field(2 * k + q, q)],
                s_b: self.map_b.points[field(2 * k, q)],
            },
        }
    }

    /// Builds the sparse transmit vector of a hypothesis. Symbols landing on
    /// the same antenna are summed into one entry.
    pub fn tx_vector(&self, hyp: &TxHypothesis) -> TxVector {
        let entries = match hyp {
            TxHypothesis::Sm { antenna, symbol } => vec![(*antenna, *symbol)],
            TxHypothesis::Gsm { antennas, symbol } => {
                antennas.iter().map(|&a| (a, *symbol)).collect()
            }
            TxHypothesis::Qsm {
                real_antenna,
                imag_antenna,
                symbol,
            } => {
                if real_antenna == imag_antenna {
                    vec![(*real_antenna, *symbol)]
                } else {
                    vec![
                        (*real_antenna, Complex64::new(symbol.re, 0.0)),
                        (*imag_antenna, Complex64::new(0.0, symbol.im)),
                    ]
                }
            }
            TxHypothesis::Cqsm {
                alpha,
                beta,
                s_a,
                s_b,
            } => {
                if alpha == beta {
                    vec![(*alpha, s_a + s_b)]
                } else {
                    vec![(*alpha, *s_a), (*beta, *s_b)]
                }
            }
        };
        let mut entries = entries;
        entries.sort_by_key(|&(a, _)| a);
        TxVector {
            n_t: self.config.n_t,
            entries,
            scale: self.scale,
        }
    }

    pub fn modulate_index(&self, index: u64) -> TxVector {
        self.tx_vector(&self.hypothesis(index))
    }

    pub fn modulate(&self, bits: &BitBlock) -> Result<TxVector> {
        if bits.len() != self.bits {
            return Err(Error::BitCount {
                expected: self.bits,
                got: bits.len(),
            });
        }
        Ok(self.modulate_index(bits.to_index()))
    }

    fn check_antenna(&self, a: usize) -> Result<usize> {
        if a == 0 || a > self.config.n_t {
            return Err(Error::AntennaIndex {
                index: a,
                n_t: self.config.n_t,
            });
        }
        Ok(a - 1)
    }

    fn symbol_index(map: &BitMap, s: ComplexSymbol) -> Result<usize> {
        map.index_of(s)
            .ok_or_else(|| Error::UnknownSymbol(format!("{s}")))
    }

    /// Message index of a hypothesis; the inverse of [`Modem::hypothesis`].
    pub fn index_of(&self, hyp: &TxHypothesis) -> Result<u64> {
        let q = self.symbol_bits();
        let k = self.config.antenna_bits();
        let mismatch = || {
            Err(Error::InvalidConfig(format!(
                "hypothesis does not belong to scheme {}",
                self.config.scheme
            )))
        };
        let idx = match (self.config.scheme, hyp) {
            (Scheme::Sm, TxHypothesis::Sm { antenna, symbol }) => {
                let s = Self::symbol_index(&self.map_a, *symbol)?;
                (s << k) | self.check_antenna(*antenna)?
            }
            (Scheme::Gsm, TxHypothesis::Gsm { antennas, symbol }) => {
                let s = Self::symbol_index(&self.map_a, *symbol)?;
                for &a in antennas {
                    self.check_antenna(a)?;
                }
                let c = self
                    .combinations
                    .iter()
                    .position(|comb| comb == antennas)
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "antenna set {antennas:?} is not a used combination"
                        ))
                    })?;
                (s << (self.bits - q)) | c
            }
            (
                Scheme::Qsm,
                TxHypothesis::Qsm {
                    real_antenna,
                    imag_antenna,
                    symbol,
                },
            ) => {
                let s = Self::symbol_index(&self.map_a, *symbol)?;
                (s << (2 * k))
                    | (self.check_antenna(*real_antenna)? << k)
                    | self.check_antenna(*imag_antenna)?
            }
            (
                Scheme::Cqsm,
                TxHypothesis::Cqsm {
                    alpha,
                    beta,
                    s_a,
                    s_b,
                },
            ) => {
                let ia = Self::symbol_index(&self.map_a, *s_a)?;
                let ib = Self::symbol_index(&self.map_b, *s_b)?;
                (ia << (2 * k + q))
                    | (ib << (2 * k))
                    | (self.check_antenna(*alpha)? << k)
                    | self.check_antenna(*beta)?
            }
            _ => return mismatch(),
        };
        Ok(idx as u64)
    }

    /// Recovers the bit block a hypothesis encodes.
    pub fn demap(&self, hyp: &TxHypothesis) -> Result<BitBlock> {
        Ok(BitBlock::from_index(self.index_of(hyp)?, self.bits))
    }
}

fn build_for(bits: &BitBlock, config: &SchemeConfig, scheme: Scheme) -> Result<TxVector> {
    if config.scheme != scheme {
        return Err(Error::InvalidConfig(format!(
            "expected a {scheme} configuration, got {}",
            config.scheme
        )));
    }
    Modem::new(*config)?.modulate(bits)
}

pub fn sm_modulate(bits: &BitBlock, config: &SchemeConfig) -> Result<TxVector> {
    build_for(bits, config, Scheme::Sm)
}

pub fn gsm_modulate(bits: &BitBlock, config: &SchemeConfig) -> Result<TxVector> {
    build_for(bits, config, Scheme::Gsm)
}

pub fn qsm_modulate(bits: &BitBlock, config: &SchemeConfig) -> Result<TxVector> {
    build_for(bits, config, Scheme::Qsm)
}

pub fn cqsm_modulate(bits: &BitBlock, config: &SchemeConfig) -> Result<TxVector> {
    build_for(bits, config, Scheme::Cqsm)
}

pub fn demap(hyp: &TxHypothesis, config: &SchemeConfig) -> Result<BitBlock> {
    Modem::new(*config)?.demap(hyp)
}

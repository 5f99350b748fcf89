//! Signal constellations and the rotation-angle search.
//!
//! A CQSM transmitter draws its first symbol from a source alphabet Ω_a and
//! its second from Ω_b, a copy of Ω_a rotated by θ. When both symbols land on
//! the same antenna the receiver sees their sum, so the set the detector has
//! to separate is the effective set Ω_d = Ω_a ∪ Ω_b ∪ (Ω_a ⊕ Ω_b). This module
//! builds those sets and searches θ for the largest minimum distance of Ω_d.
//!
//! Sets are finite point multisets, so the Minkowski sum is plain pairwise
//! summation.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two symbols closer than this are treated as the same point.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Relative slack used when collecting the optimal angles of a grid search.
pub const PLATEAU_TOLERANCE: f64 = 1e-6;

/// A complex constellation point.
pub type ComplexSymbol = Complex64;

/// Source alphabets supported by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphabetKind {
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
}

impl AlphabetKind {
    pub const ALL: [AlphabetKind; 4] = [
        AlphabetKind::Bpsk,
        AlphabetKind::Qpsk,
        AlphabetKind::Psk8,
        AlphabetKind::Qam16,
    ];

    /// Bits carried by one symbol (q).
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            AlphabetKind::Bpsk => 1,
            AlphabetKind::Qpsk => 2,
            AlphabetKind::Psk8 => 3,
            AlphabetKind::Qam16 => 4,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn name(self) -> &'static str {
        match self {
            AlphabetKind::Bpsk => "BPSK",
            AlphabetKind::Qpsk => "QPSK",
            AlphabetKind::Psk8 => "8PSK",
            AlphabetKind::Qam16 => "16QAM",
        }
    }
}

impl fmt::Display for AlphabetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlphabetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(AlphabetKind::Bpsk),
            "qpsk" => Ok(AlphabetKind::Qpsk),
            "psk8" | "8psk" => Ok(AlphabetKind::Psk8),
            "qam16" | "16qam" => Ok(AlphabetKind::Qam16),
            _ => Err(Error::UnsupportedAlphabet(s.to_string())),
        }
    }
}

/// A rotation angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotationAngle(f64);

impl RotationAngle {
    pub const ZERO: RotationAngle = RotationAngle(0.0);

    pub fn from_radians(theta: f64) -> Self {
        RotationAngle(theta)
    }

    pub fn from_degrees(deg: f64) -> Self {
        RotationAngle(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// The unit phasor e^{jθ}.
    /// Degrees rounded to 1e-9, hiding degree/radian conversion noise in output.
    pub fn rounded_degrees(self) -> f64 {
        (self.degrees() * 1e9).round() / 1e9
    }

    pub fn phasor(self) -> Complex64 {
        Complex64::from_polar(1.0, self.0)
    }
}

/// Where a set came from.
#[derive(Debug, Clone, PartialEq)]
pub enum SetLabel {
    Alphabet(AlphabetKind),
    Rotated {
        base: Box<SetLabel>,
        theta: RotationAngle,
    },
    Union,
    MinkowskiSum,
    Custom(String),
}

impl fmt::Display for SetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetLabel::Alphabet(kind) => write!(f, "{kind}"),
            SetLabel::Rotated { base, theta } => {
                write!(f, "Rotated({base} @ {}deg)", theta.degrees())
            }
            SetLabel::Union => f.write_str("Union"),
            SetLabel::MinkowskiSum => f.write_str("MinkowskiSum"),
            SetLabel::Custom(name) => f.write_str(name),
        }
    }
}

/// An ordered multiset of constellation points.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    symbols: Vec<ComplexSymbol>,
    label: SetLabel,
    bits_per_symbol: Option<u32>,
}

impl SignalSet {
    /// Wraps an arbitrary list of points. Symbols must be finite.
    pub fn new(symbols: Vec<ComplexSymbol>, label: SetLabel) -> Self {
        debug_assert!(symbols.iter().all(|s| s.re.is_finite() && s.im.is_finite()));
        SignalSet {
            symbols,
            label,
            bits_per_symbol: None,
        }
    }

    pub fn symbols(&self) -> &[ComplexSymbol] {
        &self.symbols
    }

    pub fn label(&self) -> &SetLabel {
        &self.label
    }

    /// q for source alphabets, `None` for derived sets.
    pub fn bits_per_symbol(&self) -> Option<u32> {
        self.bits_per_symbol
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn average_power(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }
}

/// Builds a unit-average-power source alphabet.
///
/// Point order:
/// * BPSK: `{1, -1}`
/// * QPSK: `e^{j i π/2}`, i = 0..4, i.e. `{1, j, -1, -j}`
/// * 8PSK: `e^{j i π/4}`, i = 0..8
/// * 16QAM: `(a + jb)/√10` for a in `[-3, -1, 1, 3]` (outer), b in the same list (inner)
pub fn make_alphabet(kind: AlphabetKind) -> SignalSet {
    let symbols = match kind {
        AlphabetKind::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        AlphabetKind::Qpsk => (0..4)
            .map(|i| Complex64::from_polar(1.0, i as f64 * FRAC_PI_2))
            .collect(),
        AlphabetKind::Psk8 => (0..8)
            .map(|i| Complex64::from_polar(1.0, i as f64 * FRAC_PI_4))
            .collect(),
        AlphabetKind::Qam16 => {
            let levels = [-3.0, -1.0, 1.0, 3.0];
            let scale = 10f64.sqrt().recip();
            levels
                .iter()
                .flat_map(|&a| levels.iter().map(move |&b| Complex64::new(a, b) * scale))
                .collect()
        }
    };
    SignalSet {
        symbols,
        label: SetLabel::Alphabet(kind),
        bits_per_symbol: Some(kind.bits_per_symbol()),
    }
}

/// Multiplies every symbol by e^{jθ}, keeping order.
pub fn rotate_set(set: &SignalSet, theta: RotationAngle) -> SignalSet {
    let phasor = theta.phasor();
    SignalSet {
        symbols: set.symbols.iter().map(|s| s * phasor).collect(),
        label: SetLabel::Rotated {
            base: Box::new(set.label.clone()),
            theta,
        },
        bits_per_symbol: None,
    }
}

/// All pairwise sums `a_i + b_k`, `a`-major, duplicates kept.
pub fn minkowski_sum(a: &SignalSet, b: &SignalSet) -> SignalSet {
    let symbols = a
        .symbols
        .iter()
        .flat_map(|&x| b.symbols.iter().map(move |&y| x + y))
        .collect();
    SignalSet::new(symbols, SetLabel::MinkowskiSum)
}

/// Concatenation of several sets as one multiset.
pub fn union(sets: &[&SignalSet]) -> SignalSet {
    let symbols = sets
        .iter()
        .flat_map(|s| s.symbols.iter().copied())
        .collect();
    SignalSet::new(symbols, SetLabel::Union)
}

/// Ω_d = Ω_a ∪ Ω_b ∪ (Ω_a ⊕ Ω_b), with `2|Ω_a| + |Ω_a|²` entries.
pub fn effective_set(omega_a: &SignalSet, omega_b: &SignalSet) -> SignalSet {
    let sum = minkowski_sum(omega_a, omega_b);
    union(&[omega_a, omega_b, &sum])
}

/// Minimum pairwise Euclidean distance over all unordered pairs.
///
/// Distances below [`DUPLICATE_TOLERANCE`] are reported as exactly zero.
pub fn min_distance(set: &SignalSet) -> Result<f64> {
    min_distance_of(&set.symbols)
}

pub(crate) fn min_distance_of(points: &[ComplexSymbol]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::SetTooSmall(points.len()));
    }
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d = (p - q).norm_sqr();
            if d < best {
                best = d;
            }
        }
    }
    let d = best.sqrt();
    Ok(if d < DUPLICATE_TOLERANCE { 0.0 } else { d })
}

/// d_min(Ω_d(θ)) for a source alphabet.
pub fn effective_min_distance(kind: AlphabetKind, theta: RotationAngle) -> f64 {
    let a = make_alphabet(kind);
    let b = rotate_set(&a, theta);
    min_distance(&effective_set(&a, &b)).expect("effective set has at least 8 points")
}

/// Outcome of a grid search over θ.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSearch {
    /// Every grid angle within [`PLATEAU_TOLERANCE`] (relative) of the best distance.
    pub angles: Vec<RotationAngle>,
    pub dmin: f64,
    /// `(θ, d_min(Ω_d(θ)))` for the whole grid.
    pub curve: Vec<(RotationAngle, f64)>,
}

/// Inclusive grid `lo, lo + step, ...` up to `hi`.
pub fn angle_grid(lo: RotationAngle, hi: RotationAngle, step: f64) -> Result<Vec<RotationAngle>> {
    let (lo, hi) = (lo.radians(), hi.radians());
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "step must be positive, got {step}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::InvalidGrid(format!(
            "need lo < hi, got [{lo}, {hi}]"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count)
        .map(|i| RotationAngle(lo + i as f64 * step))
        .collect())
}

/// Grid search for the θ maximizing d_min(Ω_d(θ)) on `[lo, hi]`.
pub fn optimize_rotation(
    kind: AlphabetKind,
    lo: RotationAngle,
    hi: RotationAngle,
    step: f64,
) -> Result<RotationSearch> {
    const SLACK: f64 = 1e-12;
    if lo.radians() < -SLACK || hi.radians() > FRAC_PI_2 + SLACK {
        return Err(Error::InvalidGrid(format!(
            "search interval must lie in [0, pi/2], got [{}, {}]",
            lo.radians(),
            hi.radians()
        )));
    }
    let grid = angle_grid(lo, hi, step)?;
    let a = make_alphabet(kind);
    let curve: Vec<(RotationAngle, f64)> = grid
        .into_iter()
        .map(|theta| {
            let b = rotate_set(&a, theta);
            let d = min_distance(&effective_set(&a, &b)).expect("non-trivial set");
            (theta, d)
        })
        .collect();
    let dmin = curve.iter().map(|&(_, d)| d).fold(0.0, f64::max);
    let angles = curve
        .iter()
        .filter(|&&(_, d)| d >= dmin * (1.0 - PLATEAU_TOLERANCE))
        .map(|&(t, _)| t)
        .collect();
    Ok(RotationSearch {
        angles,
        dmin,
        curve,
    })
}

/// The two QPSK distances that bound d_min on `[0, π/4]`:
/// `d1 = √(3 − 2 sin θ − 2 cos θ)` (Ω_a point to the nearest sum point) and
/// `d2 = √(2 − 2 cos θ)` (Ω_a point to its rotated copy).
pub fn qpsk_closed_form_distances(theta: RotationAngle) -> (f64, f64) {
    let t = theta.radians();
    let d1 = (3.0 - 2.0 * t.sin() - 2.0 * t.cos()).max(0.0).sqrt();
    let d2 = (2.0 - 2.0 * t.cos()).max(0.0).sqrt();
    (d1, d2)
}

/// The analytic QPSK optimum. d1 falls and d2 rises on `[0, π/4]`, and they
/// cross where sin θ = 1/2.
pub fn qpsk_analytic_optimum() -> RotationAngle {
    RotationAngle(FRAC_PI_6)
}

/// Polar form `(r_i, φ_i)` of the first point of the i-th shifted square in the
/// QPSK Minkowski sum.
pub fn minkowski_subset_polar(i: usize, theta: RotationAngle) -> Result<(f64, f64)> {
    let t = theta.radians();
    let (r_sq, phi) = match i {
        1 => (2.0 + 2.0 * t.cos(), t / 2.0),
        2 => (2.0 - 2.0 * t.sin(), t / 2.0 + FRAC_PI_4),
        3 => (2.0 + 2.0 * t.sin(), t / 2.0 - FRAC_PI_4),
        4 => (2.0 - 2.0 * t.cos(), t / 2.0 - FRAC_PI_2),
        _ => return Err(Error::SubsetIndex(i)),
    };
    Ok((r_sq.max(0.0).sqrt(), phi))
}

/// Limit of d_min(Ω_a ∪ Ω_b) for QPSK as the sum set becomes negligible:
/// the chord `2 sin(θ/2)` between a point and its rotated copy.
pub fn qpsk_union_chord(theta: RotationAngle) -> f64 {
    2.0 * (theta.radians() / 2.0).sin()
}

/// Writes sets as CSV rows `index,re,im,set_label`.
pub fn write_sets_csv<W: Write>(out: W, sets: &[&SignalSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "re", "im", "set_label"])?;
    for set in sets {
        let label = set.label.to_string();
        for (i, s) in set.symbols.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.re.to_string(),
                s.im.to_string(),
                label.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

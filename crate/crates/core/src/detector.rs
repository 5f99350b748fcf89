//! Exhaustive maximum-likelihood detection.
//!
//! Two paths search the same `2^M` hypotheses:
//!
//! * the reference path forms `g` for every hypothesis and evaluates
//!   `‖g‖² − 2 Re{yᴴ g}` one real operation at a time, counting each one;
//! * the fast path caches `h_a · s` products per detection and minimizes
//!   `‖y − g‖²` directly. It is what the Monte Carlo harness uses.
//!
//! The two metrics differ by the constant `‖y‖²`, so they select the same
//! hypothesis. Ties go to the lowest message index.

use num_complex::Complex64;
use serde::Serialize;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::modem::{BitBlock, Modem, Scheme, SchemeConfig, TxHypothesis};

/// Real multiplications and additions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ComplexityReport {
    pub real_multiplications: u64,
    pub real_additions: u64,
}

impl std::ops::Add for ComplexityReport {
    type Output = ComplexityReport;

    fn add(self, rhs: Self) -> Self {
        ComplexityReport {
            real_multiplications: self.real_multiplications + rhs.real_multiplications,
            real_additions: self.real_additions + rhs.real_additions,
        }
    }
}

/// Closed-form cost of one exhaustive search: `((4n_R + 1) 2^M, (4n_R − 1) 2^M)`.
pub fn complexity_count(n_r: usize, m: usize) -> ComplexityReport {
    let hyps = 1u64 << m;
    let n_r = n_r as u64;
    ComplexityReport {
        real_multiplications: (4 * n_r + 1) * hyps,
        real_additions: (4 * n_r - 1) * hyps,
    }
}

/// Operations counted by the reference path.
///
/// `metric` covers evaluating `‖g‖² − 2 Re{yᴴ g}` (the closed-form scope);
/// `formation` covers building each `g` from channel columns and symbols.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub metric: ComplexityReport,
    pub formation: ComplexityReport,
}

impl OpCounts {
    pub fn total(&self) -> ComplexityReport {
        self.metric + self.formation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Message index of the decision.
    pub index: u64,
    pub hypothesis: TxHypothesis,
    /// Minimum of the searched metric. The reference path reports
    /// `‖g‖² − 2 Re{yᴴ g}`, the fast path `‖y − g‖²`.
    pub metric: f64,
    pub bits: BitBlock,
    /// Zero for the fast path.
    pub ops: OpCounts,
}

#[derive(Debug, Default)]
struct Tally {
    mul: u64,
    add: u64,
}

impl Tally {
    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        self.mul += 1;
        a * b
    }

    #[inline]
    fn add(&mut self, a: f64, b: f64) -> f64 {
        self.add += 1;
        a + b
    }

    #[inline]
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        self.add += 1;
        a - b
    }

    #[inline]
    fn cmul(&mut self, a: Complex64, b: Complex64) -> Complex64 {
        let rr = self.mul(a.re, b.re);
        let ii = self.mul(a.im, b.im);
        let ri = self.mul(a.re, b.im);
        let ir = self.mul(a.im, b.re);
        Complex64::new(self.sub(rr, ii), self.add(ri, ir))
    }

    fn report(&self) -> ComplexityReport {
        ComplexityReport {
            real_multiplications: self.mul,
            real_additions: self.add,
        }
    }
}

/// ‖g‖²: 2n_R multiplications, 2n_R − 1 additions.
fn energy(t: &mut Tally, g: &[Complex64]) -> f64 {
    let mut acc = None;
    for z in g {
        for part in [z.re, z.im] {
            let sq = t.mul(part, part);
            acc = Some(match acc {
                None => sq,
                Some(a) => t.add(a, sq),
            });
        }
    }
    acc.unwrap_or(0.0)
}

/// 2 Re{yᴴ g}: 2n_R + 1 multiplications, 2n_R − 1 additions.
fn twice_real_correlation(t: &mut Tally, y: &[Complex64], g: &[Complex64]) -> f64 {
    let mut acc = None;
    for (a, b) in y.iter().zip(g) {
        for (u, v) in [(a.re, b.re), (a.im, b.im)] {
            let p = t.mul(u, v);
            acc = Some(match acc {
                None => p,
                Some(s) => t.add(s, p),
            });
        }
    }
    t.mul(2.0, acc.unwrap_or(0.0))
}

/// Exhaustive ML detector for one scheme configuration.
#[derive(Debug, Clone)]
pub struct Detector {
    modem: Modem,
}

impl Detector {
    pub fn new(config: SchemeConfig) -> Result<Self> {
        Ok(Detector {
            modem: Modem::new(config)?,
        })
    }

    pub fn from_modem(modem: Modem) -> Self {
        Detector { modem }
    }

    pub fn modem(&self) -> &Modem {
        &self.modem
    }

    fn check_dims(&self, y: &[Complex64], h: &ChannelMatrix) -> Result<()> {
        let n_t = self.modem.config().n_t;
        if h.n_t() != n_t {
            return Err(Error::Dimension(format!(
                "channel has {} columns, configuration has {n_t} antennas",
                h.n_t()
            )));
        }
        if y.len() != h.n_r() {
            return Err(Error::Dimension(format!(
                "received vector has {} entries, channel has {} rows",
                y.len(),
                h.n_r()
            )));
        }
        Ok(())
    }

    fn finish(&self, index: u64, metric: f64, ops: OpCounts) -> DetectionResult {
        let hypothesis = self.modem.hypothesis(index);
        DetectionResult {
            index,
            bits: BitBlock::from_index(index, self.modem.bits_per_use()),
            hypothesis,
            metric,
            ops,
        }
    }

    /// Reference search with per-operation counters.
    pub fn detect(&self, y: &[Complex64], h: &ChannelMatrix) -> Result<DetectionResult> {
        self.check_dims(y, h)?;
        let n_r = h.n_r();
        let mut metric_ops = Tally::default();
        let mut form_ops = Tally::default();
        let mut g = vec![Complex64::new(0.0, 0.0); n_r];
        let mut best = (f64::INFINITY, 0u64);
        for index in 0..self.modem.message_count() {
            let tx = self.modem.modulate_index(index);
            for (k, (antenna, amp)) in tx.radiated().enumerate() {
                for (gr, hr) in g.iter_mut().zip(h.column(antenna)) {
                    let p = form_ops.cmul(*hr, amp);
                    *gr = if k == 0 {
                        p
                    } else {
                        Complex64::new(form_ops.add(gr.re, p.re), form_ops.add(gr.im, p.im))
                    };
                }
            }
            let e = energy(&mut metric_ops, &g);
            let c = twice_real_correlation(&mut metric_ops, y, &g);
            let m = metric_ops.sub(e, c);
            if m < best.0 {
                best = (m, index);
            }
        }
        let ops = OpCounts {
            metric: metric_ops.report(),
            formation: form_ops.report(),
        };
        Ok(self.finish(best.1, best.0, ops))
    }

    /// Cached search minimizing ‖y − g‖².
    pub fn detect_fast(&self, y: &[Complex64], h: &ChannelMatrix) -> Result<DetectionResult> {
        self.check_dims(y, h)?;
        let (index, metric) = self.search_fast(y, h);
        Ok(self.finish(index, metric, OpCounts::default()))
    }

    /// Fast search returning `(index, ‖y − g‖²)`. Dimensions are not checked.
    pub fn search_fast(&self, y: &[Complex64], h: &ChannelMatrix) -> (u64, f64) {
        let cfg = self.modem.config();
        let n_r = h.n_r();
        let n_t = cfg.n_t;
        let scale = self.modem.scale();
        let q = cfg.alphabet.bits_per_symbol() as usize;
        let k = cfg.antenna_bits();
        let mut best = Best::default();

        // products[a][i] = h_a · p_i · scale, flattened.
        let products = |points: &[Complex64]| -> Vec<Complex64> {
            let mut out = Vec::with_capacity(n_t * points.len() * n_r);
            for a in 1..=n_t {
                let col = h.column(a);
                for p in points {
                    let amp = p * scale;
                    out.extend(col.iter().map(|hr| hr * amp));
                }
            }
            out
        };
        fn block(
            table: &[Complex64],
            n_r: usize,
            a: usize,
            i: usize,
            order: usize,
        ) -> &[Complex64] {
            let start = ((a - 1) * order + i) * n_r;
            &table[start..start + n_r]
        }

        match cfg.scheme {
            Scheme::Sm => {
                let pts = &self.modem.map_a().points;
                let table = products(pts);
                for (i, _) in pts.iter().enumerate() {
                    for a in 1..=n_t {
                        let g = block(&table, n_r, a, i, pts.len());
                        let m = dist2(y, g);
                        best.offer(m, ((i << k) | (a - 1)) as u64);
                    }
                }
            }
            Scheme::Gsm => {
                let pts = &self.modem.map_a().points;
                let combos = self.modem.combinations();
                let c_bits = self.modem.bits_per_use() - q;
                let sums: Vec<Vec<Complex64>> = combos
                    .iter()
                    .map(|comb| {
                        let mut s = vec![Complex64::new(0.0, 0.0); n_r];
                        for &a in comb {
                            for (sr, hr) in s.iter_mut().zip(h.column(a)) {
                                *sr += hr;
                            }
                        }
                        s
                    })
                    .collect();
                let mut g = vec![Complex64::new(0.0, 0.0); n_r];
                for (i, p) in pts.iter().enumerate() {
                    let amp = p * scale;
                    for (c, s) in sums.iter().enumerate() {
                        for (gr, sr) in g.iter_mut().zip(s) {
                            *gr = sr * amp;
                        }
                        best.offer(dist2(y, &g), ((i << c_bits) | c) as u64);
                    }
                }
            }
            Scheme::Qsm => {
                let pts = &self.modem.map_a().points;
                let re_parts: Vec<Complex64> =
                    pts.iter().map(|p| Complex64::new(p.re, 0.0)).collect();
                let im_parts: Vec<Complex64> =
                    pts.iter().map(|p| Complex64::new(0.0, p.im)).collect();
                let re_table = products(&re_parts);
                let im_table = products(&im_parts);
                let order = pts.len();
                let mut r = vec![Complex64::new(0.0, 0.0); n_r];
                for i in 0..order {
                    for alpha in 1..=n_t {
                        let ga = block(&re_table, n_r, alpha, i, order);
                        for ((rr, yr), gr) in r.iter_mut().zip(y).zip(ga) {
                            *rr = yr - gr;
                        }
                        for beta in 1..=n_t {
                            let gb = block(&im_table, n_r, beta, i, order);
                            let idx = (i << (2 * k)) | ((alpha - 1) << k) | (beta - 1);
                            best.offer(dist2(&r, gb), idx as u64);
                        }
                    }
                }
            }
            Scheme::Cqsm => {
                let pa = &self.modem.map_a().points;
                let pb = &self.modem.map_b().points;
                let ta = products(pa);
                let tb = products(pb);
                let order = pa.len();
                let mut r = vec![Complex64::new(0.0, 0.0); n_r];
                for ia in 0..order {
                    for alpha in 1..=n_t {
                        let ga = block(&ta, n_r, alpha, ia, order);
                        for ((rr, yr), gr) in r.iter_mut().zip(y).zip(ga) {
                            *rr = yr - gr;
                        }
                        for ib in 0..order {
                            for beta in 1..=n_t {
                                let gb = block(&tb, n_r, beta, ib, order);
                                let idx = (ia << (2 * k + q))
                                    | (ib << (2 * k))
                                    | ((alpha - 1) << k)
                                    | (beta - 1);
                                best.offer(dist2(&r, gb), idx as u64);
                            }
                        }
                    }
                }
            }
        }
        (best.index, best.metric)
    }
}

#[derive(Debug)]
struct Best {
    metric: f64,
    index: u64,
}

impl Default for Best {
    fn default() -> Self {
        Best {
            metric: f64::INFINITY,
            index: u64::MAX,
        }
    }
}

impl Best {
    #[inline]
    fn offer(&mut self, metric: f64, index: u64) {
        if metric < self.metric || (metric == self.metric && index < self.index) {
            self.metric = metric;
            self.index = index;
        }
    }
}

#[inline]
fn dist2(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

fn detect_for(
    y: &[Complex64],
    h: &ChannelMatrix,
    config: &SchemeConfig,
    schemes: &[Scheme],
) -> Result<DetectionResult> {
    if !schemes.contains(&config.scheme) {
        return Err(Error::InvalidConfig(format!(
            "detector does not handle {}",
            config.scheme
        )));
    }
    Detector::new(*config)?.detect(y, h)
}

/// ML detection of a CQSM channel use.
pub fn ml_detect_cqsm(
    y: &[Complex64],
    h: &ChannelMatrix,
    config: &SchemeConfig,
) -> Result<DetectionResult> {
    detect_for(y, h, config, &[Scheme::Cqsm])
}

/// ML detection of a QSM channel use.
pub fn ml_detect_qsm(
    y: &[Complex64],
    h: &ChannelMatrix,
    config: &SchemeConfig,
) -> Result<DetectionResult> {
    detect_for(y, h, config, &[Scheme::Qsm])
}

/// ML detection for the SM and GSM baselines.
pub fn ml_detect_generic(
    y: &[Complex64],
    h: &ChannelMatrix,
    config: &SchemeConfig,
) -> Result<DetectionResult> {
    detect_for(y, h, config, &[Scheme::Sm, Scheme::Gsm])
}

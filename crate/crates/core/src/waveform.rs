//! QAM constellations, frequency-domain OFDM symbol grids and the
//! wanted/interference/noise mixer.
//!
//! OFDM is modelled entirely in the frequency domain: one complex symbol per
//! carrier per frame, and any channel acts as a per-carrier multiplicative
//! gain. Grids are stored carrier-major (`index = carrier * frames + frame`)
//! so that per-carrier statistics over frames walk contiguous memory.
//!
//! # Labelling convention
//!
//! Square orders use independent Gray codes on the two axes. A label of
//! `log2(M)` bits is read most-significant bit first; the first half of the
//! bits select the in-phase level and the second half the quadrature level.
//! Gray code `0` maps to the most negative level, so for 16-QAM the label
//! `0000` sits at `(-3 - 3j) / sqrt(10)`.
//!
//! 8-QAM is the 4 x 2 rectangle (two I bits, one Q bit). 32-, 128- and
//! 512-QAM start from a `2^(k+1) x 2^k` Gray-labelled rectangle and fold the
//! two outer in-phase strips onto the top and bottom of the square, which
//! yields the conventional cross shape. A rectangle point `(i, q)` with
//! `|i| > n - 1` (where `n` is the side of the enclosing square) moves to
//! `(sign(i) * (2^k - |q|), sign(q) * (2^k - 1 + |i| - (n - 1)))`.
//!
//! Points are stored in label order: `points()[l]` carries label `l`.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{complex_normal, random_bits};

pub const SUPPORTED_ORDERS: [usize; 8] = [4, 8, 16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
    scale: f64,
    /// Odd-integer lattice coordinates -> label, for fast slicing.
    lattice: HashMap<(i32, i32), u32>,
}

fn gray_inverse(mut g: u32) -> u32 {
    let mut n = g;
    while g > 1 {
        g >>= 1;
        n ^= g;
    }
    n
}

/// Odd level for a Gray-coded index on an axis with `levels` levels.
fn axis_level(gray_code: u32, levels: u32) -> i32 {
    2 * gray_inverse(gray_code) as i32 - (levels as i32 - 1)
}

impl Constellation {
    pub fn new(order: usize) -> Result<Self> {
        if !SUPPORTED_ORDERS.contains(&order) {
            return Err(Error::invalid(format!(
                "unsupported QAM order {order}; expected one of {SUPPORTED_ORDERS:?}"
            )));
        }
        let bits = order.trailing_zeros() as usize;
        let lattice_points: Vec<(i32, i32)> = if bits.is_multiple_of(2) {
            let half = bits / 2;
            let levels = 1u32 << half;
            (0..order as u32)
                .map(|label| {
                    let i_bits = label >> half;
                    let q_bits = label & (levels - 1);
                    (axis_level(i_bits, levels), axis_level(q_bits, levels))
                })
                .collect()
        } else {
            cross_points(bits)
        };

        let mean_sq = lattice_points
            .iter()
            .map(|&(i, q)| (i * i + q * q) as f64)
            .sum::<f64>()
            / order as f64;
        let scale = 1.0 / mean_sq.sqrt();
        let points = lattice_points
            .iter()
            .map(|&(i, q)| Complex64::new(i as f64 * scale, q as f64 * scale))
            .collect();
        let lattice = lattice_points
            .iter()
            .enumerate()
            .map(|(l, &p)| (p, l as u32))
            .collect();

        Ok(Constellation {
            order,
            bits_per_symbol: bits,
            points,
            scale,
            lattice,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Label of point `index` as a bit string, MSB first.
    pub fn label_bits(&self, index: usize) -> String {
        format!("{:0width$b}", index, width = self.bits_per_symbol)
    }

    pub fn point_for_label(&self, label: u32) -> Complex64 {
        self.points[label as usize]
    }

    /// Distance between nearest neighbours.
    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }

    /// Label of the nearest point. Exact ties go to the smallest label.
    pub fn nearest(&self, r: Complex64) -> u32 {
        let x = r.re / self.scale;
        let y = r.im / self.scale;
        if let (Some(i), Some(q)) = (odd_round(x), odd_round(y)) {
            if let Some(&label) = self.lattice.get(&(i, q)) {
                return label;
            }
        }
        self.nearest_exhaustive(r)
    }

    fn nearest_exhaustive(&self, r: Complex64) -> u32 {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, p) in self.points.iter().enumerate() {
            let d = (r - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best as u32
    }
}

/// Nearest odd integer, or `None` when `x` is (numerically) equidistant from
/// two of them, in which case the caller falls back to the exhaustive search
/// that implements the tie rule.
fn odd_round(x: f64) -> Option<i32> {
    let k = ((x - 1.0) / 2.0).round();
    let frac = (x - 1.0) / 2.0 - k;
    if (frac.abs() - 0.5).abs() < 1e-9 || !x.is_finite() {
        return None;
    }
    Some((2.0 * k + 1.0) as i32)
}

fn cross_points(bits: usize) -> Vec<(i32, i32)> {
    let q_bits = bits / 2;
    let i_bits = bits - q_bits;
    let i_levels = 1u32 << i_bits;
    let q_levels = 1u32 << q_bits;
    let order = 1u32 << bits;
    let rect = (0..order).map(move |label| {
        let ib = label >> q_bits;
        let qb = label & (q_levels - 1);
        (axis_level(ib, i_levels), axis_level(qb, q_levels))
    });
    if bits == 3 {
        return rect.collect();
    }
    let k = q_bits as i32;
    let side = 3 * (1 << (k - 1));
    let max_level = side - 1;
    let inner = (1 << k) - 1;
    rect.map(|(i, q)| {
        if i.abs() > max_level {
            let d = i.abs() - max_level;
            (i.signum() * (inner + 1 - q.abs()), q.signum() * (inner + d))
        } else {
            (i, q)
        }
    })
    .collect()
}

/// Dense carriers x frames matrix of complex samples, carrier-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    carriers: usize,
    frames: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(carriers: usize, frames: usize) -> Self {
        ComplexGrid {
            carriers,
            frames,
            data: vec![Complex64::new(0.0, 0.0); carriers * frames],
        }
    }

    pub fn from_vec(carriers: usize, frames: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != carriers * frames {
            return Err(Error::invalid(format!(
                "grid data length {} does not match {carriers} x {frames}",
                data.len()
            )));
        }
        Ok(ComplexGrid {
            carriers,
            frames,
            data,
        })
    }

    pub fn carriers(&self) -> usize {
        self.carriers
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, carrier: usize, frame: usize) -> Complex64 {
        self.data[carrier * self.frames + frame]
    }

    /// Frames of one carrier.
    pub fn carrier(&self, carrier: usize) -> &[Complex64] {
        &self.data[carrier * self.frames..(carrier + 1) * self.frames]
    }

    pub fn same_shape(&self, other: &ComplexGrid) -> bool {
        self.carriers == other.carriers && self.frames == other.frames
    }

    pub fn mean_power(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }

    pub fn scaled(&self, g: f64) -> ComplexGrid {
        ComplexGrid {
            carriers: self.carriers,
            frames: self.frames,
            data: self.data.iter().map(|z| z * g).collect(),
        }
    }

    /// Multiply carrier `c` by `gains[c]`.
    pub fn apply_carrier_gains(&self, gains: &[Complex64]) -> Result<ComplexGrid> {
        if gains.len() != self.carriers {
            return Err(Error::invalid("carrier gain count does not match grid"));
        }
        let mut out = self.clone();
        for (c, g) in gains.iter().enumerate() {
            for z in &mut out.data[c * self.frames..(c + 1) * self.frames] {
                *z *= g;
            }
        }
        Ok(out)
    }
}

/// A transmitted grid: constellation symbols plus the payload bits behind
/// them.
#[derive(Debug, Clone)]
pub struct SymbolGrid {
    symbols: ComplexGrid,
    bits: Vec<u8>,
    order: usize,
}

impl SymbolGrid {
    pub fn symbols(&self) -> &ComplexGrid {
        &self.symbols
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn carriers(&self) -> usize {
        self.symbols.carriers
    }

    pub fn frames(&self) -> usize {
        self.symbols.frames
    }
}

/// Map `bits` onto a `carriers x frames` grid, carrier-major, one symbol per
/// `log2(order)` bits.
pub fn modulate(
    bits: &[u8],
    constellation: &Constellation,
    carriers: usize,
    frames: usize,
) -> Result<SymbolGrid> {
    let bps = constellation.bits_per_symbol();
    let expected = carriers * frames * bps;
    if bits.len() != expected {
        return Err(Error::invalid(format!(
            "bit count {} does not match {carriers} carriers x {frames} frames x {bps} bits",
            bits.len()
        )));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid("bits must be 0 or 1"));
    }
    let data = bits
        .chunks_exact(bps)
        .map(|chunk| {
            let label = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
            constellation.point_for_label(label)
        })
        .collect();
    Ok(SymbolGrid {
        symbols: ComplexGrid {
            carriers,
            frames,
            data,
        },
        bits: bits.to_vec(),
        order: constellation.order(),
    })
}

/// Random payload grid.
pub fn random_grid<R: Rng + ?Sized>(
    rng: &mut R,
    constellation: &Constellation,
    carriers: usize,
    frames: usize,
) -> SymbolGrid {
    let bits = random_bits(rng, carriers * frames * constellation.bits_per_symbol());
    modulate(&bits, constellation, carriers, frames).expect("bit count matches by construction")
}

/// Hard decisions: label bits of the nearest point for every sample.
pub fn demodulate_hard(received: &ComplexGrid, constellation: &Constellation) -> Vec<u8> {
    let bps = constellation.bits_per_symbol();
    let mut bits = Vec::with_capacity(received.len() * bps);
    for &r in received.as_slice() {
        let label = constellation.nearest(r);
        for k in (0..bps).rev() {
            bits.push(((label >> k) & 1) as u8);
        }
    }
    bits
}

/// Nearest constellation point for every sample.
pub fn decide(received: &ComplexGrid, constellation: &Constellation) -> ComplexGrid {
    ComplexGrid {
        carriers: received.carriers,
        frames: received.frames,
        data: received
            .as_slice()
            .iter()
            .map(|&r| constellation.point_for_label(constellation.nearest(r)))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    pub sinr_target_db: f64,
    pub snr_db: f64,
    pub n_interferers: usize,
}

impl MixSpec {
    pub const MAX_INTERFERERS: usize = 3;

    /// Noise variance against unit signal power.
    pub fn noise_var(&self) -> f64 {
        db_to_linear(-self.snr_db)
    }

    /// Total interference power needed on top of the noise, with unit signal
    /// power.
    pub fn interference_power(&self) -> Result<f64> {
        if self.n_interferers > Self::MAX_INTERFERERS {
            return Err(Error::invalid(format!(
                "at most {} interferers supported, got {}",
                Self::MAX_INTERFERERS,
                self.n_interferers
            )));
        }
        if !self.sinr_target_db.is_finite() || !self.snr_db.is_finite() {
            return Err(Error::invalid("SINR and SNR must be finite"));
        }
        let p = db_to_linear(-self.sinr_target_db) - self.noise_var();
        if self.n_interferers == 0 {
            if (self.sinr_target_db - self.snr_db).abs() > 1e-9 {
                return Err(Error::InfeasibleSpec(format!(
                    "SINR {} dB differs from SNR {} dB but there are no interferers",
                    self.sinr_target_db, self.snr_db
                )));
            }
            return Ok(0.0);
        }
        if self.sinr_target_db > self.snr_db + 1e-12 {
            return Err(Error::InfeasibleSpec(format!(
                "SINR {} dB exceeds SNR {} dB",
                self.sinr_target_db, self.snr_db
            )));
        }
        Ok(p.max(0.0))
    }

    /// Amplitude applied to each (unit-power) interferer grid. Total
    /// interference is split equally.
    pub fn interferer_scale(&self) -> Result<f64> {
        let p = self.interference_power()?;
        if self.n_interferers == 0 {
            return Ok(0.0);
        }
        Ok((p / self.n_interferers as f64).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct MixOutput {
    pub received: ComplexGrid,
    /// Each interferer after scaling.
    pub interference: Vec<ComplexGrid>,
    pub noise: ComplexGrid,
    pub interferer_scale: f64,
    pub noise_var: f64,
    pub wanted_power: f64,
    pub interference_power: f64,
    pub noise_power: f64,
}

impl MixOutput {
    /// Realized SINR from the measured component powers (the sum of the
    /// interferers is measured as one term so cross terms are included).
    pub fn realized_sinr_db(&self) -> f64 {
        linear_to_db(self.wanted_power / (self.interference_power + self.noise_power))
    }

    /// Realized power of everything that is not the wanted signal.
    pub fn impairment_power(&self, wanted: &ComplexGrid) -> f64 {
        self.received
            .as_slice()
            .iter()
            .zip(wanted.as_slice())
            .map(|(r, w)| (r - w).norm_sqr())
            .sum::<f64>()
            / wanted.len().max(1) as f64
    }
}

/// `wanted + g * sum(interferers) + noise`, with the noise variance set by
/// `spec.snr_db` and the common interferer amplitude `g` chosen so the
/// expected interference-plus-noise power meets `spec.sinr_target_db`.
pub fn mix<R: Rng + ?Sized>(
    wanted: &SymbolGrid,
    interferers: &[SymbolGrid],
    spec: &MixSpec,
    rng: &mut R,
) -> Result<MixOutput> {
    if interferers.len() != spec.n_interferers {
        return Err(Error::invalid(format!(
            "spec declares {} interferers but {} grids were given",
            spec.n_interferers,
            interferers.len()
        )));
    }
    if interferers.iter().any(|g| !g.symbols.same_shape(&wanted.symbols)) {
        return Err(Error::invalid("interferer grid shape differs from wanted grid"));
    }
    let g = spec.interferer_scale()?;
    let noise_var = spec.noise_var();
    let (carriers, frames) = (wanted.carriers(), wanted.frames());

    let interference: Vec<ComplexGrid> = interferers.iter().map(|i| i.symbols.scaled(g)).collect();
    let noise = ComplexGrid {
        carriers,
        frames,
        data: (0..carriers * frames)
            .map(|_| complex_normal(rng, noise_var))
            .collect(),
    };
    let mut received = wanted.symbols.clone();
    let mut total_interference = ComplexGrid::zeros(carriers, frames);
    for grid in &interference {
        for (acc, z) in total_interference.data.iter_mut().zip(&grid.data) {
            *acc += z;
        }
    }
    for ((r, i), n) in received
        .data
        .iter_mut()
        .zip(&total_interference.data)
        .zip(&noise.data)
    {
        *r += i + n;
    }

    Ok(MixOutput {
        wanted_power: wanted.symbols.mean_power(),
        interference_power: total_interference.mean_power(),
        noise_power: noise.mean_power(),
        received,
        interference,
        noise,
        interferer_scale: g,
        noise_var,
    })
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Magnitude of the normalised sample cross-correlation of two streams.
pub fn cross_correlation(a: &[Complex64], b: &[Complex64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<Complex64>() / n as f64;
    let mb = b[..n].iter().sum::<Complex64>() / n as f64;
    let mut xy = Complex64::new(0.0, 0.0);
    let (mut xx, mut yy) = (0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        xy += dx * dy.conj();
        xx += dx.norm_sqr();
        yy += dy.norm_sqr();
    }
    xy.norm() / (xx * yy).sqrt()
}

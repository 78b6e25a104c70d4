//! Synthetic stochastic channels.
//!
//! Spatially uncorrelated Rayleigh entries, tapped-delay-line frequency
//! responses and first-order Gauss-Markov time evolution matched to the
//! Clarke autocorrelation at one block lag.

mod io;

pub use io::{read_binary, read_csv, write_binary, write_csv};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::complex_normal;

/// Complex gains indexed `[time_block][carrier][tx][rx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    n_blocks: usize,
    n_carriers: usize,
    n_tx: usize,
    n_rx: usize,
    carrier_spacing_hz: f64,
    block_period_s: f64,
    gains: Vec<Complex64>,
}

impl ChannelResponse {
    pub fn new(
        n_blocks: usize,
        n_carriers: usize,
        n_tx: usize,
        n_rx: usize,
        carrier_spacing_hz: f64,
        block_period_s: f64,
        gains: Vec<Complex64>,
    ) -> Result<Self> {
        if n_blocks == 0 || n_carriers == 0 || n_tx == 0 || n_rx == 0 {
            return Err(Error::invalid("channel dimensions must be nonzero"));
        }
        if gains.len() != n_blocks * n_carriers * n_tx * n_rx {
            return Err(Error::invalid(format!(
                "{} gains for a {n_blocks}x{n_carriers}x{n_tx}x{n_rx} channel",
                gains.len()
            )));
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::invalid("channel gains must be finite"));
        }
        Ok(ChannelResponse {
            n_blocks,
            n_carriers,
            n_tx,
            n_rx,
            carrier_spacing_hz,
            block_period_s,
            gains,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n_carriers(&self) -> usize {
        self.n_carriers
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn carrier_spacing_hz(&self) -> f64 {
        self.carrier_spacing_hz
    }

    pub fn block_period_s(&self) -> f64 {
        self.block_period_s
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    fn index(&self, block: usize, carrier: usize, tx: usize, rx: usize) -> usize {
        ((block * self.n_carriers + carrier) * self.n_tx + tx) * self.n_rx + rx
    }

    pub fn get(&self, block: usize, carrier: usize, tx: usize, rx: usize) -> Complex64 {
        self.gains[self.index(block, carrier, tx, rx)]
    }

    /// Users x antennas matrix of one carrier in one block.
    pub fn user_matrix(&self, block: usize, carrier: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n_rx, self.n_tx, |rx, tx| self.get(block, carrier, tx, rx))
    }

    /// Mean `|h|^2` over every entry.
    pub fn mean_power(&self) -> f64 {
        self.gains.iter().map(|g| g.norm_sqr()).sum::<f64>() / self.gains.len() as f64
    }

    /// The response of a single block as a one-block channel.
    pub fn block(&self, block: usize) -> Result<ChannelResponse> {
        if block >= self.n_blocks {
            return Err(Error::invalid(format!(
                "block {block} out of range 0..{}",
                self.n_blocks
            )));
        }
        let per_block = self.n_carriers * self.n_tx * self.n_rx;
        ChannelResponse::new(
            1,
            self.n_carriers,
            self.n_tx,
            self.n_rx,
            self.carrier_spacing_hz,
            self.block_period_s,
            self.gains[block * per_block..(block + 1) * per_block].to_vec(),
        )
    }

    pub fn scaled(&self, k: f64) -> ChannelResponse {
        ChannelResponse {
            gains: self.gains.iter().map(|g| g * k).collect(),
            ..self.clone()
        }
    }

    /// Stack one-block responses in time.
    pub fn stack(blocks: &[ChannelResponse]) -> Result<ChannelResponse> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero blocks"))?;
        let mut gains = Vec::with_capacity(first.gains.len() * blocks.len());
        for b in blocks {
            if (b.n_carriers, b.n_tx, b.n_rx) != (first.n_carriers, first.n_tx, first.n_rx) {
                return Err(Error::invalid("stacked blocks disagree in shape"));
            }
            gains.extend_from_slice(&b.gains);
        }
        ChannelResponse::new(
            gains.len() / first.gains.len() * first.n_blocks,
            first.n_carriers,
            first.n_tx,
            first.n_rx,
            first.carrier_spacing_hz,
            first.block_period_s,
            gains,
        )
    }
}

/// Single block, single carrier, i.i.d. unit-variance CN entries.
pub fn flat_rayleigh<R: Rng + ?Sized>(n_tx: usize, n_rx: usize, rng: &mut R) -> Result<ChannelResponse> {
    if n_tx == 0 || n_rx == 0 {
        return Err(Error::invalid("n_tx and n_rx must be at least 1"));
    }
    let gains = (0..n_tx * n_rx).map(|_| complex_normal(rng, 1.0)).collect();
    ChannelResponse::new(1, 1, n_tx, n_rx, 0.0, 0.0, gains)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    delays_s: Vec<f64>,
    powers: Vec<f64>,
}

impl DelayProfile {
    pub const DEFAULT_TAPS: usize = 8;
    pub const DEFAULT_TAP_SPACING_S: f64 = 50e-9;
    pub const DEFAULT_RMS_DELAY_S: f64 = 100e-9;

    pub fn new(delays_s: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        if delays_s.is_empty() || delays_s.len() != powers.len() {
            return Err(Error::invalid("delay profile needs matching, nonempty delays and powers"));
        }
        if delays_s[0] < 0.0 || delays_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tap delays must be nonnegative and strictly increasing"));
        }
        if powers.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("tap powers must be nonnegative"));
        }
        let total: f64 = powers.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("tap powers sum to {total}, expected 1")));
        }
        Ok(DelayProfile { delays_s, powers })
    }

    pub fn single_tap() -> Self {
        DelayProfile {
            delays_s: vec![0.0],
            powers: vec![1.0],
        }
    }

    /// Uniformly spaced taps with exponentially decaying power, decay
    /// constant solved so the RMS delay spread equals `rms_delay_s`.
    pub fn exponential(n_taps: usize, tap_spacing_s: f64, rms_delay_s: f64) -> Result<Self> {
        if n_taps < 2 || !(tap_spacing_s > 0.0) || !(rms_delay_s > 0.0) {
            return Err(Error::invalid(
                "exponential profile needs >= 2 taps, positive spacing and positive RMS delay",
            ));
        }
        let delays: Vec<f64> = (0..n_taps).map(|k| k as f64 * tap_spacing_s).collect();
        let profile_for = |decay: f64| {
            let raw: Vec<f64> = delays.iter().map(|&t| (-t / decay).exp()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|p| p / s).collect::<Vec<_>>()
        };
        let rms_for = |decay: f64| rms_spread(&delays, &profile_for(decay));
        // rms grows monotonically with the decay constant toward the flat-profile limit
        let (mut lo, mut hi) = (tap_spacing_s * 1e-3, tap_spacing_s * 1e6);
        if rms_for(hi) < rms_delay_s {
            return Err(Error::invalid(format!(
                "{n_taps} taps at {tap_spacing_s:e} s spacing cannot reach {rms_delay_s:e} s RMS spread"
            )));
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if rms_for(mid) < rms_delay_s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut powers = profile_for((lo * hi).sqrt());
        // exact unit sum after normalisation rounding
        let s: f64 = powers.iter().sum();
        powers.iter_mut().for_each(|p| *p /= s);
        DelayProfile::new(delays, powers)
    }

    pub fn delays_s(&self) -> &[f64] {
        &self.delays_s
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn n_taps(&self) -> usize {
        self.powers.len()
    }

    pub fn rms_delay_spread(&self) -> f64 {
        rms_spread(&self.delays_s, &self.powers)
    }

    /// Analytic frequency autocorrelation `sum_k p_k exp(-j 2 pi df tau_k)`.
    pub fn frequency_correlation(&self, df_hz: f64) -> Complex64 {
        self.delays_s
            .iter()
            .zip(&self.powers)
            .map(|(&t, &p)| Complex64::from_polar(p, -std::f64::consts::TAU * df_hz * t))
            .sum()
    }
}

impl Default for DelayProfile {
    fn default() -> Self {
        DelayProfile::exponential(
            Self::DEFAULT_TAPS,
            Self::DEFAULT_TAP_SPACING_S,
            Self::DEFAULT_RMS_DELAY_S,
        )
        .expect("default profile is feasible")
    }
}

fn rms_spread(delays: &[f64], powers: &[f64]) -> f64 {
    let m: f64 = delays.iter().zip(powers).map(|(t, p)| t * p).sum();
    let m2: f64 = delays.iter().zip(powers).map(|(t, p)| t * t * p).sum();
    (m2 - m * m).max(0.0).sqrt()
}

/// Multi-antenna tapped delay line held in the tap domain, so that time
/// evolution keeps the frequency correlation of the response intact.
#[derive(Debug, Clone, PartialEq)]
pub struct TapChannel {
    profile: DelayProfile,
    n_tx: usize,
    n_rx: usize,
    /// `[tx][rx][tap]`
    taps: Vec<Complex64>,
}

impl TapChannel {
    /// Draws taps in `(tx, rx, tap)` order, each CN(0, tap power).
    pub fn draw<R: Rng + ?Sized>(profile: &DelayProfile, n_tx: usize, n_rx: usize, rng: &mut R) -> Result<Self> {
        if n_tx == 0 || n_rx == 0 {
            return Err(Error::invalid("n_tx and n_rx must be at least 1"));
        }
        let mut taps = Vec::with_capacity(n_tx * n_rx * profile.n_taps());
        for _ in 0..n_tx * n_rx {
            for &p in profile.powers() {
                taps.push(complex_normal(rng, p));
            }
        }
        Ok(TapChannel {
            profile: profile.clone(),
            n_tx,
            n_rx,
            taps,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn profile(&self) -> &DelayProfile {
        &self.profile
    }

    pub fn taps(&self, tx: usize, rx: usize) -> &[Complex64] {
        let k = self.profile.n_taps();
        let start = (tx * self.n_rx + rx) * k;
        &self.taps[start..start + k]
    }

    fn taps_mut(&mut self, tx: usize, rx: usize) -> &mut [Complex64] {
        let k = self.profile.n_taps();
        let start = (tx * self.n_rx + rx) * k;
        &mut self.taps[start..start + k]
    }

    /// `a * self + b * other` for the taps of one receiver, used to build
    /// correlated users from a common component.
    pub fn blend_rx(&mut self, rx: usize, a: f64, other: &TapChannel, other_rx: usize, b: f64) {
        for tx in 0..self.n_tx {
            let src: Vec<Complex64> = other.taps(tx, other_rx).to_vec();
            for (t, s) in self.taps_mut(tx, rx).iter_mut().zip(src) {
                *t = *t * a + s * b;
            }
        }
    }

    /// One AR-1 step `h <- rho h + sqrt(1 - rho^2) w` applied to the taps of
    /// the receivers selected by `moving`.
    pub fn evolve_step<R: Rng + ?Sized>(&mut self, rho: f64, moving: &[bool], rng: &mut R) {
        let innov = (1.0 - rho * rho).max(0.0).sqrt();
        let powers = self.profile.powers.clone();
        for tx in 0..self.n_tx {
            for rx in 0..self.n_rx {
                if !moving.get(rx).copied().unwrap_or(true) {
                    continue;
                }
                for (t, &p) in self.taps_mut(tx, rx).iter_mut().zip(&powers) {
                    let w = complex_normal(rng, p);
                    *t = *t * rho + w * innov;
                }
            }
        }
    }

    /// `H(f) = sum_k a_k exp(-j 2 pi f tau_k)` at `f = c * spacing` for
    /// `c in 0..n_carriers`, as a one-block response.
    pub fn response(&self, n_carriers: usize, carrier_spacing_hz: f64, block_period_s: f64) -> Result<ChannelResponse> {
        let k = self.profile.n_taps();
        // per-carrier rotation factors, built incrementally per tap
        let mut phasors = vec![Complex64::new(0.0, 0.0); n_carriers * k];
        for (tap, &tau) in self.profile.delays_s.iter().enumerate() {
            let step = Complex64::from_polar(1.0, -std::f64::consts::TAU * carrier_spacing_hz * tau);
            let mut acc = Complex64::new(1.0, 0.0);
            for c in 0..n_carriers {
                // refresh from the exact phase periodically to bound drift
                if c % 256 == 0 {
                    acc = Complex64::from_polar(1.0, -std::f64::consts::TAU * carrier_spacing_hz * tau * c as f64);
                }
                phasors[c * k + tap] = acc;
                acc *= step;
            }
        }
        let mut gains = vec![Complex64::new(0.0, 0.0); n_carriers * self.n_tx * self.n_rx];
        for c in 0..n_carriers {
            let ph = &phasors[c * k..(c + 1) * k];
            for tx in 0..self.n_tx {
                for rx in 0..self.n_rx {
                    let h: Complex64 = self.taps(tx, rx).iter().zip(ph).map(|(a, e)| a * e).sum();
                    gains[(c * self.n_tx + tx) * self.n_rx + rx] = h;
                }
            }
        }
        ChannelResponse::new(1, n_carriers, self.n_tx, self.n_rx, carrier_spacing_hz, block_period_s, gains)
    }
}

/// Number of carriers of width `carrier_spacing_hz` in `band_hz`, which must
/// be a positive integer.
pub fn carrier_count(band_hz: f64, carrier_spacing_hz: f64) -> Result<usize> {
    if !(band_hz > 0.0) || !(carrier_spacing_hz > 0.0) {
        return Err(Error::invalid("band and carrier spacing must be positive"));
    }
    let n = band_hz / carrier_spacing_hz;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-6 * rounded.max(1.0) {
        return Err(Error::invalid(format!(
            "band {band_hz} Hz is not an integer number of {carrier_spacing_hz} Hz carriers"
        )));
    }
    Ok(rounded as usize)
}

/// Frequency-selective response over `band_hz` for every antenna pair.
pub fn tdl_response<R: Rng + ?Sized>(
    profile: &DelayProfile,
    band_hz: f64,
    carrier_spacing_hz: f64,
    n_tx: usize,
    n_rx: usize,
    rng: &mut R,
) -> Result<ChannelResponse> {
    let n_carriers = carrier_count(band_hz, carrier_spacing_hz)?;
    TapChannel::draw(profile, n_tx, n_rx, rng)?.response(n_carriers, carrier_spacing_hz, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityProfile {
    pub doppler_hz: f64,
    pub block_period_s: f64,
}

impl Default for MobilityProfile {
    fn default() -> Self {
        MobilityProfile {
            doppler_hz: 8.89,
            block_period_s: 0.036_56,
        }
    }
}

impl MobilityProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.doppler_hz >= 0.0) || !self.doppler_hz.is_finite() {
            return Err(Error::invalid("doppler_hz must be finite and >= 0"));
        }
        if !(self.block_period_s > 0.0) || !self.block_period_s.is_finite() {
            return Err(Error::invalid("block_period_s must be finite and > 0"));
        }
        if 1.0 / self.block_period_s <= 2.0 * self.doppler_hz {
            return Err(Error::invalid(format!(
                "block rate {:.3} Hz aliases a {} Hz Doppler",
                1.0 / self.block_period_s,
                self.doppler_hz
            )));
        }
        Ok(())
    }

    /// Clarke autocorrelation at one block lag, `J0(2 pi fd T)`.
    pub fn rho(&self) -> f64 {
        libm::j0(std::f64::consts::TAU * self.doppler_hz * self.block_period_s)
    }
}

/// Gauss-Markov evolution of every coefficient of the last block of
/// `initial`: block 0 of the result is that block, and each later block is
/// `rho h + sqrt(1 - rho^2) w` with i.i.d. innovations scaled to the
/// coefficient's average power. Innovations are independent across carriers;
/// use [`TapChannel::evolve_step`] to evolve a frequency-correlated response.
pub fn evolve<R: Rng + ?Sized>(
    initial: &ChannelResponse,
    profile: &MobilityProfile,
    n_blocks: usize,
    rng: &mut R,
) -> Result<ChannelResponse> {
    if n_blocks == 0 {
        return Err(Error::invalid("n_blocks must be at least 1"));
    }
    profile.validate()?;
    let rho = profile.rho();
    let innov = (1.0 - rho * rho).max(0.0).sqrt();
    let last = initial.block(initial.n_blocks() - 1)?;
    let per_block = last.gains.len();
    let mut gains = Vec::with_capacity(per_block * n_blocks);
    gains.extend_from_slice(&last.gains);
    for t in 1..n_blocks {
        let (prev_start, prev_end) = ((t - 1) * per_block, t * per_block);
        for i in prev_start..prev_end {
            let h = gains[i];
            let next = if profile.doppler_hz == 0.0 {
                h
            } else {
                h * rho + complex_normal(rng, 1.0) * innov
            };
            gains.push(next);
        }
    }
    ChannelResponse::new(
        n_blocks,
        last.n_carriers,
        last.n_tx,
        last.n_rx,
        last.carrier_spacing_hz,
        profile.block_period_s,
        gains,
    )
}

//! Zero-forcing downlink precoding and effective per-user channels.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelResponse;
use crate::error::{Error, Result};

/// Largest admissible condition number of the users x antennas channel.
pub const MAX_CONDITION: f64 = 1e8;

/// `n_tx x n_users` weights with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderMatrix {
    weights: DMatrix<Complex64>,
    normalization: Vec<f64>,
    condition: f64,
}

impl PrecoderMatrix {
    pub fn weights(&self) -> &DMatrix<Complex64> {
        &self.weights
    }

    /// Per-user scale applied to the raw pseudo-inverse column.
    pub fn normalization(&self) -> &[f64] {
        &self.normalization
    }

    /// Condition number of the channel the precoder was computed from.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn n_tx(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.weights.ncols()
    }
}

/// `W = H^H (H H^H)^-1` with columns scaled to unit norm. `h` is users x
/// antennas.
pub fn zero_forcing(h: &DMatrix<Complex64>) -> Result<PrecoderMatrix> {
    let (n_users, n_tx) = h.shape();
    if n_users == 0 {
        return Err(Error::invalid("channel has no users"));
    }
    if n_tx < n_users {
        return Err(Error::invalid(format!(
            "{n_users} users cannot be zero-forced with {n_tx} antennas"
        )));
    }
    let h_adj = h.adjoint();
    let gram = h * &h_adj;
    let eig = gram.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    let condition = if lo > 0.0 { (hi / lo).sqrt() } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let gram_inv = gram
        .cholesky()
        .ok_or(Error::IllConditioned { condition })?
        .inverse();
    let mut weights = h_adj * gram_inv;
    let mut normalization = Vec::with_capacity(n_users);
    for mut col in weights.column_iter_mut() {
        let scale = 1.0 / col.norm();
        col *= Complex64::new(scale, 0.0);
        normalization.push(scale);
    }
    Ok(PrecoderMatrix {
        weights,
        normalization,
        condition,
    })
}

/// Per-carrier precoders computed from one block of a channel.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    csi_block: usize,
    per_carrier: Vec<PrecoderMatrix>,
}

impl PrecoderSet {
    pub fn csi_block(&self) -> usize {
        self.csi_block
    }

    pub fn carrier(&self, c: usize) -> &PrecoderMatrix {
        &self.per_carrier[c]
    }

    pub fn n_carriers(&self) -> usize {
        self.per_carrier.len()
    }
}

/// Independent zero-forcing precoder on every carrier of `csi_block`.
pub fn zero_forcing_block(h: &ChannelResponse, csi_block: usize) -> Result<PrecoderSet> {
    if csi_block >= h.n_blocks() {
        return Err(Error::invalid(format!(
            "CSI block {csi_block} out of range 0..{}",
            h.n_blocks()
        )));
    }
    let per_carrier = (0..h.n_carriers())
        .map(|c| zero_forcing(&h.user_matrix(csi_block, c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecoderSet {
        csi_block,
        per_carrier,
    })
}

/// Gains `row_u(H) . col_v(W)` for every carrier, receiving user `u` and
/// precoded stream `v`. The diagonal is the wanted gain, the rest leakage.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    csi_block: usize,
    apply_block: usize,
    n_carriers: usize,
    n_users: usize,
    /// `[carrier][rx user][stream]`
    gains: Vec<Complex64>,
}

impl EffectiveChannel {
    pub fn csi_block(&self) -> usize {
        self.csi_block
    }

    pub fn apply_block(&self) -> usize {
        self.apply_block
    }

    pub fn n_carriers(&self) -> usize {
        self.n_carriers
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn gain(&self, carrier: usize, user: usize, stream: usize) -> Complex64 {
        self.gains[(carrier * self.n_users + user) * self.n_users + stream]
    }

    pub fn wanted(&self, carrier: usize, user: usize) -> Complex64 {
        self.gain(carrier, user, user)
    }

    pub fn leakage_power(&self, carrier: usize, user: usize) -> f64 {
        (0..self.n_users)
            .filter(|&v| v != user)
            .map(|v| self.gain(carrier, user, v).norm_sqr())
            .sum()
    }

    /// Leakage power over wanted power, dB.
    pub fn leakage_ratio_db(&self, carrier: usize, user: usize) -> f64 {
        10.0 * (self.leakage_power(carrier, user) / self.wanted(carrier, user).norm_sqr()).log10()
    }
}

/// Apply precoders computed at `w.csi_block()` to the channel of
/// `apply_block`.
pub fn effective_channel(h: &ChannelResponse, w: &PrecoderSet, apply_block: usize) -> Result<EffectiveChannel> {
    if apply_block >= h.n_blocks() {
        return Err(Error::invalid(format!(
            "apply block {apply_block} out of range 0..{}",
            h.n_blocks()
        )));
    }
    if w.n_carriers() != h.n_carriers() {
        return Err(Error::invalid("precoder carrier count differs from channel"));
    }
    let n_users = h.n_rx();
    let mut gains = Vec::with_capacity(h.n_carriers() * n_users * n_users);
    for c in 0..h.n_carriers() {
        let p = w.carrier(c);
        if p.n_tx() != h.n_tx() || p.n_users() != n_users {
            return Err(Error::invalid("precoder shape differs from channel"));
        }
        let g = h.user_matrix(apply_block, c) * p.weights();
        for u in 0..n_users {
            for v in 0..n_users {
                gains.push(g[(u, v)]);
            }
        }
    }
    Ok(EffectiveChannel {
        csi_block: w.csi_block(),
        apply_block,
        n_carriers: h.n_carriers(),
        n_users,
        gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{evolve, flat_rayleigh, MobilityProfile};
    use crate::rng::substream;

    fn random_h(seed: u64, users: usize, tx: usize) -> DMatrix<Complex64> {
        flat_rayleigh(tx, users, &mut substream(seed, &[0])).unwrap().user_matrix(0, 0)
    }

    #[test]
    fn single_user_is_matched_filter() {
        let h = random_h(1, 1, 16);
        let w = zero_forcing(&h).unwrap();
        let mrt = h.adjoint() / Complex64::new(h.norm(), 0.0);
        assert!((w.weights() - mrt).norm() < 1e-12);
    }

    #[test]
    fn identity_channel_gives_identity() {
        let h = DMatrix::<Complex64>::identity(3, 3);
        let w = zero_forcing(&h).unwrap();
        assert!((w.weights() - DMatrix::identity(3, 3)).norm() < 1e-14);
        assert!((w.condition() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_32x3_nulls_interference() {
        for seed in 0..50 {
            let h = random_h(seed, 3, 32);
            let w = zero_forcing(&h).unwrap();
            for col in w.weights().column_iter() {
                assert!((col.norm() - 1.0).abs() < 1e-12);
            }
            let g = &h * w.weights();
            let min_diag = (0..3).map(|u| g[(u, u)].norm()).fold(f64::INFINITY, f64::min);
            for u in 0..3 {
                for v in 0..3 {
                    if u != v {
                        assert!(g[(u, v)].norm() <= 1e-10 * min_diag);
                    }
                }
                // ZF gain on the diagonal is real and positive
                assert!(g[(u, u)].im.abs() < 1e-10 * g[(u, u)].re);
            }
        }
    }

    #[test]
    fn scaling_channel_leaves_precoder_unchanged() {
        let h = random_h(7, 3, 32);
        let w = zero_forcing(&h).unwrap();
        for k in [1e-3, 0.5, 7.0, 1e4] {
            let ws = zero_forcing(&(h.clone() * Complex64::new(k, 0.0))).unwrap();
            assert!((ws.weights() - w.weights()).norm() < 1e-12, "scale {k}");
        }
    }

    #[test]
    fn rank_deficient_or_too_few_antennas() {
        let mut h = random_h(3, 3, 8);
        let row = h.row(0).clone_owned();
        h.set_row(2, &row);
        assert!(matches!(zero_forcing(&h), Err(Error::IllConditioned { .. })));
        assert!(matches!(zero_forcing(&random_h(4, 4, 3)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn effective_channel_at_csi_block_has_no_leakage() {
        let h = flat_rayleigh(32, 3, &mut substream(11, &[0])).unwrap();
        let w = zero_forcing_block(&h, 0).unwrap();
        let e = effective_channel(&h, &w, 0).unwrap();
        for u in 0..3 {
            assert!(e.leakage_ratio_db(0, u) <= -100.0);
        }
        assert!(effective_channel(&h, &w, 1).is_err());
        assert!(zero_forcing_block(&h, 1).is_err());
    }

    #[test]
    fn static_channel_keeps_csi_result() {
        let h0 = flat_rayleigh(32, 3, &mut substream(12, &[0])).unwrap();
        let still = MobilityProfile {
            doppler_hz: 0.0,
            ..MobilityProfile::default()
        };
        let h = evolve(&h0, &still, 5, &mut substream(12, &[1])).unwrap();
        let w = zero_forcing_block(&h, 0).unwrap();
        let at0 = effective_channel(&h, &w, 0).unwrap();
        for t in 1..5 {
            let at = effective_channel(&h, &w, t).unwrap();
            assert_eq!(at.gains, at0.gains);
        }
    }

    #[test]
    fn stale_csi_leaks() {
        let m = MobilityProfile::default();
        let lags = 4;
        let trials = 200;
        let mut leak = vec![0.0; lags + 1];
        for t in 0..trials {
            let h0 = flat_rayleigh(32, 3, &mut substream(13, &[t, 0])).unwrap();
            let h = evolve(&h0, &m, lags + 1, &mut substream(13, &[t, 1])).unwrap();
            let w = zero_forcing_block(&h, 0).unwrap();
            for (k, l) in leak.iter_mut().enumerate() {
                let e = effective_channel(&h, &w, k).unwrap();
                *l += (0..3).map(|u| e.leakage_power(0, u)).sum::<f64>() / 3.0 / trials as f64;
            }
        }
        assert!(leak[0] < 1e-20);
        // expected leakage (K-1)(1 - rho^2k) with unit-norm columns
        for k in 1..=lags {
            let expect = 2.0 * (1.0 - m.rho().powi(2 * k as i32));
            assert!((leak[k] - expect).abs() < 0.15 * expect, "lag {k}: {} vs {expect}", leak[k]);
        }
    }
}

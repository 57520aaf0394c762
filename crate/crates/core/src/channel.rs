//! Line-of-sight MIMO channels between node arrays and their achievable rates.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance_vector, NetworkState, NodeState};
use crate::scalar::{self, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("zero distance between transmitter and receiver")]
    ZeroDistance,
    #[error("invalid radio configuration: {0}")]
    InvalidRadio(String),
}

/// How the Doppler term enters the entry phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DopplerMode {
    /// Phase is `2 pi f + phi`.
    #[default]
    Literal,
    /// Phase is `2 pi f n tau + phi`.
    Accumulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub wavelength: f64,
    pub path_loss_exponent: f64,
    /// Linear gain at 1 m.
    pub reference_gain: f64,
    pub bandwidth: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_density: f64,
    pub doppler: DopplerMode,
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("wavelength", self.wavelength),
            ("reference_gain", self.reference_gain),
            ("bandwidth", self.bandwidth),
            ("noise_density", self.noise_density),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::InvalidRadio(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.path_loss_exponent >= 1.0) {
            return Err(ChannelError::InvalidRadio(format!(
                "path_loss_exponent must be >= 1, got {}",
                self.path_loss_exponent
            )));
        }
        Ok(())
    }
}

/// `beta0 * |d|^-alpha` for the center-to-center distance.
pub fn path_loss(center_distance: Vec3<f64>, cfg: &RadioConfig) -> Result<f64, ChannelError> {
    let d = scalar::norm(center_distance);
    if d == 0.0 {
        return Err(ChannelError::ZeroDistance);
    }
    Ok(cfg.reference_gain * d.powf(-cfg.path_loss_exponent))
}

/// Channel matrix of one link (receive elements by transmit elements).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannel {
    matrix: DMatrix<Complex64>,
    path_loss: f64,
    singular_values: Vec<f64>,
    trace_power: f64,
}

impl LinkChannel {
    /// Wraps a matrix and computes its spectrum.
    pub fn from_matrix(matrix: DMatrix<Complex64>, path_loss: f64) -> Self {
        let mut singular_values: Vec<f64> = matrix
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let trace_power = singular_values.iter().map(|s| s * s).sum();
        Self {
            matrix,
            path_loss,
            singular_values,
            trace_power,
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn path_loss(&self) -> f64 {
        self.path_loss
    }

    /// Descending singular values, `min(L_tx, L_rx)` of them.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Sum of squared singular values.
    pub fn trace_power(&self) -> f64 {
        self.trace_power
    }

    pub fn tx_len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rx_len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest relative deviation of an entry magnitude from `sqrt(path_loss)`.
    pub fn modulus_error(&self) -> f64 {
        let want = self.path_loss.sqrt();
        self.matrix
            .iter()
            .map(|z| (z.norm() - want).abs() / want)
            .fold(0.0, f64::max)
    }

    /// Count of singular values above `rel_tol * largest`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > rel_tol * top)
            .count()
    }

    pub fn rate_curve(&self, cfg: &RadioConfig) -> RateCurve {
        let scale = cfg.bandwidth * cfg.noise_density * self.tx_len() as f64;
        RateCurve::new(
            cfg.bandwidth,
            self.singular_values.iter().map(|s| s * s / scale).collect(),
        )
    }

    pub fn bound_curve(&self, cfg: &RadioConfig, which: RateBound) -> RateCurve {
        let streams = match which {
            RateBound::Lower => 1,
            RateBound::Upper => self.tx_len().min(self.rx_len()),
        };
        let gain = self.trace_power
            / (cfg.bandwidth * cfg.noise_density * self.tx_len() as f64 * streams as f64);
        RateCurve::new(cfg.bandwidth * streams as f64, vec![gain])
    }
}

/// Builds the channel for one slot. Entry phases combine the element-pair
/// Doppler shift and the propagation phase.
pub fn build_channel(
    tx: &NodeState<f64>,
    rx: &NodeState<f64>,
    cfg: &RadioConfig,
    slot: usize,
    slot_len: f64,
) -> Result<LinkChannel, ChannelError> {
    let beta = path_loss(scalar::sub(rx.center, tx.center), cfg)?;
    let amplitude = beta.sqrt();
    let rel_velocity = scalar::sub(tx.velocity, rx.velocity);
    let doppler_scale = match cfg.doppler {
        DopplerMode::Literal => 1.0,
        DopplerMode::Accumulated => slot as f64 * slot_len,
    };
    let tx_off = tx.array.offsets();
    let rx_off = rx.array.offsets();
    let mut m = DMatrix::<Complex64>::zeros(rx_off.len(), tx_off.len());
    for (p, &ro) in rx_off.iter().enumerate() {
        for (q, &to) in tx_off.iter().enumerate() {
            let d = distance_vector(tx.center, to, rx.center, ro);
            let dn = scalar::norm(d);
            if dn == 0.0 {
                return Err(ChannelError::ZeroDistance);
            }
            let doppler = scalar::dot(d, rel_velocity) / (cfg.wavelength * dn);
            let theta = 2.0 * PI * doppler * doppler_scale + 2.0 * PI * dn / cfg.wavelength;
            m[(p, q)] = Complex64::from_polar(amplitude, theta);
        }
    }
    Ok(LinkChannel::from_matrix(m, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateBound {
    Lower,
    Upper,
}

/// `B * sum_l log2(1 + p s_l^2 / (B N0 L_tx))`.
pub fn achievable_rate(p: f64, ch: &LinkChannel, cfg: &RadioConfig) -> f64 {
    ch.rate_curve(cfg).rate(p)
}

pub fn rate_bound(p: f64, ch: &LinkChannel, cfg: &RadioConfig, which: RateBound) -> f64 {
    ch.bound_curve(cfg, which).rate(p)
}

/// Concave rate model `r(p) = B * sum_l log2(1 + g_l p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    bandwidth: f64,
    gains: Vec<f64>,
}

impl RateCurve {
    pub fn new(bandwidth: f64, gains: Vec<f64>) -> Self {
        Self { bandwidth, gains }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Per-stream SNR per watt.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn rate(&self, p: f64) -> f64 {
        self.bandwidth * self.gains.iter().map(|g| (g * p).ln_1p()).sum::<f64>() / LN_2
    }

    /// `dr/dp`.
    pub fn slope(&self, p: f64) -> f64 {
        self.bandwidth * self.gains.iter().map(|g| g / (1.0 + g * p)).sum::<f64>() / LN_2
    }

    /// Power needed to reach `target` bits/s; `None` if it exceeds `p_max`.
    pub fn power_for_rate(&self, target: f64, p_max: f64) -> Option<f64> {
        if target <= 0.0 {
            return Some(0.0);
        }
        if self.rate(p_max) < target {
            return None;
        }
        let (mut lo, mut hi) = (0.0, p_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.rate(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }
}

/// Channels for every link at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub slot: usize,
    /// Vehicle to ARSU, per vehicle.
    pub uplink: Vec<LinkChannel>,
    /// ARSU to vehicle, per vehicle.
    pub downlink: Vec<LinkChannel>,
    /// ARSU to GRSU.
    pub relay: LinkChannel,
    /// GRSU to ARSU.
    pub backhaul: LinkChannel,
}

pub fn build_channel_set(
    state: &NetworkState<f64>,
    cfg: &RadioConfig,
) -> Result<ChannelSet, ChannelError> {
    let (n, tau) = (state.slot(), state.slot_len());
    let uplink = state
        .vehicles
        .iter()
        .map(|v| build_channel(v, &state.arsu, cfg, n, tau))
        .collect::<Result<_, _>>()?;
    let downlink = state
        .vehicles
        .iter()
        .map(|v| build_channel(&state.arsu, v, cfg, n, tau))
        .collect::<Result<_, _>>()?;
    Ok(ChannelSet {
        slot: n,
        uplink,
        downlink,
        relay: build_channel(&state.arsu, &state.grsu, cfg, n, tau)?,
        backhaul: build_channel(&state.grsu, &state.arsu, cfg, n, tau)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ArraySpec;

    fn radio() -> RadioConfig {
        RadioConfig {
            wavelength: 0.15,
            path_loss_exponent: 2.0,
            reference_gain: 1e-5,
            bandwidth: 5e6,
            noise_density: 1e-16,
            doppler: DopplerMode::Literal,
        }
    }

    fn node(center: Vec3<f64>, side: usize) -> NodeState<f64> {
        let arr = ArraySpec::square(side, 0.075, [1.0, 0.7, 1.0]).unwrap();
        NodeState::new(center, [1.0, 2.0, 0.0], arr)
    }

    #[test]
    fn path_loss_values() {
        let cfg = radio();
        assert!((path_loss([1.0, 0.0, 0.0], &cfg).unwrap() - 1e-5).abs() < 1e-20);
        assert!((path_loss([0.0, 10.0, 0.0], &cfg).unwrap() - 1e-7).abs() < 1e-20);
        let a = path_loss([3.0, 4.0, 0.0], &cfg).unwrap();
        let b = path_loss([6.0, 8.0, 0.0], &cfg).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
        assert_eq!(path_loss([0.0; 3], &cfg), Err(ChannelError::ZeroDistance));
    }

    #[test]
    fn scalar_link_has_single_singular_value() {
        let cfg = radio();
        let ch =
            build_channel(&node([0.0; 3], 1), &node([3.0, 4.0, 0.0], 1), &cfg, 0, 0.2).unwrap();
        let beta: f64 = 1e-5 / 25.0;
        assert_eq!(ch.singular_values().len(), 1);
        assert!((ch.singular_values()[0] - beta.sqrt()).abs() < 1e-15);
        assert!((ch.matrix()[(0, 0)].norm() - beta.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn frobenius_identity_for_arrays() {
        let cfg = radio();
        let ch =
            build_channel(&node([0.0; 3], 3), &node([4.0, 1.0, 6.0], 2), &cfg, 3, 0.2).unwrap();
        let want = ch.path_loss() * 9.0 * 4.0;
        assert!((ch.trace_power() - want).abs() <= 1e-9 * want);
        assert!((ch.frobenius_sq() - want).abs() <= 1e-9 * want);
        assert!(ch.modulus_error() < 1e-12);
        assert_eq!(ch.tx_len(), 9);
        assert_eq!(ch.rx_len(), 4);
        assert_eq!(ch.singular_values().len(), 4);
    }

    #[test]
    fn scalar_rate_example() {
        let cfg = radio();
        let beta: f64 = 2.5e-8;
        let ch = LinkChannel::from_matrix(
            DMatrix::from_element(1, 1, Complex64::new(beta.sqrt(), 0.0)),
            beta,
        );
        let r = achievable_rate(3.162, &ch, &cfg);
        // 5e6 * log2(1 + 158.1) computed by hand
        let want = 5e6 * (1.0f64 + 158.1).log2();
        assert!((r - want).abs() / want < 1e-9);
        assert!((r - 3.66e7).abs() / 3.66e7 < 5e-3);
        assert_eq!(achievable_rate(0.0, &ch, &cfg), 0.0);
        assert_eq!(
            rate_bound(1.0, &ch, &cfg, RateBound::Lower),
            rate_bound(1.0, &ch, &cfg, RateBound::Upper)
        );
    }

    #[test]
    fn power_for_rate_inverts_rate() {
        let c = RateCurve::new(5e6, vec![1e3, 20.0, 0.5]);
        let p = c.power_for_rate(4e7, 10.0).unwrap();
        assert!((c.rate(p) - 4e7).abs() / 4e7 < 1e-9);
        assert_eq!(c.power_for_rate(1e12, 10.0), None);
        assert_eq!(c.power_for_rate(0.0, 10.0), Some(0.0));
    }

    #[test]
    fn channel_set_covers_all_links() {
        let cfg = radio();
        let arr = ArraySpec::square(2, 0.075, [0.3, 0.2, 0.1]).unwrap();
        let s = NetworkState::new(
            2,
            0.2,
            vec![
                NodeState::new([5.0, 0.0, 0.0], [1.0, 0.0, 0.0], arr),
                NodeState::new([9.0, 0.0, 0.0], [1.0, 0.0, 0.0], arr),
            ],
            NodeState::new([0.0, 0.0, 10.0], [0.0, 1.0, 0.0], arr),
            NodeState::new([-5.0, 0.0, 0.0], [0.0; 3], arr),
        )
        .unwrap();
        let set = build_channel_set(&s, &cfg).unwrap();
        assert_eq!(set.uplink.len(), 2);
        assert_eq!(set.downlink.len(), 2);
        assert_eq!(set.relay.rx_len(), 4);
    }
}

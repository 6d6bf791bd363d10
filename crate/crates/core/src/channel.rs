//! Downlink channel: path loss with log-normal shadowing, frequency
//! selective Rayleigh fading over an exponential power delay profile, the
//! SNR target for a BER, and the packet error model.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::model::SystemConfig;

pub fn to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

pub fn from_db(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Exponential BER approximation for a `2^r` constellation.
pub fn bit_error_rate(snr: f64, bits_per_symbol: u32) -> f64 {
    let levels = ((1u64 << bits_per_symbol) - 1) as f64;
    0.2 * libm::exp(-1.6 * snr / levels)
}

/// Received SNR (linear) needed to reach `target_ber`.
pub fn snr_target(target_ber: f64, bits_per_symbol: u32) -> Result<f64> {
    if !(target_ber > 0.0 && target_ber < 0.2) {
        return Err(Error::Domain(target_ber));
    }
    let levels = ((1u64 << bits_per_symbol) - 1) as f64;
    Ok(levels * libm::log(0.2 / target_ber) / 1.6)
}

/// `1 - (1 - BER)^L`.
pub fn packet_error_rate(snr: f64, bits: u32, bits_per_symbol: u32) -> f64 {
    let ber = bit_error_rate(snr.max(0.0), bits_per_symbol);
    -libm::expm1(bits as f64 * libm::log1p(-ber))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
}

pub fn packet_outcome<R: Rng + ?Sized>(
    received_snr: f64,
    bits: u32,
    bits_per_symbol: u32,
    rng: &mut R,
) -> Outcome {
    let per = packet_error_rate(received_snr, bits, bits_per_symbol);
    if rng.random::<f64>() < per {
        Outcome::Failure
    } else {
        Outcome::Success
    }
}

/// Required receive SNR and noise power per user.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub gamma: Vec<f64>,
    pub target_ber: f64,
    /// `N0 * B` in watts.
    pub noise_power: f64,
}

impl LinkBudget {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let gamma = snr_target(cfg.target_ber, cfg.bits_per_symbol)?;
        Ok(Self {
            gamma: vec![gamma; cfg.users],
            target_ber: cfg.target_ber,
            noise_power: cfg.noise_power(),
        })
    }
}

/// Per-user, per-subcarrier power gains `|H_{k,n}|^2` for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub gains: Vec<Vec<f64>>,
    pub frame: u64,
}

impl ChannelState {
    /// Frequency-flat channel with the same gain everywhere.
    pub fn flat(users: usize, subcarriers: usize, gain: f64) -> Self {
        Self {
            gains: vec![vec![gain; subcarriers]; users],
            frame: 0,
        }
    }

    pub fn users(&self) -> usize {
        self.gains.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.gains.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellLayout {
    pub radius: f64,
    pub path_loss_exponent: f64,
    pub shadowing_std_db: f64,
    /// Distance with unit path gain; also the closest a user may be placed.
    pub reference_distance: f64,
}

impl Default for CellLayout {
    fn default() -> Self {
        Self {
            radius: 50.0,
            path_loss_exponent: 4.0,
            shadowing_std_db: 6.0,
            reference_distance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserGeometry {
    pub distance: f64,
    pub shadow_db: f64,
    pub path_gain: f64,
}

impl UserGeometry {
    pub fn new(distance: f64, shadow_db: f64, layout: &CellLayout) -> Self {
        let path_gain = libm::pow(
            layout.reference_distance / distance,
            layout.path_loss_exponent,
        );
        Self {
            distance,
            shadow_db,
            path_gain,
        }
    }

    /// Path gain times shadowing, the mean of every `|H_{k,n}|^2`.
    pub fn large_scale_gain(&self) -> f64 {
        self.path_gain * from_db(self.shadow_db)
    }
}

impl CellLayout {
    /// Drops users uniformly over the disc.
    pub fn place_users<R: Rng + ?Sized>(&self, users: usize, rng: &mut R) -> Vec<UserGeometry> {
        let shadow = Normal::new(0.0, self.shadowing_std_db).expect("finite std");
        (0..users)
            .map(|_| {
                let u: f64 = rng.random();
                let d = (self.radius * libm::sqrt(u)).max(self.reference_distance);
                UserGeometry::new(d, shadow.sample(rng), self)
            })
            .collect()
    }
}

/// Tap powers of a tapped delay line, normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    taps: Vec<f64>,
}

impl PowerDelayProfile {
    /// `taps` taps with power proportional to `exp(-l / decay)`.
    pub fn exponential(taps: usize, decay: f64) -> Self {
        let raw: Vec<f64> = (0..taps.max(1))
            .map(|l| libm::exp(-(l as f64) / decay))
            .collect();
        Self::from_powers(&raw)
    }

    pub fn from_powers(powers: &[f64]) -> Self {
        let total: f64 = powers.iter().sum();
        Self {
            taps: powers.iter().map(|p| p / total).collect(),
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

impl Default for PowerDelayProfile {
    fn default() -> Self {
        Self::exponential(6, 1.0)
    }
}

const FADING_STREAM: u64 = 1 << 40;

/// Block-fading channel generator, one realization per frame.
///
/// With zero correlation every frame is a pure function of
/// `(geometry, seed, frame index)`. With correlation `rho` the taps follow
/// `h <- rho h + sqrt(1 - rho^2) w`, so frames must be requested in order.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    geometry: Vec<UserGeometry>,
    pdp: PowerDelayProfile,
    subcarriers: usize,
    correlation: f64,
    seed: u64,
    /// Twiddles `exp(-j 2 pi l n / N)` per (subcarrier, tap).
    twiddle: Vec<Vec<(f64, f64)>>,
    taps: Vec<Vec<(f64, f64)>>,
    started: bool,
}

impl ChannelModel {
    pub fn new(
        geometry: Vec<UserGeometry>,
        pdp: PowerDelayProfile,
        subcarriers: usize,
        correlation: f64,
        seed: u64,
    ) -> Self {
        let taps_len = pdp.taps().len();
        let twiddle = (0..subcarriers)
            .map(|n| {
                (0..taps_len)
                    .map(|l| {
                        let angle = -2.0 * PI * (l * n) as f64 / subcarriers as f64;
                        (libm::cos(angle), libm::sin(angle))
                    })
                    .collect()
            })
            .collect();
        let users = geometry.len();
        Self {
            geometry,
            pdp,
            subcarriers,
            correlation: correlation.clamp(0.0, 1.0),
            seed,
            twiddle,
            taps: vec![vec![(0.0, 0.0); taps_len]; users],
            started: false,
        }
    }

    /// Drops users with `layout` using the configured seed.
    pub fn for_config(
        cfg: &SystemConfig,
        layout: &CellLayout,
        pdp: PowerDelayProfile,
        correlation: f64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let geometry = layout.place_users(cfg.users, &mut rng);
        Self::new(geometry, pdp, cfg.subcarriers, correlation, cfg.seed)
    }

    pub fn geometry(&self) -> &[UserGeometry] {
        &self.geometry
    }

    fn draw_taps(&self, frame: u64) -> Vec<Vec<(f64, f64)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(FADING_STREAM + frame);
        self.geometry
            .iter()
            .map(|_| {
                self.pdp
                    .taps()
                    .iter()
                    .map(|&p| {
                        let s = libm::sqrt(p / 2.0);
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        (s * re, s * im)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn frame(&mut self, index: u64) -> ChannelState {
        let fresh = self.draw_taps(index);
        if !self.started || self.correlation == 0.0 {
            self.taps = fresh;
            self.started = true;
        } else {
            let rho = self.correlation;
            let inno = libm::sqrt(1.0 - rho * rho);
            for (user, new) in self.taps.iter_mut().zip(&fresh) {
                for (h, w) in user.iter_mut().zip(new) {
                    h.0 = rho * h.0 + inno * w.0;
                    h.1 = rho * h.1 + inno * w.1;
                }
            }
        }
        let gains = self
            .taps
            .iter()
            .zip(&self.geometry)
            .map(|(h, geo)| {
                let scale = geo.large_scale_gain();
                (0..self.subcarriers)
                    .map(|n| {
                        let (mut re, mut im) = (0.0, 0.0);
                        for (tap, tw) in h.iter().zip(&self.twiddle[n]) {
                            re += tap.0 * tw.0 - tap.1 * tw.1;
                            im += tap.0 * tw.1 + tap.1 * tw.0;
                        }
                        scale * (re * re + im * im)
                    })
                    .collect()
            })
            .collect();
        ChannelState {
            gains,
            frame: index,
        }
    }
}

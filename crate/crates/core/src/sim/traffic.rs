//! Arrival processes.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::virtual_time::Arrival;

/// Token-bucket regulator: at most `sigma + rho * t` bits in any interval of
/// length `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakyBucket {
    pub sigma_bits: f64,
    pub rho_bps: f64,
}

/// Poisson packet sources, one per flow, optionally shaped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    pub rates_bps: Vec<f64>,
    pub bucket: Option<LeakyBucket>,
}

impl TrafficModel {
    pub fn uniform(users: usize, rate_bps: f64) -> Self {
        Self {
            rates_bps: alloc::vec![rate_bps; users],
            bucket: None,
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.rates_bps.len() != cfg.users {
            return Err(Error::Config("one traffic rate per user required"));
        }
        if self.rates_bps.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config("traffic rates must be positive"));
        }
        if let Some(b) = self.bucket {
            if !(b.rho_bps > 0.0 && b.sigma_bits >= cfg.packet_bits as f64) {
                return Err(Error::Config("bucket needs rho > 0 and sigma >= L"));
            }
        }
        Ok(())
    }

    /// True when some flow's mean rate exceeds the shaping rate, so its
    /// shaper backlog grows without bound.
    pub fn shaping_unstable(&self) -> bool {
        self.bucket
            .is_some_and(|b| self.rates_bps.iter().any(|&r| b.rho_bps <= r))
    }

    /// Offered load as a fraction of the `N r / T_sym` channel rate.
    pub fn load(&self, cfg: &SystemConfig) -> f64 {
        let capacity = cfg.service_rate() / cfg.symbol_duration;
        self.rates_bps.iter().sum::<f64>() / capacity
    }

    /// Time-sorted arrivals in `[0, horizon)` symbols.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        cfg: &SystemConfig,
        horizon: f64,
        rng: &mut R,
    ) -> Vec<Arrival> {
        let mut all = Vec::new();
        for (flow, &rate) in self.rates_bps.iter().enumerate() {
            let per_symbol = rate / cfg.packet_bits as f64 * cfg.symbol_duration;
            let gap = Exp::new(per_symbol).expect("positive rate");
            let mut t = 0.0;
            let mut tokens = self.bucket.map_or(0.0, |b| b.sigma_bits);
            let mut last_release = 0.0f64;
            loop {
                t += gap.sample(rng);
                if t >= horizon {
                    break;
                }
                let release = match self.bucket {
                    None => t,
                    Some(b) => {
                        let rho = b.rho_bps * cfg.symbol_duration;
                        let at = t.max(last_release);
                        tokens = (tokens + (at - last_release) * rho).min(b.sigma_bits);
                        let need = cfg.packet_bits as f64;
                        let wait = if tokens >= need {
                            0.0
                        } else {
                            (need - tokens) / rho
                        };
                        tokens = (tokens + wait * rho) - need;
                        last_release = at + wait;
                        at + wait
                    }
                };
                if release < horizon {
                    all.push(Arrival {
                        time: release,
                        flow,
                    });
                }
            }
        }
        all.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.flow.cmp(&b.flow)));
        all
    }
}

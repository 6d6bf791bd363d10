//! Shared domain types and frame arithmetic.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Static parameters of one downlink cell.
///
/// Durations are in seconds here; the engine converts them to symbol counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of users `K`.
    pub users: usize,
    /// Number of subcarriers `N`.
    pub subcarriers: usize,
    /// Packet length `L` in bits.
    pub packet_bits: u32,
    /// Bits per subcarrier symbol `r` (constellation size `2^r`).
    pub bits_per_symbol: u32,
    /// OFDM symbol duration in seconds.
    pub symbol_duration: f64,
    /// Packets served concurrently by MPGPS and O-MPGPS (`M`).
    pub concurrency: usize,
    /// Cap on the batch size for A-MPGPS (`M_max`).
    pub max_concurrency: usize,
    /// Opportunistic candidate window for O-MPGPS (`U`).
    pub window: usize,
    /// GPS weights, one per user.
    pub weights: Vec<f64>,
    pub target_ber: f64,
    /// Noise power spectral density `N0` in W/Hz.
    pub noise_psd: f64,
    /// Subcarrier bandwidth `B` in Hz.
    pub subcarrier_bandwidth: f64,
    /// Drop deadline measured from arrival, in seconds.
    pub deadline: Option<f64>,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let symbol_duration = 200e-6;
        Self {
            users: 10,
            subcarriers: 64,
            packet_bits: 1024,
            bits_per_symbol: 2,
            symbol_duration,
            concurrency: 4,
            max_concurrency: 6,
            window: 6,
            weights: vec![1.0; 10],
            target_ber: 1e-6,
            // -174 dBm/Hz
            noise_psd: 3.981e-21,
            subcarrier_bandwidth: 1.0 / symbol_duration,
            deadline: Some(0.040),
            seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.subcarriers == 0 {
            return Err(Error::Config("K and N must be positive"));
        }
        if self.packet_bits == 0 || self.bits_per_symbol == 0 {
            return Err(Error::Config("L and r must be positive"));
        }
        if !self.packet_bits.is_multiple_of(self.bits_per_symbol) {
            return Err(Error::Config("L must be a multiple of r"));
        }
        if self.concurrency == 0 || self.max_concurrency == 0 {
            return Err(Error::Config("M and M_max must be at least 1"));
        }
        if self.window < self.concurrency {
            return Err(Error::Config("U must be at least M"));
        }
        if self.weights.len() != self.users {
            return Err(Error::Config("one weight per user required"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("weights must be positive"));
        }
        if !(self.target_ber > 0.0 && self.target_ber < 1.0) {
            return Err(Error::Config("target BER must lie in (0, 1)"));
        }
        if !(self.symbol_duration > 0.0 && self.noise_psd > 0.0 && self.subcarrier_bandwidth > 0.0)
        {
            return Err(Error::Config("T_sym, N0 and B must be positive"));
        }
        if let Some(d) = self.deadline {
            if !(d > 0.0) {
                return Err(Error::Config("deadline must be positive"));
            }
        }
        Ok(())
    }

    /// Aggregate service rate `N * r` in bits per symbol.
    pub fn service_rate(&self) -> f64 {
        (self.subcarriers as u64 * self.bits_per_symbol as u64) as f64
    }

    /// Time to transmit one packet on the whole band, `L / (N r)` symbols.
    pub fn packet_time(&self) -> f64 {
        self.packet_bits as f64 / self.service_rate()
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.subcarrier_bandwidth
    }

    pub fn to_symbols(&self, seconds: f64) -> f64 {
        seconds / self.symbol_duration
    }

    pub fn to_seconds(&self, symbols: f64) -> f64 {
        symbols * self.symbol_duration
    }
}

/// Frame length `S = L * sum(g) / (N r)` in symbols.
///
/// Fails when the batch does not fill an integral number of symbols; frames
/// are never padded.
pub fn frame_length(counts: &[usize], cfg: &SystemConfig) -> Result<u64> {
    let total: u64 = counts.iter().map(|&g| g as u64).sum();
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    let bits = cfg.packet_bits as u64 * total;
    let per_symbol = cfg.subcarriers as u64 * cfg.bits_per_symbol as u64;
    if !bits.is_multiple_of(per_symbol) {
        return Err(Error::NonIntegralFrame { bits, per_symbol });
    }
    Ok(bits / per_symbol)
}

/// Subcarrier-symbol slots owed to a user inside one group of `group`
/// symbols: `g_k * G * N / M_sel`.
pub fn subcarrier_quota(
    count: usize,
    group: usize,
    subcarriers: usize,
    scheduled: usize,
) -> Result<usize> {
    if scheduled == 0 || group == 0 {
        return Err(Error::EmptyBatch);
    }
    let numerator = (count * group * subcarriers) as u64;
    let denominator = scheduled as u64;
    if !numerator.is_multiple_of(denominator) {
        return Err(Error::NonIntegralQuota {
            numerator,
            denominator,
        });
    }
    Ok((numerator / denominator) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketState {
    Queued,
    InService,
    Delivered,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    /// Global arrival index, unique within a run.
    pub id: u64,
    pub flow: usize,
    pub seq: u64,
    /// Arrival time in symbols.
    pub arrival: f64,
    pub vstart: f64,
    pub vfinish: f64,
    /// Absolute drop time in symbols; infinite when no deadline applies.
    pub deadline_at: f64,
    pub bits: u32,
    pub state: PacketState,
    pub attempts: u32,
}

impl Packet {
    pub fn new(id: u64, flow: usize, seq: u64, arrival: f64, bits: u32) -> Self {
        Self {
            id,
            flow,
            seq,
            arrival,
            vstart: 0.0,
            vfinish: 0.0,
            deadline_at: f64::INFINITY,
            bits,
            state: PacketState::Queued,
            attempts: 0,
        }
    }

    pub fn transition(&mut self, to: PacketState) -> Result<()> {
        use PacketState::*;
        let legal = matches!(
            (self.state, to),
            (Queued, InService)
                | (InService, Delivered)
                | (InService, Queued)
                | (InService, Dropped)
                | (Queued, Dropped)
        );
        if !legal {
            return Err(Error::IllegalTransition {
                from: self.state,
                to,
            });
        }
        if self.state == InService && to != Delivered {
            self.attempts += 1;
        }
        if to == Delivered {
            self.attempts += 1;
        }
        self.state = to;
        Ok(())
    }

    /// Scheduling key: virtual finish, then user index, then sequence.
    pub fn order_key(&self) -> (f64, usize, u64) {
        (self.vfinish, self.flow, self.seq)
    }
}

/// Total order on `(vfinish, flow, seq)` keys.
pub fn cmp_keys(a: (f64, usize, u64), b: (f64, usize, u64)) -> core::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Per-user FIFO of queued packets.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowQueue {
    pub flow: usize,
    pub weight: f64,
    pub fifo: VecDeque<Packet>,
}

impl FlowQueue {
    pub fn new(flow: usize, weight: f64) -> Self {
        Self {
            flow,
            weight,
            fifo: VecDeque::new(),
        }
    }

    pub fn backlog(&self) -> usize {
        self.fifo.len()
    }

    pub fn push(&mut self, packet: Packet) {
        debug_assert_eq!(packet.flow, self.flow);
        self.fifo.push_back(packet);
    }

    /// Returns failed packets to the head of the line, preserving their
    /// relative order.
    pub fn requeue_front(&mut self, mut packets: Vec<Packet>) {
        packets.sort_by_key(|p| p.seq);
        for p in packets.into_iter().rev() {
            self.fifo.push_front(p);
        }
    }
}

/// Builds one queue per user from the configured weights.
pub fn queues_for(cfg: &SystemConfig) -> Vec<FlowQueue> {
    cfg.weights
        .iter()
        .enumerate()
        .map(|(k, &w)| FlowQueue::new(k, w))
        .collect()
}

pub fn total_backlog(queues: &[FlowQueue]) -> usize {
    queues.iter().map(FlowQueue::backlog).sum()
}

/// Packets transmitted together over one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub index: u64,
    pub members: Vec<Packet>,
    /// Per-user packet counts `g_k`.
    pub counts: Vec<usize>,
    /// Start time `b_h` in symbols.
    pub start: f64,
    /// Departure time of every member in symbols.
    pub depart: f64,
    /// Frame length `S` in symbols.
    pub symbols: u64,
    /// Group size `G`.
    pub group: u64,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    #[test]
    fn frame_length_examples() {
        assert_eq!(frame_length(&[1], &cfg()).unwrap(), 8);
        assert_eq!(frame_length(&[2, 1], &cfg()).unwrap(), 24);
        assert_eq!(frame_length(&[0, 0, 0], &cfg()), Err(Error::EmptyBatch));
    }

    #[test]
    fn frame_length_rejects_partial_symbols() {
        let c = SystemConfig {
            packet_bits: 100,
            ..cfg()
        };
        assert!(matches!(
            frame_length(&[1], &c),
            Err(Error::NonIntegralFrame { .. })
        ));
    }

    #[test]
    fn quota_examples() {
        assert_eq!(subcarrier_quota(1, 1, 64, 2).unwrap(), 32);
        assert_eq!(subcarrier_quota(2, 3, 64, 3).unwrap(), 128);
        assert_eq!(subcarrier_quota(0, 1, 64, 5).unwrap(), 0);
        assert!(matches!(
            subcarrier_quota(2, 1, 64, 3),
            Err(Error::NonIntegralQuota { .. })
        ));
    }

    #[test]
    fn quotas_carry_exactly_the_scheduled_bits() {
        let c = cfg();
        for counts in [vec![1usize, 1], vec![2, 1], vec![3, 1, 1, 1], vec![6]] {
            let m: usize = counts.iter().sum();
            let s = frame_length(&counts, &c).unwrap() as usize;
            for g in 1..=s {
                if !s.is_multiple_of(g) {
                    continue;
                }
                let quotas: Option<Vec<usize>> = counts
                    .iter()
                    .map(|&gk| subcarrier_quota(gk, g, c.subcarriers, m).ok())
                    .collect();
                if let Some(q) = quotas {
                    let slots: usize = q.iter().map(|x| x * (s / g)).sum();
                    assert_eq!(slots, s * c.subcarriers);
                    assert_eq!(slots, (c.packet_bits / c.bits_per_symbol) as usize * m);
                }
            }
        }
    }

    #[test]
    fn validation() {
        assert!(cfg().validate().is_ok());
        let bad = SystemConfig {
            window: 2,
            concurrency: 3,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            packet_bits: 1023,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let mut bad = cfg();
        bad.weights[3] = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn packet_state_machine() {
        let mut p = Packet::new(0, 0, 0, 0.0, 1024);
        assert!(p.transition(PacketState::Delivered).is_err());
        p.transition(PacketState::InService).unwrap();
        p.transition(PacketState::Queued).unwrap();
        assert_eq!(p.attempts, 1);
        p.transition(PacketState::InService).unwrap();
        p.transition(PacketState::Delivered).unwrap();
        assert_eq!(p.attempts, 2);
        assert!(p.transition(PacketState::Dropped).is_err());
    }

    #[test]
    fn requeue_keeps_fifo_order() {
        let mut q = FlowQueue::new(0, 1.0);
        q.push(Packet::new(3, 0, 3, 1.0, 8));
        q.requeue_front(alloc::vec![
            Packet::new(2, 0, 2, 0.5, 8),
            Packet::new(1, 0, 1, 0.2, 8)
        ]);
        let seqs: Vec<u64> = q.fifo.iter().map(|p| p.seq).collect();
        assert_eq!(seqs, [1, 2, 3]);
    }
}

//! Joint subcarrier and power allocation for one frame.
//!
//! Power on every assigned subcarrier inverts the channel so the receiver
//! sees exactly the target SNR. What is left is choosing which user owns
//! each subcarrier-symbol, subject to per-user slot quotas: a transportation
//! problem whose LP relaxation is integral. The frame is split into `S / G`
//! identical groups, one group is solved, and the result is replicated.

mod transport;

use alloc::vec::Vec;

pub use transport::{
    assignment_count, brute_force_ilp, solve_transport, TransportInstance, TransportSolution,
    BRUTE_FORCE_LIMIT,
};

use crate::channel::{ChannelState, LinkBudget};
use crate::error::{Error, Result};
use crate::model::{frame_length, subcarrier_quota, SystemConfig};

/// Gains below this fraction of the median gain are treated as unusable.
pub const GAIN_FLOOR: f64 = 1e-12;

/// Transmit power that makes the received SNR equal `gamma`.
pub fn required_power(gain: f64, gamma: f64, noise_power: f64) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::ZeroGain);
    }
    Ok(gamma * noise_power / gain)
}

/// Smallest divisor `G` of the frame length for which every per-group
/// quota `g_k G N / M_sel` is integral.
pub fn group_size(symbols: u64, counts: &[usize], subcarriers: usize, scheduled: usize) -> u64 {
    for g in 1..=symbols {
        if !symbols.is_multiple_of(g) {
            continue;
        }
        if counts
            .iter()
            .all(|&c| (c as u64 * g * subcarriers as u64).is_multiple_of(scheduled as u64))
        {
            return g;
        }
    }
    symbols
}

/// Per-slot cost coefficients `gamma_k N0 B / (|H_{k,n}|^2 G N r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub alpha: Vec<Vec<Option<f64>>>,
    pub group: u64,
    pub scheduled: usize,
}

impl CostMatrix {
    pub fn build(
        channel: &ChannelState,
        budget: &LinkBudget,
        group: u64,
        scheduled: usize,
        bits_per_symbol: u32,
    ) -> Self {
        let floor = GAIN_FLOOR * median_gain(channel);
        let n_count = channel.subcarriers();
        let scale = (group * n_count as u64 * bits_per_symbol as u64) as f64;
        let alpha = channel
            .gains
            .iter()
            .zip(&budget.gamma)
            .map(|(row, &gamma)| {
                row.iter()
                    .map(|&h| {
                        if h > floor {
                            required_power(h, gamma, budget.noise_power)
                                .ok()
                                .map(|p| p / scale)
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            alpha,
            group,
            scheduled,
        }
    }
}

fn median_gain(channel: &ChannelState) -> f64 {
    let mut all: Vec<f64> = channel.gains.iter().flatten().copied().collect();
    if all.is_empty() {
        return 0.0;
    }
    all.sort_by(f64::total_cmp);
    all[all.len() / 2]
}

/// One frame's subcarrier assignment and power.
///
/// Only one group is stored; symbol `s` of the frame uses the pattern of
/// symbol `s mod G`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    /// Per-user packet counts `g_k`.
    pub counts: Vec<usize>,
    /// Frame length `S` in symbols.
    pub symbols: u64,
    /// Group size `G`.
    pub group: u64,
    /// `group_counts[k][n]`: symbols of the group in which subcarrier `n`
    /// belongs to user `k`.
    pub group_counts: Vec<Vec<usize>>,
    /// `p_{k,n}` in watts; infinite where the user cannot use the subcarrier.
    pub powers: Vec<Vec<f64>>,
    /// Transmit power per transmitted bit.
    pub per_bit_power: f64,
    /// Energy radiated over the frame in joules.
    pub total_energy: f64,
    /// Solver objective for one group.
    pub objective: f64,
}

impl AllocationResult {
    pub fn scheduled(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Number of `S / G` group repetitions.
    pub fn repetitions(&self) -> u64 {
        self.symbols / self.group
    }

    /// Owner of subcarrier `n` during symbol `s` of the frame.
    pub fn user_of(&self, n: usize, s: u64) -> usize {
        let mut offset = (s % self.group) as usize;
        for (k, row) in self.group_counts.iter().enumerate() {
            if offset < row[n] {
                return k;
            }
            offset -= row[n];
        }
        unreachable!("every slot is assigned")
    }

    /// `c_{k,n,s}`.
    pub fn assigned(&self, k: usize, n: usize, s: u64) -> bool {
        self.user_of(n, s) == k
    }

    /// Subcarrier-symbols given to user `k` over the whole frame.
    pub fn frame_slots(&self, k: usize) -> u64 {
        self.group_counts[k].iter().sum::<usize>() as u64 * self.repetitions()
    }

    /// `sum_{k,n} p_{k,n} c_{k,n,s}` for any symbol, averaged over a group:
    /// the mean total transmit power while the frame is on air.
    pub fn mean_power(&self) -> f64 {
        weighted_sum(&self.group_counts, &self.powers) / self.group as f64
    }
}

fn weighted_sum(counts: &[Vec<usize>], powers: &[Vec<f64>]) -> f64 {
    counts
        .iter()
        .zip(powers)
        .flat_map(|(c, p)| c.iter().zip(p))
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &p)| c as f64 * p)
        .sum()
}

/// Builds the per-group transportation instance for a batch.
pub fn build_instance(
    counts: &[usize],
    channel: &ChannelState,
    budget: &LinkBudget,
    cfg: &SystemConfig,
) -> Result<(TransportInstance, u64, u64)> {
    let scheduled: usize = counts.iter().sum();
    let symbols = frame_length(counts, cfg)?;
    let group = group_size(symbols, counts, cfg.subcarriers, scheduled);
    let supply = counts
        .iter()
        .map(|&g| subcarrier_quota(g, group as usize, cfg.subcarriers, scheduled))
        .collect::<Result<Vec<_>>>()?;
    let costs = CostMatrix::build(channel, budget, group, scheduled, cfg.bits_per_symbol);
    Ok((
        TransportInstance {
            costs: costs.alpha,
            supply,
            slots_per_subcarrier: group as usize,
        },
        symbols,
        group,
    ))
}

/// Minimum per-bit-power allocation for the packet counts `counts`.
pub fn allocate_frame(
    counts: &[usize],
    channel: &ChannelState,
    budget: &LinkBudget,
    cfg: &SystemConfig,
) -> Result<AllocationResult> {
    let (instance, symbols, group) = build_instance(counts, channel, budget, cfg)?;
    let solution = solve_transport(&instance)?;

    let powers: Vec<Vec<f64>> = channel
        .gains
        .iter()
        .zip(&budget.gamma)
        .map(|(row, &gamma)| {
            row.iter()
                .map(|&h| required_power(h, gamma, budget.noise_power).unwrap_or(f64::INFINITY))
                .collect()
        })
        .collect();
    let per_group = weighted_sum(&solution.counts, &powers);
    let repetitions = (symbols / group) as f64;
    let bits = cfg.packet_bits as f64 * counts.iter().sum::<usize>() as f64;
    let result = AllocationResult {
        counts: counts.to_vec(),
        symbols,
        group,
        group_counts: solution.counts,
        powers,
        per_bit_power: per_group * repetitions / bits,
        total_energy: per_group * repetitions * cfg.symbol_duration,
        objective: solution.objective,
    };
    debug_assert!(check_invariants(&result, cfg).is_ok());
    Ok(result)
}

/// Exclusivity and per-user slot totals of a frame allocation.
pub fn check_invariants(result: &AllocationResult, cfg: &SystemConfig) -> Result<()> {
    let group = result.group as usize;
    for n in 0..cfg.subcarriers {
        let owners: usize = result.group_counts.iter().map(|row| row[n]).sum();
        if owners != group {
            return Err(Error::Infeasible);
        }
    }
    let per_packet = (cfg.packet_bits / cfg.bits_per_symbol) as u64;
    for (k, &g) in result.counts.iter().enumerate() {
        if result.frame_slots(k) != g as u64 * per_packet {
            return Err(Error::Infeasible);
        }
    }
    Ok(())
}

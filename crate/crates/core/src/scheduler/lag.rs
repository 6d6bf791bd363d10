//! Aggregate lag of O-MPGPS against a shadow MPGPS run on the same arrivals.
//!
//! Without transmission errors both systems are work conserving with the same
//! `min(M, backlog)` rule, so their frames start at identical instants and
//! the shadow's batch `h` is well defined at O-MPGPS scheduling instant `h`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::select_mpgps;
use crate::error::{Error, Result};
use crate::model::{queues_for, FlowQueue, Packet, SystemConfig};

/// Plain MPGPS fed with the same packets as the system under test.
#[derive(Debug, Clone)]
pub struct ShadowMpgps {
    queues: Vec<FlowQueue>,
    m: usize,
}

impl ShadowMpgps {
    pub fn new(cfg: &SystemConfig, m: usize) -> Self {
        Self {
            queues: queues_for(cfg),
            m,
        }
    }

    pub fn push(&mut self, packet: Packet) {
        self.queues[packet.flow].push(packet);
    }

    /// Selects and removes the next shadow batch.
    pub fn next_batch(&mut self) -> Vec<u64> {
        let d = select_mpgps(&self.queues, self.m);
        for (q, &g) in self.queues.iter_mut().zip(&d.counts) {
            q.fifo.drain(..g);
        }
        d.chosen
    }
}

/// Candidate classification at one scheduling instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LagStep {
    pub g_lag: usize,
    pub g_sync: usize,
    pub g_lead: usize,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    /// `G_sync - M_2 - M_1`.
    pub net: i64,
    /// Observed change of the aggregate lag.
    pub change: i64,
}

#[derive(Debug, Clone, Default)]
pub struct LagLedger {
    /// Packets the shadow has sent that the system has not.
    lagging: BTreeSet<u64>,
    /// Packets the system has sent ahead of the shadow.
    leading: BTreeSet<u64>,
    pub aggregate_lag: usize,
    pub max_lag: usize,
    pub last: Option<LagStep>,
    pub steps: u64,
}

impl LagLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accounts for one scheduling instant and checks `lag <= U - M`.
    ///
    /// `candidates` are the window packets, `chosen` the packets actually
    /// sent, `reference` the shadow MPGPS batch for the same instant.
    pub fn update(
        &mut self,
        candidates: &[u64],
        chosen: &[u64],
        reference: &[u64],
        u: usize,
        m: usize,
    ) -> Result<LagStep> {
        let reference_set: BTreeSet<u64> = reference.iter().copied().collect();
        let chosen_set: BTreeSet<u64> = chosen.iter().copied().collect();
        let mut step = LagStep::default();
        for id in candidates {
            let picked = chosen_set.contains(id);
            if self.lagging.contains(id) {
                step.g_lag += 1;
                step.m1 += usize::from(picked);
            } else if reference_set.contains(id) {
                step.g_sync += 1;
                step.m2 += usize::from(picked);
            } else {
                step.g_lead += 1;
                step.m3 += usize::from(picked);
            }
        }
        step.net = step.g_sync as i64 - step.m2 as i64 - step.m1 as i64;

        let before = self.lagging.len() as i64;
        for &id in reference {
            if !self.leading.remove(&id) {
                self.lagging.insert(id);
            }
        }
        for &id in chosen {
            if !self.lagging.remove(&id) {
                self.leading.insert(id);
            }
        }
        debug_assert_eq!(self.lagging.len(), self.leading.len());
        self.aggregate_lag = self.lagging.len();
        self.max_lag = self.max_lag.max(self.aggregate_lag);
        step.change = self.aggregate_lag as i64 - before;
        self.last = Some(step);
        self.steps += 1;

        let limit = u.saturating_sub(m);
        if self.aggregate_lag > limit {
            return Err(Error::BoundViolation {
                bound: "aggregate lag",
                observed: self.aggregate_lag as f64,
                limit: limit as f64,
            });
        }
        Ok(step)
    }
}

//! Batch selection for PGPS, MPGPS, A-MPGPS and O-MPGPS.
//!
//! All disciplines rank queued packets by `(vfinish, user, seq)`. Stamps are
//! strictly increasing inside a flow, so taking the smallest keys never
//! skips over a flow's head-of-line packet.

mod lag;

use alloc::vec;
use alloc::vec::Vec;

pub use lag::{LagLedger, LagStep, ShadowMpgps};

use crate::allocation::{allocate_frame, AllocationResult};
use crate::channel::{ChannelState, LinkBudget};
use crate::error::Result;
use crate::model::{cmp_keys, total_backlog, FlowQueue, Packet, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Pgps,
    Mpgps,
    AMpgps,
    OMpgps,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pgps => "pgps",
            Mode::Mpgps => "mpgps",
            Mode::AMpgps => "ampgps",
            Mode::OMpgps => "ompgps",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgps" => Some(Mode::Pgps),
            "mpgps" => Some(Mode::Mpgps),
            "ampgps" | "a-mpgps" => Some(Mode::AMpgps),
            "ompgps" | "o-mpgps" => Some(Mode::OMpgps),
            _ => None,
        }
    }
}

/// A discipline together with its size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    Pgps,
    Mpgps { m: usize },
    AMpgps { m_max: usize },
    OMpgps { m: usize, u: usize },
}

impl Discipline {
    pub fn mode(&self) -> Mode {
        match self {
            Discipline::Pgps => Mode::Pgps,
            Discipline::Mpgps { .. } => Mode::Mpgps,
            Discipline::AMpgps { .. } => Mode::AMpgps,
            Discipline::OMpgps { .. } => Mode::OMpgps,
        }
    }

    /// Most packets a single frame may carry.
    pub fn max_batch(&self) -> usize {
        match *self {
            Discipline::Pgps => 1,
            Discipline::Mpgps { m } => m,
            Discipline::AMpgps { m_max } => m_max,
            Discipline::OMpgps { m, .. } => m,
        }
    }

    /// Packets per flow that keep every selection rule saturated.
    pub fn lookahead(&self) -> usize {
        match *self {
            Discipline::OMpgps { u, .. } => u,
            other => other.max_batch(),
        }
    }

    pub fn needs_channel(&self) -> bool {
        matches!(self, Discipline::AMpgps { .. } | Discipline::OMpgps { .. })
    }
}

/// Ranking used for selection. `VirtualStart` exists only to demonstrate
/// that the bound checks catch a mis-ordered scheduler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SelectionKey {
    #[default]
    VirtualFinish,
    VirtualStart,
}

impl SelectionKey {
    fn key(self, p: &Packet) -> (f64, usize, u64) {
        match self {
            SelectionKey::VirtualFinish => p.order_key(),
            SelectionKey::VirtualStart => (p.vstart, p.flow, p.seq),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    /// Per-user counts `g_k`; the first `g_k` queued packets of user `k`.
    pub counts: Vec<usize>,
    /// Ids of the chosen packets in selection order.
    pub chosen: Vec<u64>,
    pub scheduled: usize,
    pub mode: Mode,
    /// Per-user candidate counts `U_k` (O-MPGPS only).
    pub window: Option<Vec<usize>>,
    /// A-MPGPS per-bit power of its single-packet starting point.
    pub initial_power: Option<f64>,
    /// Chosen packets outside the plain MPGPS choice.
    pub displaced: usize,
}

/// The `limit` smallest-key packets, merged across flow heads.
fn smallest(queues: &[FlowQueue], limit: usize, key: SelectionKey) -> (Vec<usize>, Vec<u64>) {
    let mut counts = vec![0usize; queues.len()];
    let mut ids = Vec::with_capacity(limit);
    for _ in 0..limit {
        let mut best: Option<(usize, (f64, usize, u64))> = None;
        for (k, q) in queues.iter().enumerate() {
            if let Some(p) = q.fifo.get(counts[k]) {
                let kp = key.key(p);
                if best.is_none_or(|(_, b)| cmp_keys(kp, b).is_lt()) {
                    best = Some((k, kp));
                }
            }
        }
        let Some((k, _)) = best else { break };
        ids.push(queues[k].fifo[counts[k]].id);
        counts[k] += 1;
    }
    (counts, ids)
}

pub fn select_mpgps_with(queues: &[FlowQueue], m: usize, key: SelectionKey) -> ScheduleDecision {
    let limit = m.min(total_backlog(queues));
    let (counts, chosen) = smallest(queues, limit, key);
    ScheduleDecision {
        scheduled: chosen.len(),
        counts,
        chosen,
        mode: if m == 1 { Mode::Pgps } else { Mode::Mpgps },
        window: None,
        initial_power: None,
        displaced: 0,
    }
}

/// The `min(M, backlog)` queued packets with the smallest virtual finish.
pub fn select_mpgps(queues: &[FlowQueue], m: usize) -> ScheduleDecision {
    select_mpgps_with(queues, m, SelectionKey::VirtualFinish)
}

/// The first `min(U, backlog)` packets that would finish under GPS, as
/// per-user counts `U_k` and ids.
pub fn select_window(queues: &[FlowQueue], u: usize) -> (Vec<usize>, Vec<u64>) {
    smallest(
        queues,
        u.min(total_backlog(queues)),
        SelectionKey::VirtualFinish,
    )
}

fn chosen_ids(queues: &[FlowQueue], counts: &[usize]) -> Vec<u64> {
    let mut picked: Vec<&Packet> = queues
        .iter()
        .zip(counts)
        .flat_map(|(q, &g)| q.fifo.iter().take(g))
        .collect();
    picked.sort_by(|a, b| cmp_keys(a.order_key(), b.order_key()));
    picked.into_iter().map(|p| p.id).collect()
}

/// Calls `visit` with every vector `g` where `0 <= g_k <= caps_k` and
/// `sum(g) == total`, in lexicographically decreasing order.
pub fn for_each_composition(caps: &[usize], total: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(
        caps: &[usize],
        suffix_cap: &[usize],
        k: usize,
        left: usize,
        cur: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if k == caps.len() {
            if left == 0 {
                visit(cur);
            }
            return;
        }
        let rest = suffix_cap[k + 1];
        let hi = caps[k].min(left);
        let lo = left.saturating_sub(rest);
        for g in (lo..=hi).rev() {
            cur[k] = g;
            rec(caps, suffix_cap, k + 1, left - g, cur, visit);
        }
        cur[k] = 0;
    }
    let mut suffix = vec![0usize; caps.len() + 1];
    for k in (0..caps.len()).rev() {
        suffix[k] = suffix[k + 1] + caps[k];
    }
    if suffix[0] < total {
        return;
    }
    let mut cur = vec![0usize; caps.len()];
    rec(caps, &suffix, 0, total, &mut cur, &mut visit);
}

/// O-MPGPS: among the first `U` GPS finishers, the `min(M, backlog)` packets
/// whose joint allocation needs the least power.
///
/// Every composition allowed by the window is solved exactly. The MPGPS
/// choice is the incumbent and is only replaced by a strictly cheaper one.
pub fn ompgps_schedule(
    queues: &[FlowQueue],
    m: usize,
    u: usize,
    channel: &ChannelState,
    budget: &LinkBudget,
    cfg: &SystemConfig,
) -> Result<(ScheduleDecision, AllocationResult)> {
    let base = select_mpgps(queues, m);
    let (window, _) = select_window(queues, u.max(m));
    let mut best = allocate_frame(&base.counts, channel, budget, cfg)?;
    let mut failure = None;
    for_each_composition(&window, base.scheduled, |g| {
        if g == base.counts.as_slice() || failure.is_some() {
            return;
        }
        match allocate_frame(g, channel, budget, cfg) {
            Ok(a) if a.per_bit_power < best.per_bit_power => best = a,
            Ok(_) => {}
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let displaced = best
        .counts
        .iter()
        .zip(&base.counts)
        .map(|(&a, &b)| a.saturating_sub(b))
        .sum();
    let decision = ScheduleDecision {
        chosen: chosen_ids(queues, &best.counts),
        counts: best.counts.clone(),
        scheduled: base.scheduled,
        mode: Mode::OMpgps,
        window: Some(window),
        initial_power: None,
        displaced,
    };
    Ok((decision, best))
}

/// A-MPGPS: grow the batch one packet at a time while the per-bit power
/// strictly improves, up to `m_max`.
pub fn ampgps_schedule(
    queues: &[FlowQueue],
    m_max: usize,
    channel: &ChannelState,
    budget: &LinkBudget,
    cfg: &SystemConfig,
) -> Result<(ScheduleDecision, AllocationResult)> {
    let backlog = total_backlog(queues);
    let mut best_decision = select_mpgps(queues, 1);
    let mut best = allocate_frame(&best_decision.counts, channel, budget, cfg)?;
    let initial = best.per_bit_power;
    let mut m = 1;
    while m < m_max.min(backlog) {
        m += 1;
        let d = select_mpgps(queues, m);
        let a = allocate_frame(&d.counts, channel, budget, cfg)?;
        if a.per_bit_power < best.per_bit_power {
            best = a;
            best_decision = d;
        } else {
            break;
        }
    }
    assert!(best.per_bit_power <= initial);
    best_decision.mode = Mode::AMpgps;
    best_decision.initial_power = Some(initial);
    Ok((best_decision, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::queues_for;

    fn queue_with(flow: usize, finishes: &[f64]) -> FlowQueue {
        let mut q = FlowQueue::new(flow, 1.0);
        for (i, &f) in finishes.iter().enumerate() {
            let mut p = Packet::new((flow * 100 + i) as u64, flow, i as u64, 0.0, 1024);
            p.vfinish = f;
            p.vstart = f - 1024.0;
            q.push(p);
        }
        q
    }

    #[test]
    fn mpgps_clamps_to_backlog() {
        let qs = [queue_with(0, &[1024.0]), queue_with(1, &[2048.0])];
        let d = select_mpgps(&qs, 3);
        assert_eq!(d.scheduled, 2);
        assert_eq!(d.counts, [1, 1]);
    }

    #[test]
    fn mpgps_single_server_is_pgps() {
        let qs = [queue_with(0, &[3000.0]), queue_with(1, &[1500.0, 4000.0])];
        let d = select_mpgps(&qs, 1);
        assert_eq!(d.counts, [0, 1]);
        assert_eq!(d.mode, Mode::Pgps);
    }

    #[test]
    fn mpgps_picks_smallest_finishes() {
        let qs = [queue_with(0, &[1024.0, 2048.0]), queue_with(1, &[1536.0])];
        let d = select_mpgps(&qs, 2);
        assert_eq!(d.counts, [1, 1]);
        assert_eq!(d.chosen, [0, 100]);
    }

    #[test]
    fn ties_break_by_user_then_seq() {
        let qs = [queue_with(0, &[1024.0]), queue_with(1, &[1024.0])];
        assert_eq!(select_mpgps(&qs, 1).counts, [1, 0]);
    }

    #[test]
    fn window_examples() {
        let qs = [
            queue_with(0, &[10.0, 20.0]),
            queue_with(1, &[15.0]),
            queue_with(2, &[30.0]),
        ];
        let (w, ids) = select_window(&qs, 3);
        assert_eq!(w, [2, 1, 0]);
        assert_eq!(ids, [0, 100, 1]);
        assert_eq!(select_window(&qs, 1).0, select_mpgps(&qs, 1).counts);
        assert_eq!(select_window(&qs, 10).0, [2, 1, 1]);
    }

    #[test]
    fn compositions_respect_caps() {
        let mut seen = Vec::new();
        for_each_composition(&[2, 1, 0, 3], 3, |g| seen.push(g.to_vec()));
        assert_eq!(seen.first().unwrap(), &[2, 1, 0, 0]);
        for g in &seen {
            assert_eq!(g.iter().sum::<usize>(), 3);
            assert!(g[0] <= 2 && g[1] <= 1 && g[2] == 0 && g[3] <= 3);
        }
        // Brute-force count.
        let mut count = 0;
        for a in 0..=2 {
            for b in 0..=1 {
                for d in 0..=3 {
                    if a + b + d == 3 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(seen.len(), count);
        let mut none = 0;
        for_each_composition(&[1, 1], 3, |_| none += 1);
        assert_eq!(none, 0);
    }

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            users: 2,
            subcarriers: 4,
            packet_bits: 8,
            weights: vec![1.0, 1.0],
            concurrency: 1,
            window: 2,
            ..SystemConfig::default()
        }
    }

    fn budget() -> LinkBudget {
        LinkBudget {
            gamma: vec![1.0, 1.0],
            target_ber: 1e-6,
            noise_power: 1.0,
        }
    }

    #[test]
    fn ompgps_window_equal_to_batch_is_mpgps() {
        let cfg = small_cfg();
        let qs = [queue_with(0, &[1024.0, 3000.0]), queue_with(1, &[2048.0])];
        let ch = ChannelState {
            gains: vec![vec![0.1; 4], vec![10.0; 4]],
            frame: 0,
        };
        let (d, _) = ompgps_schedule(&qs, 2, 2, &ch, &budget(), &cfg).unwrap();
        assert_eq!(d.counts, select_mpgps(&qs, 2).counts);
        assert_eq!(d.displaced, 0);
    }

    #[test]
    fn ompgps_swaps_to_cheaper_user() {
        let cfg = small_cfg();
        let qs = [queue_with(0, &[1024.0]), queue_with(1, &[2048.0])];
        let ch = ChannelState {
            gains: vec![vec![1.0; 4], vec![4.0, 2.0, 4.0, 2.0]],
            frame: 0,
        };
        // Oracle: both single-packet compositions evaluated directly.
        let p0 = allocate_frame(&[1, 0], &ch, &budget(), &cfg)
            .unwrap()
            .per_bit_power;
        let p1 = allocate_frame(&[0, 1], &ch, &budget(), &cfg)
            .unwrap()
            .per_bit_power;
        assert!(p1 < p0);
        let (d, a) = ompgps_schedule(&qs, 1, 2, &ch, &budget(), &cfg).unwrap();
        assert_eq!(d.counts, [0, 1]);
        assert_eq!(d.window.as_deref(), Some(&[1usize, 1][..]));
        assert_eq!(d.displaced, 1);
        assert_eq!(a.per_bit_power, p1);
    }

    #[test]
    fn ompgps_small_backlog_takes_everything() {
        let cfg = SystemConfig {
            users: 3,
            weights: vec![1.0; 3],
            ..small_cfg()
        };
        let qs = [
            queue_with(0, &[1.0]),
            queue_with(1, &[2.0]),
            FlowQueue::new(2, 1.0),
        ];
        let ch = ChannelState {
            gains: vec![vec![1.0; 4], vec![0.01; 4], vec![5.0; 4]],
            frame: 0,
        };
        let b = LinkBudget {
            gamma: vec![1.0; 3],
            target_ber: 1e-6,
            noise_power: 1.0,
        };
        let (d, _) = ompgps_schedule(&qs, 4, 6, &ch, &b, &cfg).unwrap();
        assert_eq!(d.counts, [1, 1, 0]);
    }

    #[test]
    fn ampgps_single_server_cap() {
        let cfg = small_cfg();
        let qs = [queue_with(0, &[1024.0]), queue_with(1, &[2048.0])];
        let ch = ChannelState {
            gains: vec![vec![1.0, 0.5, 2.0, 1.0], vec![2.0, 1.0, 0.5, 1.0]],
            frame: 0,
        };
        let (d, a) = ampgps_schedule(&qs, 1, &ch, &budget(), &cfg).unwrap();
        assert_eq!(d.counts, [1, 0]);
        assert_eq!(
            a.group_counts[0].iter().sum::<usize>() as u64 * a.repetitions(),
            4
        );
        assert_eq!(d.initial_power, Some(a.per_bit_power));
    }

    #[test]
    fn ampgps_stops_on_deep_fade() {
        let cfg = small_cfg();
        let mut qs = queues_for(&cfg);
        qs[0] = queue_with(0, &[1024.0, 3072.0]);
        qs[1] = queue_with(1, &[2048.0]);
        let mut ch = ChannelState {
            gains: vec![vec![1.0, 0.8, 1.2, 0.9], vec![1.0, 0.8, 1.2, 0.9]],
            frame: 0,
        };
        for g in &mut ch.gains[1] {
            *g /= 100.0;
        }
        // Oracle evaluation of the two steps on the fixed channel.
        let p1 = allocate_frame(&[1, 0], &ch, &budget(), &cfg)
            .unwrap()
            .per_bit_power;
        let p2 = allocate_frame(&[1, 1], &ch, &budget(), &cfg)
            .unwrap()
            .per_bit_power;
        assert!(p2 >= p1);
        let (d, a) = ampgps_schedule(&qs, 4, &ch, &budget(), &cfg).unwrap();
        assert_eq!(d.counts, [1, 0]);
        assert_eq!(a.per_bit_power, p1);
    }

    #[test]
    fn ampgps_grows_while_power_drops() {
        let cfg = small_cfg();
        let qs = [queue_with(0, &[1024.0]), queue_with(1, &[2048.0])];
        let ch = ChannelState {
            gains: vec![vec![10.0, 10.0, 0.1, 0.1], vec![0.1, 0.1, 10.0, 10.0]],
            frame: 0,
        };
        let (d, a) = ampgps_schedule(&qs, 4, &ch, &budget(), &cfg).unwrap();
        assert_eq!(d.counts, [1, 1]);
        assert!(a.per_bit_power < d.initial_power.unwrap());
    }

    #[test]
    fn selection_by_start_differs_with_unequal_weights() {
        let mut q0 = FlowQueue::new(0, 1.0);
        let mut p = Packet::new(0, 0, 0, 0.0, 1024);
        p.vstart = 0.0;
        p.vfinish = 1024.0;
        q0.push(p);
        let mut q1 = FlowQueue::new(1, 8.0);
        let mut p = Packet::new(1, 1, 0, 0.0, 1024);
        p.vstart = 10.0;
        p.vfinish = 138.0;
        q1.push(p);
        let qs = [q0, q1];
        assert_eq!(select_mpgps(&qs, 1).counts, [0, 1]);
        assert_eq!(
            select_mpgps_with(&qs, 1, SelectionKey::VirtualStart).counts,
            [1, 0]
        );
    }
}

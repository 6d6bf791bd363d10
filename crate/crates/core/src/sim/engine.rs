//! Event loop: arrivals, frame completions and scheduling instants.
//!
//! At equal times a frame completion is processed before arrivals, and the
//! next frame is scheduled only after every event at that instant.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{fairness_metric, zeros, Accumulator, FlowStats, Metrics};
use super::traffic::TrafficModel;
use super::{OUTCOME_STREAM, TRAFFIC_STREAM};
use crate::allocation::{allocate_frame, AllocationResult};
use crate::channel::{
    packet_outcome, CellLayout, ChannelModel, ChannelState, LinkBudget, Outcome, PowerDelayProfile,
};
use crate::error::{Error, Result};
use crate::model::{
    frame_length, queues_for, total_backlog, Batch, FlowQueue, Packet, PacketState, SystemConfig,
};
use crate::scheduler::{
    ampgps_schedule, ompgps_schedule, select_mpgps_with, select_window, Discipline,
    ScheduleDecision, SelectionKey,
};
use crate::scheduler::{LagLedger, ShadowMpgps};
use crate::virtual_time::{Arrival, ServiceCurve, StepCurve, VirtualClock};

/// Source of packets.
#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    /// Explicit, time-sorted arrivals.
    Trace(Vec<Arrival>),
    Poisson(TrafficModel),
    /// Every queue is topped up before each scheduling instant.
    Saturated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSettings {
    pub layout: CellLayout,
    pub pdp: PowerDelayProfile,
    /// Frame-to-frame tap correlation in `[0, 1)`.
    pub correlation: f64,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        Self {
            layout: CellLayout::default(),
            pdp: PowerDelayProfile::default(),
            correlation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub discipline: Discipline,
    /// Arrivals at or after this time (symbols) are discarded; also the end
    /// of the measurement window.
    pub horizon: f64,
    /// Keep serving after the horizon until the system empties.
    pub drain: bool,
    /// Every transmission succeeds.
    pub error_free: bool,
    /// Run the subcarrier/power allocator for disciplines that do not need
    /// it to decide.
    pub phy: bool,
    /// Cap on the mean transmit power while on air, W. Frames above it are
    /// scaled down, which lowers the received SNR.
    pub power_budget: Option<f64>,
    pub warmup_fraction: f64,
    pub record_events: bool,
    /// Keep arrivals, departures and service curves for bound checks.
    pub record_trace: bool,
    /// Track O-MPGPS lag against a shadow MPGPS (error-free runs only).
    pub track_lag: bool,
    pub selection_key: SelectionKey,
    pub channel: ChannelSettings,
    /// Fairness window in seconds.
    pub fairness_window: f64,
}

impl SimOptions {
    pub fn new(discipline: Discipline, horizon: f64) -> Self {
        Self {
            discipline,
            horizon,
            drain: false,
            error_free: false,
            phy: true,
            power_budget: None,
            warmup_fraction: 0.05,
            record_events: false,
            record_trace: false,
            track_lag: false,
            selection_key: SelectionKey::VirtualFinish,
            channel: ChannelSettings::default(),
            fairness_window: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    Scheduled,
    Delivered,
    Failed,
    Dropped,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Scheduled => "scheduled",
            EventKind::Delivered => "delivered",
            EventKind::Failed => "failed",
            EventKind::Dropped => "dropped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    /// Symbols.
    pub time: f64,
    pub kind: EventKind,
    pub packet: u64,
    pub flow: usize,
    /// Per-flow sequence number.
    pub seq: u64,
    pub frame: Option<u64>,
}

/// One transmitted frame, doubling as the decision log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameRecord {
    pub index: u64,
    pub start: f64,
    pub end: f64,
    pub counts: Vec<usize>,
    /// Flows with packets in the system when the frame started.
    pub backlogged: Vec<bool>,
    pub scheduled: usize,
    /// W/bit, NaN when no allocation was computed.
    pub per_bit_power: f64,
    /// A-MPGPS single-packet starting point, NaN otherwise.
    pub initial_power: f64,
    /// Joules.
    pub energy: f64,
    pub displaced: usize,
    pub aggregate_lag: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LagSummary {
    pub max_lag: usize,
    pub violations: u64,
    pub steps: u64,
}

/// Sample paths kept for verification. Packet ids index `arrivals`.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub arrivals: Vec<Arrival>,
    /// Frame end at which each packet left the system; NaN if it never did.
    pub departures: Vec<f64>,
    /// Cumulative bits transmitted per flow.
    pub service: Vec<ServiceCurve>,
    /// Packets in the system (queued or in service) per flow.
    pub backlog: Vec<StepCurve>,
    /// Packet ids carried by each frame.
    pub batches: Vec<Vec<u64>>,
    pub lag: Option<LagSummary>,
}

#[derive(Debug, Clone, Default)]
pub struct SimOutput {
    pub metrics: Metrics,
    pub events: Vec<EventRecord>,
    pub frames: Vec<FrameRecord>,
    pub trace: Option<RunTrace>,
}

struct InFlight {
    batch: Batch,
    /// Received SNR per user for this frame.
    snr: Vec<f64>,
}

struct Engine<'a> {
    cfg: &'a SystemConfig,
    opts: &'a SimOptions,
    now: f64,
    clock: VirtualClock,
    queues: Vec<FlowQueue>,
    in_system: Vec<usize>,
    in_flight: Option<InFlight>,
    next_id: u64,
    seqs: Vec<u64>,
    frame_index: u64,
    channel: Option<ChannelModel>,
    budget: LinkBudget,
    outcome_rng: ChaCha8Rng,
    deadline: Option<f64>,
    saturated: bool,
    warmup: f64,
    shadow: Option<(ShadowMpgps, LagLedger, u64)>,

    served_bits: Vec<f64>,
    flows: Vec<FlowStats>,
    delays: Vec<Accumulator>,
    measured_arrivals: u64,
    measured_dropped: u64,
    window_deliveries: u64,
    window_delivered_bits: f64,
    window_energy: f64,
    window_power_symbols: f64,
    window_bits: f64,
    window_frames: u64,
    window_scheduled: u64,
    retransmissions: u64,

    events: Vec<EventRecord>,
    frames: Vec<FrameRecord>,
    trace: Option<RunTrace>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SystemConfig, opts: &'a SimOptions, saturated: bool) -> Result<Self> {
        let users = cfg.users;
        let needs_channel = opts.phy || opts.discipline.needs_channel();
        let channel = needs_channel.then(|| {
            ChannelModel::for_config(
                cfg,
                &opts.channel.layout,
                opts.channel.pdp.clone(),
                opts.channel.correlation,
            )
        });
        let mut outcome_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        outcome_rng.set_stream(OUTCOME_STREAM);
        let shadow = match opts.discipline {
            Discipline::OMpgps { m, .. } if opts.track_lag && opts.error_free => {
                Some((ShadowMpgps::new(cfg, m), LagLedger::new(), 0))
            }
            _ => None,
        };
        let deadline = if saturated {
            None
        } else {
            cfg.deadline.map(|d| cfg.to_symbols(d))
        };
        Ok(Self {
            cfg,
            opts,
            now: 0.0,
            clock: VirtualClock::new(&cfg.weights, cfg.service_rate()),
            queues: queues_for(cfg),
            in_system: vec![0; users],
            in_flight: None,
            next_id: 0,
            seqs: vec![0; users],
            frame_index: 0,
            channel,
            budget: LinkBudget::from_config(cfg)?,
            outcome_rng,
            deadline,
            saturated,
            warmup: opts.warmup_fraction.clamp(0.0, 1.0) * opts.horizon,
            shadow,
            served_bits: vec![0.0; users],
            flows: vec![FlowStats::default(); users],
            delays: zeros(users),
            measured_arrivals: 0,
            measured_dropped: 0,
            window_deliveries: 0,
            window_delivered_bits: 0.0,
            window_energy: 0.0,
            window_power_symbols: 0.0,
            window_bits: 0.0,
            window_frames: 0,
            window_scheduled: 0,
            retransmissions: 0,
            events: Vec::new(),
            frames: Vec::new(),
            trace: opts.record_trace.then(|| RunTrace {
                service: vec![ServiceCurve::new(); users],
                backlog: vec![StepCurve::new(); users],
                ..RunTrace::default()
            }),
        })
    }

    fn log(&mut self, kind: EventKind, packet: &Packet, frame: Option<u64>) {
        if self.opts.record_events {
            self.events.push(EventRecord {
                time: self.now,
                kind,
                packet: packet.id,
                flow: packet.flow,
                seq: packet.seq,
                frame,
            });
        }
    }

    fn measured(&self, arrival: f64) -> bool {
        arrival >= self.warmup && arrival < self.opts.horizon
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.warmup && t < self.opts.horizon
    }

    fn set_backlog(&mut self, flow: usize) {
        if let Some(trace) = &mut self.trace {
            trace.backlog[flow].push(self.now, self.in_system[flow] as i64);
        }
    }

    fn arrive(&mut self, flow: usize) {
        let bits = self.cfg.packet_bits;
        self.clock.advance(self.now);
        let (vstart, vfinish) = self.clock.stamp(flow, bits as f64);
        let mut p = Packet::new(self.next_id, flow, self.seqs[flow], self.now, bits);
        p.vstart = vstart;
        p.vfinish = vfinish;
        if let Some(d) = self.deadline {
            p.deadline_at = self.now + d;
        }
        self.next_id += 1;
        self.seqs[flow] += 1;
        self.flows[flow].arrived += 1;
        if self.measured(p.arrival) {
            self.measured_arrivals += 1;
        }
        self.log(EventKind::Arrival, &p, None);
        if let Some((shadow, _, _)) = &mut self.shadow {
            shadow.push(p.clone());
        }
        if let Some(trace) = &mut self.trace {
            trace.arrivals.push(Arrival {
                time: self.now,
                flow,
            });
            trace.departures.push(f64::NAN);
        }
        self.queues[flow].push(p);
        self.in_system[flow] += 1;
        self.set_backlog(flow);
    }

    /// Tops every queue up to the discipline's lookahead.
    fn refill(&mut self) {
        let need = self.opts.discipline.lookahead();
        for k in 0..self.cfg.users {
            while self.queues[k].backlog() < need {
                self.arrive(k);
            }
        }
    }

    fn leave(&mut self, mut p: Packet, state: PacketState, frame: Option<u64>) -> Result<()> {
        p.transition(state)?;
        let flow = p.flow;
        self.in_system[flow] -= 1;
        self.set_backlog(flow);
        if let Some(trace) = &mut self.trace {
            trace.departures[p.id as usize] = self.now;
        }
        let measured = self.measured(p.arrival);
        match state {
            PacketState::Delivered => {
                self.flows[flow].delivered += 1;
                if measured {
                    self.delays[flow].add(self.cfg.to_seconds(self.now - p.arrival));
                }
                if self.in_window(self.now) {
                    self.window_deliveries += 1;
                    self.window_delivered_bits += p.bits as f64;
                }
                self.log(EventKind::Delivered, &p, frame);
            }
            _ => {
                self.flows[flow].dropped += 1;
                if measured {
                    self.measured_dropped += 1;
                }
                self.log(EventKind::Dropped, &p, frame);
            }
        }
        Ok(())
    }

    fn drop_expired(&mut self) -> Result<()> {
        if self.deadline.is_none() {
            return Ok(());
        }
        let now = self.now;
        for k in 0..self.cfg.users {
            if self.queues[k].fifo.iter().all(|p| p.deadline_at > now) {
                continue;
            }
            let (keep, gone): (Vec<Packet>, Vec<Packet>) = self.queues[k]
                .fifo
                .drain(..)
                .partition(|p| p.deadline_at > now);
            self.queues[k].fifo.extend(keep);
            for p in gone {
                self.leave(p, PacketState::Dropped, None)?;
            }
        }
        Ok(())
    }

    fn complete_frame(&mut self) -> Result<()> {
        let Some(flight) = self.in_flight.take() else {
            return Ok(());
        };
        let frame = Some(flight.batch.index);
        let mut requeue: Vec<Vec<Packet>> = vec![Vec::new(); self.cfg.users];
        for p in flight.batch.members {
            let outcome = if self.opts.error_free {
                Outcome::Success
            } else {
                packet_outcome(
                    flight.snr[p.flow],
                    p.bits,
                    self.cfg.bits_per_symbol,
                    &mut self.outcome_rng,
                )
            };
            match outcome {
                Outcome::Success if self.now <= p.deadline_at => {
                    self.leave(p, PacketState::Delivered, frame)?
                }
                _ if self.now >= p.deadline_at => self.leave(p, PacketState::Dropped, frame)?,
                _ => {
                    let mut p = p;
                    self.log(EventKind::Failed, &p, frame);
                    p.transition(PacketState::Queued)?;
                    self.retransmissions += 1;
                    requeue[p.flow].push(p);
                }
            }
        }
        for (k, packets) in requeue.into_iter().enumerate() {
            if !packets.is_empty() {
                self.queues[k].requeue_front(packets);
            }
        }
        if let Some(trace) = &mut self.trace {
            for (k, &g) in flight.batch.counts.iter().enumerate() {
                if g > 0 {
                    trace.service[k].push(self.now, self.served_bits[k], 0.0);
                }
            }
        }
        Ok(())
    }

    fn decide(
        &mut self,
        channel: Option<&ChannelState>,
    ) -> Result<(ScheduleDecision, Option<AllocationResult>)> {
        let cfg = self.cfg;
        let allocate = |counts: &[usize], ch: Option<&ChannelState>, budget: &LinkBudget| {
            ch.map(|c| allocate_frame(counts, c, budget, cfg))
                .transpose()
        };
        let key = self.opts.selection_key;
        match self.opts.discipline {
            Discipline::Pgps => {
                let d = select_mpgps_with(&self.queues, 1, key);
                let a = allocate(&d.counts, channel, &self.budget)?;
                Ok((d, a))
            }
            Discipline::Mpgps { m } => {
                let d = select_mpgps_with(&self.queues, m, key);
                let a = allocate(&d.counts, channel, &self.budget)?;
                Ok((d, a))
            }
            Discipline::AMpgps { m_max } => {
                let ch = channel.ok_or(Error::Config("A-MPGPS needs a channel"))?;
                let (d, a) = ampgps_schedule(&self.queues, m_max, ch, &self.budget, cfg)?;
                Ok((d, Some(a)))
            }
            Discipline::OMpgps { m, u } => {
                let ch = channel.ok_or(Error::Config("O-MPGPS needs a channel"))?;
                let (d, a) = ompgps_schedule(&self.queues, m, u, ch, &self.budget, cfg)?;
                Ok((d, Some(a)))
            }
        }
    }

    fn schedule(&mut self) -> Result<()> {
        debug_assert!(self.in_flight.is_none());
        self.drop_expired()?;
        if total_backlog(&self.queues) == 0 {
            return Ok(());
        }
        let index = self.frame_index;
        self.frame_index += 1;
        let channel = self.channel.as_mut().map(|c| c.frame(index));
        let (decision, alloc) = self.decide(channel.as_ref())?;

        let mut aggregate_lag = 0;
        if let (Discipline::OMpgps { m, u }, Some((shadow, ledger, violations))) =
            (self.opts.discipline, self.shadow.as_mut())
        {
            let reference = shadow.next_batch();
            let (_, candidates) = select_window(&self.queues, u.max(m));
            if ledger
                .update(&candidates, &decision.chosen, &reference, u, m)
                .is_err()
            {
                *violations += 1;
            }
            aggregate_lag = ledger.aggregate_lag;
        }

        let backlogged: Vec<bool> = self.in_system.iter().map(|&n| n > 0).collect();
        let mut members = Vec::with_capacity(decision.scheduled);
        for (k, &g) in decision.counts.iter().enumerate() {
            for _ in 0..g {
                let mut p = self.queues[k].fifo.pop_front().ok_or(Error::EmptyBatch)?;
                p.transition(PacketState::InService)?;
                members.push(p);
            }
        }
        if members.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let symbols = match &alloc {
            Some(a) => a.symbols,
            None => frame_length(&decision.counts, self.cfg)?,
        };
        let group = alloc.as_ref().map_or(1, |a| a.group);

        let mut scale = 1.0;
        let (energy, per_bit_power) = match &alloc {
            Some(a) => {
                if let Some(cap) = self.opts.power_budget {
                    let mean = a.mean_power();
                    if mean > cap {
                        scale = cap / mean;
                    }
                }
                (a.total_energy * scale, a.per_bit_power * scale)
            }
            None => (0.0, f64::NAN),
        };
        let snr: Vec<f64> = self.budget.gamma.iter().map(|g| g * scale).collect();

        let depart = self.now + symbols as f64;
        let bits: f64 = members.iter().map(|p| p.bits as f64).sum();
        if self.in_window(self.now) {
            self.window_frames += 1;
            self.window_scheduled += members.len() as u64;
            if alloc.is_some() {
                self.window_energy += energy;
                self.window_power_symbols += per_bit_power * bits;
                self.window_bits += bits;
            }
        }
        for p in &members {
            self.log(EventKind::Scheduled, p, Some(index));
        }
        for (k, &g) in decision.counts.iter().enumerate() {
            if g == 0 {
                continue;
            }
            let rate = g as f64 * self.cfg.packet_bits as f64 / symbols as f64;
            if let Some(trace) = &mut self.trace {
                trace.service[k].push(self.now, self.served_bits[k], rate);
            }
            self.served_bits[k] += g as f64 * self.cfg.packet_bits as f64;
            self.flows[k].bits_served += g as f64 * self.cfg.packet_bits as f64;
        }
        if let Some(trace) = &mut self.trace {
            trace.batches.push(members.iter().map(|p| p.id).collect());
        }
        self.frames.push(FrameRecord {
            index,
            start: self.now,
            end: depart,
            counts: decision.counts.clone(),
            backlogged,
            scheduled: members.len(),
            per_bit_power,
            initial_power: decision.initial_power.unwrap_or(f64::NAN),
            energy,
            displaced: decision.displaced,
            aggregate_lag,
        });
        self.in_flight = Some(InFlight {
            batch: Batch {
                index,
                counts: decision.counts,
                members,
                start: self.now,
                depart,
                symbols,
                group,
            },
            snr,
        });
        Ok(())
    }

    fn run(&mut self, arrivals: &[Arrival]) -> Result<()> {
        let horizon = self.opts.horizon;
        let mut next = 0usize;
        if self.saturated {
            self.refill();
            self.schedule()?;
        }
        loop {
            let t_frame = self.in_flight.as_ref().map(|f| f.batch.depart);
            let t_arrival = arrivals.get(next).map(|a| a.time).filter(|&t| t < horizon);
            let t = match (t_frame, t_arrival) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            if t >= horizon && !self.opts.drain {
                break;
            }
            self.now = t;
            if t_frame == Some(t) {
                self.complete_frame()?;
            }
            while next < arrivals.len() && arrivals[next].time <= t && arrivals[next].time < horizon
            {
                let flow = arrivals[next].flow;
                if flow >= self.cfg.users {
                    return Err(Error::Config("arrival for unknown flow"));
                }
                self.arrive(flow);
                next += 1;
            }
            if self.in_flight.is_none() {
                if self.saturated && t < horizon {
                    self.refill();
                }
                self.schedule()?;
            }
        }
        Ok(())
    }

    fn finish(mut self) -> SimOutput {
        for (k, f) in self.flows.iter_mut().enumerate() {
            f.residual = self.in_system[k] as u64;
            f.mean_delay = self.delays[k].mean();
        }
        let delivered: u64 = self.delays.iter().map(|a| a.count).sum();
        let delay_sum: f64 = self.delays.iter().map(|a| a.sum).sum();
        let window = (self.opts.horizon - self.warmup).max(f64::MIN_POSITIVE);
        let finished = delivered + self.measured_dropped;
        let lag = self
            .shadow
            .as_ref()
            .map(|(_, ledger, violations)| LagSummary {
                max_lag: ledger.max_lag,
                violations: *violations,
                steps: ledger.steps,
            });
        let metrics = Metrics {
            measured_arrivals: self.measured_arrivals,
            measured_delivered: delivered,
            measured_dropped: self.measured_dropped,
            avg_delay: if delivered > 0 {
                delay_sum / delivered as f64
            } else {
                0.0
            },
            loss_rate: if finished > 0 {
                self.measured_dropped as f64 / finished as f64
            } else {
                0.0
            },
            throughput: self.window_deliveries as f64 / window,
            avg_power: self.window_energy / self.cfg.to_seconds(window),
            per_bit_power: if self.window_bits > 0.0 {
                self.window_power_symbols / self.window_bits
            } else {
                0.0
            },
            eb_n0_db: if self.window_delivered_bits > 0.0 && self.window_energy > 0.0 {
                crate::channel::to_db(
                    self.window_energy / self.window_delivered_bits / self.cfg.noise_psd,
                )
            } else {
                0.0
            },
            fairness: fairness_metric(
                &self.frames,
                &self.cfg.weights,
                self.cfg.packet_bits as f64,
                self.cfg.to_symbols(self.opts.fairness_window),
                self.warmup,
            ),
            frames: self.window_frames,
            mean_batch: if self.window_frames > 0 {
                self.window_scheduled as f64 / self.window_frames as f64
            } else {
                0.0
            },
            retransmissions: self.retransmissions,
            lag_violations: lag.map_or(0, |l| l.violations),
            max_lag: lag.map_or(0, |l| l.max_lag),
            flows: self.flows,
        };
        if let Some(trace) = &mut self.trace {
            trace.lag = lag;
        }
        SimOutput {
            metrics,
            events: self.events,
            frames: self.frames,
            trace: self.trace,
        }
    }
}

/// Runs one simulation. Identical inputs give identical outputs.
pub fn simulate(cfg: &SystemConfig, workload: &Workload, opts: &SimOptions) -> Result<SimOutput> {
    cfg.validate()?;
    if !(opts.horizon.is_finite() && opts.horizon > 0.0) {
        return Err(Error::Config("horizon must be positive and finite"));
    }
    if opts.discipline.max_batch() == 0 {
        return Err(Error::Config("batch size must be at least 1"));
    }
    if let Discipline::OMpgps { m, u } = opts.discipline {
        if u < m {
            return Err(Error::Config("U must be at least M"));
        }
    }
    let generated;
    let arrivals: &[Arrival] = match workload {
        Workload::Trace(a) => {
            if a.windows(2).any(|w| w[0].time > w[1].time) {
                return Err(Error::Config("arrival trace must be time-sorted"));
            }
            if a.iter().any(|x| !(x.time >= 0.0)) {
                return Err(Error::Config("arrival times must be non-negative"));
            }
            a
        }
        Workload::Poisson(model) => {
            model.validate(cfg)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(TRAFFIC_STREAM);
            generated = model.generate(cfg, opts.horizon, &mut rng);
            &generated
        }
        Workload::Saturated => &[],
    };
    let mut engine = Engine::new(cfg, opts, matches!(workload, Workload::Saturated))?;
    engine.run(arrivals)?;
    Ok(engine.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(users: usize) -> SystemConfig {
        SystemConfig {
            users,
            weights: vec![1.0; users],
            deadline: None,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn single_packet_takes_one_packet_time() {
        let cfg = small(2);
        let mut opts = SimOptions::new(Discipline::Mpgps { m: 2 }, 100.0);
        opts.error_free = true;
        opts.record_trace = true;
        opts.warmup_fraction = 0.0;
        let w = Workload::Trace(vec![Arrival { time: 0.0, flow: 0 }]);
        let out = simulate(&cfg, &w, &opts).unwrap();
        let trace = out.trace.unwrap();
        assert_eq!(trace.departures, [8.0]);
        assert_eq!(out.metrics.flows[0].delivered, 1);
        assert!(out.metrics.conserved());
    }

    #[test]
    fn two_packets_share_a_frame() {
        let cfg = small(2);
        let mut opts = SimOptions::new(Discipline::Mpgps { m: 2 }, 100.0);
        opts.error_free = true;
        opts.record_trace = true;
        let w = Workload::Trace(vec![
            Arrival { time: 0.0, flow: 0 },
            Arrival { time: 0.0, flow: 1 },
        ]);
        let out = simulate(&cfg, &w, &opts).unwrap();
        assert_eq!(out.trace.unwrap().departures, [16.0, 16.0]);
        assert_eq!(out.frames.len(), 1);
        assert_eq!(out.frames[0].counts, [1, 1]);
    }

    #[test]
    fn frame_end_precedes_arrivals_at_the_same_instant() {
        let cfg = small(2);
        let mut opts = SimOptions::new(Discipline::Mpgps { m: 2 }, 100.0);
        opts.error_free = true;
        opts.record_events = true;
        let w = Workload::Trace(vec![
            Arrival { time: 0.0, flow: 0 },
            Arrival { time: 8.0, flow: 1 },
        ]);
        let out = simulate(&cfg, &w, &opts).unwrap();
        let kinds: Vec<_> = out.events.iter().map(|e| (e.time, e.kind)).collect();
        assert_eq!(
            kinds,
            [
                (0.0, EventKind::Arrival),
                (0.0, EventKind::Scheduled),
                (8.0, EventKind::Delivered),
                (8.0, EventKind::Arrival),
                (8.0, EventKind::Scheduled),
                (16.0, EventKind::Delivered),
            ]
        );
    }

    #[test]
    fn deadlines_drop_waiting_packets() {
        let cfg = SystemConfig {
            deadline: Some(10.0 * 200e-6),
            ..small(1)
        };
        let mut opts = SimOptions::new(Discipline::Pgps, 1000.0);
        opts.error_free = true;
        opts.warmup_fraction = 0.0;
        let w = Workload::Trace((0..3).map(|_| Arrival { time: 0.0, flow: 0 }).collect());
        let out = simulate(&cfg, &w, &opts).unwrap();
        // First departs at 8; the second would finish at 16 > 10 and the third
        // has expired by then.
        assert_eq!(out.metrics.flows[0].delivered, 1);
        assert_eq!(out.metrics.flows[0].dropped, 2);
        assert!(out.metrics.conserved());
    }

    #[test]
    fn saturated_runs_full_frames() {
        let cfg = small(4);
        let mut opts = SimOptions::new(Discipline::Mpgps { m: 3 }, 2400.0);
        opts.error_free = true;
        let out = simulate(&cfg, &Workload::Saturated, &opts).unwrap();
        assert!(out.frames.iter().all(|f| f.scheduled == 3));
        assert!(out.metrics.per_bit_power > 0.0);
        assert!(out.metrics.conserved());
    }

    #[test]
    fn identical_inputs_identical_outputs() {
        let cfg = SystemConfig {
            seed: 11,
            ..SystemConfig::default()
        };
        let w = Workload::Poisson(TrafficModel::uniform(10, 40_000.0));
        let opts = SimOptions::new(Discipline::AMpgps { m_max: 6 }, 5_000.0);
        let a = simulate(&cfg, &w, &opts).unwrap();
        let b = simulate(&cfg, &w, &opts).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn errors_cause_retransmissions() {
        let cfg = SystemConfig {
            target_ber: 1e-3,
            deadline: None,
            seed: 5,
            ..SystemConfig::default()
        };
        let w = Workload::Poisson(TrafficModel::uniform(10, 20_000.0));
        let mut opts = SimOptions::new(Discipline::Mpgps { m: 4 }, 20_000.0);
        opts.phy = false;
        let out = simulate(&cfg, &w, &opts).unwrap();
        assert!(out.metrics.retransmissions > 0);
        assert!(out.metrics.conserved());
    }
}

//! GPS reference: the virtual clock used to stamp packets, and an
//! event-driven fluid GPS simulator that produces oracle departure times,
//! service curves and backlogs.
//!
//! Virtual time is measured in "virtual bits": a flow of weight `phi` that is
//! continuously backlogged receives `phi * dV` bits while the clock advances
//! by `dV`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

/// One packet arrival of a trace. Times are in symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub flow: usize,
}

/// `V + rate * dt / weight_sum`, or `V` for an idle system.
pub fn virtual_advance(v: f64, dt: f64, rate: f64, weight_sum: f64) -> f64 {
    if weight_sum > 0.0 {
        v + rate * dt / weight_sum
    } else {
        v
    }
}

/// Virtual start and finish of a packet: `S = max(F_prev, V)`,
/// `F = S + bits / weight`.
pub fn stamp_times(prev_finish: f64, v: f64, bits: f64, weight: f64) -> (f64, f64) {
    let start = prev_finish.max(v);
    (start, start + bits / weight)
}

/// Real time at which the clock reaches `f_min` if nothing else arrives.
pub fn next_event(t: f64, v: f64, f_min: f64, weight_sum: f64, rate: f64) -> f64 {
    t + (f_min - v) * weight_sum / rate
}

fn tol(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Tracks the progress of the GPS reference system.
///
/// The clock keeps the last virtual finish per flow; a flow is backlogged in
/// GPS while that finish lies ahead of `V`. When the GPS system empties, `V`
/// is frozen (not reset) so stamps stay comparable with packets that are
/// still waiting in the packetized system.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    v: f64,
    t_last: f64,
    rate: f64,
    weights: Vec<f64>,
    last_finish: Vec<f64>,
    active: Vec<bool>,
    weight_sum: f64,
}

impl VirtualClock {
    pub fn new(weights: &[f64], rate: f64) -> Self {
        Self {
            v: 0.0,
            t_last: 0.0,
            rate,
            weights: weights.to_vec(),
            last_finish: vec![0.0; weights.len()],
            active: vec![false; weights.len()],
            weight_sum: 0.0,
        }
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn t_last(&self) -> f64 {
        self.t_last
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn is_backlogged(&self, flow: usize) -> bool {
        self.active[flow]
    }

    pub fn last_finish(&self, flow: usize) -> f64 {
        self.last_finish[flow]
    }

    fn recompute_weight_sum(&mut self) {
        self.weight_sum = self
            .weights
            .iter()
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|(w, _)| w)
            .sum();
    }

    /// Moves the clock to real time `now`, retiring flows whose last packet
    /// completes in GPS on the way.
    pub fn advance(&mut self, now: f64) {
        debug_assert!(now + tol(now) >= self.t_last, "clock moved backwards");
        let now = now.max(self.t_last);
        loop {
            if self.weight_sum <= 0.0 {
                self.t_last = now;
                return;
            }
            let f_exit = self
                .last_finish
                .iter()
                .zip(&self.active)
                .filter(|(_, &a)| a)
                .map(|(&f, _)| f)
                .fold(f64::INFINITY, f64::min);
            let t_exit = next_event(self.t_last, self.v, f_exit, self.weight_sum, self.rate);
            if t_exit > now {
                self.v = virtual_advance(self.v, now - self.t_last, self.rate, self.weight_sum);
                self.t_last = now;
                return;
            }
            self.v = self.v.max(f_exit);
            self.t_last = t_exit.max(self.t_last);
            let v = self.v;
            for (a, &f) in self.active.iter_mut().zip(&self.last_finish) {
                if *a && f <= v + tol(v) {
                    *a = false;
                }
            }
            self.recompute_weight_sum();
        }
    }

    /// Stamps a packet of `bits` arriving for `flow` at the current clock
    /// time. Call [`advance`](Self::advance) to the arrival time first.
    pub fn stamp(&mut self, flow: usize, bits: f64) -> (f64, f64) {
        let (start, finish) = stamp_times(self.last_finish[flow], self.v, bits, self.weights[flow]);
        self.last_finish[flow] = finish;
        if !self.active[flow] {
            self.active[flow] = true;
            self.recompute_weight_sum();
        }
        (start, finish)
    }

    /// Real time at which `V` reaches `f_min` with no further arrivals.
    pub fn next_event_time(&self, f_min: f64) -> f64 {
        next_event(self.t_last, self.v, f_min, self.weight_sum, self.rate)
    }
}

/// Piecewise-linear cumulative service curve stored as breakpoints
/// `(time, value, slope after time)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServiceCurve {
    points: Vec<(f64, f64, f64)>,
}

impl ServiceCurve {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a breakpoint. Points with an unchanged slope are elided.
    pub fn push(&mut self, time: f64, value: f64, slope: f64) {
        if let Some(&(t0, v0, s0)) = self.points.last() {
            debug_assert!(time >= t0);
            if s0 == slope && libm::fabs(v0 + s0 * (time - t0) - value) <= tol(value) {
                return;
            }
            if time == t0 {
                self.points.pop();
            }
        }
        self.points.push((time, value, slope));
    }

    pub fn points(&self) -> &[(f64, f64, f64)] {
        &self.points
    }

    /// Cumulative service `W(0, t)`.
    pub fn value(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.0 <= t);
        if idx == 0 {
            return 0.0;
        }
        let (t0, v0, s0) = self.points[idx - 1];
        v0 + s0 * (t - t0)
    }

    /// Service received in `(t1, t2)`.
    pub fn between(&self, t1: f64, t2: f64) -> f64 {
        self.value(t2) - self.value(t1)
    }

    pub fn breakpoint_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }
}

/// Right-continuous step function, e.g. a backlog in packets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepCurve {
    points: Vec<(f64, i64)>,
}

impl StepCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, value: i64) {
        if let Some(last) = self.points.last_mut() {
            if last.0 == time {
                last.1 = value;
                return;
            }
            if last.1 == value {
                return;
            }
        }
        self.points.push((time, value));
    }

    pub fn value(&self, t: f64) -> i64 {
        let idx = self.points.partition_point(|p| p.0 <= t);
        if idx == 0 {
            0
        } else {
            self.points[idx - 1].1
        }
    }

    pub fn points(&self) -> &[(f64, i64)] {
        &self.points
    }
}

/// Output of the fluid GPS oracle.
#[derive(Debug, Clone, Default)]
pub struct GpsTrace {
    /// GPS departure time per arrival index.
    pub departures: Vec<f64>,
    /// Cumulative service `W_k(0, t)` in bits.
    pub service: Vec<ServiceCurve>,
    /// Backlog `Q_k(t)` in packets (arrived, not yet departed).
    pub backlog: Vec<StepCurve>,
    /// Every time at which some state changed.
    pub event_times: Vec<f64>,
}

impl GpsTrace {
    pub fn is_empty(&self) -> bool {
        self.departures.is_empty()
    }
}

/// Event-driven fluid GPS over a time-sorted arrival trace.
///
/// Each backlogged flow is served at `rate * phi_k / sum(phi)`; events are
/// arrivals and head-of-line completions. Packets of a flow depart FIFO.
pub fn gps_simulate(arrivals: &[Arrival], weights: &[f64], rate: f64, bits: f64) -> GpsTrace {
    let flows = weights.len();
    let mut trace = GpsTrace {
        departures: vec![f64::NAN; arrivals.len()],
        service: vec![ServiceCurve::new(); flows],
        backlog: vec![StepCurve::new(); flows],
        event_times: Vec::new(),
    };
    if arrivals.is_empty() {
        return trace;
    }
    debug_assert!(arrivals.windows(2).all(|w| w[0].time <= w[1].time));

    let mut queues: Vec<VecDeque<usize>> = vec![VecDeque::new(); flows];
    let mut remaining = vec![0.0f64; flows];
    let mut served = vec![0.0f64; flows];
    let mut slope = vec![0.0f64; flows];
    let mut next = 0usize;
    let mut t = arrivals[0].time;
    let done_eps = 1e-9 * bits.max(1.0);

    loop {
        // Arrivals at the current instant.
        while next < arrivals.len() && arrivals[next].time <= t {
            let a = arrivals[next];
            if queues[a.flow].is_empty() {
                remaining[a.flow] = bits;
            }
            queues[a.flow].push_back(next);
            next += 1;
        }

        let weight_sum: f64 = (0..flows)
            .filter(|&k| !queues[k].is_empty())
            .map(|k| weights[k])
            .sum();
        for k in 0..flows {
            slope[k] = if queues[k].is_empty() {
                0.0
            } else {
                rate * weights[k] / weight_sum
            };
            trace.service[k].push(t, served[k], slope[k]);
            trace.backlog[k].push(t, queues[k].len() as i64);
        }
        trace.event_times.push(t);

        let next_arrival = arrivals.get(next).map_or(f64::INFINITY, |a| a.time);
        if weight_sum <= 0.0 {
            if next_arrival.is_infinite() {
                break;
            }
            t = next_arrival;
            continue;
        }

        let mut dt_done = f64::INFINITY;
        for k in 0..flows {
            if slope[k] > 0.0 {
                dt_done = dt_done.min(remaining[k] / slope[k]);
            }
        }
        let completes = t + dt_done <= next_arrival;
        let t_next = if completes { t + dt_done } else { next_arrival };
        let dt = t_next - t;
        for k in 0..flows {
            if slope[k] > 0.0 {
                let due = remaining[k] / slope[k] <= dt_done && completes;
                let amount = if due { remaining[k] } else { slope[k] * dt };
                served[k] += amount;
                remaining[k] -= amount;
                if due {
                    remaining[k] = 0.0;
                }
            }
        }
        t = t_next;
        for k in 0..flows {
            while !queues[k].is_empty() && remaining[k] <= done_eps {
                let idx = queues[k].pop_front().unwrap();
                trace.departures[idx] = t;
                served[k] += remaining[k].max(0.0);
                remaining[k] = if queues[k].is_empty() { 0.0 } else { bits };
            }
        }
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advance_examples() {
        assert_eq!(virtual_advance(0.0, 1.0, 128.0, 1.0), 128.0);
        assert_eq!(virtual_advance(5.0, 0.0, 128.0, 1.0), 5.0);
        assert_eq!(virtual_advance(0.0, 1.0, 128.0, 2.0), 64.0);
        assert_eq!(virtual_advance(7.0, 3.0, 128.0, 0.0), 7.0);
    }

    #[test]
    fn clock_advance_with_backlogged_flows() {
        let mut c = VirtualClock::new(&[1.0, 1.0], 128.0);
        c.stamp(0, 1e6);
        c.advance(1.0);
        assert_eq!(c.v(), 128.0);
        c.stamp(1, 1e6);
        c.advance(2.0);
        assert_eq!(c.v(), 192.0);
    }

    #[test]
    fn stamp_examples() {
        assert_eq!(stamp_times(0.0, 0.0, 1024.0, 1.0), (0.0, 1024.0));
        assert_eq!(stamp_times(2048.0, 1500.0, 1024.0, 1.0), (2048.0, 3072.0));
        assert_eq!(stamp_times(0.0, 0.0, 1024.0, 2.0), (0.0, 512.0));
    }

    #[test]
    fn next_event_examples() {
        assert_eq!(next_event(3.0, 10.0, 10.0, 1.0, 128.0), 3.0);
        assert_eq!(next_event(0.0, 0.0, 1024.0, 1.0, 128.0), 8.0);
        assert_eq!(next_event(0.0, 0.0, 1024.0, 2.0, 128.0), 16.0);
    }

    #[test]
    fn clock_retires_flows_and_freezes_when_idle() {
        let mut c = VirtualClock::new(&[1.0, 1.0], 128.0);
        c.stamp(0, 1024.0);
        c.stamp(1, 2048.0);
        // Both backlogged: V reaches 1024 at t = 16, then flow 1 alone.
        assert_eq!(c.next_event_time(1024.0), 16.0);
        c.advance(20.0);
        assert!(!c.is_backlogged(0));
        assert!(c.is_backlogged(1));
        assert!((c.v() - (1024.0 + 4.0 * 128.0)).abs() < 1e-9);
        c.advance(100.0);
        assert!(!c.is_backlogged(1));
        assert_eq!(c.v(), 2048.0);
        assert_eq!(c.weight_sum(), 0.0);
        let (s, f) = c.stamp(0, 1024.0);
        assert_eq!((s, f), (2048.0, 3072.0));
    }

    #[test]
    fn gps_single_packet() {
        let tr = gps_simulate(&[Arrival { time: 0.0, flow: 0 }], &[1.0], 128.0, 1024.0);
        assert_eq!(tr.departures, [8.0]);
        assert_eq!(tr.service[0].value(4.0), 512.0);
        assert_eq!(tr.service[0].value(100.0), 1024.0);
        assert_eq!(tr.backlog[0].value(7.9), 1);
        assert_eq!(tr.backlog[0].value(8.0), 0);
    }

    #[test]
    fn gps_equal_split() {
        let a = [
            Arrival { time: 0.0, flow: 0 },
            Arrival { time: 0.0, flow: 1 },
        ];
        let tr = gps_simulate(&a, &[1.0, 1.0], 128.0, 1024.0);
        assert_eq!(tr.departures, [16.0, 16.0]);
    }

    #[test]
    fn gps_empty_trace() {
        let tr = gps_simulate(&[], &[1.0, 1.0], 128.0, 1024.0);
        assert!(tr.is_empty());
        assert_eq!(tr.service[1].value(5.0), 0.0);
    }

    #[test]
    fn gps_single_backlogged_flow_spacing() {
        let a: Vec<Arrival> = (0..5).map(|_| Arrival { time: 0.0, flow: 0 }).collect();
        let tr = gps_simulate(&a, &[1.0], 128.0, 1024.0);
        assert_eq!(tr.departures, [8.0, 16.0, 24.0, 32.0, 40.0]);
        let mut c = VirtualClock::new(&[2.0], 128.0);
        c.stamp(0, 1e9);
        c.advance(1.0);
        assert_eq!(c.v(), 64.0);
    }

    #[test]
    fn gps_weighted_departures() {
        // Flow 0 has weight 3: served at 96 bits/symbol while both backlogged.
        let a = [
            Arrival { time: 0.0, flow: 0 },
            Arrival { time: 0.0, flow: 1 },
        ];
        let tr = gps_simulate(&a, &[3.0, 1.0], 128.0, 1024.0);
        let d0 = 1024.0 / 96.0;
        assert!((tr.departures[0] - d0).abs() < 1e-9);
        // Flow 1 received 32 * d0 bits, the rest at full rate.
        let d1 = d0 + (1024.0 - 32.0 * d0) / 128.0;
        assert!((tr.departures[1] - d1).abs() < 1e-9);
        assert!((tr.departures[1] - 16.0).abs() < 1e-9);
    }

    #[test]
    fn service_curve_interpolation() {
        let mut c = ServiceCurve::new();
        c.push(0.0, 0.0, 2.0);
        c.push(5.0, 10.0, 0.0);
        c.push(7.0, 10.0, 1.0);
        assert_eq!(c.value(-1.0), 0.0);
        assert_eq!(c.value(2.5), 5.0);
        assert_eq!(c.value(6.0), 10.0);
        assert_eq!(c.value(9.0), 12.0);
        assert_eq!(c.between(2.5, 9.0), 7.0);
    }
}

//! Run statistics and the fairness index.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::engine::FrameRecord;

/// Per-flow packet accounting over the whole run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    pub arrived: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Still queued or in service when the run stopped.
    pub residual: u64,
    pub bits_served: f64,
    /// Mean delay of measured deliveries in seconds.
    pub mean_delay: f64,
}

impl FlowStats {
    pub fn conserved(&self) -> bool {
        self.arrived == self.delivered + self.dropped + self.residual
    }
}

/// Figures of merit for one run. Packets arriving during the warm-up prefix
/// and frames starting in it are excluded from the averages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub measured_arrivals: u64,
    pub measured_delivered: u64,
    pub measured_dropped: u64,
    /// Mean queueing plus transmission delay, seconds.
    pub avg_delay: f64,
    pub loss_rate: f64,
    /// Delivered packets per OFDM symbol.
    pub throughput: f64,
    /// Mean transmit power over the measurement window, W.
    pub avg_power: f64,
    /// Transmit power per bit, W/bit (energy per bit over `T_sym`).
    pub per_bit_power: f64,
    pub eb_n0_db: f64,
    /// Worst normalized service gap between two jointly backlogged flows,
    /// bits.
    pub fairness: f64,
    pub frames: u64,
    pub mean_batch: f64,
    pub retransmissions: u64,
    pub lag_violations: u64,
    pub max_lag: usize,
    pub flows: Vec<FlowStats>,
}

impl Metrics {
    pub fn conserved(&self) -> bool {
        self.flows.iter().all(FlowStats::conserved)
    }
}

/// Largest `|W_i(t1,t2)/phi_i - W_j(t1,t2)/phi_j|` over frame boundaries
/// `t1 < t2` with `t2 - t1 <= window`, restricted to stretches of
/// back-to-back frames in which both flows stay backlogged.
///
/// `window` is in symbols; frames starting before `from` are ignored.
pub fn fairness_metric(
    frames: &[FrameRecord],
    weights: &[f64],
    packet_bits: f64,
    window: f64,
    from: f64,
) -> f64 {
    let flows = weights.len();
    let first = frames.partition_point(|f| f.start < from);
    let frames = &frames[first..];
    let mut worst = 0.0f64;
    for i in 0..flows {
        for j in (i + 1)..flows {
            worst = worst.max(pair_gap(frames, weights, packet_bits, window, i, j));
        }
    }
    worst
}

fn pair_gap(
    frames: &[FrameRecord],
    weights: &[f64],
    packet_bits: f64,
    window: f64,
    i: usize,
    j: usize,
) -> f64 {
    let mut best = 0.0f64;
    // Boundary points (time, D) of the current run.
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut d = 0.0f64;
    let mut prev_end = f64::NAN;
    let mut flush = |points: &mut Vec<(f64, f64)>| {
        best = best.max(window_range(points, window));
        points.clear();
    };
    for f in frames {
        let joint = f.backlogged[i] && f.backlogged[j];
        if !joint || f.start != prev_end {
            flush(&mut points);
        }
        if joint {
            if points.is_empty() {
                points.push((f.start, d));
            }
            d += f.counts[i] as f64 * packet_bits / weights[i]
                - f.counts[j] as f64 * packet_bits / weights[j];
            points.push((f.end, d));
        } else {
            d += f.counts[i] as f64 * packet_bits / weights[i]
                - f.counts[j] as f64 * packet_bits / weights[j];
        }
        prev_end = f.end;
    }
    flush(&mut points);
    best
}

/// `max |D(t2) - D(t1)|` over point pairs at most `window` apart.
fn window_range(points: &[(f64, f64)], window: f64) -> f64 {
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0f64;
    let mut lo = 0usize;
    for (hi, &(t, v)) in points.iter().enumerate() {
        while points[lo].0 < t - window {
            lo += 1;
        }
        while maxq.front().is_some_and(|&x| x < lo) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&x| x < lo) {
            minq.pop_front();
        }
        while maxq.back().is_some_and(|&x| points[x].1 <= v) {
            maxq.pop_back();
        }
        maxq.push_back(hi);
        while minq.back().is_some_and(|&x| points[x].1 >= v) {
            minq.pop_back();
        }
        minq.push_back(hi);
        let hi_v = points[*maxq.front().unwrap()].1;
        let lo_v = points[*minq.front().unwrap()].1;
        best = best.max(v - lo_v).max(hi_v - v);
    }
    best
}

/// Per-flow running means without storing samples.
#[derive(Debug, Clone, Default)]
pub(crate) struct Accumulator {
    pub sum: f64,
    pub count: u64,
}

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

pub(crate) fn zeros(n: usize) -> Vec<Accumulator> {
    vec![Accumulator::default(); n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(start: f64, end: f64, counts: &[usize], backlogged: &[bool]) -> FrameRecord {
        FrameRecord {
            start,
            end,
            counts: counts.to_vec(),
            backlogged: backlogged.to_vec(),
            ..FrameRecord::default()
        }
    }

    #[test]
    fn alternating_service_gap_is_one_packet() {
        let frames: Vec<_> = (0..100)
            .map(|h| {
                let c = if h % 2 == 0 { [1, 0] } else { [0, 1] };
                frame(h as f64 * 8.0, (h + 1) as f64 * 8.0, &c, &[true, true])
            })
            .collect();
        let f = fairness_metric(&frames, &[1.0, 1.0], 1024.0, 1e9, 0.0);
        assert_eq!(f, 1024.0);
    }

    #[test]
    fn window_limits_drift() {
        // Flow 0 is served every frame, flow 1 never: gap grows with window.
        let frames: Vec<_> = (0..100)
            .map(|h| frame(h as f64 * 8.0, (h + 1) as f64 * 8.0, &[1, 0], &[true, true]))
            .collect();
        assert_eq!(fairness_metric(&frames, &[1.0, 1.0], 1.0, 80.0, 0.0), 10.0);
        assert_eq!(fairness_metric(&frames, &[1.0, 1.0], 1.0, 1e9, 0.0), 100.0);
    }

    #[test]
    fn idle_flow_breaks_the_run() {
        let mut frames = Vec::new();
        for h in 0..10 {
            let b = [true, h != 5];
            frames.push(frame(h as f64 * 8.0, (h + 1) as f64 * 8.0, &[1, 0], &b));
        }
        assert_eq!(fairness_metric(&frames, &[1.0, 1.0], 1.0, 1e9, 0.0), 5.0);
    }

    #[test]
    fn weights_normalize() {
        let frames: Vec<_> = (0..30)
            .map(|h| {
                let c = if h % 3 == 2 { [0, 1] } else { [1, 0] };
                frame(h as f64 * 8.0, (h + 1) as f64 * 8.0, &c, &[true, true])
            })
            .collect();
        assert_eq!(fairness_metric(&frames, &[2.0, 1.0], 2.0, 1e9, 0.0), 2.0);
    }
}

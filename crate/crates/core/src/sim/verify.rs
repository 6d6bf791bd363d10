//! Error-free co-simulation against the fluid GPS oracle.

use alloc::vec::Vec;

use super::engine::{simulate, RunTrace, SimOptions, Workload};
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::scheduler::Discipline;
use crate::virtual_time::{gps_simulate, GpsTrace};

/// Analytic ceiling against the largest observed value of one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub limit: f64,
    /// Largest observed value; `-inf` with no samples.
    pub observed: f64,
    pub samples: u64,
    pub violations: u64,
    /// False when the bound's premise does not hold for this run.
    pub applicable: bool,
}

impl BoundCheck {
    fn new(name: &'static str, limit: f64) -> Self {
        Self {
            name,
            limit,
            observed: f64::NEG_INFINITY,
            samples: 0,
            violations: 0,
            applicable: true,
        }
    }

    fn record(&mut self, value: f64, tol: f64) {
        self.samples += 1;
        self.observed = self.observed.max(value);
        if value > self.limit + tol {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        !self.applicable || self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub discipline: Discipline,
    /// Batch size the GPS-relative bounds are evaluated with.
    pub servers: usize,
    pub packets: u64,
    pub frames: u64,
    pub checks: Vec<BoundCheck>,
    pub conserved: bool,
    pub work_conserving: bool,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.conserved && self.work_conserving && self.checks.iter().all(BoundCheck::passed)
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn violations(&self) -> u64 {
        self.checks
            .iter()
            .filter(|c| c.applicable)
            .map(|c| c.violations)
            .sum()
    }

    /// True when the bounds reduce to their single-server forms.
    pub fn single_server(&self) -> bool {
        self.servers == 1
    }
}

pub const DELAY: &str = "delay";
pub const ORDERED_DELAY: &str = "ordered-delay";
pub const SERVICE_LAG: &str = "service-lag";
pub const BACKLOG_EXCESS: &str = "backlog-excess";
pub const AGGREGATE_LAG: &str = "aggregate-lag";

fn time_tol(t: f64) -> f64 {
    1e-6 + 1e-9 * libm::fabs(t)
}

/// Runs `workload` error-free without deadlines and checks every bound that
/// applies to the discipline.
///
/// The GPS-relative bounds use the discipline's largest batch; for O-MPGPS
/// they are reported but marked not applicable, and the lag against a
/// shadow MPGPS is checked instead.
pub fn verify_bounds(
    cfg: &SystemConfig,
    workload: &Workload,
    opts: &SimOptions,
) -> Result<BoundReport> {
    if matches!(workload, Workload::Saturated) {
        return Err(Error::Config("bound checks need a finite arrival trace"));
    }
    let cfg = SystemConfig {
        deadline: None,
        ..cfg.clone()
    };
    let mut opts = opts.clone();
    opts.error_free = true;
    opts.power_budget = None;
    opts.record_trace = true;
    opts.track_lag = true;
    opts.drain = true;
    opts.phy = false;
    let out = simulate(&cfg, workload, &opts)?;
    let trace = out.trace.expect("trace recorded");
    let rate = cfg.service_rate();
    let bits = cfg.packet_bits as f64;
    let gps = gps_simulate(&trace.arrivals, &cfg.weights, rate, bits);

    let m = opts.discipline.max_batch();
    let gps_relative = !matches!(opts.discipline, Discipline::OMpgps { .. });
    let packet_time = bits / rate;
    let mut checks = Vec::new();

    let mut delay = BoundCheck::new(DELAY, (2 * m - 1) as f64 * packet_time);
    let mut ordered = BoundCheck::new(ORDERED_DELAY, (m - 1) as f64 * packet_time);
    for (&dp, &dg) in trace.departures.iter().zip(&gps.departures) {
        delay.record(dp - dg, time_tol(dp));
        ordered.record(dp - dg, time_tol(dp));
    }
    ordered.applicable = gps_relative && in_gps_order(&trace, &gps);
    delay.applicable = gps_relative;
    checks.push(delay);
    checks.push(ordered);

    let mut service = BoundCheck::new(SERVICE_LAG, (2 * m - 1) as f64 * bits);
    let mut backlog = BoundCheck::new(BACKLOG_EXCESS, (2 * m - 1) as f64);
    for k in 0..cfg.users {
        let times = merged(
            gps.service[k].breakpoint_times(),
            trace.service[k].breakpoint_times(),
        );
        for &t in &times {
            let gap = gps.service[k].value(t) - trace.service[k].value(t);
            service.record(gap, 1e-6 * bits);
        }
        let times = merged(
            gps.backlog[k].points().iter().map(|p| p.0),
            trace.backlog[k].points().iter().map(|p| p.0),
        );
        for &t in &times {
            let excess = trace.backlog[k].value(t) - gps.backlog[k].value(t);
            backlog.record(excess as f64, 0.0);
        }
    }
    service.applicable = gps_relative;
    backlog.applicable = gps_relative;
    checks.push(service);
    checks.push(backlog);

    if let Discipline::OMpgps { m, u } = opts.discipline {
        let lag = trace.lag.unwrap_or_default();
        let mut check = BoundCheck::new(AGGREGATE_LAG, u.saturating_sub(m) as f64);
        check.samples = lag.steps;
        check.observed = lag.max_lag as f64;
        check.violations = lag.violations;
        checks.push(check);
    }

    Ok(BoundReport {
        discipline: opts.discipline,
        servers: m,
        packets: trace.arrivals.len() as u64,
        frames: out.frames.len() as u64,
        checks,
        conserved: out.metrics.conserved(),
        work_conserving: work_conserving(&out.frames, &trace),
    })
}

/// True when every frame's packets all leave GPS no later than every packet
/// of the following frame.
fn in_gps_order(trace: &RunTrace, gps: &GpsTrace) -> bool {
    let mut prev_max = f64::NEG_INFINITY;
    for batch in &trace.batches {
        let d = |id: &u64| gps.departures[*id as usize];
        let lo = batch.iter().map(d).fold(f64::INFINITY, f64::min);
        let hi = batch.iter().map(d).fold(f64::NEG_INFINITY, f64::max);
        if lo + time_tol(lo) < prev_max {
            return false;
        }
        prev_max = prev_max.max(hi);
    }
    true
}

/// Every gap between frames is an empty-system period ended by an arrival.
fn work_conserving(frames: &[super::engine::FrameRecord], trace: &RunTrace) -> bool {
    let arrival_at = |t: f64| {
        let i = trace.arrivals.partition_point(|a| a.time < t);
        trace.arrivals.get(i).is_some_and(|a| a.time == t)
    };
    let empty_at = |t: f64| trace.backlog.iter().all(|b| b.value(t) == 0);
    if let Some(first) = frames.first() {
        if trace.arrivals.first().is_none_or(|a| a.time != first.start) {
            return false;
        }
    }
    frames.windows(2).all(|w| {
        w[1].start == w[0].end
            || (w[1].start > w[0].end && empty_at(w[0].end) && arrival_at(w[1].start))
    })
}

fn merged(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.chain(b).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

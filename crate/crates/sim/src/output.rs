//! CSV tables, per-figure data files and the gnuplot script.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use mpgps_core::scheduler::Mode;
use mpgps_core::sim::{BoundCheck, EventKind, EventRecord, FrameRecord, Metrics};

use crate::scenario::GridPoint;

pub type CsvWriter = csv::Writer<BufWriter<File>>;

pub fn create(path: &Path) -> anyhow::Result<CsvWriter> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

type Column = (&'static str, fn(&Metrics) -> f64);

/// Per-run metric columns, in output order.
pub const METRICS: &[Column] = &[
    ("avg_delay_ms", |m| m.avg_delay * 1e3),
    ("loss_rate", |m| m.loss_rate),
    ("throughput_pkt_per_symbol", |m| m.throughput),
    ("avg_power_w", |m| m.avg_power),
    ("per_bit_power_w", |m| m.per_bit_power),
    ("eb_n0_db", |m| m.eb_n0_db),
    ("fairness_bits", |m| m.fairness),
    ("mean_batch", |m| m.mean_batch),
    ("frames", |m| m.frames as f64),
    ("measured_arrivals", |m| m.measured_arrivals as f64),
    ("delivered", |m| m.measured_delivered as f64),
    ("dropped", |m| m.measured_dropped as f64),
    ("retransmissions", |m| m.retransmissions as f64),
    ("lag_violations", |m| m.lag_violations as f64),
    ("max_lag", |m| m.max_lag as f64),
];

const POINT_COLUMNS: [&str; 6] = ["config_hash", "point", "mode", "m", "u", "power_budget_w"];

fn point_fields(hash: &str, p: &GridPoint) -> Vec<String> {
    vec![
        hash.to_string(),
        p.index.to_string(),
        p.mode.name().to_string(),
        p.m.to_string(),
        opt(p.u),
        opt(p.power_budget),
    ]
}

pub fn runs_header(w: &mut CsvWriter) -> anyhow::Result<()> {
    let mut header: Vec<&str> = POINT_COLUMNS.to_vec();
    header.extend(["replication", "seed"]);
    header.extend(METRICS.iter().map(|(n, _)| *n));
    w.write_record(header)?;
    Ok(())
}

pub fn runs_row(
    w: &mut CsvWriter,
    hash: &str,
    p: &GridPoint,
    replication: u64,
    seed: u64,
    m: &Metrics,
) -> anyhow::Result<()> {
    let mut row = point_fields(hash, p);
    row.push(replication.to_string());
    row.push(seed.to_string());
    row.extend(METRICS.iter().map(|(_, f)| f(m).to_string()));
    w.write_record(row)?;
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-point aggregates over replications.
#[derive(Debug, Clone)]
pub struct PointSummary {
    pub point: GridPoint,
    pub replications: usize,
    /// `(mean, std)` per entry of [`METRICS`].
    pub stats: Vec<(f64, f64)>,
}

impl PointSummary {
    pub fn new(point: GridPoint, runs: &[&Metrics]) -> Self {
        let stats = METRICS
            .iter()
            .map(|(_, f)| mean_std(&runs.iter().map(|m| f(m)).collect::<Vec<_>>()))
            .collect();
        Self {
            point,
            replications: runs.len(),
            stats,
        }
    }

    pub fn mean(&self, name: &str) -> f64 {
        let i = METRICS
            .iter()
            .position(|(n, _)| *n == name)
            .expect("known metric");
        self.stats[i].0
    }
}

pub fn write_summary(path: &Path, hash: &str, rows: &[PointSummary]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    let mut header: Vec<String> = POINT_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.push("replications".into());
    for (n, _) in METRICS {
        header.push(format!("{n}_mean"));
        header.push(format!("{n}_std"));
    }
    w.write_record(header)?;
    for s in rows {
        let mut row = point_fields(hash, &s.point);
        row.push(s.replications.to_string());
        for (mean, std) in &s.stats {
            row.push(mean.to_string());
            row.push(std.to_string());
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `x` down the rows, one column per series.
fn write_wide(
    path: &Path,
    hash: &str,
    x_name: &str,
    points: &[(String, usize, f64)],
) -> anyhow::Result<()> {
    let mut series: Vec<String> = Vec::new();
    for (s, _, _) in points {
        if !series.contains(s) {
            series.push(s.clone());
        }
    }
    let mut table: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for (s, x, y) in points {
        let col = series.iter().position(|c| c == s).unwrap();
        table.entry(*x).or_default().insert(col, *y);
    }
    let mut w = create(path)?;
    let mut header = vec!["config_hash".to_string(), x_name.to_string()];
    header.extend(series.iter().cloned());
    w.write_record(header)?;
    for (x, cols) in table {
        let mut row = vec![hash.to_string(), x.to_string()];
        for c in 0..series.len() {
            row.push(opt(cols.get(&c)));
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const FIGURES: [&str; 8] = [
    "fig2_power_vs_M.csv",
    "fig3_delay_vs_M.csv",
    "fig4_fairness_vs_U.csv",
    "fig5_loss_vs_U.csv",
    "fig6_power_vs_MU.csv",
    "fig7_pareto.csv",
    "fig8_throughput_vs_ebn0.csv",
    "fig9_loss_vs_power.csv",
];

pub fn write_figures(dir: &Path, hash: &str, rows: &[PointSummary]) -> anyhow::Result<()> {
    let uncapped: Vec<&PointSummary> = rows
        .iter()
        .filter(|s| s.point.power_budget.is_none())
        .collect();
    let by_m = |metric: &str, to_db: bool| -> Vec<(String, usize, f64)> {
        uncapped
            .iter()
            .map(|s| {
                let y = s.mean(metric);
                (s.point.series(), s.point.m, if to_db { db(y) } else { y })
            })
            .collect()
    };
    let by_u = |metric: &str, to_db: bool| -> Vec<(String, usize, f64)> {
        uncapped
            .iter()
            .filter(|s| s.point.mode == Mode::OMpgps)
            .map(|s| {
                let y = s.mean(metric);
                (
                    format!("ompgps_m{}", s.point.m),
                    s.point.u.unwrap_or(s.point.m),
                    if to_db { db(y) } else { y },
                )
            })
            .collect()
    };
    write_wide(
        &dir.join(FIGURES[0]),
        hash,
        "m",
        &by_m("per_bit_power_w", true),
    )?;
    write_wide(
        &dir.join(FIGURES[1]),
        hash,
        "m",
        &by_m("avg_delay_ms", false),
    )?;
    write_wide(
        &dir.join(FIGURES[2]),
        hash,
        "u",
        &by_u("fairness_bits", false),
    )?;
    write_wide(&dir.join(FIGURES[3]), hash, "u", &by_u("loss_rate", false))?;
    write_wide(
        &dir.join(FIGURES[4]),
        hash,
        "u",
        &by_u("per_bit_power_w", true),
    )?;

    let mut w = create(&dir.join(FIGURES[5]))?;
    w.write_record([
        "config_hash",
        "series",
        "m",
        "u",
        "avg_delay_ms",
        "per_bit_power_db",
    ])?;
    for s in &uncapped {
        w.write_record([
            hash.to_string(),
            s.point.series(),
            s.point.m.to_string(),
            opt(s.point.u),
            s.mean("avg_delay_ms").to_string(),
            db(s.mean("per_bit_power_w")).to_string(),
        ])?;
    }
    w.flush()?;

    let mut w8 = create(&dir.join(FIGURES[6]))?;
    w8.write_record([
        "config_hash",
        "series",
        "m",
        "u",
        "power_budget_w",
        "eb_n0_db",
        "throughput_pkt_per_symbol",
    ])?;
    let mut w9 = create(&dir.join(FIGURES[7]))?;
    w9.write_record([
        "config_hash",
        "series",
        "m",
        "u",
        "power_budget_w",
        "avg_power_w",
        "loss_rate",
    ])?;
    for s in rows {
        let head = [
            hash.to_string(),
            s.point.series(),
            s.point.m.to_string(),
            opt(s.point.u),
            opt(s.point.power_budget),
        ];
        let mut r8 = head.to_vec();
        r8.push(s.mean("eb_n0_db").to_string());
        r8.push(s.mean("throughput_pkt_per_symbol").to_string());
        w8.write_record(r8)?;
        let mut r9 = head.to_vec();
        r9.push(s.mean("avg_power_w").to_string());
        r9.push(s.mean("loss_rate").to_string());
        w9.write_record(r9)?;
    }
    w8.flush()?;
    w9.flush()?;
    Ok(())
}

pub fn write_gnuplot(dir: &Path) -> anyhow::Result<()> {
    let script = r#"# gnuplot script for the figure CSVs in this directory.
set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 800,560
set grid

set output 'fig2_power_vs_M.png'
set xlabel 'M'; set ylabel 'power per bit (dBW)'
plot for [i=3:*] 'fig2_power_vs_M.csv' using 2:i with linespoints

set output 'fig3_delay_vs_M.png'
set xlabel 'M'; set ylabel 'mean delay (ms)'
plot for [i=3:*] 'fig3_delay_vs_M.csv' using 2:i with linespoints

set output 'fig4_fairness_vs_U.png'
set xlabel 'U'; set ylabel 'fairness (bits)'
plot for [i=3:*] 'fig4_fairness_vs_U.csv' using 2:i with linespoints

set output 'fig5_loss_vs_U.png'
set xlabel 'U'; set ylabel 'loss rate'
plot for [i=3:*] 'fig5_loss_vs_U.csv' using 2:i with linespoints

set output 'fig6_power_vs_MU.png'
set xlabel 'U'; set ylabel 'power per bit (dBW)'
plot for [i=3:*] 'fig6_power_vs_MU.csv' using 2:i with linespoints

set output 'fig7_pareto.png'
set xlabel 'mean delay (ms)'; set ylabel 'power per bit (dBW)'
plot 'fig7_pareto.csv' using 5:6:2 with labels point pt 7 offset 1,0 notitle

set output 'fig8_throughput_vs_ebn0.png'
set xlabel 'Eb/N0 (dB)'; set ylabel 'throughput (packets/symbol)'
plot 'fig8_throughput_vs_ebn0.csv' using 6:7 with linespoints

set output 'fig9_loss_vs_power.png'
set xlabel 'average transmit power (W)'; set ylabel 'loss rate'
set logscale x
plot 'fig9_loss_vs_power.csv' using 6:7 with linespoints
"#;
    std::fs::write(dir.join("plots.gp"), script).context("writing plots.gp")
}

fn outcome(kind: EventKind) -> &'static str {
    match kind {
        EventKind::Delivered => "success",
        EventKind::Failed => "error",
        EventKind::Dropped => "expired",
        EventKind::Arrival | EventKind::Scheduled => "",
    }
}

pub fn write_events(
    path: &Path,
    hash: &str,
    symbol_duration: f64,
    events: &[EventRecord],
) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "config_hash",
        "time_s",
        "event",
        "flow",
        "seq",
        "packet",
        "frame",
        "outcome",
    ])?;
    for e in events {
        w.write_record([
            hash.to_string(),
            (e.time * symbol_duration).to_string(),
            e.kind.name().to_string(),
            e.flow.to_string(),
            e.seq.to_string(),
            e.packet.to_string(),
            opt(e.frame),
            outcome(e.kind).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_frames(
    path: &Path,
    hash: &str,
    symbol_duration: f64,
    frames: &[FrameRecord],
) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "config_hash",
        "frame",
        "start_s",
        "end_s",
        "scheduled",
        "counts",
        "per_bit_power_w",
        "initial_power_w",
        "energy_j",
        "displaced",
        "aggregate_lag",
    ])?;
    for f in frames {
        let counts: Vec<String> = f.counts.iter().map(usize::to_string).collect();
        w.write_record([
            hash.to_string(),
            f.index.to_string(),
            (f.start * symbol_duration).to_string(),
            (f.end * symbol_duration).to_string(),
            f.scheduled.to_string(),
            counts.join(";"),
            f.per_bit_power.to_string(),
            f.initial_power.to_string(),
            f.energy.to_string(),
            f.displaced.to_string(),
            f.aggregate_lag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn bounds_header(w: &mut CsvWriter) -> anyhow::Result<()> {
    let mut header: Vec<&str> = POINT_COLUMNS.to_vec();
    header.extend([
        "replication",
        "seed",
        "check",
        "limit",
        "observed",
        "samples",
        "violations",
        "applicable",
        "status",
    ]);
    w.write_record(header)?;
    Ok(())
}

pub fn bounds_rows(
    w: &mut CsvWriter,
    hash: &str,
    p: &GridPoint,
    replication: u64,
    seed: u64,
    checks: &[BoundCheck],
) -> anyhow::Result<()> {
    for c in checks {
        let mut row = point_fields(hash, p);
        row.extend([
            replication.to_string(),
            seed.to_string(),
            c.name.to_string(),
            c.limit.to_string(),
            c.observed.to_string(),
            c.samples.to_string(),
            c.violations.to_string(),
            c.applicable.to_string(),
            status(c).to_string(),
        ]);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn status(c: &BoundCheck) -> &'static str {
    if !c.applicable {
        "n/a"
    } else if c.violations == 0 {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

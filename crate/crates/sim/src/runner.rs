//! Grid execution on a worker pool with results merged in grid order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use anyhow::Context;
use mpgps_core::sim::{simulate, verify_bounds, BoundReport, SimOutput, Workload};
use rayon::prelude::*;

use crate::output;
use crate::scenario::{GridPoint, Scenario};

/// Failure classes, mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Violation(String),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Violation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Violation(s) => write!(f, "bound violation: {s}"),
            Failure::Runtime(e) => write!(f, "runtime failure: {e:#}"),
        }
    }
}

impl std::error::Error for Failure {}

#[derive(Debug, Clone, Copy)]
pub struct Job {
    pub point: GridPoint,
    pub replication: u64,
    pub seed: u64,
}

/// Every (point, replication) pair in output order. Replication `r` uses
/// seed `base + r` at every point, so points share random inputs.
pub fn jobs(scenario: &Scenario, points: &[GridPoint]) -> Vec<Job> {
    points
        .iter()
        .flat_map(|&point| {
            (0..scenario.replications).map(move |r| Job {
                point,
                replication: r,
                seed: scenario.system.seed.wrapping_add(r),
            })
        })
        .collect()
}

/// Runs `work` over `jobs` in parallel and hands each result to `sink` in
/// job order as soon as its predecessors are done.
pub fn ordered_map<T, R, W, S>(
    jobs: &[T],
    threads: Option<usize>,
    work: W,
    mut sink: S,
) -> anyhow::Result<()>
where
    T: Sync,
    R: Send,
    W: Fn(&T) -> R + Sync,
    S: FnMut(usize, R) -> anyhow::Result<()>,
{
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n.max(1));
        }
        b.build().context("building worker pool")?
    };
    let (tx, rx) = mpsc::channel::<(usize, R)>();
    std::thread::scope(|scope| {
        let work = &work;
        scope.spawn(move || {
            pool.install(|| {
                jobs.par_iter()
                    .enumerate()
                    .for_each_with(tx, |tx, (i, job)| {
                        // The receiver only disappears after an error.
                        let _ = tx.send((i, work(job)));
                    });
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0usize;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&next) {
                sink(next, r)?;
                next += 1;
            }
        }
        Ok(())
    })
}

fn prepare(scenario: &Scenario) -> Result<(Vec<GridPoint>, Vec<String>, String, PathBuf), Failure> {
    let points = scenario.validate().map_err(Failure::Config)?;
    let (_, skipped) = scenario.grid().map_err(Failure::Config)?;
    let hash = scenario.config_hash();
    let dir = scenario.output.clone();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::Runtime)?;
    Ok((points, skipped, hash, dir))
}

fn run_job(scenario: &Scenario, workload: &Workload, job: &Job) -> anyhow::Result<SimOutput> {
    let cfg = scenario.system_config(job.seed);
    let opts = scenario.sim_options(&job.point);
    simulate(&cfg, workload, &opts).map_err(|e| {
        anyhow::anyhow!(
            "{} M={} U={:?} replication {}: {e}",
            job.point.mode.name(),
            job.point.m,
            job.point.u,
            job.replication
        )
    })
}

/// What a completed `run` produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config_hash: String,
    pub output: PathBuf,
    pub runs: usize,
    pub skipped: Vec<String>,
    pub summaries: Vec<output::PointSummary>,
}

/// Executes every grid point and replication and writes all artifacts.
pub fn run_scenario(scenario: &Scenario, threads: Option<usize>) -> Result<RunReport, Failure> {
    let (points, skipped, hash, dir) = prepare(scenario)?;
    let workload = scenario.workload().map_err(Failure::Config)?;
    let jobs = jobs(scenario, &points);
    let record_events = scenario.run.record_events;
    let record_frames = scenario.run.record_frames;
    if record_events {
        std::fs::create_dir_all(dir.join("events")).map_err(|e| Failure::Runtime(e.into()))?;
    }
    if record_frames {
        std::fs::create_dir_all(dir.join("frames")).map_err(|e| Failure::Runtime(e.into()))?;
    }
    let t_sym = scenario.system.symbol_duration_s;

    let mut runs = output::create(&dir.join("runs.csv")).map_err(Failure::Runtime)?;
    output::runs_header(&mut runs).map_err(Failure::Runtime)?;
    let mut metrics = Vec::with_capacity(jobs.len());
    let mut first_error: Option<anyhow::Error> = None;
    ordered_map(
        &jobs,
        threads,
        |job| run_job(scenario, &workload, job),
        |i, result| {
            let job = &jobs[i];
            match result {
                Ok(out) => {
                    output::runs_row(
                        &mut runs,
                        &hash,
                        &job.point,
                        job.replication,
                        job.seed,
                        &out.metrics,
                    )?;
                    let stem = format!("point{}_rep{}.csv", job.point.index, job.replication);
                    if record_events {
                        output::write_events(
                            &dir.join("events").join(&stem),
                            &hash,
                            t_sym,
                            &out.events,
                        )?;
                    }
                    if record_frames {
                        output::write_frames(
                            &dir.join("frames").join(&stem),
                            &hash,
                            t_sym,
                            &out.frames,
                        )?;
                    }
                    metrics.push((job.point.index, out.metrics));
                }
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some(e);
                    }
                }
            }
            Ok(())
        },
    )
    .map_err(Failure::Runtime)?;
    if let Some(e) = first_error {
        return Err(Failure::Runtime(e));
    }

    let summaries: Vec<output::PointSummary> = points
        .iter()
        .map(|p| {
            let runs: Vec<_> = metrics
                .iter()
                .filter(|(i, _)| *i == p.index)
                .map(|(_, m)| m)
                .collect();
            output::PointSummary::new(*p, &runs)
        })
        .collect();
    output::write_summary(&dir.join("summary.csv"), &hash, &summaries).map_err(Failure::Runtime)?;
    output::write_figures(&dir, &hash, &summaries).map_err(Failure::Runtime)?;
    output::write_gnuplot(&dir).map_err(Failure::Runtime)?;
    write_resolved(scenario, &dir)?;
    Ok(RunReport {
        config_hash: hash,
        output: dir,
        runs: jobs.len(),
        skipped,
        summaries,
    })
}

fn write_resolved(scenario: &Scenario, dir: &Path) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    output::write_text(&dir.join("scenario.resolved.json"), &(text + "\n"))
        .map_err(Failure::Runtime)
}

/// Result of `check-bounds`.
#[derive(Debug, Clone)]
pub struct BoundsOutcome {
    pub config_hash: String,
    pub reports: Vec<(Job, BoundReport)>,
    pub skipped: Vec<String>,
    /// Human-readable report, also written to `bounds.txt`.
    pub text: String,
}

impl BoundsOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|(_, r)| r.passed())
    }
}

/// Runs the error-free bound verification at every grid point.
///
/// Violations are not an error here; callers decide the exit status.
pub fn check_bounds(scenario: &Scenario, threads: Option<usize>) -> Result<BoundsOutcome, Failure> {
    let workload = scenario.workload().map_err(Failure::Config)?;
    if matches!(workload, Workload::Saturated) {
        return Err(Failure::Config(anyhow::anyhow!(
            "check-bounds needs poisson or trace traffic"
        )));
    }
    let (points, skipped, hash, dir) = prepare(scenario)?;
    let jobs = jobs(scenario, &points);
    let mut csv = output::create(&dir.join("bounds.csv")).map_err(Failure::Runtime)?;
    output::bounds_header(&mut csv).map_err(Failure::Runtime)?;
    let mut reports = Vec::with_capacity(jobs.len());
    let mut first_error = None;
    let mut text = String::new();
    ordered_map(
        &jobs,
        threads,
        |job| {
            let cfg = scenario.system_config(job.seed);
            let opts = scenario.sim_options(&job.point);
            verify_bounds(&cfg, &workload, &opts)
        },
        |i, result| {
            let job = jobs[i];
            match result {
                Ok(report) => {
                    output::bounds_rows(
                        &mut csv,
                        &hash,
                        &job.point,
                        job.replication,
                        job.seed,
                        &report.checks,
                    )?;
                    describe(&mut text, &job, &report);
                    reports.push((job, report));
                }
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some(anyhow::anyhow!(
                            "{} M={} replication {}: {e}",
                            job.point.mode.name(),
                            job.point.m,
                            job.replication
                        ));
                    }
                }
            }
            Ok(())
        },
    )
    .map_err(Failure::Runtime)?;
    if let Some(e) = first_error {
        return Err(Failure::Runtime(e));
    }
    output::write_text(&dir.join("bounds.txt"), &text).map_err(Failure::Runtime)?;
    write_resolved(scenario, &dir)?;
    Ok(BoundsOutcome {
        config_hash: hash,
        reports,
        skipped,
        text,
    })
}

fn describe(text: &mut String, job: &Job, r: &BoundReport) {
    let reduction = if r.single_server() && job.point.u.is_none_or(|u| u == 1) {
        " (single-server reduction)"
    } else {
        ""
    };
    let _ = writeln!(
        text,
        "{} M={}{} replication {} seed {}: {} packets, {} frames{}",
        job.point.mode.name(),
        job.point.m,
        job.point.u.map_or(String::new(), |u| format!(" U={u}")),
        job.replication,
        job.seed,
        r.packets,
        r.frames,
        reduction,
    );
    for c in &r.checks {
        let _ = writeln!(
            text,
            "  {:<15} limit {:>10.4}  max observed {:>12.6}  samples {:>9}  violations {:>6}  {}",
            c.name,
            c.limit,
            c.observed,
            c.samples,
            c.violations,
            output::status(c)
        );
    }
    let _ = writeln!(
        text,
        "  {:<15} {}\n  {:<15} {}",
        "conservation",
        if r.conserved { "PASS" } else { "FAIL" },
        "work-conserving",
        if r.work_conserving { "PASS" } else { "FAIL" },
    );
}

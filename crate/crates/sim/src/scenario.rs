//! JSON scenario files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mpgps_core::channel::{CellLayout, PowerDelayProfile};
use mpgps_core::scheduler::{Discipline, Mode, SelectionKey};
use mpgps_core::sim::{ChannelSettings, LeakyBucket, SimOptions, TrafficModel, Workload};
use mpgps_core::virtual_time::Arrival;
use mpgps_core::SystemConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// JSON schema describing [`Scenario`].
pub const SCHEMA: &str = include_str!("../schema/scenario.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub users: usize,
    pub subcarriers: usize,
    pub packet_bits: u32,
    pub bits_per_symbol: u32,
    pub symbol_duration_s: f64,
    pub concurrency: usize,
    pub max_concurrency: usize,
    pub window: usize,
    /// Defaults to equal weights.
    pub weights: Option<Vec<f64>>,
    pub target_ber: f64,
    pub noise_psd_w_per_hz: f64,
    /// Defaults to `1 / symbol_duration_s`.
    pub subcarrier_bandwidth_hz: Option<f64>,
    pub deadline_s: Option<f64>,
    pub seed: u64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let d = SystemConfig::default();
        Self {
            users: d.users,
            subcarriers: d.subcarriers,
            packet_bits: d.packet_bits,
            bits_per_symbol: d.bits_per_symbol,
            symbol_duration_s: d.symbol_duration,
            concurrency: d.concurrency,
            max_concurrency: d.max_concurrency,
            window: d.window,
            weights: None,
            target_ber: d.target_ber,
            noise_psd_w_per_hz: d.noise_psd,
            subcarrier_bandwidth_hz: None,
            deadline_s: d.deadline,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSection {
    pub sigma_bits: f64,
    pub rho_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalEntry {
    pub time_s: f64,
    pub flow: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficSection {
    Poisson {
        /// Same rate for every flow, bits/s.
        #[serde(default)]
        rate_bps: Option<f64>,
        /// Per-flow rates, bits/s; overrides `rate_bps`.
        #[serde(default)]
        rates_bps: Option<Vec<f64>>,
        #[serde(default)]
        bucket: Option<BucketSection>,
    },
    Saturated,
    Trace {
        arrivals: Vec<ArrivalEntry>,
    },
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection::Poisson {
            rate_bps: Some(63_000.0),
            rates_bps: None,
            bucket: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub radius_m: f64,
    pub path_loss_exponent: f64,
    pub shadowing_std_db: f64,
    pub reference_distance_m: f64,
    pub taps: usize,
    /// Exponential power-delay-profile decay constant, in taps.
    pub tap_decay: f64,
    /// Explicit tap powers; overrides `taps` and `tap_decay`.
    pub tap_powers: Option<Vec<f64>>,
    pub correlation: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let l = CellLayout::default();
        Self {
            radius_m: l.radius,
            path_loss_exponent: l.path_loss_exponent,
            shadowing_std_db: l.shadowing_std_db,
            reference_distance_m: l.reference_distance,
            taps: 6,
            tap_decay: 1.0,
            tap_powers: None,
            correlation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub modes: Vec<String>,
    pub horizon_s: f64,
    pub warmup_fraction: f64,
    pub error_free: bool,
    /// Compute allocations (and so power figures) for PGPS and MPGPS.
    pub phy: bool,
    pub fairness_window_s: f64,
    pub record_events: bool,
    pub record_frames: bool,
    /// Selection ranking. `virtual_start` is a deliberate fault used to
    /// exercise the bound checker.
    pub selection_key: SelectionKeyName,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKeyName {
    #[default]
    VirtualFinish,
    VirtualStart,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            modes: vec!["mpgps".into()],
            horizon_s: 20.0,
            warmup_fraction: 0.05,
            error_free: false,
            phy: true,
            fairness_window_s: 0.1,
            record_events: false,
            record_frames: false,
            selection_key: SelectionKeyName::VirtualFinish,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Batch sizes `M` (the cap `M_max` for A-MPGPS). Defaults to the
    /// system's `concurrency`.
    pub m: Vec<usize>,
    /// Windows `U` for O-MPGPS. Defaults to the system's `window`.
    pub u: Vec<usize>,
    /// Power caps in W; `null` means uncapped.
    pub power_budgets_w: Vec<Option<f64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            m: Vec::new(),
            u: Vec::new(),
            power_budgets_w: vec![None],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub system: SystemSection,
    pub traffic: TrafficSection,
    pub channel: ChannelSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub replications: u64,
    pub output: PathBuf,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            system: SystemSection::default(),
            traffic: TrafficSection::default(),
            channel: ChannelSection::default(),
            run: RunSection::default(),
            sweep: SweepSection::default(),
            replications: 1,
            output: PathBuf::from("out"),
        }
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub mode: Mode,
    pub m: usize,
    /// Window, only for O-MPGPS.
    pub u: Option<usize>,
    pub power_budget: Option<f64>,
}

impl GridPoint {
    pub fn discipline(&self) -> Discipline {
        match self.mode {
            Mode::Pgps => Discipline::Pgps,
            Mode::Mpgps => Discipline::Mpgps { m: self.m },
            Mode::AMpgps => Discipline::AMpgps { m_max: self.m },
            Mode::OMpgps => Discipline::OMpgps {
                m: self.m,
                u: self.u.unwrap_or(self.m),
            },
        }
    }

    /// Short series label, e.g. `ompgps_u6`.
    pub fn series(&self) -> String {
        match self.u {
            Some(u) => format!("{}_u{u}", self.mode.name()),
            None => self.mode.name().to_string(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).context("invalid scenario")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Applies `MPGPS_SEED` and `MPGPS_OUT` from the environment.
    pub fn apply_env(&mut self) -> anyhow::Result<()> {
        if let Ok(seed) = std::env::var("MPGPS_SEED") {
            self.system.seed = seed
                .trim()
                .parse()
                .with_context(|| format!("MPGPS_SEED={seed:?} is not an integer"))?;
        }
        if let Ok(out) = std::env::var("MPGPS_OUT") {
            self.output = PathBuf::from(out);
        }
        Ok(())
    }

    pub fn system_config(&self, seed: u64) -> SystemConfig {
        let s = &self.system;
        SystemConfig {
            users: s.users,
            subcarriers: s.subcarriers,
            packet_bits: s.packet_bits,
            bits_per_symbol: s.bits_per_symbol,
            symbol_duration: s.symbol_duration_s,
            concurrency: s.concurrency,
            max_concurrency: s.max_concurrency,
            window: s.window.max(s.concurrency),
            weights: s.weights.clone().unwrap_or_else(|| vec![1.0; s.users]),
            target_ber: s.target_ber,
            noise_psd: s.noise_psd_w_per_hz,
            subcarrier_bandwidth: s
                .subcarrier_bandwidth_hz
                .unwrap_or(1.0 / s.symbol_duration_s),
            deadline: s.deadline_s,
            seed,
        }
    }

    pub fn modes(&self) -> anyhow::Result<Vec<Mode>> {
        self.run
            .modes
            .iter()
            .map(|m| Mode::parse(m).with_context(|| format!("unknown mode {m:?}")))
            .collect()
    }

    pub fn channel_settings(&self) -> ChannelSettings {
        let c = &self.channel;
        ChannelSettings {
            layout: CellLayout {
                radius: c.radius_m,
                path_loss_exponent: c.path_loss_exponent,
                shadowing_std_db: c.shadowing_std_db,
                reference_distance: c.reference_distance_m,
            },
            pdp: match &c.tap_powers {
                Some(p) => PowerDelayProfile::from_powers(p),
                None => PowerDelayProfile::exponential(c.taps, c.tap_decay),
            },
            correlation: c.correlation,
        }
    }

    pub fn workload(&self) -> anyhow::Result<Workload> {
        let users = self.system.users;
        Ok(match &self.traffic {
            TrafficSection::Poisson {
                rate_bps,
                rates_bps,
                bucket,
            } => {
                let rates = match (rates_bps, rate_bps) {
                    (Some(r), _) => r.clone(),
                    (None, Some(r)) => vec![*r; users],
                    (None, None) => bail!("poisson traffic needs rate_bps or rates_bps"),
                };
                Workload::Poisson(TrafficModel {
                    rates_bps: rates,
                    bucket: bucket.map(|b| LeakyBucket {
                        sigma_bits: b.sigma_bits,
                        rho_bps: b.rho_bps,
                    }),
                })
            }
            TrafficSection::Saturated => Workload::Saturated,
            TrafficSection::Trace { arrivals } => {
                let t = self.system.symbol_duration_s;
                let mut v: Vec<Arrival> = arrivals
                    .iter()
                    .map(|a| Arrival {
                        time: a.time_s / t,
                        flow: a.flow,
                    })
                    .collect();
                v.sort_by(|a, b| a.time.total_cmp(&b.time));
                Workload::Trace(v)
            }
        })
    }

    pub fn horizon_symbols(&self) -> f64 {
        self.run.horizon_s / self.system.symbol_duration_s
    }

    pub fn sim_options(&self, point: &GridPoint) -> SimOptions {
        let mut o = SimOptions::new(point.discipline(), self.horizon_symbols());
        o.error_free = self.run.error_free;
        o.phy = self.run.phy;
        o.power_budget = point.power_budget;
        o.warmup_fraction = self.run.warmup_fraction;
        o.record_events = self.run.record_events;
        o.channel = self.channel_settings();
        o.fairness_window = self.run.fairness_window_s;
        o.selection_key = match self.run.selection_key {
            SelectionKeyName::VirtualFinish => SelectionKey::VirtualFinish,
            SelectionKeyName::VirtualStart => SelectionKey::VirtualStart,
        };
        o
    }

    /// Expands the grid in a fixed order: mode, power budget, `M`, `U`.
    ///
    /// Pairs with `U < M` are skipped and reported in the second vector.
    pub fn grid(&self) -> anyhow::Result<(Vec<GridPoint>, Vec<String>)> {
        let modes = self.modes()?;
        let ms = if self.sweep.m.is_empty() {
            vec![self.system.concurrency]
        } else {
            self.sweep.m.clone()
        };
        let us = if self.sweep.u.is_empty() {
            vec![self.system.window.max(self.system.concurrency)]
        } else {
            self.sweep.u.clone()
        };
        if self.sweep.power_budgets_w.is_empty() {
            bail!("sweep.power_budgets_w must not be empty (use [null] for uncapped)");
        }
        let mut points = Vec::new();
        let mut skipped = Vec::new();
        for &mode in &modes {
            for &budget in &self.sweep.power_budgets_w {
                let m_values: &[usize] = if mode == Mode::Pgps { &[1] } else { &ms };
                for &m in m_values {
                    let u_values: Vec<Option<usize>> = if mode == Mode::OMpgps {
                        us.iter().copied().map(Some).collect()
                    } else {
                        vec![None]
                    };
                    for u in u_values {
                        if let Some(u) = u {
                            if u < m {
                                skipped.push(format!("{} M={m} U={u}: U < M", mode.name()));
                                continue;
                            }
                        }
                        points.push(GridPoint {
                            index: points.len(),
                            mode,
                            m,
                            u,
                            power_budget: budget,
                        });
                    }
                }
            }
        }
        Ok((points, skipped))
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> anyhow::Result<Vec<GridPoint>> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if !(self.run.horizon_s.is_finite() && self.run.horizon_s > 0.0) {
            bail!("run.horizon_s must be positive");
        }
        if !(0.0..1.0).contains(&self.run.warmup_fraction) {
            bail!("run.warmup_fraction must lie in [0, 1)");
        }
        if !(self.run.fairness_window_s > 0.0) {
            bail!("run.fairness_window_s must be positive");
        }
        if self.run.modes.is_empty() {
            bail!("run.modes must not be empty");
        }
        if self.sweep.m.contains(&0) || self.sweep.u.contains(&0) {
            bail!("sweep values must be at least 1");
        }
        if !(0.0..1.0).contains(&self.channel.correlation) {
            bail!("channel.correlation must lie in [0, 1)");
        }
        if let Some(p) = &self.channel.tap_powers {
            if p.is_empty() || p.iter().any(|x| !(*x >= 0.0)) || p.iter().sum::<f64>() <= 0.0 {
                bail!("channel.tap_powers must be non-negative with a positive sum");
            }
        } else if self.channel.taps == 0 || !(self.channel.tap_decay > 0.0) {
            bail!("channel.taps and channel.tap_decay must be positive");
        }
        if self
            .sweep
            .power_budgets_w
            .iter()
            .flatten()
            .any(|b| !(*b > 0.0))
        {
            bail!("power budgets must be positive");
        }
        self.system_config(self.system.seed)
            .validate()
            .map_err(|e| anyhow::anyhow!("system: {e}"))?;
        if let Workload::Poisson(model) = self.workload()? {
            model
                .validate(&self.system_config(0))
                .map_err(|e| anyhow::anyhow!("traffic: {e}"))?;
        }
        let (points, _) = self.grid()?;
        if points.is_empty() {
            bail!("no valid grid point (every O-MPGPS pair has U < M)");
        }
        for p in &points {
            let cfg = SystemConfig {
                concurrency: p.m,
                window: p.u.unwrap_or(p.m),
                ..self.system_config(0)
            };
            // Frame length must be an integral number of symbols for every
            // batch size the discipline can form.
            for g in 1..=p.discipline().max_batch() {
                mpgps_core::model::frame_length(&[g], &cfg)
                    .map_err(|e| anyhow::anyhow!("{} M={}: {e}", p.mode.name(), p.m))?;
            }
        }
        Ok(points)
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output
    /// directory is not part of the hash.
    pub fn config_hash(&self) -> String {
        let mut plain = self.clone();
        plain.output = PathBuf::new();
        let canonical = serde_json::to_vec(&plain).expect("scenario serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::results::ResultRow;
use crate::channels::{ConfusionMatrix, NoiseModel};
use crate::circuit::CircuitNoise;
use crate::error::{Error, Result};
use crate::mitigation::{CalibrationCounts, DEFAULT_CALIBRATION_SHOTS};
use crate::pathfinder::{best_device_paths, DeviceModel, WeightProtocol};
use crate::protocols::{
    analytic_transport, analyze, derive_seed, path_noise, CorrectionStyle,
    OutcomeTable, PathSpec, TransportMode, TransportOptions,
};
use crate::tomography::DEFAULT_SHOTS_PER_BASIS;

/// Inclusive hop range written `A..B`, or `A` for a single hop count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HopRange {
    pub min: usize,
    pub max: usize,
}

impl HopRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min > max {
            return Err(Error::InvalidExperiment(format!("empty hop range {min}..{max}")));
        }
        Ok(Self { min, max })
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        self.min..=self.max
    }
}

impl FromStr for HopRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidExperiment(format!("hop range {s:?} is not of the form A..B"));
        let (a, b) = s.split_once("..").unwrap_or((s, s));
        Self::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
    }
}

impl TryFrom<String> for HopRange {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<HopRange> for String {
    fn from(r: HopRange) -> String {
        r.to_string()
    }
}

impl fmt::Display for HopRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QremSetting {
    On,
    Off,
    #[default]
    Both,
}

impl QremSetting {
    fn flags(self) -> &'static [bool] {
        match self {
            Self::On => &[true],
            Self::Off => &[false],
            Self::Both => &[false, true],
        }
    }
}

impl FromStr for QremSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(Self::On),
            "off" => Ok(Self::Off),
            "both" => Ok(Self::Both),
            _ => Err(Error::InvalidExperiment(format!("qrem must be on, off or both, got {s:?}"))),
        }
    }
}

/// Declarative sweep configuration (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Calibration file. Without one, every path is the abstract line
    /// `0..n` under `noise` and `protocols` is ignored.
    pub device: Option<PathBuf>,
    pub protocols: Vec<WeightProtocol>,
    pub hops: HopRange,
    /// Best paths per hop count.
    pub paths: usize,
    pub trials: usize,
    /// Shots per tomography setting.
    pub shots: usize,
    pub modes: Vec<TransportMode>,
    pub qrem: QremSetting,
    pub noise: NoiseModel,
    pub correction: CorrectionStyle,
    pub calibration_shots: u64,
    /// Exact noiseless distributions (readout error still applied) instead
    /// of sampled trajectories.
    pub analytic: bool,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            device: None,
            protocols: WeightProtocol::ALL.to_vec(),
            hops: HopRange { min: 1, max: 19 },
            paths: 4,
            trials: 4,
            shots: DEFAULT_SHOTS_PER_BASIS as usize,
            modes: TransportMode::ALL.to_vec(),
            qrem: QremSetting::Both,
            noise: NoiseModel::default(),
            correction: CorrectionStyle::Sequential,
            calibration_shots: DEFAULT_CALIBRATION_SHOTS,
            analytic: false,
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.shots == 0 && !self.analytic {
            return Err(Error::InvalidExperiment("shots must be positive".into()));
        }
        if self.paths == 0 || self.trials == 0 {
            return Err(Error::InvalidExperiment("paths and trials must be positive".into()));
        }
        if self.calibration_shots == 0 {
            return Err(Error::InvalidExperiment("calibration_shots must be positive".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidExperiment("no transport modes selected".into()));
        }
        if self.device.is_some() && self.protocols.is_empty() {
            return Err(Error::InvalidExperiment("no weight protocols selected".into()));
        }
        Ok(())
    }
}

/// Noise tables for `path` on `device`: per-edge two-qubit error, per-qubit
/// readout and coherence times, falling back to `model` where the device
/// has no value. An average gate error `ε` becomes the depolarizing
/// probability `5ε/4`.
pub fn device_path_noise(model: &NoiseModel, device: &DeviceModel, path: &PathSpec) -> Result<CircuitNoise> {
    device.check_path(path)?;
    let mut noise = path_noise(model, path);
    for (k, w) in path.labels().windows(2).enumerate() {
        let e = device.edge(w[0], w[1]).expect("checked edge");
        noise.pair_depol.insert((k, k + 1), (1.25 * e.gate_error).min(1.0));
    }
    for (k, &id) in path.labels().iter().enumerate() {
        let Some(q) = device.qubit(id) else { continue };
        if let (Some(p01), Some(p10)) = (q.readout_err_0to1, q.readout_err_1to0) {
            noise.readout[k] = ConfusionMatrix::from_flip_rates(p01, p10)?;
        }
        if let Some(t1) = q.t1_us {
            noise.t1_us[k] = t1;
        }
        if let Some(t2) = q.t2_us {
            noise.t2_us[k] = t2;
        }
        crate::channels::check_coherence(noise.t1_us[k], noise.t2_us[k])?;
    }
    Ok(noise)
}

struct Cell {
    protocol: String,
    hops: usize,
    rank: usize,
    path: PathSpec,
    noise: CircuitNoise,
    mode: TransportMode,
    trial: usize,
    seed: u64,
}

fn cell_tag(protocol: usize, hops: usize, rank: usize, mode: TransportMode, trial: usize) -> u64 {
    let mode = TransportMode::ALL.iter().position(|m| *m == mode).unwrap_or(0);
    ((protocol as u64) << 48) | ((hops as u64) << 32) | ((rank as u64) << 20) | ((mode as u64) << 16) | trial as u64
}

fn plan(spec: &ExperimentSpec, device: Option<&DeviceModel>) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    let protocols: Vec<Option<WeightProtocol>> = match device {
        Some(_) => spec.protocols.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    for protocol in &protocols {
        let pi = protocol.map_or(WeightProtocol::ALL.len(), |p| {
            WeightProtocol::ALL.iter().position(|q| *q == p).unwrap_or(0)
        });
        for hops in spec.hops.iter() {
            let n = hops + 2;
            let paths: Vec<(PathSpec, CircuitNoise)> = match (device, protocol) {
                (Some(dev), Some(p)) => {
                    let found = best_device_paths(dev, *p, n, spec.paths)?;
                    if found.fewer_than_requested {
                        log::warn!(
                            "{p}: only {} paths with {hops} hops, {} requested",
                            found.paths.len(),
                            spec.paths
                        );
                    }
                    found
                        .paths
                        .iter()
                        .map(|wp| {
                            let path = wp.spec()?;
                            let noise = device_path_noise(&spec.noise, dev, &path)?;
                            Ok((path, noise))
                        })
                        .collect::<Result<_>>()?
                }
                _ => {
                    let path = PathSpec::line(n)?;
                    let noise = path_noise(&spec.noise, &path);
                    vec![(path, noise)]
                }
            };
            let label = protocol.map_or("none".to_string(), |p| p.name().to_string());
            for (rank, (path, noise)) in paths.into_iter().enumerate() {
                for &mode in &spec.modes {
                    for trial in 0..spec.trials {
                        let seed = derive_seed(spec.seed, cell_tag(pi, hops, rank, mode, trial));
                        cells.push(Cell {
                            protocol: label.clone(),
                            hops,
                            rank,
                            path: path.clone(),
                            noise: noise.clone(),
                            mode,
                            trial,
                            seed,
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

fn simulate(spec: &ExperimentSpec, cell: &Cell) -> Result<(OutcomeTable, Vec<ConfusionMatrix>)> {
    let n = cell.path.len();
    if spec.analytic {
        let table = analytic_transport(n, cell.mode, spec.correction, Some(&cell.noise.readout))?;
        return Ok((table, cell.noise.readout.clone()));
    }
    let opts = TransportOptions {
        latency_us: spec.noise.dynamic_correction_latency_us,
        style: spec.correction,
    };
    let table = crate::protocols::run_transport(n, cell.mode, &opts, &cell.noise, spec.shots, cell.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cell.seed, u64::MAX));
    let estimated = CalibrationCounts::sample(&cell.noise.readout, spec.calibration_shots, &mut rng).estimate()?;
    Ok((table, estimated))
}

fn rows_for(spec: &ExperimentSpec, cell: &Cell) -> Vec<ResultRow> {
    let base = |qrem: bool, configuration: String| ResultRow {
        mode: cell.mode.name().into(),
        protocol: cell.protocol.clone(),
        hops: cell.hops,
        path_rank: cell.rank,
        path: cell.path.to_string(),
        trial: cell.trial,
        qrem: if qrem { "on" } else { "off" }.into(),
        configuration,
        negativity: None,
        fidelity: None,
        shots: 0,
        seed: cell.seed,
        status: "error".into(),
    };
    let no_config = || "-".to_string();
    let report = |err: &Error| {
        log::error!(
            "{} {} hops={} path={} trial={}: {err}",
            cell.protocol,
            cell.mode,
            cell.hops,
            cell.path,
            cell.trial
        )
    };
    let (table, confusion) = match simulate(spec, cell) {
        Ok(v) => v,
        Err(err) => {
            report(&err);
            return spec.qrem.flags().iter().map(|&q| base(q, no_config())).collect();
        }
    };
    let mut rows = Vec::new();
    for &qrem in spec.qrem.flags() {
        match analyze(&table, qrem.then_some(confusion.as_slice())) {
            Ok(estimates) => {
                for e in estimates {
                    let mut row = base(qrem, e.configuration.map_or_else(no_config, |c| c.to_string()));
                    row.negativity = e.negativity;
                    row.fidelity = e.fidelity;
                    row.shots = if spec.analytic { 0 } else { e.weight.round() as u64 };
                    row.status = e.status.name().into();
                    rows.push(row);
                }
            }
            Err(err) => {
                report(&err);
                rows.push(base(qrem, no_config()));
            }
        }
    }
    rows
}

/// Runs the whole sweep. Rows come out in a fixed order: protocol, hops,
/// path rank, mode, trial, then QREM off before on.
pub fn run_experiment(spec: &ExperimentSpec, device: Option<&DeviceModel>) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let cells = plan(spec, device)?;
    log::info!("running {} cells", cells.len());
    let rows: Vec<Vec<ResultRow>> = cells.par_iter().map(|c| rows_for(spec, c)).collect();
    Ok(rows.into_iter().flatten().collect())
}

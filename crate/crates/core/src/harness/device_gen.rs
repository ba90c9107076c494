use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sweep::device_path_noise;
use crate::channels::{fitted, NoiseModel};
use crate::error::{Error, Result};
use crate::mitigation::{CalibrationCounts, DEFAULT_CALIBRATION_SHOTS};
use crate::pathfinder::{heavy_hex_127_edges, DeviceModel, EdgeInfo, QubitInfo, HEAVY_HEX_QUBITS};
use crate::protocols::{analyze, derive_seed, run_transport, PathSpec, TransportMode, TransportOptions};

/// Statistics of a synthetic 127-qubit heavy-hex calibration file.
///
/// Gate errors, readout flip rates and coherence times are log-normal
/// around the given medians with the given spread (σ of the underlying
/// normal). `broken_edges` randomly chosen couplers get gate error 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceGenSpec {
    pub seed: u64,
    pub gate_error_median: f64,
    pub gate_error_sigma: f64,
    pub broken_edges: usize,
    pub readout_p01_median: f64,
    pub readout_p10_median: f64,
    pub readout_sigma: f64,
    pub t1_median_us: f64,
    pub t2_median_us: f64,
    pub coherence_sigma: f64,
    /// Shots per tomography setting for the pair negativities.
    pub pair_shots: usize,
    pub calibration_shots: u64,
    /// Single-qubit error and other settings not drawn per qubit or edge.
    pub noise: NoiseModel,
}

impl Default for DeviceGenSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            gate_error_median: 0.8 * fitted::TWO_QUBIT_DEPOL,
            gate_error_sigma: 0.4,
            broken_edges: 4,
            readout_p01_median: fitted::READOUT_P01,
            readout_p10_median: fitted::READOUT_P10,
            readout_sigma: 0.3,
            t1_median_us: fitted::T1_US,
            t2_median_us: fitted::T2_US,
            coherence_sigma: 0.25,
            pair_shots: 1024,
            calibration_shots: DEFAULT_CALIBRATION_SHOTS,
            noise: NoiseModel::default(),
        }
    }
}

fn lognormal(median: f64, sigma: f64) -> Result<LogNormal<f64>> {
    if !(median > 0.0 && sigma >= 0.0) {
        return Err(Error::InvalidExperiment(format!(
            "log-normal median {median} and sigma {sigma} must be positive"
        )));
    }
    LogNormal::new(median.ln(), sigma).map_err(|e| Error::InvalidExperiment(e.to_string()))
}

/// Unmitigated and mitigated negativity of the pair on one edge.
fn pair_negativities(spec: &DeviceGenSpec, device: &DeviceModel, a: u32, b: u32, seed: u64) -> Result<(f64, f64)> {
    let path = PathSpec::new(vec![a, b])?;
    let noise = device_path_noise(&spec.noise, device, &path)?;
    let table = run_transport(2, TransportMode::Swap, &TransportOptions::default(), &noise, spec.pair_shots, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let conf = CalibrationCounts::sample(&noise.readout, spec.calibration_shots, &mut rng).estimate()?;
    let raw = analyze(&table, None)?.remove(0).negativity;
    let mitigated = analyze(&table, Some(&conf))?.remove(0).negativity;
    Ok((raw.unwrap_or(0.0), mitigated.unwrap_or(0.0)))
}

/// Draws qubit and edge parameters, then measures every pair negativity on
/// the simulator. The result depends only on `spec`.
pub fn generate_device(spec: &DeviceGenSpec) -> Result<DeviceModel> {
    spec.noise.validate()?;
    if spec.pair_shots == 0 || spec.calibration_shots == 0 {
        return Err(Error::InvalidExperiment("pair and calibration shots must be positive".into()));
    }
    let edges = heavy_hex_127_edges();
    if spec.broken_edges > edges.len() {
        return Err(Error::InvalidExperiment(format!(
            "cannot break {} of {} edges",
            spec.broken_edges,
            edges.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p01 = lognormal(spec.readout_p01_median, spec.readout_sigma)?;
    let p10 = lognormal(spec.readout_p10_median, spec.readout_sigma)?;
    let t1 = lognormal(spec.t1_median_us, spec.coherence_sigma)?;
    let t2 = lognormal(spec.t2_median_us, spec.coherence_sigma)?;
    let qubits: Vec<QubitInfo> = (0..HEAVY_HEX_QUBITS)
        .map(|id| {
            let t1_us = t1.sample(&mut rng);
            QubitInfo {
                id,
                readout_err_0to1: Some(p01.sample(&mut rng).min(0.45)),
                readout_err_1to0: Some(p10.sample(&mut rng).min(0.45)),
                t1_us: Some(t1_us),
                t2_us: Some(t2.sample(&mut rng).min(2.0 * t1_us)),
            }
        })
        .collect();

    let eps = lognormal(spec.gate_error_median, spec.gate_error_sigma)?;
    let mut gate_errors: Vec<f64> = edges.iter().map(|_| eps.sample(&mut rng).min(0.5 - 1e-6)).collect();
    for k in sample(&mut rng, edges.len(), spec.broken_edges) {
        gate_errors[k] = 1.0;
    }
    // per-edge tomography streams derive from one further draw
    let base: u64 = rng.gen();

    let mut device = DeviceModel::new(
        qubits,
        edges
            .iter()
            .zip(&gate_errors)
            .map(|(&(a, b), &gate_error)| EdgeInfo {
                a,
                b,
                gate_error,
                neg: None,
                neg_qrem: None,
            })
            .collect(),
    )?;
    let measured: Vec<(f64, f64)> = device
        .edges
        .par_iter()
        .enumerate()
        .map(|(k, e)| pair_negativities(spec, &device, e.a, e.b, derive_seed(base, k as u64)))
        .collect::<Result<_>>()?;
    for (e, (neg, neg_qrem)) in device.edges.iter_mut().zip(measured) {
        e.neg = Some(neg);
        e.neg_qrem = Some(neg_qrem);
    }
    Ok(device)
}

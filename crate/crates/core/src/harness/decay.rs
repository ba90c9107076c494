use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::{exact, ConfusionMatrix, NoiseModel};
use crate::circuit::{run_shots, Circuit, CircuitNoise};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::metrics::{fidelity_with_state, DensityMatrix};
use crate::mitigation::{CalibrationCounts, DEFAULT_CALIBRATION_SHOTS};
use crate::protocols::{analyze, derive_seed, pair_state, OutcomeTable, TransportMode};
use crate::sim::GateOp;
use crate::tomography::{tomography_rotations, BASIS_PAIRS};

/// Delay grid written `start..stop:step` in µs, both ends included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delays {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Delays {
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=count).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl Default for Delays {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 10.0,
            step: 0.1,
        }
    }
}

impl FromStr for Delays {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidExperiment(format!("delays {s:?} are not of the form A..B:STEP"));
        let (range, step) = s.split_once(':').ok_or_else(bad)?;
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let d = Self {
            start: num(a)?,
            stop: num(b)?,
            step: num(step)?,
        };
        if !(d.start >= 0.0 && d.stop >= d.start && d.step > 0.0) {
            return Err(bad());
        }
        Ok(d)
    }
}

/// Idle-decay experiment on one freshly prepared pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DecaySpec {
    pub noise: NoiseModel,
    /// Per-qubit T1, T2 and readout of the pair; defaults to `noise`.
    pub pair_noise: Option<CircuitNoise>,
    pub delays: Delays,
    /// Shots per tomography setting; 0 selects exact density matrices.
    pub shots: usize,
    pub calibration_shots: u64,
    pub seed: u64,
}

impl Default for DecaySpec {
    fn default() -> Self {
        Self {
            noise: NoiseModel::default(),
            pair_noise: None,
            delays: Delays::default(),
            shots: 0,
            calibration_shots: DEFAULT_CALIBRATION_SHOTS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub delay_us: f64,
    pub negativity: f64,
    pub fidelity: f64,
    pub shots: u64,
    pub seed: u64,
}

fn pair_noise(spec: &DecaySpec) -> CircuitNoise {
    spec.pair_noise.clone().unwrap_or_else(|| CircuitNoise {
        one_qubit_depol: spec.noise.one_qubit_depol,
        two_qubit_depol: spec.noise.two_qubit_depol,
        pair_depol: Default::default(),
        t1_us: vec![spec.noise.t1_us; 2],
        t2_us: vec![spec.noise.t2_us; 2],
        readout: vec![spec.noise.default_readout; 2],
    })
}

fn exact_point(noise: &CircuitNoise, delay: f64) -> Result<DensityMatrix> {
    let mut rho = CMatrix::zeros(4);
    rho[(0, 0)] = 1.0.into();
    for q in 0..2 {
        rho = exact::apply_unitary(&rho, &GateOp::h(q));
        rho = exact::depolarizing(&rho, &[q], noise.one_qubit_depol);
    }
    rho = exact::apply_unitary(&rho, &GateOp::cz(0, 1));
    rho = exact::depolarizing(&rho, &[0, 1], noise.pair(0, 1));
    for q in 0..2 {
        rho = exact::idle_decay(&rho, &[q], delay, noise.t1_us[q], noise.t2_us[q])?;
    }
    DensityMatrix::new(rho)
}

fn sampled_point(spec: &DecaySpec, noise: &CircuitNoise, delay: f64, seed: u64) -> Result<(f64, f64)> {
    let mut per_basis = Vec::new();
    for (k, pair) in BASIS_PAIRS.into_iter().enumerate() {
        let mut c = Circuit::new(2, 2)?;
        c.gate(GateOp::h(0))?;
        c.gate(GateOp::h(1))?;
        c.gate(GateOp::cz(0, 1))?;
        c.idle(vec![0, 1], delay)?;
        for g in tomography_rotations(pair, 0, 1) {
            c.gate(g)?;
        }
        c.measure(0, 0)?;
        c.measure(1, 1)?;
        let words = run_shots(&c, noise, spec.shots, derive_seed(seed, k as u64))?;
        let mut counts = [0.0; 4];
        for w in words {
            counts[w as usize] += 1.0;
        }
        per_basis.push((pair, (0..4u64).zip(counts).filter(|(_, c)| *c > 0.0).collect()));
    }
    let table = OutcomeTable {
        path_len: 2,
        mode: TransportMode::Swap,
        per_basis,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let conf: Vec<ConfusionMatrix> =
        CalibrationCounts::sample(&noise.readout[..2], spec.calibration_shots, &mut rng).estimate()?;
    let est = analyze(&table, Some(&conf))?.remove(0);
    match (est.negativity, est.fidelity) {
        (Some(n), Some(f)) => Ok((n, f)),
        _ => Err(Error::InvalidExperiment(format!("no estimate at delay {delay} us"))),
    }
}

/// Negativity and fidelity of the pair after each delay. Readout error is
/// mitigated; in exact mode it cancels entirely.
pub fn run_decay(spec: &DecaySpec) -> Result<Vec<DecayRow>> {
    spec.noise.validate()?;
    let noise = pair_noise(spec);
    let delays = spec.delays.values();
    delays
        .par_iter()
        .enumerate()
        .map(|(k, &delay)| {
            let seed = derive_seed(spec.seed, k as u64);
            let (negativity, fidelity) = if spec.shots == 0 {
                let rho = exact_point(&noise, delay)?;
                (crate::metrics::negativity(&rho)?, fidelity_with_state(&rho, &pair_state())?)
            } else {
                sampled_point(spec, &noise, delay, seed)?
            };
            Ok(DecayRow {
                delay_us: delay,
                negativity,
                fidelity,
                shots: spec.shots as u64,
                seed,
            })
        })
        .collect()
}

/// First delay at which the negativity reaches `level`, interpolating
/// linearly between grid points. `None` if it never does.
pub fn crossing_time(rows: &[DecayRow], level: f64) -> Option<f64> {
    let first = rows.first()?;
    if first.negativity <= level {
        return Some(first.delay_us);
    }
    rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (b.negativity <= level).then(|| {
            let f = (a.negativity - level) / (a.negativity - b.negativity);
            a.delay_us + f * (b.delay_us - a.delay_us)
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecaySummary {
    pub start_level: f64,
    pub end_level: f64,
    pub start_time_us: Option<f64>,
    pub end_time_us: Option<f64>,
    /// Time from reaching `start_level` to reaching `end_level`.
    pub window_us: Option<f64>,
    /// Negativity never increases along the grid.
    pub monotone: bool,
}

pub fn summarize_decay(rows: &[DecayRow], start_level: f64, end_level: f64) -> DecaySummary {
    let start = crossing_time(rows, start_level);
    let end = crossing_time(rows, end_level);
    DecaySummary {
        start_level,
        end_level,
        start_time_us: start,
        end_time_us: end,
        window_us: start.zip(end).map(|(a, b)| b - a),
        monotone: rows.windows(2).all(|w| w[1].negativity <= w[0].negativity),
    }
}

pub fn write_decay_csv<W: Write>(rows: &[DecayRow], mut out: W) -> Result<()> {
    writeln!(out, "# teleport-lab decay v1")?;
    writeln!(out, "delay_us,negativity,fidelity,shots,seed")?;
    for r in rows {
        writeln!(
            out,
            "{:.4},{:.6},{:.6},{},{}",
            r.delay_us, r.negativity, r.fidelity, r.shots, r.seed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_grid_parsing() {
        let d: Delays = "0..1:0.25".parse().unwrap();
        assert_eq!(d.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!("1..0:0.1".parse::<Delays>().is_err());
        assert!("0..1".parse::<Delays>().is_err());
    }

    #[test]
    fn exact_decay_limits() {
        let spec = DecaySpec {
            delays: Delays {
                start: 0.0,
                stop: 5.0 * NoiseModel::default().t1_us,
                step: 10.0,
            },
            ..Default::default()
        };
        let rows = run_decay(&spec).unwrap();
        assert!(rows[0].negativity > 0.47);
        assert!(rows.last().unwrap().negativity < 1e-3);
        assert!(summarize_decay(&rows, 0.474, 0.376).monotone);
    }

    #[test]
    fn noiseless_pair_keeps_full_negativity() {
        let spec = DecaySpec {
            noise: NoiseModel::noiseless(),
            delays: "0..3:1".parse().unwrap(),
            ..Default::default()
        };
        for r in run_decay(&spec).unwrap() {
            assert!((r.negativity - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_decay_tracks_exact_values() {
        let mut spec = DecaySpec {
            delays: "0..2:2".parse().unwrap(),
            shots: 4096,
            seed: 5,
            ..Default::default()
        };
        let sampled = run_decay(&spec).unwrap();
        spec.shots = 0;
        let exact = run_decay(&spec).unwrap();
        for (s, e) in sampled.iter().zip(&exact) {
            assert!((s.negativity - e.negativity).abs() < 0.03, "{s:?} vs {e:?}");
        }
    }

    #[test]
    fn crossing_interpolates() {
        let row = |t, n| DecayRow {
            delay_us: t,
            negativity: n,
            fidelity: 0.0,
            shots: 0,
            seed: 0,
        };
        let rows = [row(0.0, 0.5), row(1.0, 0.4), row(2.0, 0.3)];
        assert!((crossing_time(&rows, 0.35).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(crossing_time(&rows, 0.6), Some(0.0));
        assert_eq!(crossing_time(&rows, 0.1), None);
    }
}

//! Readout-error mitigation and projection onto the probability simplex.
//!
//! Probability vectors over `k` qubits are indexed by bitstring with qubit 0
//! at bit 0. Correction is applied qubit by qubit along each tensor axis, so
//! nothing larger than a 2×2 matrix is ever built.

use rand::Rng;

use crate::channels::ConfusionMatrix;
use crate::error::{Error, Result};

/// Applies a 2×2 matrix along tensor axis `axis` of `v`.
pub(crate) fn apply_axis(v: &mut [f64], axis: usize, m: [[f64; 2]; 2]) {
    let stride = 1usize << axis;
    for chunk in v.chunks_mut(stride << 1) {
        let (lo, hi) = chunk.split_at_mut(stride);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = m[0][0] * x + m[0][1] * y;
            *b = m[1][0] * x + m[1][1] * y;
        }
    }
}

/// Inverse confusion matrices, failing on the first singular one.
pub fn inverse_confusions(confusion: &[ConfusionMatrix]) -> Result<Vec<[[f64; 2]; 2]>> {
    confusion
        .iter()
        .enumerate()
        .map(|(qubit, c)| {
            c.inverse().ok_or(Error::MitigationUnavailable {
                qubit,
                det: c.det(),
            })
        })
        .collect()
}

/// Qubit-wise readout correction: applies `confusion[k]⁻¹` along axis `k`.
/// The result sums to the input's total but may have negative entries.
pub fn qrem_correct(p_meas: &[f64], confusion: &[ConfusionMatrix]) -> Result<Vec<f64>> {
    if p_meas.len() != 1usize << confusion.len() {
        return Err(Error::InvalidMatrix(format!(
            "{} probabilities do not match {} confusion matrices",
            p_meas.len(),
            confusion.len()
        )));
    }
    let inverses = inverse_confusions(confusion)?;
    let mut out = p_meas.to_vec();
    for (axis, inv) in inverses.into_iter().enumerate() {
        apply_axis(&mut out, axis, inv);
    }
    Ok(out)
}

/// Euclidean projection onto the probability simplex by Michelot's
/// active-set iteration: shift the retained entries so they sum to one, drop
/// every entry the shift pushes to zero or below, repeat until stable.
pub fn michelot_project(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut active: Vec<usize> = (0..v.len()).collect();
    let shift = loop {
        let sum: f64 = active.iter().map(|&i| v[i]).sum();
        let shift = (sum - 1.0) / active.len() as f64;
        let before = active.len();
        active.retain(|&i| v[i] - shift > 0.0);
        if active.len() == before {
            break shift;
        }
        // the retained entries exceed the shift by a total of one
        debug_assert!(!active.is_empty());
    };
    let mut out = vec![0.0; v.len()];
    for i in active {
        out[i] = (v[i] - shift).max(0.0);
    }
    out
}

/// Normalises `v` to unit sum and projects it onto the simplex. Returns
/// `None` when the total mass is not positive.
pub fn normalize_and_project(v: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = v.iter().sum();
    if !(total > 1e-12) {
        return None;
    }
    let scaled: Vec<f64> = v.iter().map(|x| x / total).collect();
    Some(michelot_project(&scaled))
}

/// Per-qubit flip counts from one calibration run: `shots` preparations of
/// |0…0⟩ and `shots` of |1…1⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationCounts {
    pub shots: u64,
    /// `flips_from_zero[q]`: times qubit `q` read 1 after preparing 0.
    pub flips_from_zero: Vec<u64>,
    /// `flips_from_one[q]`: times qubit `q` read 0 after preparing 1.
    pub flips_from_one: Vec<u64>,
}

impl CalibrationCounts {
    /// Simulates calibration shots against the true readout channels.
    pub fn sample<R: Rng + ?Sized>(truth: &[ConfusionMatrix], shots: u64, rng: &mut R) -> Self {
        let mut flips_from_zero = vec![0; truth.len()];
        let mut flips_from_one = vec![0; truth.len()];
        for _ in 0..shots {
            for (q, c) in truth.iter().enumerate() {
                if rng.gen::<f64>() < c.flip_probability(0) {
                    flips_from_zero[q] += 1;
                }
            }
            for (q, c) in truth.iter().enumerate() {
                if rng.gen::<f64>() < c.flip_probability(1) {
                    flips_from_one[q] += 1;
                }
            }
        }
        Self {
            shots,
            flips_from_zero,
            flips_from_one,
        }
    }

    /// Independent-qubit confusion matrix estimates.
    pub fn estimate(&self) -> Result<Vec<ConfusionMatrix>> {
        if self.shots == 0 {
            return Err(Error::InvalidExperiment(
                "calibration needs at least one shot".into(),
            ));
        }
        let n = self.shots as f64;
        self.flips_from_zero
            .iter()
            .zip(&self.flips_from_one)
            .map(|(&a, &b)| ConfusionMatrix::from_flip_rates(a as f64 / n, b as f64 / n))
            .collect()
    }
}

/// Default number of calibration shots per prepared basis state.
pub const DEFAULT_CALIBRATION_SHOTS: u64 = 8192;

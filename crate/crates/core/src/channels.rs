//! Noise channels, sampled one trajectory at a time on a [`PureState`], with
//! exact Kraus-map counterparts on small density matrices.
//!
//! Idle decay is amplitude damping with `γ = 1 − exp(−t/T1)` followed by pure
//! dephasing whose rate makes the total coherence decay `exp(−t/T2)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gates, CMatrix, ONE, ZERO};
use crate::sim::{GateKind, GateOp, PureState};

/// Column-stochastic readout confusion matrix, `m[i][j] = P(read i | prepared j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct ConfusionMatrix {
    m: [[f64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        for col in 0..2 {
            let s = m[0][col] + m[1][col];
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidNoise(format!(
                    "confusion matrix column {col} sums to {s}"
                )));
            }
        }
        if m.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidNoise(
                "confusion matrix entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { m })
    }

    /// From `P(read 1 | prepared 0)` and `P(read 0 | prepared 1)`.
    pub fn from_flip_rates(p01: f64, p10: f64) -> Result<Self> {
        Self::new([[1.0 - p01, p10], [p01, 1.0 - p10]])
    }

    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.m
    }

    /// Probability that a qubit prepared in `prepared` reads the other value.
    pub fn flip_probability(&self, prepared: u8) -> f64 {
        let j = prepared as usize;
        self.m[1 - j][j]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Inverse matrix, or `None` when `|det| <= 1e-6`.
    pub fn inverse(&self) -> Option<[[f64; 2]; 2]> {
        let d = self.det();
        if d.abs() <= 1e-6 {
            return None;
        }
        let m = self.m;
        Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
    }
}

impl TryFrom<[[f64; 2]; 2]> for ConfusionMatrix {
    type Error = Error;
    fn try_from(m: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(m)
    }
}

impl From<ConfusionMatrix> for [[f64; 2]; 2] {
    fn from(c: ConfusionMatrix) -> Self {
        c.m
    }
}

/// Device noise parameters. Durations: T1/T2 and latency in µs, gate times in ns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub one_qubit_depol: f64,
    pub two_qubit_depol: f64,
    #[serde(with = "infinite_as_null")]
    pub t1_us: f64,
    #[serde(with = "infinite_as_null")]
    pub t2_us: f64,
    pub gate_time_1q_ns: f64,
    pub gate_time_2q_ns: f64,
    pub dynamic_correction_latency_us: f64,
    /// Readout used for qubits without an entry in `readout`.
    pub default_readout: ConfusionMatrix,
    /// Per-qubit readout, keyed by device qubit id.
    pub readout: BTreeMap<u32, ConfusionMatrix>,
}

/// Fitted defaults, not measured device values. The two-qubit error puts a
/// freshly prepared pair at negativity 0.474; T1/T2 make an idling pair
/// reach 0.376 after about 2 µs; the correction latency sets the one-hop
/// gap between post-selection and dynamic correction near 0.1. Gate times
/// are recorded for reference only and do not add idle noise.
pub mod fitted {
    pub const ONE_QUBIT_DEPOL: f64 = 1.0e-3;
    pub const TWO_QUBIT_DEPOL: f64 = 3.0e-2;
    pub const T1_US: f64 = 40.0;
    pub const T2_US: f64 = 24.0;
    pub const GATE_TIME_1Q_NS: f64 = 60.0;
    pub const GATE_TIME_2Q_NS: f64 = 533.0;
    pub const DYNAMIC_LATENCY_US: f64 = 1.8;
    pub const READOUT_P01: f64 = 0.01;
    pub const READOUT_P10: f64 = 0.02;
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            one_qubit_depol: fitted::ONE_QUBIT_DEPOL,
            two_qubit_depol: fitted::TWO_QUBIT_DEPOL,
            t1_us: fitted::T1_US,
            t2_us: fitted::T2_US,
            gate_time_1q_ns: fitted::GATE_TIME_1Q_NS,
            gate_time_2q_ns: fitted::GATE_TIME_2Q_NS,
            dynamic_correction_latency_us: fitted::DYNAMIC_LATENCY_US,
            default_readout: ConfusionMatrix::from_flip_rates(
                fitted::READOUT_P01,
                fitted::READOUT_P10,
            )
            .expect("valid default readout"),
            readout: BTreeMap::new(),
        }
    }
}

impl NoiseModel {
    /// No gate, idle or readout error. Latency is kept at zero too.
    pub fn noiseless() -> Self {
        Self {
            one_qubit_depol: 0.0,
            two_qubit_depol: 0.0,
            t1_us: f64::INFINITY,
            t2_us: f64::INFINITY,
            dynamic_correction_latency_us: 0.0,
            default_readout: ConfusionMatrix::identity(),
            readout: BTreeMap::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("one_qubit_depol", self.one_qubit_depol),
            ("two_qubit_depol", self.two_qubit_depol),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidNoise(format!("{name} = {p} outside [0, 1]")));
            }
        }
        check_coherence(self.t1_us, self.t2_us)?;
        for (name, d) in [
            ("gate_time_1q_ns", self.gate_time_1q_ns),
            ("gate_time_2q_ns", self.gate_time_2q_ns),
            ("dynamic_correction_latency_us", self.dynamic_correction_latency_us),
        ] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidNoise(format!("{name} = {d} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn readout_for(&self, qubit: u32) -> ConfusionMatrix {
        self.readout
            .get(&qubit)
            .copied()
            .unwrap_or(self.default_readout)
    }

    pub fn is_noiseless(&self) -> bool {
        self.one_qubit_depol == 0.0
            && self.two_qubit_depol == 0.0
            && self.t1_us == f64::INFINITY
            && self.t2_us == f64::INFINITY
            && self.default_readout == ConfusionMatrix::identity()
            && self
                .readout
                .values()
                .all(|c| *c == ConfusionMatrix::identity())
    }
}

/// JSON has no infinity; an absent coherence limit is written as `null`.
mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

pub(crate) fn check_coherence(t1: f64, t2: f64) -> Result<()> {
    if t1.is_nan() || t2.is_nan() || t1 <= 0.0 || t2 <= 0.0 {
        return Err(Error::InvalidNoise(format!(
            "T1 = {t1}, T2 = {t2} must be positive"
        )));
    }
    if t1.is_finite() && t2 > 2.0 * t1 {
        return Err(Error::InvalidNoise(format!(
            "T2 = {t2} exceeds 2·T1 = {}",
            2.0 * t1
        )));
    }
    Ok(())
}

/// Damping probability γ and phase-flip probability for an idle of `duration`.
pub fn idle_parameters(duration_us: f64, t1_us: f64, t2_us: f64) -> Result<(f64, f64)> {
    check_coherence(t1_us, t2_us)?;
    if !(duration_us >= 0.0) {
        return Err(Error::InvalidNoise(format!(
            "idle duration {duration_us} must be >= 0"
        )));
    }
    let gamma = if t1_us.is_finite() {
        1.0 - (-duration_us / t1_us).exp()
    } else {
        0.0
    };
    // total coherence factor exp(-t/T2) = sqrt(1-γ) · (1 - 2 p_z)
    let rate_phi = inv(t2_us) - 0.5 * inv(t1_us);
    let p_z = 0.5 * (1.0 - (-duration_us * rate_phi.max(0.0)).exp());
    Ok((gamma, p_z))
}

fn inv(t: f64) -> f64 {
    if t.is_finite() {
        1.0 / t
    } else {
        0.0
    }
}

const PAULIS: [GateKind; 3] = [GateKind::X, GateKind::Y, GateKind::Z];

/// With probability `p` applies a uniformly random non-identity Pauli string
/// to `qubits`. Returns the string index (base-4 digit per qubit, 0 = I,
/// 1 = X, 2 = Y, 3 = Z; qubit `k` at digit `k`), 0 when nothing happened.
pub fn apply_depolarizing<R: Rng + ?Sized>(
    state: &mut PureState,
    qubits: &[usize],
    p: f64,
    rng: &mut R,
) -> Result<usize> {
    if p <= 0.0 || rng.gen::<f64>() >= p {
        return Ok(0);
    }
    let count = 1usize << (2 * qubits.len());
    let idx = rng.gen_range(1..count);
    for (k, &q) in qubits.iter().enumerate() {
        let digit = (idx >> (2 * k)) & 3;
        if digit != 0 {
            state.apply(&GateOp::new(PAULIS[digit - 1], &[q])?)?;
        }
    }
    Ok(idx)
}

/// One trajectory of idle decay on each of `qubits`.
pub fn apply_idle_decay<R: Rng + ?Sized>(
    state: &mut PureState,
    qubits: &[usize],
    duration_us: f64,
    t1_us: f64,
    t2_us: f64,
    rng: &mut R,
) -> Result<()> {
    let (gamma, p_z) = idle_parameters(duration_us, t1_us, t2_us)?;
    for &q in qubits {
        if gamma > 0.0 {
            let p_jump = gamma * state.probability_one(q)?;
            let kraus = if rng.gen::<f64>() < p_jump {
                [[ZERO, Complex64::new(gamma.sqrt(), 0.0)], [ZERO, ZERO]]
            } else {
                [[ONE, ZERO], [ZERO, Complex64::new((1.0 - gamma).sqrt(), 0.0)]]
            };
            state.apply_matrix_unnormalized(q, kraus);
            state.renormalize()?;
        }
        if p_z > 0.0 && rng.gen::<f64>() < p_z {
            state.apply(&GateOp::z(q))?;
        }
    }
    Ok(())
}

/// Flips each bit independently according to its qubit's confusion matrix.
pub fn apply_readout_noise<R: Rng + ?Sized>(
    bits: &[u8],
    confusion: &[ConfusionMatrix],
    rng: &mut R,
) -> Vec<u8> {
    assert_eq!(bits.len(), confusion.len(), "one confusion matrix per bit");
    bits.iter()
        .zip(confusion)
        .map(|(&b, c)| {
            if rng.gen::<f64>() < c.flip_probability(b) {
                b ^ 1
            } else {
                b
            }
        })
        .collect()
}

/// Exact readout channel on a probability vector over `confusion.len()` bits
/// (bit `k` of the index belongs to `confusion[k]`).
pub fn readout_channel(probs: &[f64], confusion: &[ConfusionMatrix]) -> Vec<f64> {
    assert_eq!(probs.len(), 1 << confusion.len());
    let mut out = probs.to_vec();
    for (k, c) in confusion.iter().enumerate() {
        crate::mitigation::apply_axis(&mut out, k, c.matrix());
    }
    out
}

/// Exact Kraus maps on density matrices of one or two qubits (qubit 0 is the
/// low-order index bit).
pub mod exact {
    use super::*;

    fn embed(op: &CMatrix, qubit: usize, num_qubits: usize) -> CMatrix {
        match num_qubits {
            1 => op.clone(),
            2 => gates::on_two_qubits(op, qubit),
            _ => panic!("exact channels support one or two qubits"),
        }
    }

    fn num_qubits(rho: &CMatrix) -> usize {
        match rho.dim() {
            2 => 1,
            4 => 2,
            d => panic!("unsupported density matrix dimension {d}"),
        }
    }

    /// Matrix of `op` on a register of `num_qubits` (at most two) qubits.
    pub fn gate_matrix(op: &GateOp, num_qubits: usize) -> CMatrix {
        let dim = 1usize << num_qubits;
        let mut m = CMatrix::zeros(dim);
        for c in 0..dim {
            let mut amps = vec![ZERO; dim];
            amps[c] = ONE;
            let mut s = PureState::from_amplitudes(amps).expect("basis state");
            s.apply(op).expect("gate fits the register");
            for (r, a) in s.amplitudes().iter().enumerate() {
                m[(r, c)] = *a;
            }
        }
        m
    }

    pub fn apply_unitary(rho: &CMatrix, op: &GateOp) -> CMatrix {
        rho.conjugate_by(&gate_matrix(op, num_qubits(rho)))
    }

    /// Depolarizing channel with probability `p` spread over the
    /// non-identity Pauli strings on `qubits`.
    pub fn depolarizing(rho: &CMatrix, qubits: &[usize], p: f64) -> CMatrix {
        let n = num_qubits(rho);
        let paulis = [
            gates::pauli_i(),
            gates::pauli_x(),
            gates::pauli_y(),
            gates::pauli_z(),
        ];
        let count = 1usize << (2 * qubits.len());
        let mut out = rho.scale_real(1.0 - p);
        for idx in 1..count {
            let mut u = CMatrix::identity(rho.dim());
            for (k, &q) in qubits.iter().enumerate() {
                let d = (idx >> (2 * k)) & 3;
                u = &embed(&paulis[d], q, n) * &u;
            }
            out = &out + &rho.conjugate_by(&u).scale_real(p / (count - 1) as f64);
        }
        out
    }

    pub fn idle_decay(
        rho: &CMatrix,
        qubits: &[usize],
        duration_us: f64,
        t1_us: f64,
        t2_us: f64,
    ) -> Result<CMatrix> {
        let (gamma, p_z) = idle_parameters(duration_us, t1_us, t2_us)?;
        let n = num_qubits(rho);
        let k0 = CMatrix::from_real_rows(&[[1.0, 0.0], [0.0, (1.0 - gamma).sqrt()]]);
        let k1 = CMatrix::from_real_rows(&[[0.0, gamma.sqrt()], [0.0, 0.0]]);
        let mut out = rho.clone();
        for &q in qubits {
            let (a, b) = (embed(&k0, q, n), embed(&k1, q, n));
            out = &out.conjugate_by(&a) + &out.conjugate_by(&b);
            let z = embed(&gates::pauli_z(), q, n);
            out = &out.scale_real(1.0 - p_z) + &out.conjugate_by(&z).scale_real(p_z);
        }
        Ok(out)
    }
}

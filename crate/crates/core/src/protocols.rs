//! Transport of one half of an entangled pair along a linear path.
//!
//! Path positions run `0..n`. The pair starts on positions 0 and 1 as the
//! two-qubit graph state `CZ|++⟩`. Three transport modes move the second half
//! to position `n-1`:
//!
//! * `Dynamic`: intermediate X measurements, then outcome-conditioned
//!   corrections on the last qubit, each correction layer costing one
//!   latency window of idle decay.
//! * `Postselect`: the same measurements, no corrections; shots are sorted
//!   into four classes by the outcome parities and each class is analysed
//!   on its own.
//! * `Swap`: the second qubit is moved by a chain of SWAP gates.
//!
//! After measuring intermediates `1..=m` (`m = n - 2` hops) with outcomes
//! `s_1..s_m`, the last qubit carries `U(s) = X^{s_m} H ⋯ X^{s_1} H` applied to
//! the pair. Up to a global phase `U(s) = H^m Z^a X^b`, where `a` is the XOR
//! of the odd-indexed outcomes and `b` of the even-indexed ones.
//!
//! Classical bit layout shared by every mode: bit `i - 1` holds `s_i` for
//! `i` in `1..=m`, bit `m` the first end and bit `m + 1` the last end.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::{ConfusionMatrix, NoiseModel};
use crate::circuit::{run_shots, Circuit, CircuitNoise};
use crate::error::{Error, Result};
use crate::linalg::{gates, CMatrix};
use crate::metrics::{fidelity_with_state, negativity, DensityMatrix};
use crate::mitigation::{inverse_confusions, normalize_and_project, qrem_correct};
use crate::sim::{Basis, GateOp, PureState, MAX_QUBITS};
use crate::tomography::{
    reconstruct, tomography_rotations, BasisDistributions, BasisPair, BASIS_PAIRS,
};

/// Ordered device qubits of a transport path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSpec {
    labels: Vec<u32>,
}

impl PathSpec {
    pub fn new(labels: Vec<u32>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidPath(format!(
                "a path needs at least 2 qubits, got {}",
                labels.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidPath(format!("qubit {} repeats", w[0])));
        }
        Ok(Self { labels })
    }

    /// Path `0, 1, …, n-1`.
    pub fn line(n: usize) -> Result<Self> {
        Self::new((0..n as u32).collect())
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn hops(&self) -> usize {
        self.labels.len() - 2
    }
}

impl fmt::Display for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.labels.iter().map(u32::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// Outcomes `s_1..s_m` of the intermediate X measurements.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OutcomeVector(Vec<u8>);

impl OutcomeVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|b| *b > 1) {
            return Err(Error::InvalidState("outcome bits must be 0 or 1".into()));
        }
        Ok(Self(bits))
    }

    /// The `len` low bits of `word`, `s_1` first.
    pub fn from_word(word: u64, len: usize) -> Self {
        Self((0..len).map(|i| ((word >> i) & 1) as u8).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Parity class of an outcome vector.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub struct Configuration {
    pub z_parity: u8,
    pub x_parity: u8,
}

impl Configuration {
    pub const ALL: [Configuration; 4] = [
        Configuration::new(0, 0),
        Configuration::new(1, 0),
        Configuration::new(0, 1),
        Configuration::new(1, 1),
    ];

    pub const fn new(z_parity: u8, x_parity: u8) -> Self {
        Self { z_parity, x_parity }
    }

    /// `z_parity | x_parity << 1`.
    pub fn index(self) -> usize {
        usize::from(self.z_parity) | usize::from(self.x_parity) << 1
    }

    /// Whether some outcome vector with `hops` entries lands here.
    pub fn reachable(self, hops: usize) -> bool {
        match hops {
            0 => self == Configuration::new(0, 0),
            1 => self.x_parity == 0,
            _ => true,
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Z{}X{}", self.z_parity, self.x_parity)
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        let bit = |c: u8| match c {
            b'0' => Some(0),
            b'1' => Some(1),
            _ => None,
        };
        if b.len() == 4 && b[0] == b'Z' && b[2] == b'X' {
            if let (Some(z), Some(x)) = (bit(b[1]), bit(b[3])) {
                return Ok(Self::new(z, x));
            }
        }
        Err(Error::InvalidState(format!("bad configuration label {s:?}")))
    }
}

/// XOR of odd-indexed outcomes (`s_1, s_3, …`) and of even-indexed ones.
pub fn discriminator(s: &OutcomeVector) -> Configuration {
    let mut c = Configuration::default();
    for (k, bit) in s.bits().iter().enumerate() {
        if k % 2 == 0 {
            c.z_parity ^= bit;
        } else {
            c.x_parity ^= bit;
        }
    }
    c
}

/// `|+⟩^⊗n` followed by CZ on each neighbouring pair.
pub fn prepare_path_graph_state(n: usize) -> Result<PureState> {
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    let mut s = PureState::plus(n)?;
    for k in 1..n {
        s.apply(&GateOp::cz(k - 1, k))?;
    }
    Ok(s)
}

/// The two-qubit graph state `CZ|++⟩`.
pub fn pair_state() -> PureState {
    prepare_path_graph_state(2).expect("two qubits")
}

/// Gates the teleportation leaves on the last qubit, in time order:
/// `H, X^{s_1}, H, X^{s_2}, …`.
pub fn byproduct_sequence(s: &OutcomeVector, qubit: usize) -> Vec<GateOp> {
    let mut ops = Vec::new();
    for &bit in s.bits() {
        ops.push(GateOp::h(qubit));
        if bit == 1 {
            ops.push(GateOp::x(qubit));
        }
    }
    ops
}

/// Time-ordered gates undoing [`byproduct_sequence`], one `X^{s_i}, H`
/// layer per outcome from `s_m` down to `s_1`.
pub fn correction_sequence(s: &OutcomeVector, qubit: usize) -> Vec<GateOp> {
    let mut ops = Vec::new();
    for &bit in s.bits().iter().rev() {
        if bit == 1 {
            ops.push(GateOp::x(qubit));
        }
        ops.push(GateOp::h(qubit));
    }
    ops
}

/// Two-gate form of the correction: `H^{m mod 2}`, then `Z^a`, then `X^b`.
pub fn simplified_correction(hops: usize, c: Configuration, qubit: usize) -> Vec<GateOp> {
    let mut ops = Vec::new();
    if hops % 2 == 1 {
        ops.push(GateOp::h(qubit));
    }
    if c.z_parity == 1 {
        ops.push(GateOp::z(qubit));
    }
    if c.x_parity == 1 {
        ops.push(GateOp::x(qubit));
    }
    ops
}

fn single_qubit_product(ops: &[GateOp]) -> CMatrix {
    ops.iter().fold(CMatrix::identity(2), |acc, g| {
        &g.single_qubit_matrix().expect("single-qubit gate") * &acc
    })
}

/// `X^{s_m} H ⋯ X^{s_1} H` as a 2×2 matrix.
pub fn sequential_byproduct(s: &OutcomeVector) -> CMatrix {
    single_qubit_product(&byproduct_sequence(s, 0))
}

/// `H^{hops} Z^a X^b` for configuration `(a, b)`.
pub fn canonical_byproduct(hops: usize, c: Configuration) -> CMatrix {
    let mut u = CMatrix::identity(2);
    if c.x_parity == 1 {
        u = &gates::pauli_x() * &u;
    }
    if c.z_parity == 1 {
        u = &gates::pauli_z() * &u;
    }
    if hops % 2 == 1 {
        u = &gates::hadamard() * &u;
    }
    u
}

/// Pure two-qubit state on the path ends (first end = qubit 0) after forcing
/// the intermediate outcomes to `s`, without corrections.
pub fn teleported_state(s: &OutcomeVector) -> Result<PureState> {
    let n = s.len() + 2;
    let mut state = prepare_path_graph_state(n)?;
    for (k, &bit) in s.bits().iter().enumerate() {
        state.project(k + 1, Basis::X, bit)?;
    }
    state
        .reduced_pure_state(&[0, n - 1], 1e-9)?
        .ok_or_else(|| Error::InvalidState("ends remain entangled with the path".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Dynamic,
    Postselect,
    Swap,
}

impl TransportMode {
    pub const ALL: [TransportMode; 3] = [Self::Dynamic, Self::Postselect, Self::Swap];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dynamic => "dynamic",
            Self::Postselect => "postselect",
            Self::Swap => "swap",
        }
    }
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidExperiment(format!("unknown mode {s:?}")))
    }
}

/// How the dynamic mode applies its corrections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionStyle {
    /// One conditional layer per hop.
    #[default]
    Sequential,
    /// At most a Hadamard and two parity-conditioned Paulis.
    Simplified,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportOptions {
    /// Idle time charged on the path ends per correction layer.
    pub latency_us: f64,
    pub style: CorrectionStyle,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            latency_us: 0.0,
            style: CorrectionStyle::Sequential,
        }
    }
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidPath(format!("path of {n} qubits")));
    }
    if n > crate::circuit::MAX_CLBITS {
        return Err(Error::InvalidPath(format!("path of {n} qubits is too long")));
    }
    Ok(())
}

/// Circuit for one tomography setting of one transport mode.
pub fn transport_circuit(
    n: usize,
    mode: TransportMode,
    pair: BasisPair,
    opts: &TransportOptions,
) -> Result<Circuit> {
    check_len(n)?;
    let m = n - 2;
    let last = n - 1;
    let mut c = Circuit::new(n, n)?;
    c.gate(GateOp::h(0))?;
    c.gate(GateOp::h(1))?;
    c.gate(GateOp::cz(0, 1))?;
    match mode {
        TransportMode::Dynamic | TransportMode::Postselect => {
            for j in 1..=m {
                c.gate(GateOp::h(j + 1))?;
                c.gate(GateOp::cz(j, j + 1))?;
                c.gate(GateOp::h(j))?;
                c.measure(j, j - 1)?;
            }
            if mode == TransportMode::Dynamic && m > 0 {
                let ends = vec![0, last];
                match opts.style {
                    CorrectionStyle::Sequential => {
                        for i in (1..=m).rev() {
                            c.idle(ends.clone(), opts.latency_us)?;
                            c.conditional(GateOp::x(last), vec![i - 1])?;
                            c.gate(GateOp::h(last))?;
                        }
                    }
                    CorrectionStyle::Simplified => {
                        if m % 2 == 1 {
                            c.gate(GateOp::h(last))?;
                        }
                        let odd: Vec<usize> = (1..=m).step_by(2).map(|i| i - 1).collect();
                        let even: Vec<usize> = (2..=m).step_by(2).map(|i| i - 1).collect();
                        for (gate, bits) in [(GateOp::z(last), odd), (GateOp::x(last), even)] {
                            if !bits.is_empty() {
                                c.idle(ends.clone(), opts.latency_us)?;
                                c.conditional(gate, bits)?;
                            }
                        }
                    }
                }
            }
        }
        TransportMode::Swap => {
            for k in 1..=m {
                c.gate(GateOp::swap(k, k + 1))?;
                c.measure(k, k - 1)?;
            }
        }
    }
    for g in tomography_rotations(pair, 0, last) {
        c.gate(g)?;
    }
    c.measure(0, m)?;
    c.measure(last, m + 1)?;
    Ok(c)
}

/// Noise tables for a path under a device-independent model.
pub fn path_noise(model: &NoiseModel, path: &PathSpec) -> CircuitNoise {
    let n = path.len();
    CircuitNoise {
        one_qubit_depol: model.one_qubit_depol,
        two_qubit_depol: model.two_qubit_depol,
        pair_depol: Default::default(),
        t1_us: vec![model.t1_us; n],
        t2_us: vec![model.t2_us; n],
        readout: path.labels().iter().map(|&q| model.readout_for(q)).collect(),
    }
}

/// Derives an independent seed from `seed` and a tag (splitmix64 finaliser).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Classical outcomes per tomography setting, as `(word, weight)` pairs
/// sorted by word. Weights are counts for sampled data and probabilities for
/// exact data.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeTable {
    pub path_len: usize,
    pub mode: TransportMode,
    pub per_basis: Vec<(BasisPair, Vec<(u64, f64)>)>,
}

impl OutcomeTable {
    pub fn hops(&self) -> usize {
        self.path_len - 2
    }
}

/// Samples `shots` trajectories for every tomography setting.
pub fn run_transport(
    n: usize,
    mode: TransportMode,
    opts: &TransportOptions,
    noise: &CircuitNoise,
    shots: usize,
    seed: u64,
) -> Result<OutcomeTable> {
    if shots == 0 {
        return Err(Error::InvalidExperiment("shot budget is zero".into()));
    }
    let mut per_basis = Vec::with_capacity(BASIS_PAIRS.len());
    for (k, pair) in BASIS_PAIRS.into_iter().enumerate() {
        let circuit = transport_circuit(n, mode, pair, opts)?;
        let mut words = run_shots(&circuit, noise, shots, derive_seed(seed, k as u64))?;
        words.sort_unstable();
        let mut entries: Vec<(u64, f64)> = Vec::new();
        for w in words {
            match entries.last_mut() {
                Some((last, count)) if *last == w => *count += 1.0,
                _ => entries.push((w, 1.0)),
            }
        }
        per_basis.push((pair, entries));
    }
    Ok(OutcomeTable {
        path_len: n,
        mode,
        per_basis,
    })
}

/// Exact noiseless outcome distributions, with readout noise applied
/// exactly when `readout` (one matrix per path position) is given.
pub fn analytic_transport(
    n: usize,
    mode: TransportMode,
    style: CorrectionStyle,
    readout: Option<&[ConfusionMatrix]>,
) -> Result<OutcomeTable> {
    check_len(n)?;
    let m = n - 2;
    let last = n - 1;
    let mut base = prepare_path_graph_state(n)?;
    match mode {
        TransportMode::Postselect | TransportMode::Dynamic => {
            for j in 1..=m {
                base.apply(&GateOp::h(j))?;
            }
            if mode == TransportMode::Dynamic {
                // deferred measurement: classical control becomes quantum control
                match style {
                    CorrectionStyle::Sequential => {
                        for i in (1..=m).rev() {
                            base.apply(&GateOp::cnot(i, last))?;
                            base.apply(&GateOp::h(last))?;
                        }
                    }
                    CorrectionStyle::Simplified => {
                        if m % 2 == 1 {
                            base.apply(&GateOp::h(last))?;
                        }
                        for i in (1..=m).step_by(2) {
                            base.apply(&GateOp::cz(i, last))?;
                        }
                        for i in (2..=m).step_by(2) {
                            base.apply(&GateOp::cnot(i, last))?;
                        }
                    }
                }
            }
        }
        TransportMode::Swap => {
            base = PureState::zero(n)?;
            base.apply(&GateOp::h(0))?;
            base.apply(&GateOp::h(1))?;
            base.apply(&GateOp::cz(0, 1))?;
            for k in 1..=m {
                base.apply(&GateOp::swap(k, k + 1))?;
            }
        }
    }
    // clbit order: intermediates, then the two ends
    let mut order: Vec<usize> = (1..=m).collect();
    order.extend([0, last]);
    let confusion: Option<Vec<ConfusionMatrix>> =
        readout.map(|r| order.iter().map(|&q| r[q]).collect());
    let mut per_basis = Vec::with_capacity(BASIS_PAIRS.len());
    for pair in BASIS_PAIRS {
        let mut s = base.clone();
        for g in tomography_rotations(pair, 0, last) {
            s.apply(&g)?;
        }
        let mut p = s.born_probabilities(&order, &vec![Basis::Z; n])?;
        if let Some(c) = &confusion {
            p = crate::channels::readout_channel(&p, c);
        }
        let entries = p
            .into_iter()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
            .map(|(k, w)| (k as u64, w))
            .collect();
        per_basis.push((pair, entries));
    }
    Ok(OutcomeTable {
        path_len: n,
        mode,
        per_basis,
    })
}

/// Outcome of analysing one class of shots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Ok,
    /// Unreachable configuration (only two exist at one hop).
    Absent,
    /// Some tomography setting had no shots in this class.
    InsufficientShots,
}

impl EstimateStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Absent => "absent",
            Self::InsufficientShots => "insufficient_shots",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Estimate {
    /// Set for post-selected classes.
    pub configuration: Option<Configuration>,
    pub status: EstimateStatus,
    pub rho: Option<DensityMatrix>,
    pub negativity: Option<f64>,
    pub fidelity: Option<f64>,
    /// Raw weight that fell into this class, summed over settings.
    pub weight: f64,
}

/// Readout confusion per classical bit for a path of `n` qubits.
fn clbit_confusion(readout: &[ConfusionMatrix], n: usize) -> Vec<ConfusionMatrix> {
    let mut out: Vec<ConfusionMatrix> = (1..n - 1).map(|q| readout[q]).collect();
    out.extend([readout[0], readout[n - 1]]);
    out
}

/// Per-class, per-end-outcome weights of one setting. Each intermediate
/// bit is corrected through its inverse confusion matrix and immediately
/// folded into the class parity, so the full `2^n` vector is never built.
/// Returns `(corrected[class][end], raw[class])`.
fn fold_postselect(
    entries: &[(u64, f64)],
    m: usize,
    inverses: Option<&[[[f64; 2]; 2]]>,
) -> ([[f64; 4]; 4], [f64; 4]) {
    let mut corrected = [[0.0; 4]; 4];
    let mut raw = [0.0; 4];
    for &(word, w) in entries {
        let s = OutcomeVector::from_word(word, m);
        let end = ((word >> m) & 3) as usize;
        raw[discriminator(&s).index()] += w;
        let mut acc = [0.0f64; 4];
        acc[0] = w;
        for (k, &bit) in s.bits().iter().enumerate() {
            let shift = if k % 2 == 0 { 1 } else { 2 };
            let col = match inverses {
                Some(inv) => [inv[k][0][bit as usize], inv[k][1][bit as usize]],
                None if bit == 0 => [1.0, 0.0],
                None => [0.0, 1.0],
            };
            let mut next = [0.0; 4];
            for (cls, a) in acc.iter().enumerate() {
                if *a != 0.0 {
                    next[cls] += a * col[0];
                    next[cls ^ shift] += a * col[1];
                }
            }
            acc = next;
        }
        for (cls, a) in acc.iter().enumerate() {
            corrected[cls][end] += a;
        }
    }
    (corrected, raw)
}

fn estimate_from(
    dists: BasisDistributions,
    hops: usize,
    configuration: Option<Configuration>,
    weight: f64,
) -> Result<Estimate> {
    let rho = reconstruct(&dists)?;
    let neg = negativity(&rho)?;
    let rotated = match configuration {
        Some(c) => {
            let u = canonical_byproduct(hops, c).adjoint();
            rho.conjugated(&gates::on_two_qubits(&u, 1))
        }
        None => rho.clone(),
    };
    let fid = fidelity_with_state(&rotated, &pair_state())?;
    Ok(Estimate {
        configuration,
        status: EstimateStatus::Ok,
        rho: Some(rho),
        negativity: Some(neg),
        fidelity: Some(fid),
        weight,
    })
}

fn empty_estimate(configuration: Option<Configuration>, status: EstimateStatus, weight: f64) -> Estimate {
    Estimate {
        configuration,
        status,
        rho: None,
        negativity: None,
        fidelity: None,
        weight,
    }
}

/// Tomography, optional readout mitigation and metrics for a table.
///
/// `readout` holds one confusion matrix per path position and switches
/// mitigation on. Dynamic and SWAP tables give one estimate. Post-selected
/// tables give one estimate per configuration, in [`Configuration::ALL`]
/// order; their intermediate outcomes are mitigated too.
pub fn analyze(table: &OutcomeTable, readout: Option<&[ConfusionMatrix]>) -> Result<Vec<Estimate>> {
    let n = table.path_len;
    let m = table.hops();
    if let Some(r) = readout {
        if r.len() != n {
            return Err(Error::InvalidExperiment(format!(
                "{} confusion matrices for a path of {n} qubits",
                r.len()
            )));
        }
    }
    let clbit_conf = readout.map(|r| clbit_confusion(r, n));
    let end_conf = clbit_conf.as_ref().map(|c| [c[m], c[m + 1]]);
    match table.mode {
        TransportMode::Dynamic | TransportMode::Swap => {
            let mut dists = BasisDistributions::new();
            let mut weight = 0.0;
            for (pair, entries) in &table.per_basis {
                let mut v = [0.0; 4];
                for &(word, w) in entries {
                    v[((word >> m) & 3) as usize] += w;
                }
                weight += v.iter().sum::<f64>();
                let corrected = match &end_conf {
                    Some(c) => qrem_correct(&v, c)?,
                    None => v.to_vec(),
                };
                match normalize_and_project(&corrected) {
                    Some(p) => dists.insert(*pair, [p[0], p[1], p[2], p[3]]),
                    None => return Ok(vec![empty_estimate(None, EstimateStatus::InsufficientShots, weight)]),
                }
            }
            Ok(vec![estimate_from(dists, m, None, weight)?])
        }
        TransportMode::Postselect => {
            let inverses = match &clbit_conf {
                Some(c) => Some(inverse_confusions(&c[..m])?),
                None => None,
            };
            let mut per_class: Vec<BasisDistributions> =
                (0..4).map(|_| BasisDistributions::new()).collect();
            let mut weights = [0.0; 4];
            let mut starved = [false; 4];
            for (pair, entries) in &table.per_basis {
                let (corrected, raw) = fold_postselect(entries, m, inverses.as_deref());
                for cls in 0..4 {
                    weights[cls] += raw[cls];
                    if raw[cls] <= 0.0 {
                        starved[cls] = true;
                        continue;
                    }
                    let v = match &end_conf {
                        Some(c) => qrem_correct(&corrected[cls], c)?,
                        None => corrected[cls].to_vec(),
                    };
                    match normalize_and_project(&v) {
                        Some(p) => per_class[cls].insert(*pair, [p[0], p[1], p[2], p[3]]),
                        None => starved[cls] = true,
                    }
                }
            }
            let mut out = Vec::with_capacity(4);
            for (dists, c) in per_class.into_iter().zip(Configuration::ALL) {
                let cls = c.index();
                let est = if !c.reachable(m) {
                    empty_estimate(Some(c), EstimateStatus::Absent, weights[cls])
                } else if starved[cls] {
                    empty_estimate(Some(c), EstimateStatus::InsufficientShots, weights[cls])
                } else {
                    estimate_from(dists, m, Some(c), weights[cls])?
                };
                out.push(est);
            }
            Ok(out)
        }
    }
}

/// Mean negativity over the estimates that produced one.
pub fn mean_negativity(estimates: &[Estimate]) -> Option<f64> {
    let v: Vec<f64> = estimates.iter().filter_map(|e| e.negativity).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gates::phase_insensitive_distance;
    use num_complex::Complex64;

    fn all_outcomes(m: usize) -> impl Iterator<Item = OutcomeVector> {
        (0..1u64 << m).map(move |w| OutcomeVector::from_word(w, m))
    }

    #[test]
    fn path_state_amplitudes() {
        let s = pair_state();
        let want = [0.5, 0.5, 0.5, -0.5];
        for (a, w) in s.amplitudes().iter().zip(want) {
            assert!((a - Complex64::new(w, 0.0)).norm() < 1e-12);
        }
        let s3 = prepare_path_graph_state(3).unwrap();
        let r = 8f64.sqrt().recip();
        // qubit 0 is the low bit: |x2 x1 x0>
        assert!((s3.amplitudes()[0b011].re + r).abs() < 1e-12);
        assert!((s3.amplitudes()[0b110].re + r).abs() < 1e-12);
        assert!((s3.amplitudes()[0b111].re - r).abs() < 1e-12);
        for n in 1..=10 {
            let s = prepare_path_graph_state(n).unwrap();
            let want = 2f64.powf(-(n as f64) / 2.0);
            assert!(s.amplitudes().iter().all(|a| (a.norm() - want).abs() < 1e-12));
        }
        assert!(prepare_path_graph_state(25).is_err());
    }

    #[test]
    fn discriminator_examples() {
        let c = |v: Vec<u8>| discriminator(&OutcomeVector::new(v).unwrap());
        assert_eq!(c(vec![0, 0, 0]), Configuration::new(0, 0));
        assert_eq!(c(vec![1, 0, 1]), Configuration::new(0, 0));
        assert_eq!(c(vec![1, 1, 0, 1]), Configuration::new(1, 0));
        assert_eq!(c(vec![1]), Configuration::new(1, 0));
        assert!(OutcomeVector::new(vec![2]).is_err());
    }

    #[test]
    fn correction_examples() {
        let s0 = OutcomeVector::new(vec![0]).unwrap();
        let s1 = OutcomeVector::new(vec![1]).unwrap();
        assert_eq!(correction_sequence(&s0, 2), vec![GateOp::h(2)]);
        assert_eq!(correction_sequence(&s1, 2), vec![GateOp::x(2), GateOp::h(2)]);
        for m in 0..=6 {
            for s in all_outcomes(m) {
                let u = sequential_byproduct(&s);
                let fix = single_qubit_product(&correction_sequence(&s, 0));
                assert!(phase_insensitive_distance(&(&fix * &u), &CMatrix::identity(2)) < 1e-12);
                let simple = single_qubit_product(&simplified_correction(m, discriminator(&s), 0));
                assert!(phase_insensitive_distance(&(&simple * &u), &CMatrix::identity(2)) < 1e-12);
            }
        }
    }

    #[test]
    fn one_hop_with_zero_outcome_gives_the_pair_after_h() {
        let s = OutcomeVector::new(vec![0]).unwrap();
        let mut t = teleported_state(&s).unwrap();
        t.apply(&GateOp::h(1)).unwrap();
        assert!(t.distance_up_to_phase(&pair_state()) < 1e-12);
    }

    #[test]
    fn configuration_labels_round_trip() {
        for c in Configuration::ALL {
            assert_eq!(c.to_string().parse::<Configuration>().unwrap(), c);
        }
        assert!("Z2X0".parse::<Configuration>().is_err());
        assert!(!Configuration::new(0, 1).reachable(1));
        assert!(Configuration::new(1, 1).reachable(2));
    }

    #[test]
    fn path_spec_validation() {
        assert!(PathSpec::new(vec![3]).is_err());
        assert!(PathSpec::new(vec![1, 2, 1]).is_err());
        let p = PathSpec::new(vec![4, 7, 2]).unwrap();
        assert_eq!(p.hops(), 1);
        assert_eq!(p.to_string(), "4-7-2");
    }

    #[test]
    fn analytic_modes_deliver_the_pair() {
        for n in 2..=7 {
            for mode in TransportMode::ALL {
                for style in [CorrectionStyle::Sequential, CorrectionStyle::Simplified] {
                    let t = analytic_transport(n, mode, style, None).unwrap();
                    for e in analyze(&t, None).unwrap() {
                        if e.status == EstimateStatus::Absent {
                            continue;
                        }
                        assert_eq!(e.status, EstimateStatus::Ok);
                        assert!((e.negativity.unwrap() - 0.5).abs() < 1e-9, "{mode} n={n}");
                        assert!((e.fidelity.unwrap() - 1.0).abs() < 1e-9, "{mode} n={n}");
                    }
                }
            }
        }
    }

    #[test]
    fn swap_leaves_intermediates_in_zero() {
        let t = analytic_transport(6, TransportMode::Swap, CorrectionStyle::Sequential, None).unwrap();
        for (_, entries) in &t.per_basis {
            assert!(entries.iter().all(|(w, _)| w & 0b1111 == 0));
        }
    }

    #[test]
    fn folded_qrem_matches_dense_correction() {
        let n = 6;
        let m = n - 2;
        let readout: Vec<ConfusionMatrix> = (0..n)
            .map(|q| ConfusionMatrix::from_flip_rates(0.01 * (q + 1) as f64, 0.03).unwrap())
            .collect();
        let t = analytic_transport(n, TransportMode::Postselect, CorrectionStyle::Sequential, Some(&readout))
            .unwrap();
        let conf = clbit_confusion(&readout, n);
        let inv = inverse_confusions(&conf[..m]).unwrap();
        for (_, entries) in &t.per_basis {
            let mut dense = vec![0.0; 1 << n];
            for &(w, p) in entries {
                dense[w as usize] = p;
            }
            let fixed = qrem_correct(&dense, &conf).unwrap();
            let mut want = [[0.0; 4]; 4];
            for (w, p) in fixed.iter().enumerate() {
                let s = OutcomeVector::from_word(w as u64, m);
                want[discriminator(&s).index()][w >> m] += p;
            }
            let (got, _) = fold_postselect(entries, m, Some(&inv));
            for cls in 0..4 {
                let g = qrem_correct(&got[cls], &conf[m..]).unwrap();
                for end in 0..4 {
                    assert!((g[end] - want[cls][end]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampled_noiseless_runs_are_maximally_entangled() {
        for mode in TransportMode::ALL {
            let noise = CircuitNoise::noiseless(5);
            let t = run_transport(5, mode, &TransportOptions::default(), &noise, 2048, 3).unwrap();
            for e in analyze(&t, None).unwrap() {
                assert_eq!(e.status, EstimateStatus::Ok);
                assert!(e.negativity.unwrap() > 0.45, "{mode}: {:?}", e.negativity);
            }
        }
    }

    #[test]
    fn hop_one_reports_two_absent_classes() {
        let t = run_transport(3, TransportMode::Postselect, &TransportOptions::default(), &CircuitNoise::noiseless(3), 512, 0)
            .unwrap();
        let est = analyze(&t, None).unwrap();
        let absent: Vec<_> = est
            .iter()
            .filter(|e| e.status == EstimateStatus::Absent)
            .map(|e| e.configuration.unwrap())
            .collect();
        assert_eq!(absent, vec![Configuration::new(0, 1), Configuration::new(1, 1)]);
    }

    #[test]
    fn tiny_budgets_flag_starved_classes() {
        let t = run_transport(6, TransportMode::Postselect, &TransportOptions::default(), &CircuitNoise::noiseless(6), 1, 0)
            .unwrap();
        let est = analyze(&t, None).unwrap();
        assert!(est.iter().any(|e| e.status == EstimateStatus::InsufficientShots));
        assert!(est.iter().all(|e| e.negativity.map_or(true, |v| v.is_finite())));
        assert!(run_transport(3, TransportMode::Swap, &TransportOptions::default(), &CircuitNoise::noiseless(3), 0, 0).is_err());
    }
}

//! Dense statevector simulator.
//!
//! Qubit `q` is bit `q` of the amplitude index (qubit 0 is least
//! significant). Global phase is never normalised; compare states with
//! [`PureState::distance_up_to_phase`].

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ONE, ZERO};

pub const MAX_QUBITS: usize = 24;

/// Norm tolerance every public operation keeps.
pub const NORM_TOLERANCE: f64 = 1e-9;

const UNDERFLOW: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    CZ,
    CNOT,
    SWAP,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::CZ | GateKind::CNOT | GateKind::SWAP => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::S => "S",
            GateKind::Sdg => "Sdg",
            GateKind::CZ => "CZ",
            GateKind::CNOT => "CNOT",
            GateKind::SWAP => "SWAP",
        }
    }
}

/// A gate together with its target qubits. For CNOT the first target is the
/// control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GateOp {
    kind: GateKind,
    targets: [usize; 2],
}

impl GateOp {
    pub fn new(kind: GateKind, targets: &[usize]) -> Result<Self> {
        if targets.len() != kind.arity() {
            return Err(Error::Arity {
                kind: kind.name(),
                expected: kind.arity(),
                got: targets.len(),
            });
        }
        if kind.arity() == 2 && targets[0] == targets[1] {
            return Err(Error::DuplicateTargets {
                kind: kind.name(),
                a: targets[0],
            });
        }
        let mut t = [targets[0], 0];
        if kind.arity() == 2 {
            t[1] = targets[1];
        }
        Ok(Self { kind, targets: t })
    }

    pub fn h(q: usize) -> Self {
        Self::single(GateKind::H, q)
    }
    pub fn x(q: usize) -> Self {
        Self::single(GateKind::X, q)
    }
    pub fn z(q: usize) -> Self {
        Self::single(GateKind::Z, q)
    }
    pub fn sdg(q: usize) -> Self {
        Self::single(GateKind::Sdg, q)
    }

    /// Panics on equal qubits; use [`GateOp::new`] for unchecked input.
    pub fn cz(a: usize, b: usize) -> Self {
        Self::new(GateKind::CZ, &[a, b]).expect("distinct CZ targets")
    }
    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(GateKind::CNOT, &[control, target]).expect("distinct CNOT targets")
    }
    pub fn swap(a: usize, b: usize) -> Self {
        Self::new(GateKind::SWAP, &[a, b]).expect("distinct SWAP targets")
    }

    fn single(kind: GateKind, q: usize) -> Self {
        Self {
            kind,
            targets: [q, 0],
        }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets[..self.kind.arity()]
    }

    /// Same gate with targets relabelled through `map`.
    pub fn remap(&self, map: impl Fn(usize) -> usize) -> Self {
        let mut out = *self;
        for t in out.targets.iter_mut().take(self.kind.arity()) {
            *t = map(*t);
        }
        out
    }

    /// 2×2 matrix of a single-qubit gate.
    pub fn single_qubit_matrix(&self) -> Option<CMatrix> {
        use crate::linalg::gates::*;
        Some(match self.kind {
            GateKind::H => hadamard(),
            GateKind::X => pauli_x(),
            GateKind::Y => pauli_y(),
            GateKind::Z => pauli_z(),
            GateKind::S => phase_s(),
            GateKind::Sdg => phase_sdg(),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct MeasurementOutcome {
    pub qubit: usize,
    pub basis: Basis,
    pub bit: u8,
    pub probability: f64,
    pub post_state: PureState,
}

impl PureState {
    /// |0…0⟩ on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        check_size(num_qubits)?;
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[0] = ONE;
        Ok(Self { num_qubits, amps })
    }

    /// |+⟩^⊗n.
    pub fn plus(num_qubits: usize) -> Result<Self> {
        check_size(num_qubits)?;
        let a = Complex64::new((1u64 << num_qubits) as f64, 0.0).sqrt().inv();
        Ok(Self {
            num_qubits,
            amps: vec![a; 1 << num_qubits],
        })
    }

    /// Normalises the given amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidState(format!(
                "amplitude vector length {len} is not a power of two"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        check_size(num_qubits)?;
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > UNDERFLOW) {
            return Err(Error::InvalidState("zero or non-finite norm".into()));
        }
        let amps = amps.into_iter().map(|z| z / norm).collect();
        Ok(Self { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &PureState) -> Complex64 {
        assert_eq!(self.num_qubits, other.num_qubits);
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Max amplitude difference after removing the relative global phase.
    pub fn distance_up_to_phase(&self, other: &PureState) -> f64 {
        if self.num_qubits != other.num_qubits {
            return f64::INFINITY;
        }
        let ov = other.inner(self);
        let phase = if ov.norm() > UNDERFLOW { ov / ov.norm() } else { ONE };
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b * phase).norm())
            .fold(0.0, f64::max)
    }

    /// Tensor product with `high` placed on the new high-order qubits.
    pub fn tensor(&self, high: &PureState) -> Result<PureState> {
        check_size(self.num_qubits + high.num_qubits)?;
        let mut amps = Vec::with_capacity(self.amps.len() * high.amps.len());
        for h in &high.amps {
            for l in &self.amps {
                amps.push(l * h);
            }
        }
        Ok(PureState {
            num_qubits: self.num_qubits + high.num_qubits,
            amps,
        })
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: q,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    pub fn apply(&mut self, op: &GateOp) -> Result<()> {
        for &t in op.targets() {
            self.check_qubit(t)?;
        }
        let t = op.targets();
        match op.kind() {
            GateKind::H => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                self.for_each_pair(t[0], |a, b| {
                    let (x, y) = (*a, *b);
                    *a = (x + y) * h;
                    *b = (x - y) * h;
                });
            }
            GateKind::X => self.for_each_pair(t[0], std::mem::swap),
            GateKind::Y => self.for_each_pair(t[0], |a, b| {
                let (x, y) = (*a, *b);
                *a = Complex64::new(y.im, -y.re);
                *b = Complex64::new(-x.im, x.re);
            }),
            GateKind::Z => self.for_each_pair(t[0], |_, b| *b = -*b),
            GateKind::S => self.for_each_pair(t[0], |_, b| *b = Complex64::new(-b.im, b.re)),
            GateKind::Sdg => self.for_each_pair(t[0], |_, b| *b = Complex64::new(b.im, -b.re)),
            GateKind::CZ => {
                let mask = (1 << t[0]) | (1 << t[1]);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *a = -*a;
                    }
                }
            }
            GateKind::CNOT => {
                let (c, tg) = (1usize << t[0], 1usize << t[1]);
                for i in 0..self.amps.len() {
                    if i & c != 0 && i & tg == 0 {
                        self.amps.swap(i, i | tg);
                    }
                }
            }
            GateKind::SWAP => {
                let (a, b) = (1usize << t[0], 1usize << t[1]);
                for i in 0..self.amps.len() {
                    if i & a != 0 && i & b == 0 {
                        self.amps.swap(i, (i & !a) | b);
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies an arbitrary 2×2 operator to `q` without renormalising.
    pub(crate) fn apply_matrix_unnormalized(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        self.for_each_pair(q, |a, b| {
            let (x, y) = (*a, *b);
            *a = m[0][0] * x + m[0][1] * y;
            *b = m[1][0] * x + m[1][1] * y;
        });
    }

    /// Calls `f(amp[i], amp[i | 1<<q])` for every index with bit `q` clear.
    fn for_each_pair(&mut self, q: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let stride = 1usize << q;
        for chunk in self.amps.chunks_mut(stride << 1) {
            let (lo, hi) = chunk.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a, b);
            }
        }
    }

    pub(crate) fn renormalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n.is_finite() && n > UNDERFLOW) {
            return Err(Error::InvalidState("state collapsed to zero norm".into()));
        }
        let inv = 1.0 / n;
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    /// Probability that qubit `q` reads 1 in the computational basis.
    pub fn probability_one(&self, q: usize) -> Result<f64> {
        self.check_qubit(q)?;
        let m = 1usize << q;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projects qubit `q` onto `bit` in `basis` and renormalises. Returns the
    /// Born probability of that branch. After an X-basis projection the
    /// qubit is left in the matching X eigenstate.
    pub fn project(&mut self, q: usize, basis: Basis, bit: u8) -> Result<f64> {
        self.check_qubit(q)?;
        if basis == Basis::X {
            self.apply(&GateOp::h(q))?;
        }
        let p1 = self.probability_one(q)?;
        let p = if bit == 0 { 1.0 - p1 } else { p1 };
        if p1 < UNDERFLOW && 1.0 - p1 < UNDERFLOW {
            return Err(Error::CorruptedState { qubit: q });
        }
        if p < UNDERFLOW {
            return Err(Error::InvalidState(format!(
                "branch {bit} of qubit {q} has zero probability"
            )));
        }
        self.collapse_z(q, bit, p);
        if basis == Basis::X {
            self.apply(&GateOp::h(q))?;
        }
        Ok(p)
    }

    fn collapse_z(&mut self, q: usize, bit: u8, p: f64) {
        let m = 1usize << q;
        let inv = 1.0 / p.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i & m != 0) as u8) == bit {
                *a *= inv;
            } else {
                *a = ZERO;
            }
        }
    }

    /// Samples a measurement of `q` in `basis`, collapsing in place.
    pub fn measure_in_place<R: Rng + ?Sized>(
        &mut self,
        q: usize,
        basis: Basis,
        rng: &mut R,
    ) -> Result<u8> {
        self.check_qubit(q)?;
        if basis == Basis::X {
            self.apply(&GateOp::h(q))?;
        }
        let p1 = self.probability_one(q)?;
        let p0 = 1.0 - p1;
        if p1 < UNDERFLOW && p0 < UNDERFLOW {
            return Err(Error::CorruptedState { qubit: q });
        }
        let bit = if rng.gen::<f64>() < p1 { 1 } else { 0 };
        self.collapse_z(q, bit, if bit == 1 { p1 } else { p0 });
        if basis == Basis::X {
            self.apply(&GateOp::h(q))?;
        }
        Ok(bit)
    }

    /// Samples a measurement and returns the outcome with a copy of the
    /// collapsed state; `self` is untouched.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        q: usize,
        basis: Basis,
        rng: &mut R,
    ) -> Result<MeasurementOutcome> {
        let mut post = self.clone();
        let bit = post.measure_in_place(q, basis, rng)?;
        let mut probe = self.clone();
        let probability = probe.project(q, basis, bit)?;
        Ok(MeasurementOutcome {
            qubit: q,
            basis,
            bit,
            probability,
            post_state: post,
        })
    }

    /// Exact joint outcome distribution of `qubits` measured in `bases`.
    /// Bit `k` of the outcome index is the result for `qubits[k]`.
    pub fn born_probabilities(&self, qubits: &[usize], bases: &[Basis]) -> Result<Vec<f64>> {
        if qubits.len() != bases.len() {
            return Err(Error::InvalidState(
                "one basis per measured qubit is required".into(),
            ));
        }
        for (i, &q) in qubits.iter().enumerate() {
            self.check_qubit(q)?;
            if qubits[..i].contains(&q) {
                return Err(Error::DuplicateTargets {
                    kind: "measurement",
                    a: q,
                });
            }
        }
        let rotated;
        let src = if bases.contains(&Basis::X) {
            let mut s = self.clone();
            for (&q, &b) in qubits.iter().zip(bases) {
                if b == Basis::X {
                    s.apply(&GateOp::h(q))?;
                }
            }
            rotated = s;
            &rotated
        } else {
            self
        };
        let mut out = vec![0.0; 1 << qubits.len()];
        for (i, a) in src.amps.iter().enumerate() {
            let mut k = 0usize;
            for (bit, &q) in qubits.iter().enumerate() {
                k |= ((i >> q) & 1) << bit;
            }
            out[k] += a.norm_sqr();
        }
        Ok(out)
    }

    /// Appends a fresh |0⟩ qubit as the new highest index.
    pub fn push_qubit(&mut self) -> Result<usize> {
        check_size(self.num_qubits + 1)?;
        self.amps.resize(self.amps.len() * 2, ZERO);
        self.num_qubits += 1;
        Ok(self.num_qubits - 1)
    }

    /// Removes qubit `q`, which must sit in the computational state `bit`.
    /// Higher qubits shift down by one.
    pub fn remove_qubit(&mut self, q: usize, bit: u8) -> Result<()> {
        self.check_qubit(q)?;
        if self.num_qubits == 1 {
            return Err(Error::InvalidState("cannot remove the last qubit".into()));
        }
        let m = 1usize << q;
        let low = m - 1;
        let mut out = vec![ZERO; self.amps.len() / 2];
        let mut leaked = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            if ((i & m != 0) as u8) == bit {
                let j = (i & low) | ((i >> 1) & !low);
                out[j] = *a;
            } else {
                leaked += a.norm_sqr();
            }
        }
        if leaked > NORM_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "qubit {q} is not collapsed to {bit} (leaked weight {leaked:.3e})"
            )));
        }
        self.amps = out;
        self.num_qubits -= 1;
        Ok(())
    }

    /// Pure state of `keep` (in the listed order) when it factorises from the
    /// rest of the register; `None` if the state is entangled across the cut
    /// beyond `tol`.
    pub fn reduced_pure_state(&self, keep: &[usize], tol: f64) -> Result<Option<PureState>> {
        for &q in keep {
            self.check_qubit(q)?;
        }
        let rest: Vec<usize> = (0..self.num_qubits).filter(|q| !keep.contains(q)).collect();
        let kd = 1usize << keep.len();
        let rd = 1usize << rest.len();
        // M[k][r] = amplitude with keep bits k and rest bits r
        let mut mat = vec![ZERO; kd * rd];
        for (i, a) in self.amps.iter().enumerate() {
            let k = gather(i, keep);
            let r = gather(i, &rest);
            mat[k * rd + r] = *a;
        }
        let col_norm = |r: usize| (0..kd).map(|k| mat[k * rd + r].norm_sqr()).sum::<f64>();
        let best = (0..rd)
            .max_by(|&a, &b| col_norm(a).total_cmp(&col_norm(b)))
            .unwrap_or(0);
        let bn = col_norm(best).sqrt();
        if bn < UNDERFLOW {
            return Err(Error::InvalidState("zero state".into()));
        }
        let a: Vec<Complex64> = (0..kd).map(|k| mat[k * rd + best] / bn).collect();
        let mut residual = 0.0;
        for r in 0..rd {
            let coef: Complex64 = (0..kd).map(|k| a[k].conj() * mat[k * rd + r]).sum();
            for k in 0..kd {
                residual += (mat[k * rd + r] - a[k] * coef).norm_sqr();
            }
        }
        if residual.sqrt() > tol {
            return Ok(None);
        }
        Ok(Some(PureState::from_amplitudes(a)?))
    }
}

fn gather(index: usize, qubits: &[usize]) -> usize {
    qubits
        .iter()
        .enumerate()
        .fold(0, |acc, (bit, &q)| acc | (((index >> q) & 1) << bit))
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    Ok(())
}

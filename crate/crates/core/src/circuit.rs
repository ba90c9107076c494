//! Circuits with mid-circuit measurement and classical control, executed as
//! noisy quantum trajectories.
//!
//! The executor allocates a qubit on its first use and releases it right
//! after its last use, so a linear path of any length only ever keeps a few
//! qubits in the statevector at once. Releasing a qubit that was not just
//! measured is done by an unrecorded Z measurement; this leaves the reduced
//! state of the remaining qubits unchanged.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channels::{apply_depolarizing, apply_idle_decay, ConfusionMatrix};
use crate::error::{Error, Result};
use crate::sim::{Basis, GateKind, GateOp, PureState};

/// Maximum number of classical bits, one per bit of a packed shot word.
pub const MAX_CLBITS: usize = 64;

/// Shots simulated per independently seeded rng stream.
const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub enum Instruction {
    Gate(GateOp),
    /// Z measurement of `qubit` into `clbit` (readout noise applies).
    Measure { qubit: usize, clbit: usize },
    /// `gate` when the XOR of `clbits` is 1.
    Conditional { gate: GateOp, clbits: Vec<usize> },
    Idle { qubits: Vec<usize>, duration_us: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    num_clbits: usize,
    instructions: Vec<Instruction>,
}

impl Circuit {
    pub fn new(num_qubits: usize, num_clbits: usize) -> Result<Self> {
        if num_clbits > MAX_CLBITS {
            return Err(Error::InvalidExperiment(format!(
                "{num_clbits} classical bits exceed the limit of {MAX_CLBITS}"
            )));
        }
        Ok(Self {
            num_qubits,
            num_clbits,
            instructions: Vec::new(),
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_clbits(&self) -> usize {
        self.num_clbits
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
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

    fn check_clbit(&self, c: usize) -> Result<()> {
        if c >= self.num_clbits {
            return Err(Error::InvalidExperiment(format!(
                "classical bit {c} out of range for {} bits",
                self.num_clbits
            )));
        }
        Ok(())
    }

    pub fn push(&mut self, inst: Instruction) -> Result<()> {
        match &inst {
            Instruction::Gate(g) => {
                for &q in g.targets() {
                    self.check_qubit(q)?;
                }
            }
            Instruction::Measure { qubit, clbit } => {
                self.check_qubit(*qubit)?;
                self.check_clbit(*clbit)?;
            }
            Instruction::Conditional { gate, clbits } => {
                for &q in gate.targets() {
                    self.check_qubit(q)?;
                }
                for &c in clbits {
                    self.check_clbit(c)?;
                }
            }
            Instruction::Idle { qubits, duration_us } => {
                for &q in qubits {
                    self.check_qubit(q)?;
                }
                if !(*duration_us >= 0.0) {
                    return Err(Error::InvalidExperiment(format!(
                        "idle duration {duration_us} must be >= 0"
                    )));
                }
            }
        }
        self.instructions.push(inst);
        Ok(())
    }

    pub fn gate(&mut self, op: GateOp) -> Result<()> {
        self.push(Instruction::Gate(op))
    }

    pub fn measure(&mut self, qubit: usize, clbit: usize) -> Result<()> {
        self.push(Instruction::Measure { qubit, clbit })
    }

    pub fn conditional(&mut self, gate: GateOp, clbits: Vec<usize>) -> Result<()> {
        self.push(Instruction::Conditional { gate, clbits })
    }

    pub fn idle(&mut self, qubits: Vec<usize>, duration_us: f64) -> Result<()> {
        self.push(Instruction::Idle {
            qubits,
            duration_us,
        })
    }

    /// Index of the last instruction touching each qubit (idles excluded).
    fn last_uses(&self) -> Vec<Option<usize>> {
        let mut last = vec![None; self.num_qubits];
        for (i, inst) in self.instructions.iter().enumerate() {
            match inst {
                Instruction::Gate(g) | Instruction::Conditional { gate: g, .. } => {
                    for &q in g.targets() {
                        last[q] = Some(i);
                    }
                }
                Instruction::Measure { qubit, .. } => last[*qubit] = Some(i),
                Instruction::Idle { .. } => {}
            }
        }
        last
    }
}

/// Noise parameters indexed by circuit qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitNoise {
    pub one_qubit_depol: f64,
    pub two_qubit_depol: f64,
    /// Per-pair overrides keyed by `(min, max)` qubit index.
    pub pair_depol: BTreeMap<(usize, usize), f64>,
    pub t1_us: Vec<f64>,
    pub t2_us: Vec<f64>,
    pub readout: Vec<ConfusionMatrix>,
}

impl CircuitNoise {
    pub fn noiseless(num_qubits: usize) -> Self {
        Self {
            one_qubit_depol: 0.0,
            two_qubit_depol: 0.0,
            pair_depol: BTreeMap::new(),
            t1_us: vec![f64::INFINITY; num_qubits],
            t2_us: vec![f64::INFINITY; num_qubits],
            readout: vec![ConfusionMatrix::identity(); num_qubits],
        }
    }

    pub fn pair(&self, a: usize, b: usize) -> f64 {
        let key = (a.min(b), a.max(b));
        self.pair_depol
            .get(&key)
            .copied()
            .unwrap_or(self.two_qubit_depol)
    }

    fn check(&self, num_qubits: usize) -> Result<()> {
        if self.t1_us.len() < num_qubits
            || self.t2_us.len() < num_qubits
            || self.readout.len() < num_qubits
        {
            return Err(Error::InvalidNoise(format!(
                "noise tables cover fewer than {num_qubits} qubits"
            )));
        }
        Ok(())
    }
}

/// Per-shot register: circuit qubit to statevector slot.
struct Register {
    state: Option<PureState>,
    slot: Vec<Option<usize>>,
    /// Circuit qubit for each statevector slot.
    owner: Vec<usize>,
    released: Vec<bool>,
}

impl Register {
    fn new(num_qubits: usize) -> Self {
        Self {
            state: None,
            slot: vec![None; num_qubits],
            owner: Vec::new(),
            released: vec![false; num_qubits],
        }
    }

    fn slot_of(&mut self, q: usize) -> Result<usize> {
        if self.released[q] {
            return Err(Error::InvalidExperiment(format!(
                "qubit {q} used after release"
            )));
        }
        if let Some(s) = self.slot[q] {
            return Ok(s);
        }
        let s = match &mut self.state {
            None => {
                self.state = Some(PureState::zero(1)?);
                0
            }
            Some(st) => st.push_qubit()?,
        };
        self.slot[q] = Some(s);
        self.owner.push(q);
        Ok(s)
    }

    fn state(&mut self) -> &mut PureState {
        self.state.as_mut().expect("allocated before use")
    }

    /// Drops qubit `q`, which sits in the computational state `bit`.
    fn release(&mut self, q: usize, bit: u8) -> Result<()> {
        let s = self.slot[q].expect("released qubit is live");
        let st = self.state.as_mut().expect("allocated before use");
        if st.num_qubits() == 1 {
            self.state = None;
            self.owner.clear();
            self.slot[q] = None;
            self.released[q] = true;
            return Ok(());
        }
        st.remove_qubit(s, bit)?;
        self.owner.remove(s);
        for (k, &o) in self.owner.iter().enumerate().skip(s) {
            self.slot[o] = Some(k);
        }
        self.slot[q] = None;
        self.released[q] = true;
        Ok(())
    }
}

fn depolarize<R: Rng + ?Sized>(
    reg: &mut Register,
    slots: &[usize],
    p: f64,
    rng: &mut R,
) -> Result<()> {
    apply_depolarizing(reg.state(), slots, p, rng).map(|_| ())
}

fn noisy_gate<R: Rng + ?Sized>(
    reg: &mut Register,
    g: &GateOp,
    noise: &CircuitNoise,
    rng: &mut R,
) -> Result<()> {
    let mut slots = [0usize; 2];
    for (k, &q) in g.targets().iter().enumerate() {
        slots[k] = reg.slot_of(q)?;
    }
    let local = g.remap(|q| if q == g.targets()[0] { slots[0] } else { slots[1] });
    match g.kind().arity() {
        1 => {
            reg.state().apply(&local)?;
            depolarize(reg, &slots[..1], noise.one_qubit_depol, rng)
        }
        _ => {
            let p = noise.pair(g.targets()[0], g.targets()[1]);
            let (a, b) = (slots[0], slots[1]);
            let parts = if g.kind() == GateKind::SWAP {
                vec![GateOp::cnot(a, b), GateOp::cnot(b, a), GateOp::cnot(a, b)]
            } else {
                vec![local]
            };
            for part in parts {
                reg.state().apply(&part)?;
                depolarize(reg, &[a, b], p, rng)?;
            }
            Ok(())
        }
    }
}

/// Runs one trajectory and returns the classical register, bit `k` of the
/// word holding classical bit `k`.
pub fn run_shot<R: Rng + ?Sized>(
    circuit: &Circuit,
    noise: &CircuitNoise,
    rng: &mut R,
) -> Result<u64> {
    run_shot_with(circuit, noise, &circuit.last_uses(), rng)
}

fn run_shot_with<R: Rng + ?Sized>(
    circuit: &Circuit,
    noise: &CircuitNoise,
    last_use: &[Option<usize>],
    rng: &mut R,
) -> Result<u64> {
    let mut reg = Register::new(circuit.num_qubits);
    let mut clbits = 0u64;
    for (i, inst) in circuit.instructions.iter().enumerate() {
        let mut collapsed: Vec<(usize, u8)> = Vec::new();
        match inst {
            Instruction::Gate(g) => noisy_gate(&mut reg, g, noise, rng)?,
            Instruction::Conditional { gate, clbits: cs } => {
                let parity = cs.iter().fold(0, |acc, &c| acc ^ ((clbits >> c) & 1));
                if parity == 1 {
                    noisy_gate(&mut reg, gate, noise, rng)?;
                } else {
                    for &q in gate.targets() {
                        reg.slot_of(q)?;
                    }
                }
            }
            Instruction::Measure { qubit, clbit } => {
                let s = reg.slot_of(*qubit)?;
                let bit = reg.state().measure_in_place(s, Basis::Z, rng)?;
                let c = &noise.readout[*qubit];
                let read = if rng.gen::<f64>() < c.flip_probability(bit) {
                    bit ^ 1
                } else {
                    bit
                };
                clbits = (clbits & !(1 << clbit)) | (u64::from(read) << clbit);
                collapsed.push((*qubit, bit));
            }
            Instruction::Idle {
                qubits,
                duration_us,
            } => {
                for &q in qubits {
                    if let Some(s) = reg.slot[q] {
                        apply_idle_decay(
                            reg.state(),
                            &[s],
                            *duration_us,
                            noise.t1_us[q],
                            noise.t2_us[q],
                            rng,
                        )?;
                    }
                }
            }
        }
        for q in 0..circuit.num_qubits {
            if last_use[q] == Some(i) && reg.slot[q].is_some() {
                let bit = match collapsed.iter().find(|(c, _)| *c == q) {
                    Some(&(_, b)) => b,
                    None => {
                        let s = reg.slot[q].expect("live");
                        reg.state().measure_in_place(s, Basis::Z, rng)?
                    }
                };
                reg.release(q, bit)?;
            }
        }
    }
    Ok(clbits)
}

/// Runs `shots` trajectories in parallel. Output is independent of the
/// thread count: shots are grouped in fixed chunks, each with its own rng
/// stream derived from `seed`.
pub fn run_shots(
    circuit: &Circuit,
    noise: &CircuitNoise,
    shots: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    noise.check(circuit.num_qubits)?;
    let last_use = circuit.last_uses();
    let chunks: Vec<Result<Vec<u64>>> = (0..shots.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let n = CHUNK.min(shots - chunk * CHUNK);
            (0..n)
                .map(|_| run_shot_with(circuit, noise, &last_use, &mut rng))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(shots);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell_circuit() -> Circuit {
        let mut c = Circuit::new(2, 2).unwrap();
        c.gate(GateOp::h(0)).unwrap();
        c.gate(GateOp::cnot(0, 1)).unwrap();
        c.measure(0, 0).unwrap();
        c.measure(1, 1).unwrap();
        c
    }

    #[test]
    fn bell_pairs_are_correlated() {
        let out = run_shots(&bell_circuit(), &CircuitNoise::noiseless(2), 2000, 1).unwrap();
        assert!(out.iter().all(|w| *w == 0 || *w == 3));
        let ones = out.iter().filter(|w| **w == 3).count();
        assert!((ones as f64 - 1000.0).abs() < 5.0 * 22.4);
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let mut noise = CircuitNoise::noiseless(2);
        noise.two_qubit_depol = 0.2;
        let a = run_shots(&bell_circuit(), &noise, 1000, 9).unwrap();
        let b = run_shots(&bell_circuit(), &noise, 1000, 9).unwrap();
        let c = run_shots(&bell_circuit(), &noise, 1000, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn conditional_uses_parity_of_bits() {
        // qubit 0 and 1 prepared in |1>, qubit 2 flipped iff b0 xor b1
        let mut c = Circuit::new(3, 3).unwrap();
        c.gate(GateOp::x(0)).unwrap();
        c.gate(GateOp::x(1)).unwrap();
        c.measure(0, 0).unwrap();
        c.measure(1, 1).unwrap();
        c.conditional(GateOp::x(2), vec![0, 1]).unwrap();
        c.conditional(GateOp::x(2), vec![0]).unwrap();
        c.measure(2, 2).unwrap();
        let out = run_shots(&c, &CircuitNoise::noiseless(3), 10, 0).unwrap();
        assert!(out.iter().all(|w| *w == 0b111));
    }

    #[test]
    fn long_chains_stay_small() {
        // a 40-qubit SWAP chain only ever holds a handful of live qubits
        let n = 40;
        let mut c = Circuit::new(n, 2).unwrap();
        c.gate(GateOp::x(0)).unwrap();
        for k in 0..n - 1 {
            c.gate(GateOp::swap(k, k + 1)).unwrap();
        }
        c.measure(n - 1, 1).unwrap();
        let out = run_shots(&c, &CircuitNoise::noiseless(n), 20, 0).unwrap();
        assert!(out.iter().all(|w| *w == 0b10));
    }

    #[test]
    fn readout_noise_flips_recorded_bits() {
        let mut c = Circuit::new(1, 1).unwrap();
        c.measure(0, 0).unwrap();
        let mut noise = CircuitNoise::noiseless(1);
        noise.readout[0] = ConfusionMatrix::from_flip_rates(0.25, 0.0).unwrap();
        let out = run_shots(&c, &noise, 20_000, 4).unwrap();
        let f = out.iter().filter(|w| **w == 1).count() as f64 / 20_000.0;
        assert!((f - 0.25).abs() < 5.0 * (0.25f64 * 0.75 / 20_000.0).sqrt());
    }

    #[test]
    fn invalid_instructions_are_rejected() {
        let mut c = Circuit::new(2, 1).unwrap();
        assert!(c.gate(GateOp::h(2)).is_err());
        assert!(c.measure(0, 1).is_err());
        assert!(c.idle(vec![0], -1.0).is_err());
        assert!(Circuit::new(2, 65).is_err());
    }
}

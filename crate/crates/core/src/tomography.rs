//! Two-qubit state tomography by linear inversion over the nine Pauli
//! measurement settings.
//!
//! Outcome vectors have four entries indexed `first_bit | second_bit << 1`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{exact, ConfusionMatrix};
use crate::error::{Error, Result};
use crate::linalg::{gates, CMatrix};
use crate::metrics::{nearest_physical, DensityMatrix};
use crate::mitigation::{michelot_project, qrem_correct};
use crate::sim::{Basis, GateOp, PureState};

/// Default shots per tomography setting.
pub const DEFAULT_SHOTS_PER_BASIS: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    fn matrix(self) -> CMatrix {
        match self {
            Pauli::X => gates::pauli_x(),
            Pauli::Y => gates::pauli_y(),
            Pauli::Z => gates::pauli_z(),
        }
    }

    /// Gates that rotate this Pauli's eigenbasis onto the computational basis.
    pub fn rotation(self, qubit: usize) -> Vec<GateOp> {
        match self {
            Pauli::X => vec![GateOp::h(qubit)],
            Pauli::Y => vec![GateOp::sdg(qubit), GateOp::h(qubit)],
            Pauli::Z => vec![],
        }
    }
}

/// Measurement setting: Pauli for the first and the second qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisPair {
    pub first: Pauli,
    pub second: Pauli,
}

impl BasisPair {
    pub const fn new(first: Pauli, second: Pauli) -> Self {
        Self { first, second }
    }
}

impl fmt::Display for BasisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{:?}", self.first, self.second)
    }
}

pub const BASIS_PAIRS: [BasisPair; 9] = {
    use Pauli::*;
    [
        BasisPair::new(X, X),
        BasisPair::new(X, Y),
        BasisPair::new(X, Z),
        BasisPair::new(Y, X),
        BasisPair::new(Y, Y),
        BasisPair::new(Y, Z),
        BasisPair::new(Z, X),
        BasisPair::new(Z, Y),
        BasisPair::new(Z, Z),
    ]
};

/// Basis-change gates for `pair`, applied before Z measurement of `first`
/// and `second`.
pub fn tomography_rotations(pair: BasisPair, first: usize, second: usize) -> Vec<GateOp> {
    let mut ops = pair.first.rotation(first);
    ops.extend(pair.second.rotation(second));
    ops
}

/// Outcome probabilities for each measurement setting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BasisDistributions(BTreeMap<BasisPair, [f64; 4]>);

impl BasisDistributions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pair: BasisPair, probs: [f64; 4]) {
        self.0.insert(pair, probs);
    }

    pub fn get(&self, pair: BasisPair) -> Result<&[f64; 4]> {
        self.0
            .get(&pair)
            .ok_or_else(|| Error::MissingBasis(pair.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BasisPair, &[f64; 4])> {
        self.0.iter()
    }

    fn check_complete(&self) -> Result<()> {
        for pair in BASIS_PAIRS {
            self.get(pair)?;
        }
        Ok(())
    }
}

/// Raw counts per measurement setting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TomographySet {
    pub shots_per_basis: u64,
    pub counts: BTreeMap<BasisPair, [u64; 4]>,
}

impl TomographySet {
    pub fn new(shots_per_basis: u64) -> Self {
        Self {
            shots_per_basis,
            counts: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, pair: BasisPair, outcome: usize) {
        self.counts.entry(pair).or_insert([0; 4])[outcome] += 1;
    }

    pub fn add_counts(&mut self, pair: BasisPair, counts: [u64; 4]) {
        let e = self.counts.entry(pair).or_insert([0; 4]);
        for (a, b) in e.iter_mut().zip(counts) {
            *a += b;
        }
    }

    pub fn total(&self, pair: BasisPair) -> u64 {
        self.counts.get(&pair).map_or(0, |c| c.iter().sum())
    }

    /// All nine settings present with exactly `shots_per_basis` counts each.
    pub fn validate_raw(&self) -> Result<()> {
        for pair in BASIS_PAIRS {
            let t = self.total(pair);
            if !self.counts.contains_key(&pair) {
                return Err(Error::MissingBasis(pair.to_string()));
            }
            if t != self.shots_per_basis {
                return Err(Error::InvalidExperiment(format!(
                    "basis {pair} has {t} shots, expected {}",
                    self.shots_per_basis
                )));
            }
        }
        Ok(())
    }

    /// Relative frequencies; settings with zero shots are reported missing.
    pub fn frequencies(&self) -> Result<BasisDistributions> {
        let mut out = BasisDistributions::new();
        for pair in BASIS_PAIRS {
            let c = self
                .counts
                .get(&pair)
                .ok_or_else(|| Error::MissingBasis(pair.to_string()))?;
            let t: u64 = c.iter().sum();
            if t == 0 {
                return Err(Error::MissingBasis(pair.to_string()));
            }
            out.insert(pair, c.map(|x| x as f64 / t as f64));
        }
        Ok(out)
    }
}

/// QREM on each setting (when `confusion` is given, first qubit then
/// second), then projection onto the simplex.
pub fn mitigate(
    raw: &BasisDistributions,
    confusion: Option<&[ConfusionMatrix; 2]>,
) -> Result<BasisDistributions> {
    let mut out = BasisDistributions::new();
    for (pair, p) in raw.iter() {
        let corrected = match confusion {
            Some(c) => qrem_correct(p, c)?,
            None => p.to_vec(),
        };
        let projected = michelot_project(&corrected);
        out.insert(*pair, [projected[0], projected[1], projected[2], projected[3]]);
    }
    Ok(out)
}

fn sign(bit: usize) -> f64 {
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Unprojected linear-inversion estimate `¼ Σ ⟨P⊗Q⟩ P⊗Q`. Single-qubit
/// expectations are averaged over the three settings that contain them.
pub fn linear_inversion(dists: &BasisDistributions) -> Result<CMatrix> {
    dists.check_complete()?;
    let mut first = BTreeMap::<Pauli, f64>::new();
    let mut second = BTreeMap::<Pauli, f64>::new();
    let mut rho = CMatrix::identity(4);
    for pair in BASIS_PAIRS {
        let p = dists.get(pair)?;
        let mut corr = 0.0;
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for (k, pk) in p.iter().enumerate() {
            let (a, b) = (k & 1, k >> 1);
            corr += sign(a) * sign(b) * pk;
            e1 += sign(a) * pk;
            e2 += sign(b) * pk;
        }
        *first.entry(pair.first).or_default() += e1 / 3.0;
        *second.entry(pair.second).or_default() += e2 / 3.0;
        let term = pair.second.matrix().kron(&pair.first.matrix());
        rho = &rho + &term.scale_real(corr);
    }
    let id = gates::pauli_i();
    for (p, e) in first {
        rho = &rho + &id.kron(&p.matrix()).scale_real(e);
    }
    for (p, e) in second {
        rho = &rho + &p.matrix().kron(&id).scale_real(e);
    }
    Ok(rho.scale_real(0.25))
}

/// Linear inversion followed by the nearest-physical projection.
pub fn reconstruct(dists: &BasisDistributions) -> Result<DensityMatrix> {
    nearest_physical(&linear_inversion(dists)?)
}

/// Exact distributions of qubits `first` and `second` of a pure state.
pub fn analytic_distributions(
    state: &PureState,
    first: usize,
    second: usize,
) -> Result<BasisDistributions> {
    let mut out = BasisDistributions::new();
    for pair in BASIS_PAIRS {
        let mut s = state.clone();
        for g in tomography_rotations(pair, first, second) {
            s.apply(&g)?;
        }
        let p = s.born_probabilities(&[first, second], &[Basis::Z, Basis::Z])?;
        out.insert(pair, [p[0], p[1], p[2], p[3]]);
    }
    Ok(out)
}

/// Exact distributions of a two-qubit density matrix.
pub fn density_distributions(rho: &CMatrix) -> BasisDistributions {
    let mut out = BasisDistributions::new();
    for pair in BASIS_PAIRS {
        let mut r = rho.clone();
        for g in tomography_rotations(pair, 0, 1) {
            r = exact::apply_unitary(&r, &g);
        }
        out.insert(pair, [0, 1, 2, 3].map(|k| r[(k, k)].re.max(0.0)));
    }
    out
}

/// Draws `shots` samples per setting from exact distributions.
pub fn sample_counts<R: Rng + ?Sized>(
    dists: &BasisDistributions,
    shots: u64,
    rng: &mut R,
) -> Result<TomographySet> {
    dists.check_complete()?;
    let mut set = TomographySet::new(shots);
    for (pair, p) in dists.iter() {
        let mut counts = [0u64; 4];
        for _ in 0..shots {
            counts[sample_index(p, rng)] += 1;
        }
        set.add_counts(*pair, counts);
    }
    Ok(set)
}

pub(crate) fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

/// Pauli expectation `⟨first ⊗ second⟩` of a matrix, `None` standing for
/// the identity.
pub fn pauli_expectation(rho: &CMatrix, first: Option<Pauli>, second: Option<Pauli>) -> f64 {
    let m = |p: Option<Pauli>| p.map_or_else(gates::pauli_i, Pauli::matrix);
    let op = m(second).kron(&m(first));
    let v: Complex64 = (rho * &op).trace();
    v.re
}

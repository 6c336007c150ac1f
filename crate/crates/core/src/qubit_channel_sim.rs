//! Dense density-matrix replay of qubit circuits: each gate is its ideal
//! unitary followed by a Kraus noise channel on the same qubits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ZERO};
use crate::tomography::KrausSet;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct QubitState {
    n_qubits: usize,
    rho: CMatrix,
}

fn check_size(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::ProblemTooLarge(format!("{n_qubits} qubits; the simulator supports 1..={MAX_QUBITS}")));
    }
    Ok(())
}

impl QubitState {
    pub fn from_density(rho: CMatrix) -> Result<Self> {
        let d = rho.nrows();
        if rho.ncols() != d || !d.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!("{}x{} is not a qubit density matrix", d, rho.ncols())));
        }
        let n_qubits = d.trailing_zeros() as usize;
        check_size(n_qubits)?;
        Ok(Self { n_qubits, rho })
    }

    /// Product of identical single-qubit pure states.
    pub fn product(n_qubits: usize, single: [C64; 2]) -> Result<Self> {
        check_size(n_qubits)?;
        let v = crate::linalg::CVector::from_row_slice(&single);
        let mut psi = crate::linalg::CVector::from_element(1, C64::new(1.0, 0.0));
        for _ in 0..n_qubits {
            psi = linalg::kron_vec(&psi, &v);
        }
        let psi = psi.unscale(psi.norm());
        Ok(Self { n_qubits, rho: &psi * psi.adjoint() })
    }

    /// `|+⟩^⊗n`.
    pub fn plus(n_qubits: usize) -> Result<Self> {
        Self::product(n_qubits, [C64::new(1.0, 0.0), C64::new(1.0, 0.0)])
    }

    /// `|+i⟩^⊗n`.
    pub fn plus_i(n_qubits: usize) -> Result<Self> {
        Self::product(n_qubits, [C64::new(1.0, 0.0), C64::new(0.0, 1.0)])
    }

    /// Computational basis state; qubit 0 is the most significant bit.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_size(n_qubits)?;
        let d = 1usize << n_qubits;
        if index >= d {
            return Err(Error::InvalidParameter(format!("basis index {index} out of range")));
        }
        let mut rho = CMatrix::zeros(d, d);
        rho[(index, index)] = C64::new(1.0, 0.0);
        Ok(Self { n_qubits, rho })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    /// Checks Hermiticity, the trace window and positivity.
    pub fn validate(&self, leakage_budget: f64) -> Result<()> {
        if !linalg::is_hermitian(&self.rho, 1e-10) {
            return Err(Error::NonPhysicalChannel("state is not Hermitian".into()));
        }
        let tr = self.trace();
        if tr < 1.0 - leakage_budget || tr > 1.0 + 1e-8 {
            return Err(Error::NonPhysicalChannel(format!("trace {tr} outside [1 - {leakage_budget}, 1 + 1e-8]")));
        }
        let (vals, _) = linalg::eigh(&self.rho);
        if vals[0] < -1e-7 {
            return Err(Error::NonPhysicalChannel(format!("negative eigenvalue {:e}", vals[0])));
        }
        Ok(())
    }
}

/// Ideal gate unitary plus the noise that follows it.
#[derive(Debug, Clone)]
pub struct NoisyGate {
    pub ideal: CMatrix,
    pub kraus: KrausSet,
    pub targets: Vec<usize>,
}

impl NoisyGate {
    pub fn new(ideal: CMatrix, kraus: KrausSet, targets: Vec<usize>) -> Result<Self> {
        let d = 1usize << targets.len();
        if ideal.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("unitary must be {d}x{d} for {} targets", targets.len())));
        }
        if kraus.operators.is_empty() || kraus.operators.iter().any(|a| a.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!("Kraus operators must be {d}x{d}")));
        }
        Ok(Self { ideal, kraus, targets })
    }

    pub fn noiseless(ideal: CMatrix, targets: Vec<usize>) -> Result<Self> {
        let d = ideal.nrows();
        Self::new(ideal, KrausSet { operators: vec![linalg::identity(d)], clipped: Vec::new() }, targets)
    }

    /// Superoperator of `A_k U · U† A_k†` on the target qubits.
    fn local_superop(&self) -> CMatrix {
        let d = self.ideal.nrows();
        let mut s = CMatrix::zeros(d * d, d * d);
        for a in &self.kraus.operators {
            let k = a * &self.ideal;
            s += linalg::kron(&k.conjugate(), &k);
        }
        s
    }
}

/// Full-register offsets of every target-bit pattern, indexed like the local
/// gate (first target most significant).
fn target_offsets(n_qubits: usize, targets: &[usize]) -> Vec<usize> {
    let k = targets.len();
    (0..1usize << k)
        .map(|local| {
            targets
                .iter()
                .enumerate()
                .filter(|(j, _)| (local >> (k - 1 - j)) & 1 == 1)
                .map(|(_, &q)| 1usize << (n_qubits - 1 - q))
                .sum()
        })
        .collect()
}

/// Register indices with every target bit cleared.
fn base_indices(n_qubits: usize, targets: &[usize]) -> Vec<usize> {
    let mask: usize = targets.iter().map(|&q| 1usize << (n_qubits - 1 - q)).sum();
    (0..1usize << n_qubits).filter(|i| i & mask == 0).collect()
}

/// Applies `gate` as `ρ ↦ Σ_k A_k U ρ U† A_k†`.
pub fn apply_noisy_gate(state: &QubitState, gate: &NoisyGate) -> Result<QubitState> {
    let n = state.n_qubits;
    let t = &gate.targets;
    if t.iter().any(|&q| q >= n) {
        return Err(Error::DimensionMismatch(format!("target out of range for {n} qubits")));
    }
    for (i, a) in t.iter().enumerate() {
        if t[i + 1..].contains(a) {
            return Err(Error::InvalidParameter("gate targets must be distinct".into()));
        }
    }
    let s = gate.local_superop();
    let s_rows: Vec<C64> = s.transpose().as_slice().to_vec();
    let offs = target_offsets(n, t);
    let bases = base_indices(n, t);
    let dl = offs.len();
    let big = state.dim();
    let src = &state.rho;
    let mut out = CMatrix::zeros(big, big);
    let mut gathered = vec![ZERO; dl * dl];
    for &c0 in &bases {
        for &r0 in &bases {
            // Column-major local vectorization: index a + dl·b for ρ[a, b].
            for (b, ob) in offs.iter().enumerate() {
                for (a, oa) in offs.iter().enumerate() {
                    gathered[a + dl * b] = src[(r0 + oa, c0 + ob)];
                }
            }
            for (b, ob) in offs.iter().enumerate() {
                for (a, oa) in offs.iter().enumerate() {
                    let k = a + dl * b;
                    let row = &s_rows[k * dl * dl..(k + 1) * dl * dl];
                    let mut acc = ZERO;
                    for (x, y) in row.iter().zip(&gathered) {
                        acc += x * y;
                    }
                    out[(r0 + oa, c0 + ob)] = acc;
                }
            }
        }
    }
    Ok(QubitState { n_qubits: n, rho: out })
}

pub fn run_circuit(circuit: &[NoisyGate], initial: &QubitState) -> Result<QubitState> {
    let mut state = initial.clone();
    for g in circuit {
        state = apply_noisy_gate(&state, g)?;
    }
    Ok(state)
}

/// Computational-basis outcome probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub probabilities: Vec<f64>,
    /// Trace of the state before any renormalization.
    pub trace: f64,
    /// Factor applied to the clipped diagonal; 1 unless probability leaked.
    pub renormalization: f64,
}

impl Distribution {
    pub fn n_qubits(&self) -> usize {
        self.probabilities.len().trailing_zeros() as usize
    }
}

pub fn measure_distribution(state: &QubitState) -> Distribution {
    let mut probabilities: Vec<f64> = (0..state.dim()).map(|i| state.rho[(i, i)].re.max(0.0)).collect();
    let trace = state.trace();
    let total: f64 = probabilities.iter().sum();
    let renormalization = if trace < 1.0 && total > 0.0 { 1.0 / total } else { 1.0 };
    if renormalization != 1.0 {
        probabilities.iter_mut().for_each(|p| *p *= renormalization);
    }
    Distribution { probabilities, trace, renormalization }
}

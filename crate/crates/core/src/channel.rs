//! Linear maps on `n`-qubit operators, stored as column-major superoperators.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ONE, ZERO};

/// The `4^n` Pauli strings in lexicographic `{I, X, Y, Z}^⊗n` order with
/// qubit 0 as the leftmost tensor factor.
pub fn pauli_basis(n_qubits: usize) -> Vec<CMatrix> {
    let single = linalg::pauli_1q();
    let mut out = vec![CMatrix::identity(1, 1)];
    for _ in 0..n_qubits {
        let mut next = Vec::with_capacity(out.len() * 4);
        for p in &out {
            for s in &single {
                next.push(linalg::kron(p, s));
            }
        }
        out = next;
    }
    out
}

/// Pauli-string label such as `"XZ"` for index `j` of [`pauli_basis`].
pub fn pauli_label(n_qubits: usize, mut j: usize) -> String {
    let mut chars = vec!['I'; n_qubits];
    for q in (0..n_qubits).rev() {
        chars[q] = ['I', 'X', 'Y', 'Z'][j % 4];
        j /= 4;
    }
    chars.into_iter().collect()
}

/// Channel on the `d = 2^n` dimensional qubit space with
/// `vec(E(X)) = S·vec(X)` under column-major vectorization.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitChannel {
    n_qubits: usize,
    superop: CMatrix,
}

impl QubitChannel {
    pub fn from_superop(n_qubits: usize, superop: CMatrix) -> Result<Self> {
        let d2 = 1usize << (2 * n_qubits);
        if superop.shape() != (d2, d2) {
            return Err(Error::DimensionMismatch(format!("superoperator must be {d2}x{d2}")));
        }
        Ok(Self { n_qubits, superop })
    }

    pub fn identity(n_qubits: usize) -> Self {
        let d2 = 1usize << (2 * n_qubits);
        Self { n_qubits, superop: linalg::identity(d2) }
    }

    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        Self::from_kraus(std::slice::from_ref(u))
    }

    pub fn from_kraus(ops: &[CMatrix]) -> Result<Self> {
        let d = ops.first().map(|a| a.nrows()).unwrap_or(0);
        let n_qubits = qubits_for_dim(d)?;
        let mut s = CMatrix::zeros(d * d, d * d);
        for a in ops {
            if a.shape() != (d, d) {
                return Err(Error::DimensionMismatch("Kraus operators must share one square shape".into()));
            }
            s += linalg::kron(&a.conjugate(), a);
        }
        Ok(Self { n_qubits, superop: s })
    }

    /// Builds the map from its action on the Pauli basis of [`pauli_basis`].
    pub fn from_pauli_images(n_qubits: usize, images: &[CMatrix]) -> Result<Self> {
        let d = 1usize << n_qubits;
        let paulis = pauli_basis(n_qubits);
        if images.len() != paulis.len() {
            return Err(Error::DimensionMismatch(format!("expected {} Pauli images", paulis.len())));
        }
        let mut s = CMatrix::zeros(d * d, d * d);
        for (p, e) in paulis.iter().zip(images) {
            if e.shape() != (d, d) {
                return Err(Error::DimensionMismatch("Pauli image has wrong shape".into()));
            }
            // X = (1/d) Σ_j Tr(P_j X) P_j, so S = (1/d) Σ_j vec(E(P_j)) vec(P_j)†.
            s += linalg::vec_colmajor(e) * linalg::vec_colmajor(p).adjoint();
        }
        Ok(Self { n_qubits, superop: s.unscale(d as f64) })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn superop(&self) -> &CMatrix {
        &self.superop
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let d = self.dim();
        linalg::unvec_colmajor(&(&self.superop * linalg::vec_colmajor(x)), d)
    }

    /// `other ∘ self`: apply `self` first.
    pub fn then(&self, other: &Self) -> Result<Self> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch("channels act on different qubit counts".into()));
        }
        Ok(Self { n_qubits: self.n_qubits, superop: &other.superop * &self.superop })
    }

    pub fn pauli_images(&self) -> Vec<CMatrix> {
        pauli_basis(self.n_qubits).iter().map(|p| self.apply(p)).collect()
    }

    /// `1 − Tr E(I/d)`: probability lost from the qubit space.
    pub fn trace_loss(&self) -> f64 {
        let d = self.dim();
        let id = linalg::identity(d).unscale(d as f64);
        1.0 - self.apply(&id).trace().re
    }

    /// Conjugates the map by a unitary, `X ↦ V E(V† X V) V†`.
    pub fn conjugated(&self, v: &CMatrix) -> Result<Self> {
        let vc = Self::from_unitary(v)?;
        let vd = Self::from_unitary(&v.adjoint())?;
        vd.then(self)?.then(&vc)
    }
}

fn qubits_for_dim(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::DimensionMismatch(format!("dimension {d} is not a power of two")));
    }
    Ok(d.trailing_zeros() as usize)
}

/// Average gate fidelity of `channel` with respect to the unitary `target`,
/// `[Σ_j Tr(U P_j† U† E(P_j)) + d²] / [d²(d+1)]`.
pub fn average_gate_fidelity(channel: &QubitChannel, target: &CMatrix) -> Result<f64> {
    let d = channel.dim();
    if target.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!("target must be {d}x{d}")));
    }
    let ud = target.adjoint();
    let mut sum = ZERO;
    for p in pauli_basis(channel.n_qubits) {
        let ideal = target * p.adjoint() * &ud;
        sum += (ideal * channel.apply(&p)).trace();
    }
    let d2 = (d * d) as f64;
    let f = (sum + C64::new(d2, 0.0)) / (d2 * (d as f64 + 1.0));
    if f.im.abs() > 1e-9 || !(f.re > -1e-9 && f.re <= 1.0 + 1e-9) {
        return Err(Error::NonPhysicalChannel(format!("average gate fidelity evaluated to {f}")));
    }
    Ok(f.re)
}

/// Fully depolarizing channel `X ↦ Tr(X) I/d`.
pub fn depolarizing(n_qubits: usize) -> QubitChannel {
    let d = 1usize << n_qubits;
    let images = pauli_basis(n_qubits)
        .iter()
        .map(|p| linalg::identity(d) * (p.trace() / d as f64))
        .collect::<Vec<_>>();
    QubitChannel::from_pauli_images(n_qubits, &images).expect("shapes are consistent")
}

/// Amplitude damping `{[[1,0],[0,√(1−p)]], [[0,√p],[0,0]]}`.
pub fn amplitude_damping_kraus(p: f64) -> [CMatrix; 2] {
    let a0 = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, C64::new((1.0 - p).sqrt(), 0.0)]);
    let a1 = CMatrix::from_row_slice(2, 2, &[ZERO, C64::new(p.sqrt(), 0.0), ZERO, ZERO]);
    [a0, a1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, pauli_rotation};

    #[test]
    fn pauli_basis_order_and_labels() {
        let b = pauli_basis(2);
        assert_eq!(b.len(), 16);
        let [_, x, _, z] = linalg::pauli_1q();
        assert_eq!(b[1 * 4 + 3], linalg::kron(&x, &z));
        assert_eq!(pauli_label(2, 7), "XZ");
        assert_eq!(pauli_label(1, 2), "Y");
    }

    #[test]
    fn perfect_gate_has_unit_fidelity() {
        let [_, x, _, _] = linalg::pauli_1q();
        let u = pauli_rotation(&x, 0.7);
        let ch = QubitChannel::from_unitary(&u).unwrap();
        assert!((average_gate_fidelity(&ch, &u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn depolarizing_fidelity_is_one_half() {
        let ch = depolarizing(1);
        let f = average_gate_fidelity(&ch, &linalg::identity(2)).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pauli_images_round_trip() {
        let k = amplitude_damping_kraus(0.3);
        let ch = QubitChannel::from_kraus(&k).unwrap();
        let rebuilt = QubitChannel::from_pauli_images(1, &ch.pauli_images()).unwrap();
        assert!(max_abs_diff(ch.superop(), rebuilt.superop()) < 1e-14);
        let rho = CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]);
        let out = ch.apply(&rho);
        assert!((out[(0, 0)].re - 0.3).abs() < 1e-14);
        assert!((out[(1, 1)].re - 0.7).abs() < 1e-14);
    }

    #[test]
    fn composition_order() {
        let [_, x, _, z] = linalg::pauli_1q();
        let a = QubitChannel::from_unitary(&pauli_rotation(&x, 0.4)).unwrap();
        let b = QubitChannel::from_unitary(&pauli_rotation(&z, 1.1)).unwrap();
        let ab = a.then(&b).unwrap();
        let u = pauli_rotation(&z, 1.1) * pauli_rotation(&x, 0.4);
        let direct = QubitChannel::from_unitary(&u).unwrap();
        assert!(max_abs_diff(ab.superop(), direct.superop()) < 1e-14);
    }
}

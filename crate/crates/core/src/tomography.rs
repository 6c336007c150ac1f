//! Process tomography on the qubit subspace: Pauli transfer matrices, noise
//! factorization, PTM ↔ Choi ↔ Kraus conversions, the matched standard-qubit
//! relaxation model and the on-disk noise library.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{average_gate_fidelity, pauli_basis, QubitChannel};
use crate::error::{Error, Result};
use crate::knr_gates::{target_unitary, wrap_angle, CatGateModel, GateKind, RxCalibration};
use crate::linalg::{self, CMatrix, C64, ONE, ZERO};

/// Eigenvalues of a Choi matrix below this are a complete-positivity failure.
pub const CHOI_NEGATIVE_TOL: f64 = 1e-6;
/// Kraus operators whose weight falls below this are dropped.
pub const KRAUS_WEIGHT_FLOOR: f64 = 1e-10;

/// Real `d² x d²` matrix `R_ij = Tr[P_i E(P_j)]/d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTransferMatrix {
    pub n_qubits: usize,
    pub entries: DMatrix<f64>,
}

impl PauliTransferMatrix {
    pub fn identity(n_qubits: usize) -> Self {
        let d2 = 1usize << (2 * n_qubits);
        Self { n_qubits, entries: DMatrix::identity(d2, d2) }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn compose(&self, first: &Self) -> Result<Self> {
        if self.n_qubits != first.n_qubits {
            return Err(Error::DimensionMismatch("PTMs act on different qubit counts".into()));
        }
        Ok(Self { n_qubits: self.n_qubits, entries: &self.entries * &first.entries })
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .entries
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("PTM is not invertible".into()))?;
        Ok(Self { n_qubits: self.n_qubits, entries: inv })
    }

    /// First row equals `(1, 0, ..., 0)` within `tol`.
    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.entries.row(0).iter().enumerate().all(|(j, &v)| (v - if j == 0 { 1.0 } else { 0.0 }).abs() <= tol)
    }

    pub fn to_channel(&self) -> QubitChannel {
        let paulis = pauli_basis(self.n_qubits);
        let d = self.dim();
        let images: Vec<CMatrix> = (0..paulis.len())
            .map(|j| {
                let mut m = CMatrix::zeros(d, d);
                for (i, p) in paulis.iter().enumerate() {
                    let r = self.entries[(i, j)];
                    if r != 0.0 {
                        m += p * C64::new(r, 0.0);
                    }
                }
                m
            })
            .collect();
        QubitChannel::from_pauli_images(self.n_qubits, &images).expect("consistent shapes")
    }
}

pub fn ptm_from_channel(channel: &QubitChannel) -> Result<PauliTransferMatrix> {
    let n = channel.n_qubits();
    let d = channel.dim() as f64;
    let paulis = pauli_basis(n);
    let images = channel.pauli_images();
    let d2 = paulis.len();
    let mut entries = DMatrix::zeros(d2, d2);
    for (j, e) in images.iter().enumerate() {
        for (i, p) in paulis.iter().enumerate() {
            let v = (p * e).trace() / d;
            if v.im.abs() > 1e-8 {
                return Err(Error::NonPhysicalChannel(format!(
                    "PTM entry ({i}, {j}) has imaginary part {:e}; the map is not Hermiticity preserving",
                    v.im
                )));
            }
            entries[(i, j)] = v.re;
        }
    }
    Ok(PauliTransferMatrix { n_qubits: n, entries })
}

/// Checks that a black-box map acts linearly on a couple of random-looking
/// superpositions of Pauli inputs.
pub fn linearity_audit<F>(n_qubits: usize, map: F, tol: f64) -> Result<()>
where
    F: Fn(&CMatrix) -> Result<CMatrix>,
{
    let paulis = pauli_basis(n_qubits);
    let images = paulis.iter().map(&map).collect::<Result<Vec<_>>>()?;
    for seed in 1..=2usize {
        let coeffs: Vec<f64> = (0..paulis.len()).map(|k| (((k + 3) * (seed * 7 + 1)) % 11) as f64 / 11.0 - 0.4).collect();
        let d = paulis[0].nrows();
        let mut input = CMatrix::zeros(d, d);
        let mut expected = CMatrix::zeros(d, d);
        for ((p, e), &w) in paulis.iter().zip(&images).zip(&coeffs) {
            input += p * C64::new(w, 0.0);
            expected += e * C64::new(w, 0.0);
        }
        let deviation = linalg::max_abs_diff(&map(&input)?, &expected);
        if deviation > tol {
            return Err(Error::NonLinearChannel { deviation });
        }
    }
    Ok(())
}

/// `R_noise = R_E · R_ideal⁻¹`.
pub fn noise_ptm(r_e: &PauliTransferMatrix, r_ideal: &PauliTransferMatrix) -> Result<PauliTransferMatrix> {
    r_e.compose(&r_ideal.inverse()?)
}

/// Choi state `ρ_E = (1/d²) Σ R_ij P_jᵀ ⊗ P_i`, unit trace for TP maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    pub n_qubits: usize,
    pub entries: CMatrix,
}

pub fn ptm_to_choi(r: &PauliTransferMatrix) -> ChoiMatrix {
    let paulis = pauli_basis(r.n_qubits);
    let d = r.dim();
    let mut rho = CMatrix::zeros(d * d, d * d);
    for (j, pj) in paulis.iter().enumerate() {
        let pjt = pj.transpose();
        for (i, pi) in paulis.iter().enumerate() {
            let v = r.entries[(i, j)];
            if v != 0.0 {
                rho += linalg::kron(&pjt, pi) * C64::new(v, 0.0);
            }
        }
    }
    ChoiMatrix { n_qubits: r.n_qubits, entries: rho.unscale((d * d) as f64) }
}

/// Inverse of [`ptm_to_choi`]: `R_ij = Tr[(P_jᵀ ⊗ P_i) ρ_E]`.
pub fn choi_to_ptm(choi: &ChoiMatrix) -> PauliTransferMatrix {
    let paulis = pauli_basis(choi.n_qubits);
    let d2 = paulis.len();
    let mut entries = DMatrix::zeros(d2, d2);
    for (j, pj) in paulis.iter().enumerate() {
        let pjt = pj.transpose();
        for (i, pi) in paulis.iter().enumerate() {
            entries[(i, j)] = (linalg::kron(&pjt, pi) * &choi.entries).trace().re;
        }
    }
    PauliTransferMatrix { n_qubits: choi.n_qubits, entries }
}

/// Kraus operators plus any small negative Choi eigenvalues that were
/// clipped to zero on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub operators: Vec<CMatrix>,
    pub clipped: Vec<f64>,
}

impl KrausSet {
    pub fn dim(&self) -> usize {
        self.operators.first().map(|a| a.nrows()).unwrap_or(0)
    }

    /// `Σ A_k† A_k`.
    pub fn completeness(&self) -> CMatrix {
        let d = self.dim();
        let mut s = CMatrix::zeros(d, d);
        for a in &self.operators {
            s += a.adjoint() * a;
        }
        s
    }

    /// Largest eigenvalue of `Σ A†A − I` (≤ 0 for trace non-increasing maps).
    pub fn completeness_excess(&self) -> f64 {
        let d = self.dim();
        let (vals, _) = linalg::eigh(&(self.completeness() - linalg::identity(d)));
        vals.last().copied().unwrap_or(0.0)
    }

    pub fn to_channel(&self) -> Result<QubitChannel> {
        QubitChannel::from_kraus(&self.operators)
    }
}

/// Eigen-decomposes the Choi state; `A = √(dλ)·unvec(v)` with column-major
/// unvectorization.
pub fn choi_to_kraus(choi: &ChoiMatrix) -> Result<KrausSet> {
    let d = 1usize << choi.n_qubits;
    if !linalg::is_hermitian(&choi.entries, 1e-8) {
        return Err(Error::NonPhysicalChannel("Choi matrix is not Hermitian".into()));
    }
    let (vals, vecs) = linalg::eigh(&choi.entries);
    let mut operators = Vec::new();
    let mut clipped = Vec::new();
    for (k, &lam) in vals.iter().enumerate() {
        if lam < -CHOI_NEGATIVE_TOL {
            return Err(Error::NotCompletelyPositive { eigenvalue: lam });
        }
        if lam < 0.0 {
            log::debug!("clipping Choi eigenvalue {lam:e} to zero");
            clipped.push(lam);
            continue;
        }
        let weight = d as f64 * lam;
        if weight < KRAUS_WEIGHT_FLOOR {
            continue;
        }
        let v = vecs.column(k).into_owned();
        operators.push(linalg::unvec_colmajor(&v, d) * C64::new(weight.sqrt(), 0.0));
    }
    if operators.is_empty() {
        operators.push(CMatrix::zeros(d, d));
    }
    Ok(KrausSet { operators, clipped })
}

pub fn kraus_to_ptm(kraus: &KrausSet) -> Result<PauliTransferMatrix> {
    ptm_from_channel(&kraus.to_channel()?)
}

/// Relaxation rate giving a standard qubit the same first-order average
/// gate fidelity, `Γ₁ = 2(d+1)(1−F̄)/(d·T_g·n)`.
pub fn matched_relaxation_rate(fbar: f64, t_gate: f64, n_qubits: usize) -> Result<f64> {
    if !(fbar > 0.0 && fbar <= 1.0) {
        return Err(Error::InvalidParameter(format!("average fidelity must lie in (0, 1], got {fbar}")));
    }
    if !(t_gate > 0.0) || !(1..=2).contains(&n_qubits) {
        return Err(Error::InvalidParameter("need t_gate > 0 and one or two qubits".into()));
    }
    let d = (1usize << n_qubits) as f64;
    Ok(2.0 * (d + 1.0) * (1.0 - fbar) / (d * t_gate * n_qubits as f64))
}

/// Lindblad evolution of ideal two-level qubits: `H = (θ/2T_g)·P` with `P`
/// the gate's Pauli generator and `√Γ₁ σ₋` on every qubit, no dephasing.
pub fn standard_qubit_gate_channel(kind: GateKind, angle: f64, gamma1: f64, t_gate: f64) -> Result<QubitChannel> {
    if !(gamma1 >= 0.0) || !(t_gate > 0.0) {
        return Err(Error::InvalidParameter("need gamma1 >= 0 and t_gate > 0".into()));
    }
    let [_, x, y, z] = linalg::pauli_1q();
    let generator = match kind {
        GateKind::Rx => x,
        GateKind::Ry => y,
        GateKind::Rz => z.clone(),
        GateKind::Rzz => linalg::kron(&z, &z),
    };
    let n = kind.n_qubits();
    let d = 1usize << n;
    let h = generator * C64::new(angle / (2.0 * t_gate), 0.0);
    let id = linalg::identity(d);
    // Column-major: vec(AXB) = (Bᵀ ⊗ A) vec(X).
    let mut l = (linalg::kron(&id, &h) - linalg::kron(&h.transpose(), &id)) * C64::new(0.0, -1.0);
    let lower = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
    for q in 0..n {
        let factors: Vec<CMatrix> = (0..n).map(|k| if k == q { lower.clone() } else { linalg::identity(2) }).collect();
        let c = linalg::kron_all(&factors) * C64::new(gamma1.sqrt(), 0.0);
        let cdc = c.adjoint() * &c;
        l += linalg::kron(&c.conjugate(), &c)
            - linalg::kron(&id, &cdc).scale(0.5)
            - linalg::kron(&cdc.transpose(), &id).scale(0.5);
    }
    QubitChannel::from_superop(n, (l * C64::new(t_gate, 0.0)).exp())
}

/// How a table serves angles outside its `[0, π]` bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeAngleRule {
    /// Noise of `−θ` is the |θ| noise conjugated by Z on every target qubit.
    ZConjugation,
    /// Noise of `−θ` is the entry-wise complex conjugate of the |θ| noise.
    ComplexConjugation,
    /// A single bin serves every angle.
    AngleIndependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    Cat,
    Standard,
}

/// Complex entries serialized as `[re, im]`, rows outermost.
pub type SerializedMatrix = Vec<Vec<[f64; 2]>>;

pub fn serialize_matrix(m: &CMatrix) -> SerializedMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn deserialize_matrix(rows: &SerializedMatrix) -> Result<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::NoiseLibrary("Kraus operator is not square".into()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEntry {
    pub angle: f64,
    pub kraus_operators: Vec<SerializedMatrix>,
    pub leakage: f64,
    /// Average gate fidelity of the full (noise ∘ ideal) channel at this bin.
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMetadata {
    pub alpha: f64,
    pub kappa: f64,
    pub t_gate: f64,
    pub dim: usize,
    pub gamma1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateNoiseTable {
    pub kind: GateKind,
    pub source: NoiseSource,
    pub negative_angles: NegativeAngleRule,
    pub metadata: NoiseMetadata,
    /// Sorted by angle.
    pub entries: Vec<NoiseEntry>,
}

impl GateNoiseTable {
    /// Kraus noise for the nearest bin to `angle` (wrapped into `(−π, π]`).
    pub fn lookup(&self, angle: f64) -> Result<Vec<CMatrix>> {
        if self.entries.is_empty() {
            return Err(Error::NoiseLibrary(format!("{} table has no entries", self.kind)));
        }
        let a = wrap_angle(angle);
        let (target, flip) = match self.negative_angles {
            NegativeAngleRule::AngleIndependent => (a.abs(), false),
            _ => (a.abs(), a < 0.0),
        };
        let entry = self
            .entries
            .iter()
            .min_by(|x, y| (x.angle - target).abs().partial_cmp(&(y.angle - target).abs()).unwrap())
            .unwrap();
        let ops = entry.kraus_operators.iter().map(deserialize_matrix).collect::<Result<Vec<_>>>()?;
        if !flip {
            return Ok(ops);
        }
        Ok(match self.negative_angles {
            NegativeAngleRule::ZConjugation => {
                let [_, _, _, z] = linalg::pauli_1q();
                let zs = linalg::kron_all(&vec![z; self.kind.n_qubits()]);
                ops.iter().map(|a| &zs * a * &zs).collect()
            }
            NegativeAngleRule::ComplexConjugation => ops.iter().map(|a| a.conjugate()).collect(),
            NegativeAngleRule::AngleIndependent => ops,
        })
    }

    pub fn mean_fidelity(&self) -> f64 {
        self.entries.iter().map(|e| e.fidelity).sum::<f64>() / self.entries.len().max(1) as f64
    }
}

/// Angle-binned Kraus noise for a set of gates from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLibrary {
    pub source: NoiseSource,
    pub tables: Vec<GateNoiseTable>,
    /// Hash of the run configuration that produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl NoiseLibrary {
    pub fn table(&self, kind: GateKind) -> Result<&GateNoiseTable> {
        self.tables
            .iter()
            .find(|t| t.kind == kind)
            .ok_or_else(|| Error::NoiseLibrary(format!("no {kind} table in the {:?} library", self.source)))
    }

    pub fn lookup(&self, kind: GateKind, angle: f64) -> Result<Vec<CMatrix>> {
        self.table(kind)?.lookup(angle)
    }

    pub fn n_entries(&self) -> usize {
        self.tables.iter().map(|t| t.entries.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Largest `λ_max(Σ A†A − I)` over every entry.
    pub fn max_completeness_excess(&self) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for t in &self.tables {
            for e in &t.entries {
                let ops = e.kraus_operators.iter().map(deserialize_matrix).collect::<Result<Vec<_>>>()?;
                let ks = KrausSet { operators: ops, clipped: Vec::new() };
                worst = worst.max(ks.completeness_excess());
            }
        }
        Ok(worst)
    }
}

/// Noise Kraus set of a full gate channel relative to its ideal rotation.
pub fn extract_noise(channel: &QubitChannel, kind: GateKind, angle: f64) -> Result<KrausSet> {
    let r_e = ptm_from_channel(channel)?;
    let ideal = QubitChannel::from_unitary(&target_unitary(kind, angle))?;
    let r_ideal = ptm_from_channel(&ideal)?;
    choi_to_kraus(&ptm_to_choi(&noise_ptm(&r_e, &r_ideal)?))
}

fn noise_entry(channel: &QubitChannel, kind: GateKind, angle: f64, leakage: f64) -> Result<NoiseEntry> {
    let kraus = extract_noise(channel, kind, angle)?;
    let worst = kraus.clipped.iter().cloned().fold(0.0, f64::min);
    if worst < -1e-10 {
        log::warn!("{kind} bin at {angle:.4}: clipped {} Choi eigenvalue(s), down to {worst:e}", kraus.clipped.len());
    } else if !kraus.clipped.is_empty() {
        log::debug!("{kind} bin at {angle:.4}: clipped {} round-off Choi eigenvalue(s)", kraus.clipped.len());
    }
    let fidelity = average_gate_fidelity(channel, &target_unitary(kind, angle))?;
    Ok(NoiseEntry {
        angle,
        kraus_operators: kraus.operators.iter().map(serialize_matrix).collect(),
        leakage,
        fidelity,
    })
}

/// Cat-qubit noise table from lossy pulse simulations at each bin angle.
pub fn build_cat_noise_table(
    model: &CatGateModel,
    kind: GateKind,
    bins: &[f64],
    calibration: Option<&RxCalibration>,
) -> Result<GateNoiseTable> {
    let entries = bins
        .par_iter()
        .map(|&angle| {
            let gc = model.gate_channel(kind, angle, true, calibration)?;
            noise_entry(&gc.channel, kind, angle, gc.leakage)
                .map_err(|e| Error::NoiseLibrary(format!("{kind} bin at {angle}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let negative_angles = if bins.len() == 1 { NegativeAngleRule::AngleIndependent } else { NegativeAngleRule::ZConjugation };
    Ok(GateNoiseTable {
        kind,
        source: NoiseSource::Cat,
        negative_angles,
        metadata: NoiseMetadata {
            alpha: model.alpha(),
            kappa: model.kappa,
            t_gate: kind.t_gate(),
            dim: model.dim,
            gamma1: None,
        },
        entries,
    })
}

/// Standard-qubit noise table at the given relaxation rate.
pub fn build_standard_noise_table(kind: GateKind, bins: &[f64], gamma1: f64, t_gate: f64) -> Result<GateNoiseTable> {
    let entries = bins
        .par_iter()
        .map(|&angle| {
            let ch = standard_qubit_gate_channel(kind, angle, gamma1, t_gate)?;
            noise_entry(&ch, kind, angle, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    // The relaxation Lindbladian is real, so reversing the rotation is
    // complex conjugation; for single-qubit gates Z conjugation is exact too.
    let negative_angles = match kind {
        GateKind::Rzz => NegativeAngleRule::ComplexConjugation,
        _ => NegativeAngleRule::ZConjugation,
    };
    Ok(GateNoiseTable {
        kind,
        source: NoiseSource::Standard,
        negative_angles,
        metadata: NoiseMetadata { alpha: 0.0, kappa: 0.0, t_gate, dim: 2, gamma1: Some(gamma1) },
        entries,
    })
}

/// Bin counts per gate kind. A count of one stores a single angle-independent
/// bin at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryBins {
    pub bins: Vec<(GateKind, usize)>,
}

impl LibraryBins {
    /// R_X with 180 bins, R_ZZ with one.
    pub fn cat_default() -> Self {
        Self { bins: vec![(GateKind::Rx, 180), (GateKind::Rzz, 1)] }
    }

    /// R_X and R_ZZ with 180 bins each.
    pub fn standard_default() -> Self {
        Self { bins: vec![(GateKind::Rx, 180), (GateKind::Rzz, 180)] }
    }

    /// Adds the tables needed by circuits with fields or the Y mixer:
    /// R_Z with one bin on cat qubits (it preserves the noise bias) and 180
    /// on standard qubits, R_Y with 180.
    pub fn with_toy_gates(mut self, source: NoiseSource) -> Self {
        let rz = match source {
            NoiseSource::Cat => 1,
            NoiseSource::Standard => 180,
        };
        for (kind, n) in [(GateKind::Rz, rz), (GateKind::Ry, 180)] {
            if !self.bins.iter().any(|(k, _)| *k == kind) {
                self.bins.push((kind, n));
            }
        }
        self
    }

    pub fn only(mut self, kinds: &[GateKind]) -> Self {
        self.bins.retain(|(k, _)| kinds.contains(k));
        self
    }

    fn angles(n: usize) -> Vec<f64> {
        if n == 1 {
            vec![0.0]
        } else {
            angle_bins(n)
        }
    }
}

pub fn build_cat_library(model: &CatGateModel, calibration: &RxCalibration, bins: &LibraryBins) -> Result<NoiseLibrary> {
    let tables = bins
        .bins
        .iter()
        .map(|&(kind, n)| {
            log::info!("cat {kind} table, {n} bin(s)");
            build_cat_noise_table(model, kind, &LibraryBins::angles(n), Some(calibration))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseLibrary { source: NoiseSource::Cat, tables, config_hash: None })
}

/// Standard-qubit library whose relaxation rate for each gate kind is matched
/// to the mean fidelity of the corresponding cat table.
pub fn build_matched_standard_library(cat: &NoiseLibrary, bins: &LibraryBins) -> Result<NoiseLibrary> {
    let tables = bins
        .bins
        .iter()
        .map(|&(kind, n)| {
            let t_gate = kind.t_gate();
            let gamma1 = matched_relaxation_rate(cat.table(kind)?.mean_fidelity(), t_gate, kind.n_qubits())?;
            build_standard_noise_table(kind, &LibraryBins::angles(n), gamma1, t_gate)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseLibrary { source: NoiseSource::Standard, tables, config_hash: None })
}

/// `n` evenly spaced angles over `[0, π]`.
pub fn angle_bins(n: usize) -> Vec<f64> {
    linalg::linspace(0.0, std::f64::consts::PI, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::amplitude_damping_kraus;
    use crate::linalg::max_abs_diff;
    use std::f64::consts::PI;

    #[test]
    fn identity_channel_ptm() {
        let r = ptm_from_channel(&QubitChannel::identity(2)).unwrap();
        assert!((r.entries.clone() - DMatrix::<f64>::identity(16, 16)).abs().max() < 1e-14);
    }

    #[test]
    fn z_rotation_ptm_block() {
        let phi = 0.9;
        let r = ptm_from_channel(&QubitChannel::from_unitary(&target_unitary(GateKind::Rz, phi)).unwrap()).unwrap();
        let e = &r.entries;
        assert!((e[(0, 0)] - 1.0).abs() < 1e-14 && (e[(3, 3)] - 1.0).abs() < 1e-14);
        assert!((e[(1, 1)] - phi.cos()).abs() < 1e-14);
        assert!((e[(2, 1)] - phi.sin()).abs() < 1e-14);
        assert!((e[(1, 2)] + phi.sin()).abs() < 1e-14);
    }

    #[test]
    fn amplitude_damping_ptm() {
        let p = 0.2;
        let ch = QubitChannel::from_kraus(&amplitude_damping_kraus(p)).unwrap();
        let r = ptm_from_channel(&ch).unwrap();
        let s = (1.0 - p).sqrt();
        let expected = [1.0, s, s, 1.0 - p];
        for k in 0..4 {
            assert!((r.entries[(k, k)] - expected[k]).abs() < 1e-14);
        }
        assert!((r.entries[(3, 0)] - p).abs() < 1e-14);
    }

    #[test]
    fn identity_choi_is_bell_projector() {
        let choi = ptm_to_choi(&PauliTransferMatrix::identity(1));
        let mut bell = CMatrix::zeros(4, 4);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            bell[(i, j)] = C64::new(0.5, 0.0);
        }
        assert!(max_abs_diff(&choi.entries, &bell) < 1e-14);
    }

    #[test]
    fn kraus_round_trip_for_amplitude_damping() {
        let ch = QubitChannel::from_kraus(&amplitude_damping_kraus(0.35)).unwrap();
        let r = ptm_from_channel(&ch).unwrap();
        let kraus = choi_to_kraus(&ptm_to_choi(&r)).unwrap();
        assert_eq!(kraus.operators.len(), 2);
        let back = kraus.to_channel().unwrap();
        assert!(max_abs_diff(back.superop(), ch.superop()) < 1e-8);
        assert!(max_abs_diff(&kraus.completeness(), &linalg::identity(2)) < 1e-10);
    }

    #[test]
    fn identity_gives_single_kraus() {
        let kraus = choi_to_kraus(&ptm_to_choi(&PauliTransferMatrix::identity(1))).unwrap();
        assert_eq!(kraus.operators.len(), 1);
        let a = &kraus.operators[0];
        let phase = a[(0, 0)];
        assert!(max_abs_diff(a, &(linalg::identity(2) * phase)) < 1e-12);
        assert!((phase.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_cp_map_rejected() {
        // Transpose map: PTM diag(1, 1, −1, 1).
        let mut r = PauliTransferMatrix::identity(1);
        r.entries[(2, 2)] = -1.0;
        assert!(matches!(choi_to_kraus(&ptm_to_choi(&r)), Err(Error::NotCompletelyPositive { .. })));
    }

    #[test]
    fn noise_of_ideal_channel_is_identity() {
        let u = target_unitary(GateKind::Rzz, 1.3);
        let r = ptm_from_channel(&QubitChannel::from_unitary(&u).unwrap()).unwrap();
        let n = noise_ptm(&r, &r).unwrap();
        assert!((n.entries - DMatrix::<f64>::identity(16, 16)).abs().max() < 1e-10);
    }

    #[test]
    fn singular_ideal_rejected() {
        let mut r = PauliTransferMatrix::identity(1);
        r.entries[(1, 1)] = 0.0;
        assert!(matches!(noise_ptm(&PauliTransferMatrix::identity(1), &r), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn relaxation_rate_formula() {
        assert_eq!(matched_relaxation_rate(1.0, 10.0, 1).unwrap(), 0.0);
        let g = matched_relaxation_rate(0.9859, 10.0, 1).unwrap();
        assert!((g - 4.23e-3).abs() < 1e-6);
        assert!(matched_relaxation_rate(1.2, 10.0, 1).is_err());
    }

    #[test]
    fn standard_channel_closed_limit_is_exact_rotation() {
        for kind in [GateKind::Rx, GateKind::Rzz] {
            let ch = standard_qubit_gate_channel(kind, 1.1, 0.0, 2.0).unwrap();
            let f = average_gate_fidelity(&ch, &target_unitary(kind, 1.1)).unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_idle_is_amplitude_damping() {
        let (g, t) = (0.05, 3.0);
        let ch = standard_qubit_gate_channel(GateKind::Rx, 0.0, g, t).unwrap();
        let ad = QubitChannel::from_kraus(&amplitude_damping_kraus(1.0 - (-g * t).exp())).unwrap();
        assert!(max_abs_diff(ch.superop(), ad.superop()) < 1e-12);
    }

    #[test]
    fn matched_rate_reproduces_first_order_fidelity() {
        let g = matched_relaxation_rate(0.999, 2.0, 2).unwrap();
        let ch = standard_qubit_gate_channel(GateKind::Rzz, 0.4, g, 2.0).unwrap();
        let f = average_gate_fidelity(&ch, &target_unitary(GateKind::Rzz, 0.4)).unwrap();
        assert!((f - 0.999).abs() < 1e-5, "{f}");
    }

    #[test]
    fn negative_angle_rules_are_exact_for_standard_qubits() {
        let g = 0.01;
        for kind in [GateKind::Rx, GateKind::Rzz] {
            let table = build_standard_noise_table(kind, &[0.7], g, 2.0).unwrap();
            let ops = table.lookup(-0.7).unwrap();
            let noise = QubitChannel::from_kraus(&ops).unwrap();
            let ideal = QubitChannel::from_unitary(&target_unitary(kind, -0.7)).unwrap();
            let replay = ideal.then(&noise).unwrap();
            let exact = standard_qubit_gate_channel(kind, -0.7, g, 2.0).unwrap();
            assert!(max_abs_diff(replay.superop(), exact.superop()) < 1e-10, "{kind}");
        }
    }

    #[test]
    fn library_json_round_trip() {
        let table = build_standard_noise_table(GateKind::Rx, &angle_bins(3), 0.004, 10.0).unwrap();
        let lib = NoiseLibrary { source: NoiseSource::Standard, tables: vec![table], config_hash: None };
        let back = NoiseLibrary::from_json(&lib.to_json().unwrap()).unwrap();
        assert_eq!(back, lib);
        assert!(back.max_completeness_excess().unwrap() < 1e-6);
        let near = back.lookup(GateKind::Rx, PI / 2.0 + 0.1).unwrap();
        let mid = deserialize_matrix(&back.tables[0].entries[1].kraus_operators[0]).unwrap();
        assert!(max_abs_diff(&near[0], &mid) < 1e-15);
    }
}

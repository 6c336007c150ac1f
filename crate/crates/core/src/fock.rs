//! Truncated Fock-space linear algebra: ladder operators, coherent and cat
//! states, the Kerr nonlinear resonator Hamiltonian, the cat-qubit
//! computational basis and the Wigner function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64, ONE, ZERO};

/// Photon-number truncation shared by every mode of a register of resonators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    dim: usize,
    n_modes: usize,
}

impl FockSpace {
    pub const DEFAULT_DIM: usize = 20;

    pub fn new(dim: usize, n_modes: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("Fock dimension must be >= 2, got {dim}")));
        }
        if n_modes == 0 {
            return Err(Error::InvalidParameter("a Fock space needs at least one mode".into()));
        }
        Ok(Self { dim, n_modes })
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(dim, 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Dimension of the full register, `dim^n_modes`.
    pub fn total_dim(&self) -> usize {
        self.dim.pow(self.n_modes as u32)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes {
            Err(Error::ModeOutOfRange { mode, n_modes: self.n_modes })
        } else {
            Ok(())
        }
    }

    fn ensure_same(&self, other: &FockSpace) -> Result<()> {
        if self != other {
            Err(Error::DimensionMismatch(format!(
                "Fock spaces differ: dim {}^{} vs dim {}^{}",
                self.dim, self.n_modes, other.dim, other.n_modes
            )))
        } else {
            Ok(())
        }
    }
}

/// Operator on a [`FockSpace`], stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    matrix: CMatrix,
    space: FockSpace,
}

impl FockOperator {
    pub fn new(matrix: CMatrix, space: FockSpace) -> Result<Self> {
        let n = space.total_dim();
        if matrix.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, space needs {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, space })
    }

    pub fn identity(space: FockSpace) -> Self {
        Self { matrix: linalg::identity(space.total_dim()), space }
    }

    pub fn zeros(space: FockSpace) -> Self {
        let n = space.total_dim();
        Self { matrix: CMatrix::zeros(n, n), space }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn dagger(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), space: self.space }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { matrix: &self.matrix * factor, space: self.space }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.space.ensure_same(&other.space)?;
        Ok(Self { matrix: &self.matrix + &other.matrix, space: self.space })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.space.ensure_same(&other.space)?;
        Ok(Self { matrix: &self.matrix - &other.matrix, space: self.space })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.space.ensure_same(&other.space)?;
        Ok(Self { matrix: &self.matrix * &other.matrix, space: self.space })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(other)?.sub(&other.mul(self)?)?)
    }

    pub fn apply(&self, ket: &FockKet) -> Result<FockKet> {
        self.space.ensure_same(&ket.space)?;
        Ok(FockKet { amplitudes: &self.matrix * &ket.amplitudes, space: self.space })
    }

    pub fn expectation(&self, ket: &FockKet) -> Result<C64> {
        self.space.ensure_same(&ket.space)?;
        Ok(ket.amplitudes.dotc(&(&self.matrix * &ket.amplitudes)))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::is_hermitian(&self.matrix, tol)
    }

    pub fn max_norm(&self) -> f64 {
        linalg::max_norm(&self.matrix)
    }
}

/// State vector on a [`FockSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct FockKet {
    amplitudes: CVector,
    space: FockSpace,
}

impl FockKet {
    pub fn new(amplitudes: CVector, space: FockSpace) -> Result<Self> {
        if amplitudes.len() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "ket has {} amplitudes, space needs {}",
                amplitudes.len(),
                space.total_dim()
            )));
        }
        Ok(Self { amplitudes, space })
    }

    /// Builds a ket and rescales it to unit norm.
    pub fn normalized(amplitudes: CVector, space: FockSpace) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter("cannot normalize a zero vector".into()));
        }
        Self::new(amplitudes.unscale(norm), space)
    }

    /// Product state `|n_0, n_1, ...⟩` of photon numbers.
    pub fn fock(space: FockSpace, photons: &[usize]) -> Result<Self> {
        if photons.len() != space.n_modes {
            return Err(Error::DimensionMismatch(format!(
                "{} photon numbers for {} modes",
                photons.len(),
                space.n_modes
            )));
        }
        let mut index = 0;
        for &n in photons {
            if n >= space.dim {
                return Err(Error::InvalidParameter(format!("photon number {n} >= truncation {}", space.dim)));
            }
            index = index * space.dim + n;
        }
        let mut amplitudes = CVector::zeros(space.total_dim());
        amplitudes[index] = ONE;
        Ok(Self { amplitudes, space })
    }

    pub fn vacuum(space: FockSpace) -> Self {
        let mut amplitudes = CVector::zeros(space.total_dim());
        amplitudes[0] = ONE;
        Self { amplitudes, space }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.space.ensure_same(&other.space)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap_sq(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Tensor product; `self` becomes the leading modes.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.space.dim != other.space.dim {
            return Err(Error::DimensionMismatch("tensor product needs equal truncation".into()));
        }
        let space = FockSpace::new(self.space.dim, self.space.n_modes + other.space.n_modes)?;
        Ok(Self { amplitudes: linalg::kron_vec(&self.amplitudes, &other.amplitudes), space })
    }

    pub fn to_density(&self) -> FockDensityMatrix {
        FockDensityMatrix {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
            space: self.space,
        }
    }
}

/// Density operator (or, for channel tomography, any operator input) on a
/// [`FockSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    matrix: CMatrix,
    space: FockSpace,
}

impl FockDensityMatrix {
    pub fn new(matrix: CMatrix, space: FockSpace) -> Result<Self> {
        let n = space.total_dim();
        if matrix.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "density matrix is {}x{}, space needs {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, space })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn expectation(&self, op: &FockOperator) -> Result<C64> {
        self.space.ensure_same(&op.space)?;
        Ok((op.matrix() * &self.matrix).trace())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.space.ensure_same(&other.space)?;
        Ok(Self { matrix: &self.matrix + &other.matrix, space: self.space })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { matrix: self.matrix.scale(factor), space: self.space }
    }
}

fn single_mode_lowering(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    a
}

/// Embeds a single-mode matrix on `mode`, identity elsewhere.
pub fn embed_single_mode(space: FockSpace, op: &CMatrix, mode: usize) -> Result<FockOperator> {
    space.check_mode(mode)?;
    if op.shape() != (space.dim, space.dim) {
        return Err(Error::DimensionMismatch("single-mode operator has wrong size".into()));
    }
    let id = linalg::identity(space.dim);
    let factors: Vec<CMatrix> =
        (0..space.n_modes).map(|m| if m == mode { op.clone() } else { id.clone() }).collect();
    FockOperator::new(linalg::kron_all(&factors), space)
}

/// Lowering operator `â` on `mode`: `⟨n−1|â|n⟩ = √n`.
pub fn annihilation_op(space: FockSpace, mode: usize) -> Result<FockOperator> {
    embed_single_mode(space, &single_mode_lowering(space.dim), mode)
}

pub fn creation_op(space: FockSpace, mode: usize) -> Result<FockOperator> {
    Ok(annihilation_op(space, mode)?.dagger())
}

pub fn number_op(space: FockSpace, mode: usize) -> Result<FockOperator> {
    let n = CMatrix::from_diagonal(&CVector::from_iterator(
        space.dim,
        (0..space.dim).map(|k| c(k as f64, 0.0)),
    ));
    embed_single_mode(space, &n, mode)
}

/// Photon-number parity `exp(iπ n̂)` of one mode.
pub fn parity_op(space: FockSpace, mode: usize) -> Result<FockOperator> {
    let p = CMatrix::from_diagonal(&CVector::from_iterator(
        space.dim,
        (0..space.dim).map(|k| if k % 2 == 0 { ONE } else { -ONE }),
    ));
    embed_single_mode(space, &p, mode)
}

/// Parameters of a two-photon driven Kerr nonlinear resonator. All
/// frequencies are in units of the Kerr amplitude when `kerr = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnrParams {
    pub kerr: f64,
    /// Two-photon drive amplitude `G`.
    pub drive: f64,
    /// Detuning `Δ = ω_r − 2ω_p`.
    pub detuning: f64,
    /// Two-photon drive phase.
    pub phase: f64,
}

impl Default for KnrParams {
    fn default() -> Self {
        Self { kerr: 1.0, drive: 4.0, detuning: 0.0, phase: 0.0 }
    }
}

impl KnrParams {
    pub fn new(kerr: f64, drive: f64) -> Result<Self> {
        let p = Self { kerr, drive, ..Self::default() };
        p.validate()?;
        Ok(p)
    }

    /// Parameters whose cat manifold has coherent amplitude `alpha` (G = K α²).
    pub fn with_alpha(kerr: f64, alpha: f64) -> Result<Self> {
        Self::new(kerr, kerr * alpha * alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kerr > 0.0) {
            return Err(Error::InvalidParameter(format!("Kerr amplitude must be positive, got {}", self.kerr)));
        }
        if self.drive < 0.0 {
            return Err(Error::InvalidParameter("two-photon drive amplitude must be >= 0".into()));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        (self.drive / self.kerr).sqrt()
    }
}

/// `−Δ â†â − K â†²â² + G(â†² e^{2iφ} + â² e^{−2iφ})` on `mode`.
pub fn knr_hamiltonian(space: FockSpace, params: &KnrParams, mode: usize) -> Result<FockOperator> {
    params.validate()?;
    space.check_mode(mode)?;
    let a = single_mode_lowering(space.dim);
    let ad = a.adjoint();
    let a2 = &a * &a;
    let ad2 = &ad * &ad;
    let n = &ad * &a;
    let kerr = &ad2 * &a2;
    let phase = C64::from_polar(1.0, 2.0 * params.phase);
    let h = n * c(-params.detuning, 0.0) + kerr * c(-params.kerr, 0.0)
        + (&ad2 * phase + &a2 * phase.conj()) * c(params.drive, 0.0);
    embed_single_mode(space, &h, mode)
}

fn require_single_mode(space: FockSpace) -> Result<()> {
    if space.n_modes != 1 {
        return Err(Error::InvalidParameter(format!(
            "single-mode state requested on a {}-mode space",
            space.n_modes
        )));
    }
    Ok(())
}

fn warn_truncation(space: FockSpace, alpha: C64) {
    if alpha.norm_sqr() > space.dim as f64 / 3.0 {
        log::warn!(
            "|alpha|^2 = {:.3} is large for a truncation of {} levels; states will be clipped",
            alpha.norm_sqr(),
            space.dim
        );
    }
}

/// Unnormalized truncated coherent amplitudes `αⁿ/√n!`.
fn coherent_coefficients(dim: usize, alpha: C64) -> CVector {
    let mut out = CVector::zeros(dim);
    out[0] = ONE;
    for n in 1..dim {
        out[n] = out[n - 1] * alpha / (n as f64).sqrt();
    }
    out
}

/// Normalized truncated coherent state `|α⟩`.
pub fn coherent_state(space: FockSpace, alpha: C64) -> Result<FockKet> {
    require_single_mode(space)?;
    warn_truncation(space, alpha);
    FockKet::normalized(coherent_coefficients(space.dim, alpha), space)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Normalized cat state `|C±_α⟩ ∝ |α⟩ ± |−α⟩`.
pub fn cat_state(space: FockSpace, alpha: C64, parity: Parity) -> Result<FockKet> {
    require_single_mode(space)?;
    warn_truncation(space, alpha);
    let mut coeffs = coherent_coefficients(space.dim, alpha);
    let keep = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    for n in 0..space.dim {
        if n % 2 != keep {
            coeffs[n] = ZERO;
        }
    }
    FockKet::normalized(coeffs, space).map_err(|_| {
        Error::InvalidParameter(format!("cat state of parity {parity:?} vanishes at alpha = {alpha}"))
    })
}

/// The cat-qubit computational basis of one resonator, with the Pauli
/// operators of the encoded qubit embedded in the Fock space.
#[derive(Debug, Clone)]
pub struct CatBasis {
    pub alpha: f64,
    pub ket0: FockKet,
    pub ket1: FockKet,
    /// Ratio of the even and odd cat normalization constants.
    pub eta: f64,
    pub pauli_x: FockOperator,
    pub pauli_y: FockOperator,
    pub pauli_z: FockOperator,
    pub projector: FockOperator,
}

pub fn cat_basis(space: FockSpace, alpha: f64) -> Result<CatBasis> {
    require_single_mode(space)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("cat basis needs alpha > 0, got {alpha}")));
    }
    let alpha_c = c(alpha, 0.0);
    let plus = cat_state(space, alpha_c, Parity::Even)?;
    let minus = cat_state(space, alpha_c, Parity::Odd)?;
    let coherent = coherent_state(space, alpha_c)?;
    let (mut even_sq, mut odd_sq) = (0.0, 0.0);
    for (n, z) in coherent.amplitudes().iter().enumerate() {
        if n % 2 == 0 {
            even_sq += z.norm_sqr();
        } else {
            odd_sq += z.norm_sqr();
        }
    }
    // ‖|α⟩ ± |−α⟩‖ is twice the norm of the even / odd part.
    let eta = (odd_sq / even_sq).sqrt();

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let k0 = (plus.amplitudes() + minus.amplitudes()).scale(s);
    let k1 = (plus.amplitudes() - minus.amplitudes()).scale(s);
    let ket0 = FockKet::new(k0, space)?;
    let ket1 = FockKet::new(k1, space)?;

    let encoding = CatEncoding::from_kets(space, vec![ket0.amplitudes().clone(), ket1.amplitudes().clone()])?;
    let [id, x, y, z] = linalg::pauli_1q();
    Ok(CatBasis {
        alpha,
        eta,
        pauli_x: encoding.embed(&x)?,
        pauli_y: encoding.embed(&y)?,
        pauli_z: encoding.embed(&z)?,
        projector: encoding.embed(&id)?,
        ket0,
        ket1,
    })
}

/// Cat-qubit computational basis on a register of resonators. Basis state
/// index `b` has the bit of mode 0 as its most significant bit.
#[derive(Debug, Clone)]
pub struct CatEncoding {
    space: FockSpace,
    /// `total_dim x 2^n` matrix whose columns are the encoded basis kets.
    kets: CMatrix,
}

impl CatEncoding {
    pub fn new(basis: &CatBasis, n_modes: usize) -> Result<Self> {
        let single = basis.ket0.space();
        let space = FockSpace::new(single.dim, n_modes)?;
        let d = 1usize << n_modes;
        let mut kets = Vec::with_capacity(d);
        for b in 0..d {
            let mut v = CVector::from_element(1, ONE);
            for m in 0..n_modes {
                let bit = (b >> (n_modes - 1 - m)) & 1;
                let k = if bit == 0 { basis.ket0.amplitudes() } else { basis.ket1.amplitudes() };
                v = linalg::kron_vec(&v, k);
            }
            kets.push(v);
        }
        Self::from_kets(space, kets)
    }

    fn from_kets(space: FockSpace, kets: Vec<CVector>) -> Result<Self> {
        let n = space.total_dim();
        if kets.iter().any(|k| k.len() != n) {
            return Err(Error::DimensionMismatch("encoded ket has wrong length".into()));
        }
        let cols: Vec<CVector> = kets;
        Ok(Self { space, kets: CMatrix::from_columns(&cols) })
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn n_qubits(&self) -> usize {
        self.space.n_modes
    }

    /// Qubit-register dimension `2^n`.
    pub fn qubit_dim(&self) -> usize {
        self.kets.ncols()
    }

    pub fn basis_ket(&self, index: usize) -> FockKet {
        FockKet { amplitudes: self.kets.column(index).into_owned(), space: self.space }
    }

    pub fn kets(&self) -> &CMatrix {
        &self.kets
    }

    /// `Σ_ab m_ab |ā⟩⟨b̄|` for a `2^n x 2^n` qubit operator `m`.
    pub fn embed(&self, m: &CMatrix) -> Result<FockOperator> {
        let d = self.qubit_dim();
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("expected a {d}x{d} qubit operator")));
        }
        FockOperator::new(&self.kets * m * self.kets.adjoint(), self.space)
    }

    /// Encoded ket `Σ_b v_b |b̄⟩`.
    pub fn embed_ket(&self, v: &CVector) -> Result<FockKet> {
        if v.len() != self.qubit_dim() {
            return Err(Error::DimensionMismatch("qubit vector has wrong length".into()));
        }
        FockKet::new(&self.kets * v, self.space)
    }

    /// Matrix elements `⟨ā|X|b̄⟩` of a full-space operator.
    pub fn project(&self, x: &CMatrix) -> CMatrix {
        self.kets.adjoint() * x * &self.kets
    }

    pub fn project_ket(&self, ket: &FockKet) -> CVector {
        self.kets.adjoint() * ket.amplitudes()
    }
}

/// Rectangular phase-space grid in quadrature coordinates `(x, p)` with
/// `α = (x + ip)/√2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
}

impl Default for PhaseSpaceGrid {
    fn default() -> Self {
        Self::square(5.0, 201)
    }
}

impl PhaseSpaceGrid {
    pub fn square(half_width: f64, points: usize) -> Self {
        let axis = linalg::linspace(-half_width, half_width, points);
        Self { xs: axis.clone(), ps: axis }
    }
}

/// Wigner quasi-probability sampled on a [`PhaseSpaceGrid`]; `values[(i, j)]`
/// is `W(xs[i], ps[j])`, normalized so the full-plane integral is one.
#[derive(Debug, Clone)]
pub struct WignerField {
    pub grid: PhaseSpaceGrid,
    pub values: nalgebra::DMatrix<f64>,
}

impl WignerField {
    /// Riemann-sum estimate of the integral over the grid.
    pub fn integral(&self) -> f64 {
        let dx = spacing(&self.grid.xs);
        let dp = spacing(&self.grid.ps);
        self.values.sum() * dx * dp
    }

    pub fn value_at(&self, ix: usize, ip: usize) -> f64 {
        self.values[(ix, ip)]
    }
}

fn spacing(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        1.0
    } else {
        (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
    }
}

pub fn wigner_ket(state: &FockKet, grid: &PhaseSpaceGrid) -> Result<WignerField> {
    wigner(&state.to_density(), grid)
}

/// Wigner function of a single-mode state from the Laguerre expansion
/// `W = Σ ρ_mn W_mn`.
pub fn wigner(state: &FockDensityMatrix, grid: &PhaseSpaceGrid) -> Result<WignerField> {
    require_single_mode(state.space)?;
    if grid.xs.iter().chain(grid.ps.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("phase-space grid must be finite".into()));
    }
    let dim = state.space.dim;
    let rho = state.matrix();
    let mut values = nalgebra::DMatrix::<f64>::zeros(grid.xs.len(), grid.ps.len());
    let mut lag = vec![0.0; dim];
    for (ix, &x) in grid.xs.iter().enumerate() {
        for (ip, &p) in grid.ps.iter().enumerate() {
            let beta = c(x, p) * std::f64::consts::FRAC_1_SQRT_2;
            let r2 = beta.norm_sqr();
            let arg = 4.0 * r2;
            let two_beta_conj = beta.conj() * 2.0;
            let gauss = (-2.0 * r2).exp() / std::f64::consts::PI;
            let mut w = 0.0;
            for k in 0..dim {
                // Generalized Laguerre L_n^{(k)}(arg) for n = 0..dim-k.
                let len = dim - k;
                let kf = k as f64;
                lag[0] = 1.0;
                if len > 1 {
                    lag[1] = 1.0 + kf - arg;
                }
                for j in 1..len.saturating_sub(1) {
                    let jf = j as f64;
                    lag[j + 1] = ((2.0 * jf + 1.0 + kf - arg) * lag[j] - (jf + kf) * lag[j - 1]) / (jf + 1.0);
                }
                for n in 0..len {
                    let m = n + k;
                    let rho_mn = rho[(m, n)];
                    if rho_mn == ZERO {
                        continue;
                    }
                    // (2β*)^k √(n!/m!)
                    let mut pref = ONE;
                    for j in 1..=k {
                        pref *= two_beta_conj / ((n + j) as f64).sqrt();
                    }
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    let term = (rho_mn * pref).re * sign * lag[n];
                    w += if k == 0 { term } else { 2.0 * term };
                }
            }
            values[(ix, ip)] = w * gauss;
        }
    }
    Ok(WignerField { grid: grid.clone(), values })
}

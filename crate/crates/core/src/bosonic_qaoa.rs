//! Trotterized bosonic QAOA: alternating exponentials of a Kerr mixer and a
//! driven Kerr cost Hamiltonian applied to the vacuum.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, cat_basis, cat_state, FockKet, FockOperator, FockSpace, Parity};
use crate::linalg::{self, CMatrix, CVector, C64, ZERO};

/// Largest depth the exhaustive grid supports.
pub const MAX_GRID_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BosonicAnnealSpec {
    pub kerr: f64,
    pub delta: f64,
    /// Two-photon drive G.
    pub drive: f64,
    /// Single-photon drive E_i per mode.
    pub single_photon: Vec<f64>,
    /// Beam-splitter couplings g_ij.
    pub couplings: Vec<(usize, usize, f64)>,
}

impl BosonicAnnealSpec {
    pub fn n_modes(&self) -> usize {
        self.single_photon.len()
    }

    fn check(&self, space: FockSpace) -> Result<()> {
        if space.n_modes() != self.n_modes() {
            return Err(Error::DimensionMismatch(format!(
                "{} drive amplitudes for {} modes",
                self.n_modes(),
                space.n_modes()
            )));
        }
        if let Some(&(i, j, _)) = self.couplings.iter().find(|c| c.0 == c.1 || c.0.max(c.1) >= self.n_modes()) {
            return Err(Error::InvalidParameter(format!("bad coupling ({i}, {j})")));
        }
        Ok(())
    }

    /// `Σ_i (−Δ â†â − K â†²â²)`, whose highest eigenstate is the vacuum when Δ ≥ 0.
    pub fn mixer_hamiltonian(&self, space: FockSpace) -> Result<FockOperator> {
        self.check(space)?;
        let mut h = FockOperator::zeros(space);
        for m in 0..space.n_modes() {
            let a = annihilation_op(space, m)?;
            let ad = a.dagger();
            let n = ad.mul(&a)?;
            h = h.sub(&n.scale(C64::new(self.delta, 0.0)))?.add(&kerr_term(&a, self.kerr)?)?;
        }
        Ok(h)
    }

    /// `Σ_i [−K â†²â² + G(â†² + â²) + E_i(â† + â)] + Σ_{i<j} g_ij(â_i†â_j + â_j†â_i)`.
    pub fn cost_hamiltonian(&self, space: FockSpace) -> Result<FockOperator> {
        self.check(space)?;
        let modes = (0..space.n_modes()).map(|m| annihilation_op(space, m)).collect::<Result<Vec<_>>>()?;
        let mut h = FockOperator::zeros(space);
        for (a, e) in modes.iter().zip(&self.single_photon) {
            let ad = a.dagger();
            let two = ad.mul(&ad)?.add(&a.mul(a)?)?;
            h = h
                .add(&kerr_term(a, self.kerr)?)?
                .add(&two.scale(C64::new(self.drive, 0.0)))?
                .add(&ad.add(a)?.scale(C64::new(*e, 0.0)))?;
        }
        for &(i, j, g) in &self.couplings {
            let hop = modes[i].dagger().mul(&modes[j])?;
            h = h.add(&hop.add(&hop.dagger())?.scale(C64::new(g, 0.0)))?;
        }
        Ok(h)
    }
}

fn kerr_term(a: &FockOperator, kerr: f64) -> Result<FockOperator> {
    let ad = a.dagger();
    Ok(ad.mul(&ad)?.mul(a)?.mul(a)?.scale(C64::new(-kerr, 0.0)))
}

/// `exp(−itH)` through a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct Propagator {
    values: Vec<f64>,
    vectors: CMatrix,
}

impl Propagator {
    pub fn new(h: &CMatrix) -> Self {
        let (values, vectors) = linalg::eigh(h);
        Self { values, vectors }
    }

    pub fn apply(&self, t: f64, v: &CVector) -> CVector {
        let mut c = self.vectors.adjoint() * v;
        for (ci, w) in c.iter_mut().zip(&self.values) {
            *ci *= C64::cis(-w * t);
        }
        &self.vectors * c
    }
}

/// `Π_k e^{−iβ_k Ĥ_M} e^{−iγ_k Ĥ_C}` applied to the vacuum, layer 1 first.
pub fn bosonic_qaoa_evolve(spec: &BosonicAnnealSpec, gammas: &[f64], betas: &[f64], space: FockSpace) -> Result<FockKet> {
    if gammas.len() != betas.len() {
        return Err(Error::DimensionMismatch(format!("{} gammas but {} betas", gammas.len(), betas.len())));
    }
    let mixer = Propagator::new(spec.mixer_hamiltonian(space)?.matrix());
    let cost = Propagator::new(spec.cost_hamiltonian(space)?.matrix());
    let mut psi = FockKet::vacuum(space).amplitudes().clone();
    for (g, b) in gammas.iter().zip(betas) {
        psi = mixer.apply(*b, &cost.apply(*g, &psi));
    }
    FockKet::new(psi, space)
}

/// Uniform grid `γ_i = i·γ_max/n`, `β_j = j·β_max/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub points: usize,
    pub gamma_max: f64,
    pub beta_max: f64,
}

impl AngleGrid {
    /// The ranges used for qubit QAOA, `[0, 2π) x [0, π)`.
    pub fn standard(points: usize) -> Self {
        Self { points, gamma_max: 2.0 * PI, beta_max: PI }
    }

    pub fn gammas(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.gamma_max * i as f64 / self.points as f64).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.beta_max * j as f64 / self.points as f64).collect()
    }
}

/// Objective values on a `γ x β` grid; row index is γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Landscape {
    /// Header row `gamma\beta, β_0, β_1, ...`, then one row per γ.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> =
            std::iter::once("gamma\\beta".to_string()).chain(self.betas.iter().map(|b| format!("{b:.10}"))).collect();
        w.write_record(&header).map_err(csv_error)?;
        for (g, row) in self.gammas.iter().zip(&self.values) {
            let rec: Vec<String> =
                std::iter::once(format!("{g:.10}")).chain(row.iter().map(|v| format!("{v:.12e}"))).collect();
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub p: usize,
    pub fidelity: f64,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

/// Variational problem: reach `target` from `initial` by alternating the two
/// Hamiltonians.
#[derive(Debug, Clone)]
pub struct BosonicProblem {
    pub space: FockSpace,
    pub mixer: CMatrix,
    pub cost: CMatrix,
    pub initial: CVector,
    pub target: CVector,
}

impl BosonicProblem {
    pub fn fidelity(&self, gammas: &[f64], betas: &[f64]) -> f64 {
        let (m, c) = (Propagator::new(&self.mixer), Propagator::new(&self.cost));
        let mut psi = self.initial.clone();
        for (g, b) in gammas.iter().zip(betas) {
            psi = m.apply(*b, &c.apply(*g, &psi));
        }
        self.target.dotc(&psi).norm_sqr()
    }

    /// One-layer states `e^{−iβĤ_M} e^{−iγĤ_C} v` for every grid pair,
    /// indexed `i_γ · n + j_β`.
    fn layer_states(&self, grid: &AngleGrid, v: &CVector, sign: f64) -> Vec<CVector> {
        let (m, c) = (Propagator::new(&self.mixer), Propagator::new(&self.cost));
        let betas = grid.betas();
        grid.gammas()
            .par_iter()
            .flat_map_iter(|g| {
                let after_cost = c.apply(sign * g, v);
                betas.iter().map(move |b| (*b, after_cost.clone())).collect::<Vec<_>>()
            })
            .map(|(b, x)| m.apply(sign * b, &x))
            .collect()
    }

    /// `|⟨target|ψ(γ, β)⟩|²` over the whole one-layer grid.
    pub fn landscape(&self, grid: &AngleGrid) -> Landscape {
        let n = grid.points;
        let states = self.layer_states(grid, &self.initial, 1.0);
        let values = (0..n).map(|i| (0..n).map(|j| self.target.dotc(&states[i * n + j]).norm_sqr()).collect()).collect();
        Landscape { gammas: grid.gammas(), betas: grid.betas(), values }
    }

    /// Exhaustive search of the `(n x n)^p` grid for the largest fidelity.
    pub fn grid_optimum(&self, grid: &AngleGrid, p: usize) -> Result<GridOptimum> {
        if p == 0 || p > MAX_GRID_DEPTH {
            return Err(Error::InvalidParameter(format!("grid search supports 1 <= p <= {MAX_GRID_DEPTH}, got {p}")));
        }
        if grid.points == 0 {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        let n = grid.points;
        let (gs, bs) = (grid.gammas(), grid.betas());
        let forward = self.layer_states(grid, &self.initial, 1.0);
        let (fidelity, k1, k2) = if p == 1 {
            let (f, k) = forward
                .iter()
                .enumerate()
                .map(|(k, s)| (self.target.dotc(s).norm_sqr(), k))
                .fold((f64::NEG_INFINITY, 0), first_max);
            (f, k, 0)
        } else {
            // ⟨t|U₂U₁|ψ₀⟩ = ⟨U₂†t|U₁ψ₀⟩ with U₂† = e^{+iγĤ_C} e^{+iβĤ_M}.
            let backward = self.adjoint_layer_states(grid);
            let d = self.initial.len();
            let flat_fwd: Vec<C64> = forward.iter().flat_map(|s| s.iter().copied()).collect();
            let (f, k2, k1) = backward
                .par_iter()
                .enumerate()
                .map(|(k2, l)| {
                    let l = l.as_slice();
                    let mut best = (f64::NEG_INFINITY, 0usize);
                    for (k1, r) in flat_fwd.chunks_exact(d).enumerate() {
                        let mut acc = ZERO;
                        for (x, y) in l.iter().zip(r) {
                            acc += x.conj() * y;
                        }
                        let v = acc.norm_sqr();
                        if v > best.0 {
                            best = (v, k1);
                        }
                    }
                    (best.0, k2, best.1)
                })
                .reduce(|| (f64::NEG_INFINITY, usize::MAX, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
            (f, k1, k2)
        };
        let mut gammas = vec![gs[k1 / n]];
        let mut betas = vec![bs[k1 % n]];
        if p == 2 {
            gammas.push(gs[k2 / n]);
            betas.push(bs[k2 % n]);
        }
        Ok(GridOptimum { p, fidelity, gammas, betas })
    }

    /// `e^{+iγĤ_C} e^{+iβĤ_M} |target⟩`, indexed like [`Self::layer_states`].
    fn adjoint_layer_states(&self, grid: &AngleGrid) -> Vec<CVector> {
        let (m, c) = (Propagator::new(&self.mixer), Propagator::new(&self.cost));
        let gammas = grid.gammas();
        let betas = grid.betas();
        gammas
            .par_iter()
            .flat_map_iter(|g| betas.iter().map(move |b| (*g, *b)))
            .map(|(g, b)| c.apply(-g, &m.apply(-b, &self.target)))
            .collect()
    }
}

fn first_max(best: (f64, usize), x: (f64, usize)) -> (f64, usize) {
    if x.0 > best.0 {
        x
    } else {
        best
    }
}

/// Resonator settings of the single-spin benchmark at amplitude α.
pub fn single_ising_spec(alpha: f64) -> BosonicAnnealSpec {
    let kerr = 1.0;
    let a2 = alpha * alpha;
    BosonicAnnealSpec {
        kerr,
        delta: kerr / (a2 * (-2.0 * a2).exp()),
        drive: kerr * a2,
        single_photon: vec![kerr / (2.0 * alpha)],
        couplings: Vec::new(),
    }
}

/// Single spin with cost `Ẑ` on the cat qubit: reach `|1̄⟩` from the vacuum.
pub fn single_ising_problem(dim: usize, alpha: f64) -> Result<BosonicProblem> {
    let space = FockSpace::single(dim)?;
    let spec = single_ising_spec(alpha);
    Ok(BosonicProblem {
        space,
        mixer: spec.mixer_hamiltonian(space)?.into_matrix(),
        cost: spec.cost_hamiltonian(space)?.into_matrix(),
        initial: FockKet::vacuum(space).amplitudes().clone(),
        target: cat_basis(space, alpha)?.ket1.amplitudes().clone(),
    })
}

/// Even cat `|C⁺_α⟩` from the vacuum with `Ĥ₀ = −Δâ†â − Kâ†²â²` and
/// `Ĥ₁ = −Kâ†²â² + G(â†² + â²)`.
pub fn cat_prep_problem(dim: usize, alpha: f64) -> Result<BosonicProblem> {
    let space = FockSpace::single(dim)?;
    let spec = BosonicAnnealSpec { single_photon: vec![0.0], ..single_ising_spec(alpha) };
    Ok(BosonicProblem {
        space,
        mixer: spec.mixer_hamiltonian(space)?.into_matrix(),
        cost: spec.cost_hamiltonian(space)?.into_matrix(),
        initial: FockKet::vacuum(space).amplitudes().clone(),
        target: cat_state(space, C64::new(alpha, 0.0), Parity::Even)?.amplitudes().clone(),
    })
}

/// Best grid fidelity for each depth `1..=p_max`.
pub fn single_ising_benchmark(dim: usize, alpha: f64, grid: &AngleGrid, p_max: usize) -> Result<Vec<GridOptimum>> {
    let problem = single_ising_problem(dim, alpha)?;
    (1..=p_max).map(|p| problem.grid_optimum(grid, p)).collect()
}

pub fn cat_prep_benchmark(dim: usize, alpha: f64, grid: &AngleGrid) -> Result<GridOptimum> {
    cat_prep_problem(dim, alpha)?.grid_optimum(grid, 1)
}

/// `⟨Ẑ⟩` landscape of ideal single-qubit QAOA with `Ĥ_C = Ẑ`, X mixer and
/// `|+⟩` input, for side-by-side comparison with the bosonic landscape.
pub fn qubit_single_spin_landscape(grid: &AngleGrid) -> Landscape {
    // e^{−iβX} e^{−iγZ}|+⟩ gives ⟨Z⟩ = sin(2β) sin(2γ).
    let (gammas, betas) = (grid.gammas(), grid.betas());
    let values = gammas.iter().map(|g| betas.iter().map(|b| (2.0 * b).sin() * (2.0 * g).sin()).collect()).collect();
    Landscape { gammas, betas, values }
}

//! Ising problem encodings, circuit compilation onto the cat-qubit gate set,
//! simulation backends, metrics and the classical optimization loop.

mod master;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knr_gates::{target_unitary, GateKind};
use crate::linalg::{CVector, C64};
use crate::optim::{lbfgs, LbfgsConfig};
use crate::qubit_channel_sim::{measure_distribution, run_circuit, Distribution, NoisyGate, QubitState};
use crate::tomography::{deserialize_matrix, KrausSet, NoiseLibrary, NoiseSource};

pub use master::{master_equation_distribution, MasterEquationOptions};

/// Largest problem handled by exhaustive enumeration.
pub const MAX_BRUTE_FORCE_QUBITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// `C(s) = offset + Σ_{i<j} J_ij s_i s_j + Σ_i h_i s_i` with `s = ±1` the
/// eigenvalue of Z, so bit 0 ↦ +1 and bit 1 ↦ −1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingProblem {
    pub n: usize,
    pub couplings: Vec<Coupling>,
    pub fields: Vec<f64>,
    pub offset: f64,
    pub sense: Sense,
}

impl IsingProblem {
    /// Merges repeated pairs, orders each pair as `i < j` and drops zeros.
    pub fn new(n: usize, couplings: &[(usize, usize, f64)], fields: Vec<f64>, offset: f64, sense: Sense) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("problem needs at least one qubit".into()));
        }
        if fields.len() != n {
            return Err(Error::DimensionMismatch(format!("{} fields for {n} qubits", fields.len())));
        }
        let mut merged: Vec<Coupling> = Vec::new();
        for &(a, b, v) in couplings {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-coupling on qubit {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!("coupling ({a}, {b}) out of range")));
            }
            let (i, j) = (a.min(b), a.max(b));
            match merged.iter_mut().find(|c| c.i == i && c.j == j) {
                Some(c) => c.value += v,
                None => merged.push(Coupling { i, j, value: v }),
            }
        }
        merged.retain(|c| c.value != 0.0);
        Ok(Self { n, couplings: merged, fields, offset, sense })
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let (i, j) = (i.min(j), i.max(j));
        self.couplings.iter().find(|c| c.i == i && c.j == j).map_or(0.0, |c| c.value)
    }

    pub fn spin(&self, z: usize, q: usize) -> f64 {
        if (z >> (self.n - 1 - q)) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn cost(&self, z: usize) -> f64 {
        let mut c = self.offset;
        for cp in &self.couplings {
            c += cp.value * self.spin(z, cp.i) * self.spin(z, cp.j);
        }
        for (q, h) in self.fields.iter().enumerate() {
            c += h * self.spin(z, q);
        }
        c
    }

    /// Cost of every bitstring.
    pub fn cost_table(&self) -> Result<Vec<f64>> {
        if self.n > MAX_BRUTE_FORCE_QUBITS {
            return Err(Error::ProblemTooLarge(format!("{} qubits exceeds {MAX_BRUTE_FORCE_QUBITS}", self.n)));
        }
        Ok((0..1usize << self.n).map(|z| self.cost(z)).collect())
    }

    /// `+1` when lower cost is better.
    fn orientation(&self) -> f64 {
        match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }

    /// Whether all cost gaps are integers, making γ 2π-periodic.
    pub fn has_integer_gaps(&self) -> bool {
        match self.cost_table() {
            Ok(t) => t.iter().all(|c| ((c - t[0]) - (c - t[0]).round()).abs() < 1e-9),
            Err(_) => false,
        }
    }
}

/// Exhaustive search; returns the optimal cost and every optimal bitstring.
pub fn brute_force_solve(problem: &IsingProblem) -> Result<(f64, Vec<usize>)> {
    let table = problem.cost_table()?;
    let o = problem.orientation();
    let best = table.iter().map(|c| o * c).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * best.abs().max(1.0);
    let solutions = (0..table.len()).filter(|&z| o * table[z] <= best + tol).collect();
    Ok((o * best, solutions))
}

/// Penalty `Σ_c (Σ_i [c ∈ V_i] x_i − 1)²` with `x_i = (1 − s_i)/2`, so a
/// qubit in state 1 selects subset `i`.
pub fn encode_exact_cover(universe: usize, subsets: &[Vec<usize>]) -> Result<IsingProblem> {
    if universe == 0 {
        return Err(Error::InvalidParameter("empty universe".into()));
    }
    if subsets.is_empty() {
        return Err(Error::InvalidParameter("no subsets".into()));
    }
    for el in 0..universe {
        if !subsets.iter().any(|s| s.contains(&el)) {
            return Err(Error::InvalidParameter(format!("element {el} is not covered by any subset")));
        }
    }
    if let Some(bad) = subsets.iter().flatten().find(|&&e| e >= universe) {
        return Err(Error::InvalidParameter(format!("element {bad} outside the universe")));
    }
    let m = subsets.len();
    let mut fields = vec![0.0; m];
    let mut couplings = Vec::new();
    let mut offset = 0.0;
    for el in 0..universe {
        let members: Vec<usize> = (0..m).filter(|&i| subsets[i].contains(&el)).collect();
        let nc = members.len() as f64;
        offset += (nc / 2.0 - 1.0).powi(2) + nc / 4.0;
        for (k, &i) in members.iter().enumerate() {
            fields[i] -= nc / 2.0 - 1.0;
            for &j in &members[k + 1..] {
                couplings.push((i, j, 0.5));
            }
        }
    }
    IsingProblem::new(m, &couplings, fields, offset, Sense::Minimize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxCutInstance {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub c_max: f64,
    pub solutions: Vec<usize>,
    pub seed: Option<u64>,
}

impl MaxCutInstance {
    /// Validates the edge list and fills the optimum by brute force.
    pub fn new(n: usize, edges: Vec<(usize, usize)>, seed: Option<u64>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &edges {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidParameter(format!("bad edge ({a}, {b})")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidParameter(format!("duplicate edge ({a}, {b})")));
            }
        }
        let mut inst = Self { n, edges, c_max: 0.0, solutions: Vec::new(), seed };
        let (c_max, solutions) = brute_force_solve(&inst.hamiltonian()?)?;
        inst.c_max = c_max;
        inst.solutions = solutions;
        Ok(inst)
    }

    /// `½ Σ_E (1 − Z_i Z_j)`, maximized.
    pub fn hamiltonian(&self) -> Result<IsingProblem> {
        let couplings: Vec<(usize, usize, f64)> = self.edges.iter().map(|&(a, b)| (a, b, -0.5)).collect();
        IsingProblem::new(self.n, &couplings, vec![0.0; self.n], 0.5 * self.edges.len() as f64, Sense::Maximize)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn maxcut_hamiltonian(instance: &MaxCutInstance) -> Result<IsingProblem> {
    instance.hamiltonian()
}

/// G(n, p) graph; pairs are visited in lexicographic order.
pub fn generate_erdos_renyi(n: usize, edge_prob: f64, seed: u64) -> Result<MaxCutInstance> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidParameter(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < edge_prob {
                edges.push((i, j));
            }
        }
    }
    MaxCutInstance::new(n, edges, Some(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mixer {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputState {
    Plus,
    PlusI,
}

impl InputState {
    fn single(self) -> [C64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            InputState::Plus => [C64::new(s, 0.0), C64::new(s, 0.0)],
            InputState::PlusI => [C64::new(s, 0.0), C64::new(0.0, s)],
        }
    }

    pub fn state(self, n: usize) -> Result<QubitState> {
        QubitState::product(n, self.single())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaParams {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    pub mixer: Mixer,
    pub input: InputState,
}

impl QaoaParams {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>, mixer: Mixer, input: InputState) -> Result<Self> {
        if gammas.len() != betas.len() {
            return Err(Error::DimensionMismatch(format!("{} gammas but {} betas", gammas.len(), betas.len())));
        }
        Ok(Self { gammas, betas, mixer, input })
    }

    pub fn depth(&self) -> usize {
        self.gammas.len()
    }

    fn flat(&self) -> Vec<f64> {
        self.gammas.iter().chain(&self.betas).copied().collect()
    }

    fn with_flat(&self, x: &[f64]) -> Self {
        let p = x.len() / 2;
        Self { gammas: x[..p].to_vec(), betas: x[p..].to_vec(), ..self.clone() }
    }

    /// Folds β into `[0, π)` and, when the spectrum allows it, γ into `[0, 2π)`.
    pub fn canonical(&self, problem: &IsingProblem) -> Self {
        let gammas = if problem.has_integer_gaps() {
            self.gammas.iter().map(|g| g.rem_euclid(2.0 * PI)).collect()
        } else {
            self.gammas.clone()
        };
        let betas = self.betas.iter().map(|b| b.rem_euclid(PI)).collect();
        Self { gammas, betas, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub angle: f64,
    pub targets: Vec<usize>,
}

/// Per layer: `R_ZZ(2γJ_ij)` for every coupling, `R_Z(2γh_i)` for every
/// nonzero field, then the mixer rotation `R(2β)` on every qubit.
pub fn compile(problem: &IsingProblem, params: &QaoaParams) -> Vec<Gate> {
    let mixer = match params.mixer {
        Mixer::X => GateKind::Rx,
        Mixer::Y => GateKind::Ry,
    };
    let mut gates = Vec::new();
    for (g, b) in params.gammas.iter().zip(&params.betas) {
        for c in &problem.couplings {
            gates.push(Gate { kind: GateKind::Rzz, angle: 2.0 * g * c.value, targets: vec![c.i, c.j] });
        }
        for (q, h) in problem.fields.iter().enumerate() {
            if *h != 0.0 {
                gates.push(Gate { kind: GateKind::Rz, angle: 2.0 * g * h, targets: vec![q] });
            }
        }
        for q in 0..problem.n {
            gates.push(Gate { kind: mixer, angle: 2.0 * b, targets: vec![q] });
        }
    }
    gates
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Ideal,
    Cat,
    Standard,
}

/// Where circuits are evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    /// Exact statevector.
    Ideal,
    /// Density-matrix replay with noise drawn from a library.
    Noisy(&'a NoiseLibrary),
}

impl Backend<'_> {
    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Ideal => BackendKind::Ideal,
            Backend::Noisy(lib) => match lib.source {
                NoiseSource::Cat => BackendKind::Cat,
                NoiseSource::Standard => BackendKind::Standard,
            },
        }
    }
}

/// Ideal gate followed by the library noise at the nearest bin.
pub fn noisy_gate(gate: &Gate, library: &NoiseLibrary) -> Result<NoisyGate> {
    let kraus = library.lookup(gate.kind, gate.angle)?;
    NoisyGate::new(
        target_unitary(gate.kind, gate.angle),
        KrausSet { operators: kraus, clipped: Vec::new() },
        gate.targets.clone(),
    )
}

pub fn noiseless_gate(gate: &Gate) -> Result<NoisyGate> {
    NoisyGate::noiseless(target_unitary(gate.kind, gate.angle), gate.targets.clone())
}

/// Statevector `Π_k e^{−iβ_k H_M} e^{−iγ_k H_C} |input⟩`.
pub fn ideal_statevector(problem: &IsingProblem, params: &QaoaParams) -> Result<CVector> {
    let table = problem.cost_table()?;
    statevector_from_table(problem.n, &table, params)
}

fn statevector_from_table(n: usize, table: &[f64], params: &QaoaParams) -> Result<CVector> {
    let d = 1usize << n;
    let [a, b] = params.input.single();
    let mut psi = CVector::from_fn(d, |z, _| {
        let ones = z.count_ones() as i32;
        a.powi(n as i32 - ones) * b.powi(ones)
    });
    for (g, beta) in params.gammas.iter().zip(&params.betas) {
        for (amp, c) in psi.iter_mut().zip(table) {
            *amp *= C64::cis(-g * c);
        }
        // e^{−iβX} = cos β − i sin β X, e^{−iβY} = cos β − i sin β Y.
        let (cb, sb) = (beta.cos(), beta.sin());
        for q in 0..n {
            let bit = 1usize << (n - 1 - q);
            for z in 0..d {
                if z & bit != 0 {
                    continue;
                }
                let (u0, u1) = (psi[z], psi[z | bit]);
                let (n0, n1) = match params.mixer {
                    Mixer::X => (u0 * cb - C64::new(0.0, sb) * u1, u1 * cb - C64::new(0.0, sb) * u0),
                    Mixer::Y => (u0 * cb - u1 * sb, u1 * cb + u0 * sb),
                };
                psi[z] = n0;
                psi[z | bit] = n1;
            }
        }
    }
    Ok(psi)
}

/// Output distribution of the circuit on the given backend.
pub fn run_qaoa(problem: &IsingProblem, params: &QaoaParams, backend: Backend<'_>) -> Result<Distribution> {
    match backend {
        Backend::Ideal => {
            let psi = ideal_statevector(problem, params)?;
            let probabilities: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
            let trace = probabilities.iter().sum();
            Ok(Distribution { probabilities, trace, renormalization: 1.0 })
        }
        Backend::Noisy(lib) => {
            let circuit =
                compile(problem, params).iter().map(|g| noisy_gate(g, lib)).collect::<Result<Vec<_>>>()?;
            let state = run_circuit(&circuit, &params.input.state(problem.n)?)?;
            Ok(measure_distribution(&state))
        }
    }
}

pub fn expectation(dist: &Distribution, problem: &IsingProblem) -> Result<f64> {
    let table = problem.cost_table()?;
    Ok(dist.probabilities.iter().zip(&table).map(|(p, c)| p * c).sum())
}

pub fn success_probability(dist: &Distribution, solutions: &[usize]) -> Result<f64> {
    if solutions.is_empty() {
        return Err(Error::InvalidParameter("solution set is empty".into()));
    }
    solutions
        .iter()
        .map(|&z| {
            dist.probabilities
                .get(z)
                .copied()
                .ok_or_else(|| Error::InvalidParameter(format!("solution {z} outside the register")))
        })
        .sum()
}

/// `⟨C⟩ / C_max` for a maximized cost.
pub fn approximation_ratio(dist: &Distribution, problem: &IsingProblem, c_max: f64) -> Result<f64> {
    if c_max == 0.0 {
        return Err(Error::Undefined("approximation ratio with C_max = 0".into()));
    }
    Ok(expectation(dist, problem)? / c_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaResult {
    pub params: QaoaParams,
    pub expectation: f64,
    pub success_probability: f64,
    /// Only for maximized problems with a nonzero optimum.
    pub approximation_ratio: Option<f64>,
    pub distribution: Distribution,
    pub backend: BackendKind,
    pub converged: bool,
}

/// Problem together with its exhaustive solution.
#[derive(Debug, Clone)]
pub struct SolvedProblem {
    pub problem: IsingProblem,
    pub optimum: f64,
    pub solutions: Vec<usize>,
    table: Vec<f64>,
}

impl SolvedProblem {
    pub fn new(problem: IsingProblem) -> Result<Self> {
        let (optimum, solutions) = brute_force_solve(&problem)?;
        let table = problem.cost_table()?;
        Ok(Self { problem, optimum, solutions, table })
    }

    /// Minimized objective: `⟨C⟩` or `−⟨C⟩`.
    fn ideal_objective(&self, params: &QaoaParams) -> f64 {
        let psi = statevector_from_table(self.problem.n, &self.table, params).expect("size checked on construction");
        let e: f64 = psi.iter().zip(&self.table).map(|(a, c)| a.norm_sqr() * c).sum();
        self.problem.orientation() * e
    }

    fn objective(&self, params: &QaoaParams, backend: Backend<'_>) -> Result<f64> {
        match backend {
            Backend::Ideal => Ok(self.ideal_objective(params)),
            Backend::Noisy(_) => {
                Ok(self.problem.orientation() * expectation(&run_qaoa(&self.problem, params, backend)?, &self.problem)?)
            }
        }
    }

    pub fn evaluate(&self, params: &QaoaParams, backend: Backend<'_>, converged: bool) -> Result<QaoaResult> {
        let distribution = run_qaoa(&self.problem, params, backend)?;
        let expectation = expectation(&distribution, &self.problem)?;
        let approximation_ratio = match self.problem.sense {
            Sense::Maximize if self.optimum != 0.0 => Some(expectation / self.optimum),
            _ => None,
        };
        Ok(QaoaResult {
            params: params.clone(),
            expectation,
            success_probability: success_probability(&distribution, &self.solutions)?,
            approximation_ratio,
            distribution,
            backend: backend.kind(),
            converged,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Points per axis of the depth-one grid.
    pub grid: usize,
    pub lbfgs: LbfgsConfig,
    /// Polish the depth-one grid optimum with the local optimizer.
    pub polish_grid: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { grid: 100, lbfgs: LbfgsConfig::default(), polish_grid: true }
    }
}

/// Best point of the uniform `grid x grid` lattice on `[0, 2π) x [0, π)`.
pub fn optimize_grid(
    solved: &SolvedProblem,
    backend: Backend<'_>,
    mixer: Mixer,
    input: InputState,
    grid: usize,
) -> Result<QaoaResult> {
    if grid == 0 {
        return Err(Error::InvalidParameter("grid needs at least one point".into()));
    }
    let scores = (0..grid * grid)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / grid, k % grid);
            let params = QaoaParams {
                gammas: vec![2.0 * PI * i as f64 / grid as f64],
                betas: vec![PI * j as f64 / grid as f64],
                mixer,
                input,
            };
            Ok((solved.objective(&params, backend)?, k))
        })
        .collect::<Result<Vec<_>>>()?;
    // Ties resolve to the lowest index for determinism.
    let (_, k) = scores.into_iter().fold((f64::INFINITY, usize::MAX), |best, s| if s.0 < best.0 { s } else { best });
    let (i, j) = (k / grid, k % grid);
    let params = QaoaParams {
        gammas: vec![2.0 * PI * i as f64 / grid as f64],
        betas: vec![PI * j as f64 / grid as f64],
        mixer,
        input,
    };
    solved.evaluate(&params, backend, true)
}

fn refine(
    solved: &SolvedProblem,
    backend: Backend<'_>,
    start: &QaoaParams,
    cfg: &LbfgsConfig,
) -> Result<(QaoaParams, f64, bool)> {
    // Noisy objectives can fail (e.g. a missing table); surface that first.
    solved.objective(start, backend)?;
    let f = |x: &[f64]| solved.objective(&start.with_flat(x), backend).unwrap_or(f64::INFINITY);
    let m = lbfgs(f, &start.flat(), cfg);
    Ok((start.with_flat(&m.x).canonical(&solved.problem), m.value, m.converged))
}

/// Linear interpolation of a depth-p schedule onto p + 1 points.
pub fn interp_schedule(v: &[f64]) -> Vec<f64> {
    let p = v.len();
    (0..=p)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { v[i - 1] };
            let right = if i == p { 0.0 } else { v[i] };
            (i as f64 / p as f64) * left + ((p - i) as f64 / p as f64) * right
        })
        .collect()
}

/// Depth-one grid search followed by level-by-level growth up to `p_max`.
/// Each new level is refined from two starts: the interpolated schedule and
/// the previous optimum padded with an identity layer; the better one wins,
/// so the objective never gets worse with depth.
pub fn optimize_interp(
    solved: &SolvedProblem,
    backend: Backend<'_>,
    mixer: Mixer,
    input: InputState,
    p_max: usize,
    opts: &OptimizeOptions,
) -> Result<Vec<QaoaResult>> {
    if p_max == 0 {
        return Err(Error::InvalidParameter("p_max must be at least 1".into()));
    }
    let grid_best = optimize_grid(solved, backend, mixer, input, opts.grid)?;
    let (mut params, mut converged) = (grid_best.params.clone(), true);
    if opts.polish_grid {
        let (p, value, conv) = refine(solved, backend, &grid_best.params, &opts.lbfgs)?;
        if value <= solved.objective(&grid_best.params, backend)? {
            params = p;
            converged = conv;
        }
    }
    let mut results = vec![solved.evaluate(&params, backend, converged)?];
    for _ in 1..p_max {
        let interp = QaoaParams {
            gammas: interp_schedule(&params.gammas),
            betas: interp_schedule(&params.betas),
            ..params.clone()
        };
        let mut padded = params.clone();
        padded.gammas.push(0.0);
        padded.betas.push(0.0);
        let a = refine(solved, backend, &interp, &opts.lbfgs)?;
        let b = refine(solved, backend, &padded, &opts.lbfgs)?;
        let (next, _, conv) = if a.1 <= b.1 { a } else { b };
        if !conv {
            log::warn!("local optimizer did not converge at depth {}", next.depth());
        }
        params = next;
        results.push(solved.evaluate(&params, backend, conv)?);
    }
    Ok(results)
}

/// Noise library restricted to the gates a circuit needs, keyed for quick
/// inspection in reports.
pub fn required_gate_kinds(problem: &IsingProblem, mixer: Mixer) -> Vec<GateKind> {
    let mut kinds = Vec::new();
    if !problem.couplings.is_empty() {
        kinds.push(GateKind::Rzz);
    }
    if problem.fields.iter().any(|h| *h != 0.0) {
        kinds.push(GateKind::Rz);
    }
    kinds.push(match mixer {
        Mixer::X => GateKind::Rx,
        Mixer::Y => GateKind::Ry,
    });
    kinds
}

/// Checks that every Kraus set in the library deserializes.
pub fn check_library(library: &NoiseLibrary) -> Result<()> {
    for t in &library.tables {
        for e in &t.entries {
            for m in &e.kraus_operators {
                deserialize_matrix(m)?;
            }
        }
    }
    Ok(())
}

/// Per-level results of one instance on every backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSweep {
    pub instance: MaxCutInstance,
    pub ideal: Vec<QaoaResult>,
    /// Ideal-optimal parameters replayed on each noisy backend.
    pub noisy: Vec<(BackendKind, Vec<QaoaResult>)>,
}

/// Optimizes one MaxCut instance on the ideal backend with the X mixer and
/// `|+⟩` input, then evaluates every level on each noisy library.
pub fn sweep_instance(
    instance: &MaxCutInstance,
    p_max: usize,
    libraries: &[&NoiseLibrary],
    opts: &OptimizeOptions,
) -> Result<InstanceSweep> {
    let solved = SolvedProblem::new(instance.hamiltonian()?)?;
    let ideal = optimize_interp(&solved, Backend::Ideal, Mixer::X, InputState::Plus, p_max, opts)?;
    let mut noisy = Vec::new();
    for lib in libraries {
        let backend = Backend::Noisy(lib);
        let results =
            ideal.iter().map(|r| solved.evaluate(&r.params, backend, r.converged)).collect::<Result<Vec<_>>>()?;
        noisy.push((backend.kind(), results));
    }
    Ok(InstanceSweep { instance: instance.clone(), ideal, noisy })
}

/// Mean approximation ratio per depth for one backend.
pub fn mean_ratio_curve(sweeps: &[InstanceSweep], backend: BackendKind) -> Vec<f64> {
    let pick = |s: &InstanceSweep| -> Option<Vec<f64>> {
        let rs = if backend == BackendKind::Ideal {
            &s.ideal
        } else {
            &s.noisy.iter().find(|(k, _)| *k == backend)?.1
        };
        Some(rs.iter().map(|r| r.approximation_ratio.unwrap_or(0.0)).collect())
    };
    let curves: Vec<Vec<f64>> = sweeps.iter().filter_map(pick).collect();
    let Some(len) = curves.iter().map(|c| c.len()).min() else { return Vec::new() };
    (0..len).map(|p| curves.iter().map(|c| c[p]).sum::<f64>() / curves.len() as f64).collect()
}

/// The two-qubit Exact Cover instance `U = {c₁, c₂}`, `V₁ = {c₁, c₂}`, `V₂ = {c₂}`.
pub fn toy_exact_cover() -> IsingProblem {
    encode_exact_cover(2, &[vec![0, 1], vec![1]]).expect("toy instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, expm_hermitian, CMatrix};

    #[test]
    fn toy_exact_cover_mapping() {
        let p = toy_exact_cover();
        assert_eq!(p.fields, vec![0.5, 0.0]);
        assert_eq!(p.coupling(0, 1), 0.5);
        let (best, sols) = brute_force_solve(&p).unwrap();
        assert_eq!(sols, vec![0b10]);
        assert!(best.abs() < 1e-12);
    }

    #[test]
    fn single_subset_cover_is_selected() {
        let p = encode_exact_cover(3, &[vec![0, 1, 2]]).unwrap();
        let (_, sols) = brute_force_solve(&p).unwrap();
        assert_eq!(sols, vec![1]);
        assert!(encode_exact_cover(0, &[vec![]]).is_err());
        assert!(encode_exact_cover(2, &[vec![0]]).is_err());
    }

    #[test]
    fn maxcut_small_graphs() {
        let edge = MaxCutInstance::new(2, vec![(0, 1)], None).unwrap();
        assert_eq!(edge.c_max, 1.0);
        let k3 = MaxCutInstance::new(3, vec![(0, 1), (1, 2), (0, 2)], None).unwrap();
        assert_eq!(k3.c_max, 2.0);
        let ring = MaxCutInstance::new(8, (0..8).map(|i| (i, (i + 1) % 8)).collect(), None).unwrap();
        assert_eq!(ring.c_max, 8.0);
        assert_eq!(ring.solutions.len(), 2);
        assert!(MaxCutInstance::new(3, vec![(0, 1), (1, 0)], None).is_err());
        assert!(MaxCutInstance::new(3, vec![(1, 1)], None).is_err());
    }

    #[test]
    fn erdos_renyi_extremes_and_determinism() {
        assert!(generate_erdos_renyi(6, 0.0, 1).unwrap().edges.is_empty());
        let k4 = generate_erdos_renyi(4, 1.0, 1).unwrap();
        assert_eq!(k4.edges.len(), 6);
        assert_eq!(k4.c_max, 4.0);
        assert_eq!(generate_erdos_renyi(8, 0.5, 42).unwrap(), generate_erdos_renyi(8, 0.5, 42).unwrap());
        assert!(generate_erdos_renyi(4, 1.5, 0).is_err());
    }

    #[test]
    fn compile_counts_and_toy_circuit() {
        let toy = toy_exact_cover();
        let params = QaoaParams::new(vec![0.3], vec![0.2], Mixer::X, InputState::Plus).unwrap();
        let kinds: Vec<GateKind> = compile(&toy, &params).iter().map(|g| g.kind).collect();
        assert_eq!(kinds, vec![GateKind::Rzz, GateKind::Rz, GateKind::Rx, GateKind::Rx]);
        let inst = generate_erdos_renyi(8, 0.5, 3).unwrap();
        let p3 = QaoaParams::new(vec![0.1; 3], vec![0.2; 3], Mixer::X, InputState::Plus).unwrap();
        assert_eq!(compile(&inst.hamiltonian().unwrap(), &p3).len(), 3 * (inst.edges.len() + 8));
    }

    fn direct_state(problem: &IsingProblem, params: &QaoaParams) -> CVector {
        let d = 1usize << problem.n;
        let [_, x, y, z] = linalg::pauli_1q();
        let single = |m: &CMatrix, q: usize| {
            let f: Vec<CMatrix> =
                (0..problem.n).map(|k| if k == q { m.clone() } else { linalg::identity(2) }).collect();
            linalg::kron_all(&f)
        };
        let mut hc = CMatrix::identity(d, d) * C64::new(problem.offset, 0.0);
        for c in &problem.couplings {
            hc += single(&z, c.i) * single(&z, c.j) * C64::new(c.value, 0.0);
        }
        for (q, h) in problem.fields.iter().enumerate() {
            hc += single(&z, q) * C64::new(*h, 0.0);
        }
        let pm = match params.mixer {
            Mixer::X => x,
            Mixer::Y => y,
        };
        let mut hm = CMatrix::zeros(d, d);
        for q in 0..problem.n {
            hm += single(&pm, q);
        }
        let [a, b] = params.input.single();
        let mut psi = CVector::from_element(1, C64::new(1.0, 0.0));
        for _ in 0..problem.n {
            psi = linalg::kron_vec(&psi, &CVector::from_row_slice(&[a, b]));
        }
        for (g, be) in params.gammas.iter().zip(&params.betas) {
            psi = expm_hermitian(&hc, *g) * psi;
            psi = expm_hermitian(&hm, *be) * psi;
        }
        psi
    }

    #[test]
    fn statevector_and_compiled_density_match_direct_exponentials() {
        let inst = MaxCutInstance::new(4, vec![(0, 1), (1, 2), (2, 3), (0, 2)], None).unwrap();
        let mut problem = inst.hamiltonian().unwrap();
        problem.fields = vec![0.3, 0.0, -0.7, 0.2];
        for (mixer, input) in [(Mixer::X, InputState::Plus), (Mixer::Y, InputState::PlusI), (Mixer::X, InputState::PlusI)] {
            let params = QaoaParams::new(vec![0.4, 1.3], vec![0.9, 0.25], mixer, input).unwrap();
            let direct = direct_state(&problem, &params);
            let sv = ideal_statevector(&problem, &params).unwrap();
            assert!((1.0 - direct.dotc(&sv).norm_sqr()).abs() < 1e-10);
            let circuit: Vec<NoisyGate> = compile(&problem, &params).iter().map(|g| noiseless_gate(g).unwrap()).collect();
            let rho = run_circuit(&circuit, &input.state(4).unwrap()).unwrap();
            let fid = (direct.adjoint() * rho.rho() * &direct)[(0, 0)].re;
            assert!((1.0 - fid).abs() < 1e-8, "{fid}");
        }
    }

    #[test]
    fn metrics_on_simple_distributions() {
        let ring = MaxCutInstance::new(8, (0..8).map(|i| (i, (i + 1) % 8)).collect(), None).unwrap();
        let h = ring.hamiltonian().unwrap();
        let uniform = Distribution { probabilities: vec![1.0 / 256.0; 256], trace: 1.0, renormalization: 1.0 };
        assert!((approximation_ratio(&uniform, &h, ring.c_max).unwrap() - 0.5).abs() < 1e-12);
        let mut pure = vec![0.0; 256];
        pure[ring.solutions[0]] = 1.0;
        let pure = Distribution { probabilities: pure, trace: 1.0, renormalization: 1.0 };
        assert!((approximation_ratio(&pure, &h, ring.c_max).unwrap() - 1.0).abs() < 1e-12);
        assert!((success_probability(&pure, &ring.solutions).unwrap() - 1.0).abs() < 1e-12);
        assert!(success_probability(&pure, &[]).is_err());
        let empty = MaxCutInstance::new(3, vec![], None).unwrap();
        assert!(approximation_ratio(&uniform, &empty.hamiltonian().unwrap(), 0.0).is_err());
    }

    #[test]
    fn interp_schedule_endpoints() {
        assert_eq!(interp_schedule(&[1.0]), vec![1.0, 1.0]);
        let v = interp_schedule(&[1.0, 3.0]);
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn grid_on_flat_landscape_returns_first_point() {
        let solved = SolvedProblem::new(MaxCutInstance::new(3, vec![], None).unwrap().hamiltonian().unwrap()).unwrap();
        let r = optimize_grid(&solved, Backend::Ideal, Mixer::X, InputState::Plus, 10).unwrap();
        assert_eq!(r.params.gammas, vec![0.0]);
        assert_eq!(r.params.betas, vec![0.0]);
    }

    #[test]
    fn toy_instance_ideal_success_pattern() {
        let solved = SolvedProblem::new(toy_exact_cover()).unwrap();
        let opts = OptimizeOptions::default();
        let rows = [
            (InputState::Plus, Mixer::X, [0.5, 1.0]),
            (InputState::PlusI, Mixer::X, [1.0, 1.0]),
            (InputState::PlusI, Mixer::Y, [0.5, 1.0]),
            (InputState::Plus, Mixer::Y, [1.0, 1.0]),
        ];
        for (input, mixer, expected) in rows {
            let rs = optimize_interp(&solved, Backend::Ideal, mixer, input, 2, &opts).unwrap();
            for (r, e) in rs.iter().zip(expected) {
                assert!((r.success_probability - e).abs() < 5e-3, "{input:?} {mixer:?}: {}", r.success_probability);
            }
        }
    }

    #[test]
    fn plus_x_matches_plus_i_y() {
        let toy = toy_exact_cover();
        for (g, b) in [(0.3, 0.1), (1.7, 2.9), (4.0, 0.6)] {
            let a = QaoaParams::new(vec![g, b], vec![b, g], Mixer::X, InputState::Plus).unwrap();
            let c = QaoaParams { mixer: Mixer::Y, input: InputState::PlusI, ..a.clone() };
            let da = run_qaoa(&toy, &a, Backend::Ideal).unwrap();
            let dc = run_qaoa(&toy, &c, Backend::Ideal).unwrap();
            for (x, y) in da.probabilities.iter().zip(&dc.probabilities) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn canonical_folds_angles() {
        let toy = toy_exact_cover();
        let p = QaoaParams::new(vec![-0.5], vec![3.5], Mixer::X, InputState::Plus).unwrap().canonical(&toy);
        assert!((p.gammas[0] - (2.0 * PI - 0.5)).abs() < 1e-12);
        assert!((p.betas[0] - (3.5 - PI)).abs() < 1e-12);
    }
}

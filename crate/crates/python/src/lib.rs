//! Python bindings for cat-qubit QAOA simulation.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use catqaoa::bosonic_qaoa::{cat_prep_problem, single_ising_problem, AngleGrid, BosonicProblem};
use catqaoa::channel::average_gate_fidelity;
use catqaoa::experiments::library_mean_fidelity;
use catqaoa::fock::KnrParams;
use catqaoa::knr_gates::{self, target_unitary, GateKind, DEFAULT_KAPPA};
use catqaoa::qaoa::{self, Backend, InputState, Mixer, OptimizeOptions, SolvedProblem};
use catqaoa::tomography::{self, NoiseSource};
use catqaoa::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_)
        | Error::DimensionMismatch(_)
        | Error::ModeOutOfRange { .. }
        | Error::OutOfCalibratedRange { .. }
        | Error::ProblemTooLarge(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn gate_kind(name: &str) -> PyResult<GateKind> {
    name.parse::<GateKind>().map_err(to_py)
}

fn mixer(name: &str) -> PyResult<Mixer> {
    match name.to_ascii_lowercase().as_str() {
        "x" => Ok(Mixer::X),
        "y" => Ok(Mixer::Y),
        _ => Err(PyValueError::new_err(format!("unknown mixer {name:?}; expected 'x' or 'y'"))),
    }
}

fn input_state(name: &str) -> PyResult<InputState> {
    match name {
        "+" | "plus" => Ok(InputState::Plus),
        "+i" | "plus_i" => Ok(InputState::PlusI),
        _ => Err(PyValueError::new_err(format!("unknown input {name:?}; expected 'plus' or 'plus_i'"))),
    }
}

/// Pulse-level gate model of cat qubits in Kerr resonators (K = 1).
#[pyclass(name = "CatGateModel", module = "pycatqaoa")]
struct PyCatGateModel {
    inner: knr_gates::CatGateModel,
}

#[pymethods]
impl PyCatGateModel {
    #[new]
    #[pyo3(signature = (alpha = 2.0, dim = 20, kappa = DEFAULT_KAPPA))]
    fn new(alpha: f64, dim: usize, kappa: f64) -> PyResult<Self> {
        let knr = KnrParams::with_alpha(1.0, alpha).map_err(to_py)?;
        Ok(Self { inner: knr_gates::CatGateModel::new(knr, dim, kappa).map_err(to_py)? })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn ry_scale(&self) -> f64 {
        self.inner.ry_scale
    }

    #[setter]
    fn set_ry_scale(&mut self, scale: f64) {
        self.inner.ry_scale = scale;
    }

    /// Fits the R_Y envelope scale and stores it on the model.
    fn calibrate_ry_scale(&mut self, py: Python<'_>) -> PyResult<f64> {
        let scale = py.detach(|| self.inner.calibrate_ry_scale()).map_err(to_py)?;
        self.inner.ry_scale = scale;
        Ok(scale)
    }

    #[pyo3(signature = (n_points = 60))]
    fn calibrate_rx(&self, py: Python<'_>, n_points: usize) -> PyResult<RxCalibration> {
        let inner = py.detach(|| self.inner.calibrate_rx(n_points)).map_err(to_py)?;
        Ok(RxCalibration { inner })
    }

    /// Average gate fidelity and leakage of one gate.
    #[pyo3(signature = (kind, angle, lossy = true, calibration = None))]
    fn gate_fidelity(
        &self,
        py: Python<'_>,
        kind: &str,
        angle: f64,
        lossy: bool,
        calibration: Option<PyRef<'_, RxCalibration>>,
    ) -> PyResult<(f64, f64)> {
        let kind = gate_kind(kind)?;
        let cal = calibration.as_ref().map(|c| &c.inner);
        py.detach(|| {
            let gc = self.inner.gate_channel(kind, angle, lossy, cal)?;
            Ok((average_gate_fidelity(&gc.channel, &target_unitary(kind, angle))?, gc.leakage))
        })
        .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("CatGateModel(alpha={}, dim={}, kappa={})", self.inner.alpha(), self.inner.dim, self.inner.kappa)
    }
}

#[pyclass(module = "pycatqaoa")]
struct RxCalibration {
    inner: knr_gates::RxCalibration,
}

#[pymethods]
impl RxCalibration {
    fn delta0_for(&self, theta: f64) -> PyResult<f64> {
        self.inner.delta0_for(theta).map_err(to_py)
    }

    fn theta_range(&self) -> (f64, f64) {
        self.inner.theta_range()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { inner: knr_gates::RxCalibration::from_json(s).map_err(to_py)? })
    }

    fn __len__(&self) -> usize {
        self.inner.entries.len()
    }
}

/// Ising cost function on bitstrings; qubit 0 is the most significant bit.
#[pyclass(module = "pycatqaoa")]
struct IsingProblem {
    inner: qaoa::IsingProblem,
}

#[pymethods]
impl IsingProblem {
    #[new]
    #[pyo3(signature = (n, couplings, fields = None, offset = 0.0, maximize = false))]
    fn new(
        n: usize,
        couplings: Vec<(usize, usize, f64)>,
        fields: Option<Vec<f64>>,
        offset: f64,
        maximize: bool,
    ) -> PyResult<Self> {
        let sense = if maximize { qaoa::Sense::Maximize } else { qaoa::Sense::Minimize };
        let fields = fields.unwrap_or_else(|| vec![0.0; n]);
        Ok(Self { inner: qaoa::IsingProblem::new(n, &couplings, fields, offset, sense).map_err(to_py)? })
    }

    /// The two-qubit Exact Cover instance.
    #[staticmethod]
    fn toy_exact_cover() -> Self {
        Self { inner: qaoa::toy_exact_cover() }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn maximize(&self) -> bool {
        self.inner.sense == qaoa::Sense::Maximize
    }

    fn cost(&self, z: usize) -> PyResult<f64> {
        if z.checked_shr(self.inner.n as u32).unwrap_or(0) != 0 {
            return Err(PyValueError::new_err(format!("bitstring {z} has more than {} bits", self.inner.n)));
        }
        Ok(self.inner.cost(z))
    }

    fn cost_table(&self) -> PyResult<Vec<f64>> {
        self.inner.cost_table().map_err(to_py)
    }

    /// Optimal cost and every bitstring attaining it.
    fn brute_force(&self) -> PyResult<(f64, Vec<usize>)> {
        qaoa::brute_force_solve(&self.inner).map_err(to_py)
    }
}

#[pyclass(module = "pycatqaoa")]
struct MaxCutInstance {
    inner: qaoa::MaxCutInstance,
}

#[pymethods]
impl MaxCutInstance {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self { inner: qaoa::MaxCutInstance::new(n, edges, None).map_err(to_py)? })
    }

    #[staticmethod]
    fn erdos_renyi(n: usize, edge_prob: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: qaoa::generate_erdos_renyi(n, edge_prob, seed).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { inner: qaoa::MaxCutInstance::from_json(s).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges.clone()
    }

    #[getter]
    fn c_max(&self) -> f64 {
        self.inner.c_max
    }

    #[getter]
    fn solutions(&self) -> Vec<usize> {
        self.inner.solutions.clone()
    }

    fn hamiltonian(&self) -> PyResult<IsingProblem> {
        Ok(IsingProblem { inner: self.inner.hamiltonian().map_err(to_py)? })
    }
}

#[pyclass(module = "pycatqaoa")]
struct QaoaParams {
    inner: qaoa::QaoaParams,
}

#[pymethods]
impl QaoaParams {
    #[new]
    #[pyo3(signature = (gammas, betas, mixer = "x", input = "plus"))]
    fn new(gammas: Vec<f64>, betas: Vec<f64>, mixer: &str, input: &str) -> PyResult<Self> {
        let inner = qaoa::QaoaParams::new(gammas, betas, self::mixer(mixer)?, input_state(input)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn gammas(&self) -> Vec<f64> {
        self.inner.gammas.clone()
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.inner.betas.clone()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    fn __repr__(&self) -> String {
        format!("QaoaParams(gammas={:?}, betas={:?})", self.inner.gammas, self.inner.betas)
    }
}

/// Kraus noise tables for every gate of one device.
#[pyclass(module = "pycatqaoa")]
struct NoiseLibrary {
    inner: tomography::NoiseLibrary,
}

#[pymethods]
impl NoiseLibrary {
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { inner: tomography::NoiseLibrary::load(&path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { inner: tomography::NoiseLibrary::from_json(s).map_err(to_py)? })
    }

    #[getter]
    fn source(&self) -> &'static str {
        match self.inner.source {
            NoiseSource::Cat => "cat",
            NoiseSource::Standard => "standard",
        }
    }

    #[getter]
    fn gates(&self) -> Vec<&'static str> {
        self.inner.tables.iter().map(|t| t.kind.name()).collect()
    }

    fn n_entries(&self) -> usize {
        self.inner.n_entries()
    }

    fn bins(&self, kind: &str) -> PyResult<usize> {
        Ok(self.inner.table(gate_kind(kind)?).map_err(to_py)?.entries.len())
    }

    /// Mean fidelity of ideal gate plus tabulated noise over `[0, π]`.
    #[pyo3(signature = (kind, n_angles = 20))]
    fn mean_fidelity(&self, kind: &str, n_angles: usize) -> PyResult<f64> {
        library_mean_fidelity(&self.inner, gate_kind(kind)?, n_angles).map_err(to_py)
    }

    fn max_completeness_excess(&self) -> PyResult<f64> {
        self.inner.max_completeness_excess().map_err(to_py)
    }
}

#[pyclass(module = "pycatqaoa", get_all)]
struct QaoaResult {
    gammas: Vec<f64>,
    betas: Vec<f64>,
    expectation: f64,
    success_probability: f64,
    approximation_ratio: Option<f64>,
    probabilities: Vec<f64>,
    backend: &'static str,
    converged: bool,
}

impl From<qaoa::QaoaResult> for QaoaResult {
    fn from(r: qaoa::QaoaResult) -> Self {
        Self {
            gammas: r.params.gammas,
            betas: r.params.betas,
            expectation: r.expectation,
            success_probability: r.success_probability,
            approximation_ratio: r.approximation_ratio,
            probabilities: r.distribution.probabilities,
            backend: match r.backend {
                qaoa::BackendKind::Ideal => "ideal",
                qaoa::BackendKind::Cat => "cat",
                qaoa::BackendKind::Standard => "standard",
            },
            converged: r.converged,
        }
    }
}

#[pymethods]
impl QaoaResult {
    fn __repr__(&self) -> String {
        format!(
            "QaoaResult(backend={}, p={}, expectation={:.6}, success_probability={:.6})",
            self.backend,
            self.gammas.len(),
            self.expectation,
            self.success_probability
        )
    }
}

fn backend<'a>(library: &'a Option<PyRef<'_, NoiseLibrary>>) -> Backend<'a> {
    match library {
        Some(l) => Backend::Noisy(&l.inner),
        None => Backend::Ideal,
    }
}

/// Output probabilities of a QAOA circuit, noiseless or replayed through a
/// noise library.
#[pyfunction]
#[pyo3(signature = (problem, params, library = None))]
fn run_qaoa(
    py: Python<'_>,
    problem: &IsingProblem,
    params: &QaoaParams,
    library: Option<PyRef<'_, NoiseLibrary>>,
) -> PyResult<Vec<f64>> {
    let b = backend(&library);
    py.detach(|| qaoa::run_qaoa(&problem.inner, &params.inner, b)).map(|d| d.probabilities).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (problem, params, library = None))]
fn evaluate(
    py: Python<'_>,
    problem: &IsingProblem,
    params: &QaoaParams,
    library: Option<PyRef<'_, NoiseLibrary>>,
) -> PyResult<QaoaResult> {
    let b = backend(&library);
    py.detach(|| SolvedProblem::new(problem.inner.clone())?.evaluate(&params.inner, b, true))
        .map(Into::into)
        .map_err(to_py)
}

/// Grid search at depth one, then INTERP refinement up to `p_max`; one result
/// per depth.
#[pyfunction]
#[pyo3(signature = (problem, p_max, mixer = "x", input = "plus", grid = 100, library = None))]
fn optimize(
    py: Python<'_>,
    problem: &IsingProblem,
    p_max: usize,
    mixer: &str,
    input: &str,
    grid: usize,
    library: Option<PyRef<'_, NoiseLibrary>>,
) -> PyResult<Vec<QaoaResult>> {
    let (m, i) = (self::mixer(mixer)?, input_state(input)?);
    let b = backend(&library);
    let opts = OptimizeOptions { grid, ..Default::default() };
    py.detach(|| {
        let solved = SolvedProblem::new(problem.inner.clone())?;
        qaoa::optimize_interp(&solved, b, m, i, p_max, &opts)
    })
    .map(|rs| rs.into_iter().map(Into::into).collect())
    .map_err(to_py)
}

fn bosonic_problem(name: &str, dim: usize, alpha: f64) -> PyResult<BosonicProblem> {
    match name {
        "single_ising" => single_ising_problem(dim, alpha).map_err(to_py),
        "cat_prep" => cat_prep_problem(dim, alpha).map_err(to_py),
        _ => Err(PyValueError::new_err(format!("unknown benchmark {name:?}; expected 'single_ising' or 'cat_prep'"))),
    }
}

/// Target fidelity of bosonic QAOA at the given angles.
#[pyfunction]
#[pyo3(signature = (benchmark, gammas, betas, dim = 20, alpha = 2.0))]
fn bosonic_fidelity(benchmark: &str, gammas: Vec<f64>, betas: Vec<f64>, dim: usize, alpha: f64) -> PyResult<f64> {
    if gammas.len() != betas.len() {
        return Err(PyValueError::new_err("gammas and betas differ in length"));
    }
    Ok(bosonic_problem(benchmark, dim, alpha)?.fidelity(&gammas, &betas))
}

/// Best fidelity on a `points x points` grid per layer over `[0, 2π) x [0, π)`.
#[pyfunction]
#[pyo3(signature = (benchmark, p, points = 100, dim = 20, alpha = 2.0))]
fn bosonic_grid_optimum(
    py: Python<'_>,
    benchmark: &str,
    p: usize,
    points: usize,
    dim: usize,
    alpha: f64,
) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let problem = bosonic_problem(benchmark, dim, alpha)?;
    let best = py.detach(|| problem.grid_optimum(&AngleGrid::standard(points), p)).map_err(to_py)?;
    Ok((best.fidelity, best.gammas, best.betas))
}

#[pymodule]
fn pycatqaoa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCatGateModel>()?;
    m.add_class::<RxCalibration>()?;
    m.add_class::<IsingProblem>()?;
    m.add_class::<MaxCutInstance>()?;
    m.add_class::<QaoaParams>()?;
    m.add_class::<NoiseLibrary>()?;
    m.add_class::<QaoaResult>()?;
    m.add_function(wrap_pyfunction!(run_qaoa, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(bosonic_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(bosonic_grid_optimum, m)?)?;
    Ok(())
}

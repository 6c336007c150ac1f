//! Table-level experiments shared by the command-line tool and the
//! acceptance suite.

use serde::{Deserialize, Serialize};

use crate::channel::{average_gate_fidelity, QubitChannel};
use crate::error::Result;
use crate::knr_gates::{mean_fidelity, target_unitary, CatGateModel, GateKind, RxCalibration, SweepPoint};
use crate::qaoa::{
    master_equation_distribution, optimize_interp, run_qaoa, success_probability, toy_exact_cover, Backend,
    InputState, MasterEquationOptions, Mixer, OptimizeOptions, QaoaParams, SolvedProblem,
};
use crate::tomography::{angle_bins, NoiseLibrary};

/// Angles of the gate-fidelity averages: 20 points evenly spaced on `[0, π]`.
pub const FIDELITY_ANGLES: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateFidelityRow {
    pub kind: GateKind,
    pub loss_free: f64,
    pub lossy: f64,
    pub loss_free_points: Vec<SweepPoint>,
    pub lossy_points: Vec<SweepPoint>,
}

/// Mean average gate fidelity of every gate with and without loss.
pub fn gate_fidelity_table(model: &CatGateModel, calibration: &RxCalibration, n_angles: usize) -> Result<Vec<GateFidelityRow>> {
    let angles = angle_bins(n_angles);
    GateKind::ALL
        .iter()
        .map(|&kind| {
            log::info!("{kind} fidelity sweep");
            let loss_free_points = model.fidelity_sweep(kind, &angles, false, Some(calibration))?;
            let lossy_points = model.fidelity_sweep(kind, &angles, true, Some(calibration))?;
            Ok(GateFidelityRow {
                kind,
                loss_free: mean_fidelity(&loss_free_points),
                lossy: mean_fidelity(&lossy_points),
                loss_free_points,
                lossy_points,
            })
        })
        .collect()
}

/// Average gate fidelity of the ideal gate followed by the library noise.
pub fn kraus_replay_fidelity(library: &NoiseLibrary, kind: GateKind, angle: f64) -> Result<f64> {
    let u = target_unitary(kind, angle);
    let ops: Vec<_> = library.lookup(kind, angle)?.iter().map(|a| a * &u).collect();
    average_gate_fidelity(&QubitChannel::from_kraus(&ops)?, &u)
}

/// Mean Kraus-replay fidelity over `n_angles` points on `[0, π]`.
pub fn library_mean_fidelity(library: &NoiseLibrary, kind: GateKind, n_angles: usize) -> Result<f64> {
    let angles = angle_bins(n_angles);
    let sum = angles.iter().map(|&a| kraus_replay_fidelity(library, kind, a)).sum::<Result<f64>>()?;
    Ok(sum / angles.len() as f64)
}

/// The six (input, mixer, depth) rows of the toy Exact Cover comparison.
pub const TOY_ROWS: [(InputState, Mixer, usize); 6] = [
    (InputState::Plus, Mixer::X, 1),
    (InputState::Plus, Mixer::X, 2),
    (InputState::PlusI, Mixer::X, 1),
    (InputState::PlusI, Mixer::Y, 1),
    (InputState::PlusI, Mixer::Y, 2),
    (InputState::Plus, Mixer::Y, 1),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyRow {
    pub input: InputState,
    pub mixer: Mixer,
    pub p: usize,
    pub params: QaoaParams,
    pub ideal: f64,
    /// Master-equation success probability with loss.
    pub lossy: Option<f64>,
    /// Master-equation success probability without loss.
    pub loss_free: Option<f64>,
    /// Noisy-circuit replay with a cat noise library.
    pub kraus: Option<f64>,
}

/// Ideal-optimal parameters for one toy row.
pub fn toy_ideal_row(input: InputState, mixer: Mixer, p: usize, opts: &OptimizeOptions) -> Result<ToyRow> {
    let solved = SolvedProblem::new(toy_exact_cover())?;
    let results = optimize_interp(&solved, Backend::Ideal, mixer, input, p, opts)?;
    let best = results.last().expect("p >= 1");
    Ok(ToyRow {
        input,
        mixer,
        p,
        params: best.params.clone(),
        ideal: best.success_probability,
        lossy: None,
        loss_free: None,
        kraus: None,
    })
}

/// Success probability of the row's parameters under the master equation.
pub fn toy_master_equation(row: &ToyRow, model: &CatGateModel, calibration: &RxCalibration, lossy: bool) -> Result<f64> {
    let solved = SolvedProblem::new(toy_exact_cover())?;
    let opts = MasterEquationOptions { model, calibration, lossy };
    let dist = master_equation_distribution(&solved.problem, &row.params, &opts)?;
    success_probability(&dist, &solved.solutions)
}

/// Success probability of the row's parameters replayed through a library.
pub fn toy_kraus_replay(row: &ToyRow, library: &NoiseLibrary) -> Result<f64> {
    let solved = SolvedProblem::new(toy_exact_cover())?;
    let dist = run_qaoa(&solved.problem, &row.params, Backend::Noisy(library))?;
    success_probability(&dist, &solved.solutions)
}

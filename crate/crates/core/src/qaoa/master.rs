//! Full master-equation evaluation of small QAOA circuits on Kerr resonators.

use crate::dynamics::{evolve_density, IntegratorConfig, PulseSchedule};
use crate::error::{Error, Result};
use crate::fock::{embed_single_mode, FockDensityMatrix, FockOperator};
use crate::knr_gates::{wrap_angle, CatGateModel, RxCalibration, T_RX, T_RY, T_RZ, T_RZZ};
use crate::linalg::{self, C64};
use crate::qubit_channel_sim::{measure_distribution, Distribution, QubitState};

use super::{IsingProblem, Mixer, QaoaParams};

pub struct MasterEquationOptions<'a> {
    /// Should carry the fitted R_Y envelope scale when the Y mixer is used.
    pub model: &'a CatGateModel,
    pub calibration: &'a RxCalibration,
    pub lossy: bool,
}

/// Evolves the encoded input through the pulse sequence of the circuit, one
/// moment at a time: each R_ZZ, then all R_Z in parallel, then the mixer on
/// every mode in parallel. Negative mixer angles run the |θ| pulse between
/// two cat-basis Z reflections, applied exactly.
pub fn master_equation_distribution(
    problem: &IsingProblem,
    params: &QaoaParams,
    opts: &MasterEquationOptions<'_>,
) -> Result<Distribution> {
    let n = problem.n;
    let model = opts.model;
    let enc = model.encoding(n)?;
    let space = enc.space();
    let input = params.input.state(n)?;
    let mut rho = FockDensityMatrix::new(enc.embed(input.rho())?.into_matrix(), space)?;
    let reflections = (0..n)
        .map(|m| {
            let b = model.basis();
            let p1 = b.ket1.amplitudes() * b.ket1.amplitudes().adjoint();
            let w = linalg::identity(model.dim) - p1 * C64::new(2.0, 0.0);
            embed_single_mode(space, &w, m)
        })
        .collect::<Result<Vec<_>>>()?;
    let frame = model.integrator;
    let lab = model.lab_integrator();

    let run = |rho: &FockDensityMatrix, s: &PulseSchedule, cfg: &IntegratorConfig| evolve_density(s, rho, cfg);

    for (g, b) in params.gammas.iter().zip(&params.betas) {
        for c in &problem.couplings {
            let mut s = model.stabilized_schedule(n, T_RZZ, opts.lossy)?;
            model.add_rzz(&mut s, (c.i, c.j), wrap_angle(2.0 * g * c.value), 0.0)?;
            rho = run(&rho, &s, &frame)?;
        }
        if problem.fields.iter().any(|h| wrap_angle(2.0 * g * h) != 0.0) {
            let mut s = model.stabilized_schedule(n, T_RZ, opts.lossy)?;
            for (q, h) in problem.fields.iter().enumerate() {
                let phi = wrap_angle(2.0 * g * h);
                if phi != 0.0 {
                    model.add_rz(&mut s, q, phi, 0.0)?;
                }
            }
            rho = run(&rho, &s, &frame)?;
        }
        let theta = wrap_angle(2.0 * b);
        if theta == 0.0 {
            continue;
        }
        let (t, cfg) = match params.mixer {
            Mixer::X => (T_RX, &frame),
            Mixer::Y => (T_RY, &lab),
        };
        let mut s = model.stabilized_schedule(n, t, opts.lossy)?;
        for q in 0..n {
            match params.mixer {
                Mixer::X => model.add_rx(&mut s, q, opts.calibration.delta0_for(theta.abs())?, 0.0)?,
                Mixer::Y => model.add_ry(&mut s, q, theta.abs(), 0.0)?,
            }
        }
        if theta < 0.0 {
            rho = reflect(&rho, &reflections)?;
        }
        rho = run(&rho, &s, cfg)?;
        if theta < 0.0 {
            rho = reflect(&rho, &reflections)?;
        }
    }
    let projected = enc.project(rho.matrix());
    let state = QubitState::from_density(projected)?;
    let leaked = 1.0 - state.trace();
    if leaked > 0.05 {
        return Err(Error::NonPhysicalChannel(format!("{leaked:.3} of the population left the cat subspace")));
    }
    Ok(measure_distribution(&state))
}

fn reflect(rho: &FockDensityMatrix, ws: &[FockOperator]) -> Result<FockDensityMatrix> {
    let mut m = rho.matrix().clone();
    for w in ws {
        m = w.matrix() * m * w.matrix();
    }
    FockDensityMatrix::new(m, rho.space())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockSpace, KnrParams};
    use crate::qaoa::{ideal_statevector, toy_exact_cover, InputState};
    use std::f64::consts::PI;

    fn small_model() -> CatGateModel {
        CatGateModel::new(KnrParams::with_alpha(1.0, 1.2).unwrap(), 10, 0.0).unwrap()
    }

    #[test]
    fn reflection_acts_as_cat_z() {
        let model = small_model();
        let enc = model.encoding(1).unwrap();
        let plus = QubitState::plus(1).unwrap();
        let rho = FockDensityMatrix::new(enc.embed(plus.rho()).unwrap().into_matrix(), enc.space()).unwrap();
        let b = model.basis();
        let w = linalg::identity(10) - b.ket1.amplitudes() * b.ket1.amplitudes().adjoint() * C64::new(2.0, 0.0);
        let ws = vec![embed_single_mode(FockSpace::single(10).unwrap(), &w, 0).unwrap()];
        let q = enc.project(reflect(&rho, &ws).unwrap().matrix());
        // Z|+⟩ = |−⟩.
        assert!((q[(0, 1)].re + 0.5).abs() < 1e-12);
    }

    #[test]
    fn loss_free_toy_circuit_tracks_ideal_statevector() {
        let model = CatGateModel::paper_default().unwrap();
        let cal = model.calibrate_rx(40).unwrap();
        let toy = toy_exact_cover();
        let params = QaoaParams::new(vec![PI], vec![0.75 * PI], Mixer::X, InputState::PlusI).unwrap();
        let ideal = ideal_statevector(&toy, &params).unwrap();
        let opts = MasterEquationOptions { model: &model, calibration: &cal, lossy: false };
        let dist = master_equation_distribution(&toy, &params, &opts).unwrap();
        for (p, a) in dist.probabilities.iter().zip(ideal.iter()) {
            assert!((p - a.norm_sqr()).abs() < 5e-3, "{p} vs {}", a.norm_sqr());
        }
    }
}

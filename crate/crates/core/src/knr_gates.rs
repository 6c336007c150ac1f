//! Pulse-level cat-qubit gates on driven Kerr resonators: schedules for
//! R_Z, R_X, R_Y and R_ZZ, subspace channel extraction, the R_X detuning
//! calibration and average-gate-fidelity sweeps.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{average_gate_fidelity, pauli_basis, QubitChannel};
use crate::dynamics::{channel_apply, evolve_ket_block, Frame, IntegratorConfig, PulseEnvelope, PulseSchedule};
use crate::error::{Error, Result};
use crate::fock::{
    annihilation_op, cat_basis, knr_hamiltonian, number_op, CatBasis, CatEncoding, FockDensityMatrix,
    FockOperator, FockSpace, KnrParams,
};
use crate::linalg::{self, c, CMatrix, I};

pub const T_RZ: f64 = 2.0;
pub const T_RX: f64 = 10.0;
pub const T_RZZ: f64 = 2.0;
/// Free Kerr evolution before and after the R_Y drive stage.
pub const T_RY_FREE: f64 = PI / 2.0;
pub const T_RY_DRIVE: f64 = 2.0 * PI;
pub const T_RY: f64 = 2.0 * T_RY_FREE + T_RY_DRIVE;
pub const RX_DELTA0_MAX: f64 = 3.95;
/// Default single-photon loss rate in units of K.
pub const DEFAULT_KAPPA: f64 = 1.0 / 1500.0;
/// Eigenstates of the static Kerr Hamiltonian kept per mode when integrating
/// gates that stay near the cat manifold.
pub const DEFAULT_KEEP_PER_MODE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "RZ")]
    Rz,
    #[serde(rename = "RX")]
    Rx,
    #[serde(rename = "RY")]
    Ry,
    #[serde(rename = "RZZ")]
    Rzz,
}

impl GateKind {
    pub const ALL: [GateKind; 4] = [GateKind::Rz, GateKind::Rx, GateKind::Ry, GateKind::Rzz];

    pub fn n_qubits(self) -> usize {
        match self {
            GateKind::Rzz => 2,
            _ => 1,
        }
    }

    pub fn t_gate(self) -> f64 {
        match self {
            GateKind::Rz => T_RZ,
            GateKind::Rx => T_RX,
            GateKind::Ry => T_RY,
            GateKind::Rzz => T_RZZ,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rz => "RZ",
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rzz => "RZZ",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RZ" => Ok(GateKind::Rz),
            "RX" => Ok(GateKind::Rx),
            "RY" => Ok(GateKind::Ry),
            "RZZ" => Ok(GateKind::Rzz),
            other => Err(Error::InvalidParameter(format!("unknown gate kind {other}"))),
        }
    }
}

/// Target unitary with half-angle convention, e.g. `R_X(θ) = exp(−iθX/2)`.
pub fn target_unitary(kind: GateKind, angle: f64) -> CMatrix {
    let [_, x, y, z] = linalg::pauli_1q();
    match kind {
        GateKind::Rz => linalg::pauli_rotation(&z, angle),
        GateKind::Rx => linalg::pauli_rotation(&x, angle),
        GateKind::Ry => linalg::pauli_rotation(&y, angle),
        GateKind::Rzz => linalg::pauli_rotation(&linalg::kron(&z, &z), angle),
    }
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub angle: f64,
    pub t_gate: f64,
    pub knr: KnrParams,
}

impl GateSpec {
    pub fn new(kind: GateKind, angle: f64, knr: KnrParams) -> Self {
        Self { kind, angle, t_gate: kind.t_gate(), knr }
    }
}

/// Effective qubit channel of a gate together with the population it leaks
/// out of the cat subspace (averaged over the maximally mixed input).
#[derive(Debug, Clone)]
pub struct GateChannel {
    pub channel: QubitChannel,
    pub leakage: f64,
}

/// Everything needed to build and simulate cat-qubit gates at a fixed
/// resonator configuration.
#[derive(Debug, Clone)]
pub struct CatGateModel {
    pub knr: KnrParams,
    pub dim: usize,
    pub kappa: f64,
    /// Used for R_Z, R_X, R_ZZ and [`CatGateModel::subspace_channel`]. R_Y
    /// leaves the cat manifold during its free-Kerr stages and always runs
    /// with the same tolerances in the lab frame.
    pub integrator: IntegratorConfig,
    /// Multiplier on the nominal R_Y single-photon envelope.
    pub ry_scale: f64,
    basis: CatBasis,
    encodings: [CatEncoding; 2],
}

impl CatGateModel {
    pub fn new(knr: KnrParams, dim: usize, kappa: f64) -> Result<Self> {
        knr.validate()?;
        if knr.detuning != 0.0 || knr.phase != 0.0 {
            return Err(Error::InvalidParameter("gates are defined around Δ = 0, φ = 0".into()));
        }
        if !(kappa >= 0.0) {
            return Err(Error::InvalidParameter("loss rate must be >= 0".into()));
        }
        let basis = cat_basis(FockSpace::single(dim)?, knr.alpha())?;
        let encodings = [CatEncoding::new(&basis, 1)?, CatEncoding::new(&basis, 2)?];
        let integrator = IntegratorConfig {
            frame: Frame::StaticEigenbasis { keep_per_mode: Some(DEFAULT_KEEP_PER_MODE.min(dim)) },
            ..Default::default()
        };
        Ok(Self { knr, dim, kappa, integrator, ry_scale: 1.0, basis, encodings })
    }

    /// α = 2, 20 levels, κ = K/1500.
    pub fn paper_default() -> Result<Self> {
        Self::new(KnrParams::default(), FockSpace::DEFAULT_DIM, DEFAULT_KAPPA)
    }

    pub fn alpha(&self) -> f64 {
        self.knr.alpha()
    }

    pub fn basis(&self) -> &CatBasis {
        &self.basis
    }

    pub fn space(&self, n_modes: usize) -> Result<FockSpace> {
        FockSpace::new(self.dim, n_modes)
    }

    pub fn encoding(&self, n_modes: usize) -> Result<&CatEncoding> {
        match n_modes {
            1 | 2 => Ok(&self.encodings[n_modes - 1]),
            _ => Err(Error::InvalidParameter(format!("cat registers of {n_modes} modes are not supported"))),
        }
    }

    /// Always-on stabilized Kerr Hamiltonian on every mode, plus single-photon
    /// loss when `lossy`.
    pub fn stabilized_schedule(&self, n_modes: usize, t_total: f64, lossy: bool) -> Result<PulseSchedule> {
        let space = self.space(n_modes)?;
        let mut s = PulseSchedule::new(space, t_total)?;
        let mut h = FockOperator::zeros(space);
        for m in 0..n_modes {
            h = h.add(&knr_hamiltonian(space, &self.knr, m)?)?;
        }
        s.add_static(h)?;
        if lossy && self.kappa > 0.0 {
            for m in 0..n_modes {
                s.add_collapse(annihilation_op(space, m)?, self.kappa)?;
            }
        }
        Ok(s)
    }

    /// Single-photon drive `E(t)(â + â†)` with `E = πφ/(8T_gα)·sin(πt/T_g)`.
    pub fn add_rz(&self, s: &mut PulseSchedule, mode: usize, phi: f64, t0: f64) -> Result<()> {
        let space = s.space();
        let a = annihilation_op(space, mode)?;
        let op = a.add(&a.dagger())?;
        let amp = PI * phi / (8.0 * T_RZ * self.alpha());
        s.add_term(op, PulseEnvelope::sine_half(amp, t0, t0 + T_RZ))?;
        Ok(())
    }

    /// Detuning pulse `−Δ₀ sin²(πt/T_g) â†â`.
    pub fn add_rx(&self, s: &mut PulseSchedule, mode: usize, delta0: f64, t0: f64) -> Result<()> {
        check_delta0(delta0)?;
        let op = number_op(s.space(), mode)?.scale(c(-1.0, 0.0));
        s.add_term(op, PulseEnvelope::sine_squared(delta0, t0, t0 + T_RX))?;
        Ok(())
    }

    /// Four-stage R_Y: drive off, drive rotated by π/2 with a single-photon
    /// pulse along the rotated quadrature, drive off again.
    pub fn add_ry(&self, s: &mut PulseSchedule, mode: usize, varphi: f64, t0: f64) -> Result<()> {
        let space = s.space();
        let a = annihilation_op(space, mode)?;
        let ad = a.dagger();
        let two_photon = ad.mul(&ad)?.add(&a.mul(&a)?)?;
        let g = self.knr.drive;
        let t1 = t0 + T_RY_FREE;
        let t2 = t1 + T_RY_DRIVE;
        let t3 = t2 + T_RY_FREE;
        s.add_term(two_photon.clone(), PulseEnvelope::constant(-g, t0, t1))?;
        s.add_term(two_photon.clone(), PulseEnvelope::constant(-2.0 * g, t1, t2))?;
        s.add_term(two_photon, PulseEnvelope::constant(-g, t2, t3))?;
        // E(t)(â† e^{iπ/2} + â e^{−iπ/2}) = E(t)·i(â† − â).
        let quad = ad.sub(&a)?.scale(I);
        let amp = self.ry_scale * PI * varphi / (8.0 * T_RY_DRIVE * self.alpha());
        s.add_term(quad, PulseEnvelope::sine_half(amp, t1, t2))?;
        Ok(())
    }

    /// Beam-splitter `g(t)(â₁â₂† + â₁†â₂)` with `g = πΘ/(8T_gα²)·sin(πt/T_g)`.
    pub fn add_rzz(&self, s: &mut PulseSchedule, modes: (usize, usize), theta: f64, t0: f64) -> Result<()> {
        if modes.0 == modes.1 {
            return Err(Error::InvalidParameter("R_ZZ needs two distinct modes".into()));
        }
        let space = s.space();
        let a1 = annihilation_op(space, modes.0)?;
        let a2 = annihilation_op(space, modes.1)?;
        let hop = a1.mul(&a2.dagger())?;
        let op = hop.add(&hop.dagger())?;
        let alpha = self.alpha();
        let amp = PI * theta / (8.0 * T_RZZ * alpha * alpha);
        s.add_term(op, PulseEnvelope::sine_half(amp, t0, t0 + T_RZZ))?;
        Ok(())
    }

    pub fn rz_schedule(&self, phi: f64, lossy: bool) -> Result<PulseSchedule> {
        let mut s = self.stabilized_schedule(1, T_RZ, lossy)?;
        self.add_rz(&mut s, 0, phi, 0.0)?;
        Ok(s)
    }

    pub fn rx_schedule(&self, delta0: f64, lossy: bool) -> Result<PulseSchedule> {
        let mut s = self.stabilized_schedule(1, T_RX, lossy)?;
        self.add_rx(&mut s, 0, delta0, 0.0)?;
        Ok(s)
    }

    pub fn ry_schedule(&self, varphi: f64, lossy: bool) -> Result<PulseSchedule> {
        let mut s = self.stabilized_schedule(1, T_RY, lossy)?;
        self.add_ry(&mut s, 0, varphi, 0.0)?;
        Ok(s)
    }

    pub fn rzz_schedule(&self, theta: f64, lossy: bool) -> Result<PulseSchedule> {
        let mut s = self.stabilized_schedule(2, T_RZZ, lossy)?;
        self.add_rzz(&mut s, (0, 1), theta, 0.0)?;
        Ok(s)
    }

    /// Effective channel of a schedule on the cat subspace. Loss-free
    /// schedules evolve the encoded basis kets; lossy ones evolve the
    /// encoded Pauli operators through the master equation.
    pub fn subspace_channel(&self, schedule: &PulseSchedule) -> Result<GateChannel> {
        self.subspace_channel_with(schedule, &self.integrator)
    }

    pub(crate) fn lab_integrator(&self) -> IntegratorConfig {
        IntegratorConfig { frame: Frame::Lab, ..self.integrator }
    }

    fn subspace_channel_with(&self, schedule: &PulseSchedule, cfg: &IntegratorConfig) -> Result<GateChannel> {
        let n = schedule.space().n_modes();
        let enc = self.encoding(n)?;
        if enc.space() != schedule.space() {
            return Err(Error::DimensionMismatch("schedule and encoding spaces differ".into()));
        }
        let channel = if schedule.has_loss() {
            let inputs = pauli_basis(n)
                .iter()
                .map(|p| Ok(FockDensityMatrix::new(enc.embed(p)?.into_matrix(), enc.space())?))
                .collect::<Result<Vec<_>>>()?;
            let outputs = channel_apply(schedule, &inputs, cfg)?;
            let images: Vec<CMatrix> = outputs.iter().map(|o| enc.project(o.matrix())).collect();
            QubitChannel::from_pauli_images(n, &images)?
        } else {
            let evolved = evolve_ket_block(schedule, enc.kets(), cfg)?;
            let u = enc.kets().adjoint() * evolved;
            QubitChannel::from_kraus(&[u])?
        };
        let leakage = channel.trace_loss();
        Ok(GateChannel { channel, leakage })
    }

    /// Channel of one gate at `angle`. R_X angles go through `calibration`;
    /// negative R_X angles are served by conjugating the |θ| channel with Z.
    pub fn gate_channel(
        &self,
        kind: GateKind,
        angle: f64,
        lossy: bool,
        calibration: Option<&RxCalibration>,
    ) -> Result<GateChannel> {
        let schedule = match kind {
            GateKind::Rz => self.rz_schedule(angle, lossy)?,
            GateKind::Ry => return self.subspace_channel_with(&self.ry_schedule(angle, lossy)?, &self.lab_integrator()),
            GateKind::Rzz => self.rzz_schedule(angle, lossy)?,
            GateKind::Rx => {
                let cal = calibration
                    .ok_or_else(|| Error::InvalidParameter("R_X needs a detuning calibration".into()))?;
                if angle < 0.0 {
                    let pos = self.gate_channel(kind, -angle, lossy, calibration)?;
                    let [_, _, _, z] = linalg::pauli_1q();
                    return Ok(GateChannel { channel: pos.channel.conjugated(&z)?, leakage: pos.leakage });
                }
                self.rx_schedule(cal.delta0_for(angle)?, lossy)?
            }
        };
        self.subspace_channel(&schedule)
    }

    /// Loss-free channel of the R_X pulse at a given detuning amplitude.
    pub fn rx_channel_at(&self, delta0: f64) -> Result<GateChannel> {
        self.subspace_channel(&self.rx_schedule(delta0, false)?)
    }

    /// Finds θ maximizing the fidelity of the loss-free detuning pulse against
    /// R_X(θ) for `n_points` amplitudes spread uniformly over `[0, 3.95K]`.
    pub fn calibrate_rx(&self, n_points: usize) -> Result<RxCalibration> {
        if n_points < 2 {
            return Err(Error::InvalidParameter("calibration needs at least two points".into()));
        }
        let grid = linalg::linspace(0.0, RX_DELTA0_MAX, n_points);
        let entries = grid
            .par_iter()
            .map(|&delta0| {
                let ch = self.rx_channel_at(delta0)?;
                let (theta, fidelity) = best_rotation_angle(&ch.channel, GateKind::Rx)?;
                Ok(RxCalibrationEntry { delta0, theta, fidelity })
            })
            .collect::<Result<Vec<_>>>()?;
        let table = RxCalibration {
            entries,
            alpha: self.alpha(),
            kerr: self.knr.kerr,
            dim: self.dim,
            kappa: self.kappa,
        };
        table.check_monotone()?;
        Ok(table)
    }

    /// Envelope scale for R_Y: the nominal pulse at φ = π/2 is fitted to the
    /// closest Y rotation and the scale is set so that the fit lands on π/2.
    pub fn calibrate_ry_scale(&self) -> Result<f64> {
        let probe = Self { ry_scale: 1.0, ..self.clone() };
        let ch = probe.subspace_channel_with(&probe.ry_schedule(PI / 2.0, false)?, &self.lab_integrator())?;
        let (fit, _) = best_rotation_angle(&ch.channel, GateKind::Ry)?;
        if fit.abs() < 1e-3 {
            return Err(Error::Undefined("nominal R_Y pulse produces no rotation".into()));
        }
        Ok(PI / 2.0 / fit)
    }

    pub fn with_ry_scale(mut self, scale: f64) -> Self {
        self.ry_scale = scale;
        self
    }

    /// Average gate fidelity at each angle against the target rotation.
    pub fn fidelity_sweep(
        &self,
        kind: GateKind,
        angles: &[f64],
        lossy: bool,
        calibration: Option<&RxCalibration>,
    ) -> Result<Vec<SweepPoint>> {
        angles
            .par_iter()
            .map(|&angle| {
                let gc = self.gate_channel(kind, angle, lossy, calibration)?;
                let fidelity = average_gate_fidelity(&gc.channel, &target_unitary(kind, angle))?;
                Ok(SweepPoint { angle, fidelity, leakage: gc.leakage })
            })
            .collect()
    }
}

fn check_delta0(delta0: f64) -> Result<()> {
    if !(0.0..=RX_DELTA0_MAX + 1e-12).contains(&delta0) {
        return Err(Error::OutOfCalibratedRange { value: delta0, min: 0.0, max: RX_DELTA0_MAX });
    }
    Ok(())
}

/// Angle of the single-qubit rotation of `kind` closest to `channel` in
/// average gate fidelity: coarse scan over `(−π, π]`, then golden-section.
pub fn best_rotation_angle(channel: &QubitChannel, kind: GateKind) -> Result<(f64, f64)> {
    let f = |theta: f64| average_gate_fidelity(channel, &target_unitary(kind, theta));
    let n = 720;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..n {
        let theta = -PI + 2.0 * PI * (k as f64 + 1.0) / n as f64;
        let v = f(theta)?;
        if v > best.1 {
            best = (theta, v);
        }
    }
    let step = 2.0 * PI / n as f64;
    let (mut lo, mut hi) = (best.0 - step, best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > 1e-10 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let theta = 0.5 * (lo + hi);
    Ok((theta, f(theta)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub angle: f64,
    pub fidelity: f64,
    pub leakage: f64,
}

pub fn mean_fidelity(points: &[SweepPoint]) -> f64 {
    points.iter().map(|p| p.fidelity).sum::<f64>() / points.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxCalibrationEntry {
    pub delta0: f64,
    pub theta: f64,
    pub fidelity: f64,
}

/// Detuning amplitude to rotation angle map for the R_X pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxCalibration {
    pub entries: Vec<RxCalibrationEntry>,
    pub alpha: f64,
    pub kerr: f64,
    pub dim: usize,
    pub kappa: f64,
}

impl RxCalibration {
    pub fn check_monotone(&self) -> Result<()> {
        for (i, w) in self.entries.windows(2).enumerate() {
            if !(w[1].delta0 > w[0].delta0 && w[1].theta > w[0].theta) {
                return Err(Error::NonMonotoneCalibration { index: i + 1 });
            }
        }
        Ok(())
    }

    pub fn theta_range(&self) -> (f64, f64) {
        (self.entries[0].theta, self.entries[self.entries.len() - 1].theta)
    }

    /// Linear interpolation of Δ₀ for a requested rotation. Angles within
    /// 0.05 rad outside the table are clamped to its ends.
    pub fn delta0_for(&self, theta: f64) -> Result<f64> {
        let (lo, hi) = self.theta_range();
        const SLACK: f64 = 0.05;
        if theta < lo - SLACK || theta > hi + SLACK || !theta.is_finite() {
            return Err(Error::OutOfCalibratedRange { value: theta, min: lo, max: hi });
        }
        let e = &self.entries;
        if theta <= lo {
            return Ok(e[0].delta0);
        }
        if theta >= hi {
            return Ok(e[e.len() - 1].delta0);
        }
        let k = e.partition_point(|x| x.theta <= theta);
        let (a, b) = (e[k - 1], e[k]);
        Ok(a.delta0 + (b.delta0 - a.delta0) * (theta - a.theta) / (b.theta - a.theta))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(s)?;
        if table.entries.len() < 2 {
            return Err(Error::InvalidParameter("calibration table needs at least two entries".into()));
        }
        table.check_monotone()?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve_ket;
    use crate::fock::{cat_state, coherent_state, Parity};

    fn small_model() -> CatGateModel {
        CatGateModel::new(KnrParams::default(), 20, DEFAULT_KAPPA).unwrap()
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn gate_kind_parsing() {
        assert_eq!("rzz".parse::<GateKind>().unwrap(), GateKind::Rzz);
        assert!("cz".parse::<GateKind>().is_err());
        assert_eq!(serde_json::to_string(&GateKind::Rx).unwrap(), "\"RX\"");
    }

    #[test]
    fn zero_angle_rz_is_identity() {
        let m = small_model();
        let pts = m.fidelity_sweep(GateKind::Rz, &[0.0], false, None).unwrap();
        assert!(pts[0].fidelity > 0.9999);
    }

    #[test]
    fn rz_reaches_target_without_loss() {
        let m = small_model();
        let pts = m.fidelity_sweep(GateKind::Rz, &[PI / 2.0, PI], false, None).unwrap();
        for p in pts {
            assert!(p.fidelity > 0.9999, "{p:?}");
            assert!(p.leakage < 0.01);
        }
    }

    #[test]
    fn rz_fidelity_symmetric_in_angle() {
        let m = small_model();
        let pts = m.fidelity_sweep(GateKind::Rz, &[0.8, -0.8], false, None).unwrap();
        assert!((pts[0].fidelity - pts[1].fidelity).abs() < 1e-6);
    }

    #[test]
    fn free_kerr_quarter_period_maps_coherent_state_to_cat_pair() {
        let s = FockSpace::single(20).unwrap();
        let mut sched = PulseSchedule::new(s, PI / 2.0).unwrap();
        let kerr_only = KnrParams { drive: 0.0, ..KnrParams::default() };
        sched.add_static(knr_hamiltonian(s, &kerr_only, 0).unwrap()).unwrap();
        let out = evolve_ket(&sched, &coherent_state(s, c(2.0, 0.0)).unwrap(), &IntegratorConfig::default()).unwrap();
        let plus = cat_state(s, c(0.0, 2.0), Parity::Even).unwrap();
        let minus = cat_state(s, c(0.0, -2.0), Parity::Odd).unwrap();
        let target = (plus.amplitudes() + minus.amplitudes() * I).scale(std::f64::consts::FRAC_1_SQRT_2);
        let overlap = target.dotc(out.amplitudes()).norm();
        assert!(overlap > 0.999, "{overlap}");
    }

    #[test]
    fn ry_drive_stages_alone_return_to_identity() {
        let m = small_model();
        let ch = m.gate_channel(GateKind::Ry, 0.0, false, None).unwrap();
        let f = average_gate_fidelity(&ch.channel, &linalg::identity(2)).unwrap();
        assert!(f > 0.99, "{f}");
    }

    #[test]
    fn truncated_frame_agrees_with_lab_frame() {
        let m = small_model();
        let mut lab = m.clone();
        lab.integrator = IntegratorConfig::default();
        let a = m.fidelity_sweep(GateKind::Rz, &[1.1], true, None).unwrap()[0].fidelity;
        let b = lab.fidelity_sweep(GateKind::Rz, &[1.1], true, None).unwrap()[0].fidelity;
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }

    #[test]
    fn rzz_zero_angle_is_identity() {
        let mut m = small_model();
        m.dim = 20;
        let pts = m.fidelity_sweep(GateKind::Rzz, &[0.0], false, None).unwrap();
        assert!(pts[0].fidelity > 0.9999);
    }

    #[test]
    fn rx_zero_detuning_is_identity() {
        let m = small_model();
        let ch = m.rx_channel_at(0.0).unwrap();
        let (theta, f) = best_rotation_angle(&ch.channel, GateKind::Rx).unwrap();
        assert!(theta.abs() < 1e-3 && f > 0.9999, "{theta} {f}");
    }

    #[test]
    fn rx_rejects_out_of_range_detuning() {
        let m = small_model();
        assert!(matches!(m.rx_schedule(4.5, false), Err(Error::OutOfCalibratedRange { .. })));
    }

    #[test]
    fn calibration_table_interpolates_and_round_trips() {
        let table = RxCalibration {
            entries: vec![
                RxCalibrationEntry { delta0: 0.0, theta: 0.0, fidelity: 1.0 },
                RxCalibrationEntry { delta0: 1.0, theta: 1.0, fidelity: 1.0 },
                RxCalibrationEntry { delta0: 2.0, theta: 3.0, fidelity: 1.0 },
            ],
            alpha: 2.0,
            kerr: 1.0,
            dim: 20,
            kappa: 0.0,
        };
        assert!((table.delta0_for(2.0).unwrap() - 1.5).abs() < 1e-12);
        assert!(table.delta0_for(3.5).is_err());
        let back = RxCalibration::from_json(&table.to_json().unwrap()).unwrap();
        assert_eq!(back, table);
        let mut bad = table.clone();
        bad.entries[2].theta = 0.5;
        assert!(matches!(bad.check_monotone(), Err(Error::NonMonotoneCalibration { index: 2 })));
    }
}

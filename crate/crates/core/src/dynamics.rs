//! Time-dependent Schrödinger and Lindblad integration over pulse schedules.
//!
//! Operators are compiled once into a shared CSR sparsity pattern; each right
//! hand side evaluation only recombines the term values with the envelope
//! coefficients at that instant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockDensityMatrix, FockKet, FockOperator, FockSpace};
use crate::linalg::{CMatrix, C64, I, ZERO};

mod frame;

use frame::{FrameCompiled, FrameWork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvelopeShape {
    SineHalf,
    SineSquared,
    Constant,
    /// Linear interpolation through `(t, value)` knots given in absolute time.
    Piecewise(Vec<(f64, f64)>),
}

/// Real envelope multiplying a static operator, zero outside `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub shape: EnvelopeShape,
    pub amplitude: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl PulseEnvelope {
    pub fn sine_half(amplitude: f64, t_start: f64, t_end: f64) -> Self {
        Self { shape: EnvelopeShape::SineHalf, amplitude, t_start, t_end }
    }

    pub fn sine_squared(amplitude: f64, t_start: f64, t_end: f64) -> Self {
        Self { shape: EnvelopeShape::SineSquared, amplitude, t_start, t_end }
    }

    pub fn constant(amplitude: f64, t_start: f64, t_end: f64) -> Self {
        Self { shape: EnvelopeShape::Constant, amplitude, t_start, t_end }
    }

    pub fn piecewise(amplitude: f64, knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() || knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParameter("piecewise knots must be non-empty and strictly increasing".into()));
        }
        let t_start = knots[0].0;
        let t_end = knots[knots.len() - 1].0;
        Ok(Self { shape: EnvelopeShape::Piecewise(knots), amplitude, t_start, t_end })
    }

    pub fn value(&self, t: f64) -> f64 {
        if t < self.t_start || t > self.t_end {
            return 0.0;
        }
        let width = self.t_end - self.t_start;
        let s = if width > 0.0 { (t - self.t_start) / width } else { 0.0 };
        let shape = match &self.shape {
            EnvelopeShape::SineHalf => (std::f64::consts::PI * s).sin(),
            EnvelopeShape::SineSquared => (std::f64::consts::PI * s).sin().powi(2),
            EnvelopeShape::Constant => 1.0,
            EnvelopeShape::Piecewise(knots) => {
                let k = knots.partition_point(|&(tk, _)| tk <= t);
                if k == 0 {
                    knots[0].1
                } else if k == knots.len() {
                    knots[k - 1].1
                } else {
                    let (t0, v0) = knots[k - 1];
                    let (t1, v1) = knots[k];
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            }
        };
        self.amplitude * shape
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![self.t_start, self.t_end];
        if let EnvelopeShape::Piecewise(knots) = &self.shape {
            out.extend(knots.iter().map(|k| k.0));
        }
        out
    }
}

/// `H(t) = Σ op_k·env_k(t)` plus Lindblad collapse operators `√rate·L`.
#[derive(Debug, Clone)]
pub struct PulseSchedule {
    space: FockSpace,
    pub terms: Vec<(FockOperator, PulseEnvelope)>,
    pub t_total: f64,
    pub collapse_ops: Vec<(FockOperator, f64)>,
}

impl PulseSchedule {
    pub fn new(space: FockSpace, t_total: f64) -> Result<Self> {
        if !(t_total >= 0.0) || !t_total.is_finite() {
            return Err(Error::InvalidParameter(format!("schedule duration must be finite and >= 0, got {t_total}")));
        }
        Ok(Self { space, terms: Vec::new(), t_total, collapse_ops: Vec::new() })
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn add_term(&mut self, op: FockOperator, envelope: PulseEnvelope) -> Result<&mut Self> {
        if op.space() != self.space {
            return Err(Error::DimensionMismatch("schedule term lives on a different Fock space".into()));
        }
        self.terms.push((op, envelope));
        Ok(self)
    }

    /// Term that is on for the whole schedule.
    pub fn add_static(&mut self, op: FockOperator) -> Result<&mut Self> {
        let env = PulseEnvelope::constant(1.0, 0.0, self.t_total);
        self.add_term(op, env)
    }

    pub fn add_collapse(&mut self, op: FockOperator, rate: f64) -> Result<&mut Self> {
        if op.space() != self.space {
            return Err(Error::DimensionMismatch("collapse operator lives on a different Fock space".into()));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("collapse rate must be finite and >= 0, got {rate}")));
        }
        self.collapse_ops.push((op, rate));
        Ok(self)
    }

    pub fn has_loss(&self) -> bool {
        self.collapse_ops.iter().any(|(_, r)| *r > 0.0)
    }

    pub fn without_loss(&self) -> Self {
        Self { collapse_ops: Vec::new(), ..self.clone() }
    }

    pub fn hamiltonian_at(&self, t: f64) -> CMatrix {
        let n = self.space.total_dim();
        let mut h = CMatrix::zeros(n, n);
        for (op, env) in &self.terms {
            let v = env.value(t);
            if v != 0.0 {
                h += op.matrix() * C64::new(v, 0.0);
            }
        }
        h
    }

    /// Sorted, de-duplicated times in `[0, t_total]` where some envelope
    /// switches on, off, or changes slope.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0, self.t_total];
        for (_, env) in &self.terms {
            pts.extend(env.breakpoints());
        }
        normalize_times(pts, self.t_total)
    }

    /// Checks that `H(t)` is Hermitian at every segment midpoint and end.
    pub fn check_hermitian(&self, tol: f64) -> Result<()> {
        let bp = self.breakpoints();
        let mut samples = bp.clone();
        samples.extend(bp.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        for t in samples {
            let h = self.hamiltonian_at(t);
            let scale = crate::linalg::max_norm(&h).max(1.0);
            if !crate::linalg::is_hermitian(&h, tol * scale) {
                return Err(Error::InvalidParameter(format!("schedule Hamiltonian is not Hermitian at t = {t}")));
            }
        }
        Ok(())
    }
}

fn normalize_times(mut pts: Vec<f64>, t_total: f64) -> Vec<f64> {
    pts.retain(|t| t.is_finite() && *t >= 0.0 && *t <= t_total);
    pts.push(0.0);
    pts.push(t_total);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eps = 1e-12 * t_total.max(1.0);
    pts.dedup_by(|a, b| (*a - *b).abs() <= eps);
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegratorMethod {
    /// Dormand–Prince 5(4) with adaptive steps.
    Dopri5,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: Option<f64>,
    pub method: IntegratorMethod,
    #[serde(default)]
    pub frame: Frame,
}

/// Picture in which the equations of motion are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Fock basis, no transformation.
    #[default]
    Lab,
    /// Interaction picture of the always-on terms, which must be a sum of
    /// single-mode operators. With `keep_per_mode = Some(m)` only the `m`
    /// highest-energy eigenstates of each mode are retained, so states must
    /// stay inside that manifold. Falls back to [`Frame::Lab`] when the
    /// schedule does not qualify.
    StaticEigenbasis { keep_per_mode: Option<usize> },
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-10, max_step: None, method: IntegratorMethod::Dopri5, frame: Frame::Lab }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("integrator tolerances must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter("max_step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Collapse operator with at most one nonzero per row, `L[i, src[i]] = val[i]`.
struct MonomialJump {
    src: Vec<Option<usize>>,
    val: Vec<C64>,
}

enum Jump {
    Monomial(MonomialJump),
    General(Csr),
}

#[derive(Clone)]
struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    fn from_dense(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                if z != ZERO {
                    cols.push(j);
                    vals.push(z);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    /// `out = A · Y` for a row-major `Y` with `width` columns. Real and
    /// imaginary parts of each entry are applied as separate `f64` sweeps so
    /// the common real-coefficient case vectorizes.
    fn mul_dense(&self, vals: &[C64], y: &[C64], width: usize, out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for i in 0..self.n {
            let row: &mut [f64] = bytemuck::cast_slice_mut(&mut out[i * width..(i + 1) * width]);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = vals[k];
                let c = self.cols[k];
                let src: &[f64] = bytemuck::cast_slice(&y[c * width..(c + 1) * width]);
                if a.re != 0.0 {
                    for (o, s) in row.iter_mut().zip(src) {
                        *o += a.re * s;
                    }
                }
                if a.im != 0.0 {
                    for (o, s) in row.chunks_exact_mut(2).zip(src.chunks_exact(2)) {
                        o[0] -= a.im * s[1];
                        o[1] += a.im * s[0];
                    }
                }
            }
        }
    }
}

/// Schedule compiled onto the union sparsity pattern of its operators.
struct Compiled {
    pattern: Csr,
    term_vals: Vec<Vec<C64>>,
    envelopes: Vec<PulseEnvelope>,
    /// `−(i/2) Σ rate·L†L` on the same pattern, absent for ket evolution.
    static_vals: Option<Vec<C64>>,
    jumps: Vec<(Jump, f64)>,
}

impl Compiled {
    fn new(schedule: &PulseSchedule, with_loss: bool) -> Self {
        let n = schedule.space.total_dim();
        let collapse: Vec<&(FockOperator, f64)> = if with_loss {
            schedule.collapse_ops.iter().filter(|(_, r)| *r > 0.0).collect()
        } else {
            Vec::new()
        };
        let mut non_herm = CMatrix::zeros(n, n);
        for (l, rate) in &collapse {
            let m = l.matrix();
            non_herm += (m.adjoint() * m) * C64::new(0.0, -0.5 * rate);
        }
        let mut mask = non_herm.map(|z| z != ZERO);
        for (op, _) in &schedule.terms {
            mask.zip_apply(op.matrix(), |m, z| *m = *m || z != ZERO);
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if mask[(i, j)] {
                    cols.push(j);
                }
            }
            row_ptr.push(cols.len());
        }
        let gather = |m: &CMatrix| -> Vec<C64> {
            let mut out = Vec::with_capacity(cols.len());
            for i in 0..n {
                for &j in &cols[row_ptr[i]..row_ptr[i + 1]] {
                    out.push(m[(i, j)]);
                }
            }
            out
        };
        let term_vals = schedule.terms.iter().map(|(op, _)| gather(op.matrix())).collect();
        let envelopes = schedule.terms.iter().map(|(_, e)| e.clone()).collect();
        let static_vals = if collapse.is_empty() { None } else { Some(gather(&non_herm)) };
        let jumps = collapse.iter().map(|(l, rate)| (compile_jump(l.matrix()), *rate)).collect();
        let nnz = cols.len();
        Self {
            pattern: Csr { n, row_ptr, cols, vals: vec![ZERO; nnz] },
            term_vals,
            envelopes,
            static_vals,
            jumps,
        }
    }

    fn fill_values(&self, t: f64, out: &mut [C64]) {
        match &self.static_vals {
            Some(s) => out.copy_from_slice(s),
            None => out.iter_mut().for_each(|z| *z = ZERO),
        }
        for (vals, env) in self.term_vals.iter().zip(&self.envelopes) {
            let c = env.value(t);
            if c != 0.0 {
                for (o, v) in out.iter_mut().zip(vals) {
                    *o += v * c;
                }
            }
        }
    }
}

fn compile_jump(m: &CMatrix) -> Jump {
    let n = m.nrows();
    let mut src = vec![None; n];
    let mut val = vec![ZERO; n];
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            if z != ZERO {
                if src[i].is_some() {
                    return Jump::General(Csr::from_dense(m));
                }
                src[i] = Some(j);
                val[i] = z;
            }
        }
    }
    Jump::Monomial(MonomialJump { src, val })
}

/// Right-hand sides on row-major `n x width` blocks.
enum Rhs<'a> {
    /// `dY/dt = −i H Y` for a block of kets.
    Ket { c: &'a Compiled, width: usize },
    /// Lindblad equation for a Hermitian density matrix.
    Density { c: &'a Compiled },
    FrameKet { f: &'a FrameCompiled, width: usize },
    FrameDensity { f: &'a FrameCompiled },
}

#[derive(Default)]
struct Workspace {
    vals: Vec<C64>,
    tmp: Vec<C64>,
    tmp2: Vec<C64>,
    frame: Option<FrameWork>,
}

/// Tile edge for the transposed reads in the density right-hand side.
const TILE: usize = 32;

impl<'a> Rhs<'a> {
    fn workspace(&self) -> Workspace {
        match self {
            Rhs::Ket { c, .. } => Workspace { vals: vec![ZERO; c.pattern.cols.len()], ..Default::default() },
            Rhs::Density { c } => {
                let n = c.pattern.n;
                Workspace {
                    vals: vec![ZERO; c.pattern.cols.len()],
                    tmp: vec![ZERO; n * n],
                    tmp2: vec![ZERO; n * n],
                    frame: None,
                }
            }
            Rhs::FrameKet { f, width } => Workspace { frame: Some(f.workspace(*width)), ..Default::default() },
            Rhs::FrameDensity { f } => Workspace { frame: Some(f.workspace(f.size())), ..Default::default() },
        }
    }

    fn eval(&self, t: f64, y: &[C64], dy: &mut [C64], ws: &mut Workspace) {
        let c = match self {
            Rhs::FrameKet { f, width } => {
                return f.eval_ket(t, y, *width, dy, ws.frame.as_mut().expect("frame workspace"));
            }
            Rhs::FrameDensity { f } => {
                return f.eval_density(t, y, dy, ws.frame.as_mut().expect("frame workspace"));
            }
            Rhs::Ket { c, .. } | Rhs::Density { c } => c,
        };
        c.fill_values(t, &mut ws.vals);
        let n = c.pattern.n;
        match self {
            Rhs::Ket { width, .. } => {
                c.pattern.mul_dense(&ws.vals, y, *width, dy);
                for z in dy.iter_mut() {
                    *z = C64::new(z.im, -z.re);
                }
            }
            Rhs::Density { .. } => {
                // T = H_eff ρ, dρ = −iT + (−iT)† + Σ rate·LρL†.
                c.pattern.mul_dense(&ws.vals, y, n, &mut ws.tmp);
                minus_i_hermitian_part(&ws.tmp, n, dy);
                for (jump, rate) in &c.jumps {
                    match jump {
                        Jump::Monomial(mj) => {
                            for i in 0..n {
                                let Some(si) = mj.src[i] else { continue };
                                let vi = mj.val[i] * *rate;
                                let row = &y[si * n..(si + 1) * n];
                                let out = &mut dy[i * n..(i + 1) * n];
                                for j in 0..n {
                                    if let Some(sj) = mj.src[j] {
                                        out[j] += vi * row[sj] * mj.val[j].conj();
                                    }
                                }
                            }
                        }
                        Jump::General(l) => {
                            // X = Lρ, then LρL† = (L X†)†.
                            l.mul_dense(&l.vals, y, n, &mut ws.tmp);
                            let mut xd = vec![ZERO; n * n];
                            for i in 0..n {
                                for j in 0..n {
                                    xd[i * n + j] = ws.tmp[j * n + i].conj();
                                }
                            }
                            l.mul_dense(&l.vals, &xd, n, &mut ws.tmp2);
                            for i in 0..n {
                                for j in 0..n {
                                    dy[i * n + j] += ws.tmp2[j * n + i].conj() * *rate;
                                }
                            }
                        }
                    }
                }
            }
            Rhs::FrameKet { .. } | Rhs::FrameDensity { .. } => unreachable!(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Rhs::Ket { c, width } => c.pattern.n * width,
            Rhs::Density { c } => c.pattern.n * c.pattern.n,
            Rhs::FrameKet { f, width } => f.size() * width,
            Rhs::FrameDensity { f } => f.size() * f.size(),
        }
    }
}

/// `dy = −iT + (−iT)†` for a row-major `n x n` matrix `T`.
fn minus_i_hermitian_part(m: &[C64], n: usize, dy: &mut [C64]) {
    for i0 in (0..n).step_by(TILE) {
        for j0 in (0..n).step_by(TILE) {
            for i in i0..(i0 + TILE).min(n) {
                for j in j0..(j0 + TILE).min(n) {
                    let a = m[i * n + j];
                    let b = m[j * n + i];
                    dy[i * n + j] = C64::new(a.im + b.im, b.re - a.re);
                }
            }
        }
    }
}

/// `y += a·x` for a complex `a`.
fn caxpy(a: C64, x: &[C64], y: &mut [C64]) {
    let x: &[f64] = bytemuck::cast_slice(x);
    let y: &mut [f64] = bytemuck::cast_slice_mut(y);
    if a.im == 0.0 {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a.re * xi;
        }
        return;
    }
    for (o, s) in y.chunks_exact_mut(2).zip(x.chunks_exact(2)) {
        o[0] += a.re * s[0] - a.im * s[1];
        o[1] += a.re * s[1] + a.im * s[0];
    }
}

/// `y += a·x` over the interleaved real and imaginary parts.
fn axpy(a: f64, x: &[C64], y: &mut [C64]) {
    let x: &[f64] = bytemuck::cast_slice(x);
    let y: &mut [f64] = bytemuck::cast_slice_mut(y);
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Dopri5<'a> {
    rhs: Rhs<'a>,
    cfg: IntegratorConfig,
    k: [Vec<C64>; 7],
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    ws: Workspace,
    h: Option<f64>,
    fsal_valid: bool,
    steps: usize,
}

impl<'a> Dopri5<'a> {
    fn new(rhs: Rhs<'a>, cfg: IntegratorConfig) -> Self {
        let len = rhs.len();
        let ws = rhs.workspace();
        Self {
            rhs,
            cfg,
            k: std::array::from_fn(|_| vec![ZERO; len]),
            ytmp: vec![ZERO; len],
            ynew: vec![ZERO; len],
            ws,
            h: None,
            fsal_valid: false,
            steps: 0,
        }
    }

    fn stage(&mut self, y: &[C64], h: f64, coeffs: &[(usize, f64)], t: f64, out: usize) {
        self.ytmp.copy_from_slice(y);
        for &(s, a) in coeffs {
            axpy(a * h, &self.k[s], &mut self.ytmp);
        }
        let mut dst = std::mem::take(&mut self.k[out]);
        self.rhs.eval(t, &self.ytmp, &mut dst, &mut self.ws);
        self.k[out] = dst;
    }

    /// Integrates `y` from `t0` to `t1` inside one smooth segment.
    fn advance(&mut self, y: &mut Vec<C64>, t0: f64, t1: f64) -> Result<()> {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        // The right-hand side may be discontinuous at segment boundaries.
        self.fsal_valid = false;
        let max_step = self.cfg.max_step.unwrap_or(f64::INFINITY).min(span);
        let mut h = self.h.unwrap_or(1e-3 * span.max(1e-3)).min(max_step);
        let mut t = t0;
        let mut fac_max = 10.0;
        while t < t1 {
            if t + h >= t1 || t1 - (t + h) < 1e-12 * span {
                h = t1 - t;
            }
            if h < 1e-14 * span.max(1.0) {
                return Err(Error::Integrator { t_reached: t, message: "step size underflow".into() });
            }
            if !self.fsal_valid {
                let mut k0 = std::mem::take(&mut self.k[0]);
                self.rhs.eval(t, y, &mut k0, &mut self.ws);
                self.k[0] = k0;
            }
            self.stage(y, h, &[(0, A21)], t + C2 * h, 1);
            self.stage(y, h, &[(0, A31), (1, A32)], t + C3 * h, 2);
            self.stage(y, h, &[(0, A41), (1, A42), (2, A43)], t + C4 * h, 3);
            self.stage(y, h, &[(0, A51), (1, A52), (2, A53), (3, A54)], t + C5 * h, 4);
            self.stage(y, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], t + h, 5);
            self.ynew.copy_from_slice(y);
            for (s, a) in [(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)] {
                axpy(a * h, &self.k[s], &mut self.ynew);
            }
            let mut k6 = std::mem::take(&mut self.k[6]);
            self.rhs.eval(t + h, &self.ynew, &mut k6, &mut self.ws);
            self.k[6] = k6;

            self.ytmp.iter_mut().for_each(|z| *z = ZERO);
            for (s, e) in [(0, E1), (2, E3), (3, E4), (4, E5), (5, E6), (6, E7)] {
                axpy(e * h, &self.k[s], &mut self.ytmp);
            }
            let (atol, rtol) = (self.cfg.abs_tol, self.cfg.rel_tol);
            let acc: f64 = y
                .iter()
                .zip(&self.ynew)
                .zip(&self.ytmp)
                .map(|((a, b), e)| {
                    let sc = atol + rtol * a.norm_sqr().max(b.norm_sqr()).sqrt();
                    e.norm_sqr() / (sc * sc)
                })
                .sum();
            let err = (acc / y.len() as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integrator { t_reached: t, message: "non-finite state".into() });
            }
            let factor = if err == 0.0 { fac_max } else { (0.9 * err.powf(-0.2)).clamp(0.2, fac_max) };
            if err <= 1.0 {
                t += h;
                std::mem::swap(y, &mut self.ynew);
                self.k.swap(0, 6);
                self.fsal_valid = true;
                self.steps += 1;
                fac_max = 10.0;
                let next = (h * factor).min(max_step);
                // Keep the unclipped proposal for the next segment.
                self.h = Some(next);
                h = next;
            } else {
                fac_max = 1.0;
                h *= factor;
                // k[0] still holds the derivative at the current t.
                self.fsal_valid = true;
            }
        }
        Ok(())
    }
}

/// Integrates through all breakpoints and records the state at each time in
/// `times` (which must lie in `[0, t_total]`).
fn propagate(
    schedule: &PulseSchedule,
    rhs: Rhs<'_>,
    y0: Vec<C64>,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<C64>>> {
    cfg.validate()?;
    for &t in times {
        if !(t >= 0.0 && t <= schedule.t_total) {
            return Err(Error::InvalidParameter(format!("sample time {t} outside [0, {}]", schedule.t_total)));
        }
    }
    let mut grid = schedule.breakpoints();
    grid.extend_from_slice(times);
    let grid = normalize_times(grid, schedule.t_total);
    let mut stepper = Dopri5::new(rhs, *cfg);
    let mut y = y0;
    let mut out: Vec<Option<Vec<C64>>> = vec![None; times.len()];
    let record = |t: f64, y: &Vec<C64>, out: &mut Vec<Option<Vec<C64>>>| {
        for (i, &ti) in times.iter().enumerate() {
            if out[i].is_none() && (ti - t).abs() <= 1e-12 * schedule.t_total.max(1.0) {
                out[i] = Some(y.clone());
            }
        }
    };
    record(grid[0], &y, &mut out);
    for w in grid.windows(2) {
        stepper.advance(&mut y, w[0], w[1])?;
        record(w[1], &y, &mut out);
    }
    log::debug!("dopri5 finished in {} accepted steps", stepper.steps);
    Ok(out.into_iter().map(|o| o.expect("every sample time lies on the grid")).collect())
}

fn warn_ignored_loss(schedule: &PulseSchedule) {
    if schedule.has_loss() {
        log::warn!("collapse operators are ignored for ket evolution");
    }
}

fn frame_for(schedule: &PulseSchedule, with_loss: bool, cfg: &IntegratorConfig) -> Option<FrameCompiled> {
    let Frame::StaticEigenbasis { keep_per_mode } = cfg.frame else { return None };
    let f = FrameCompiled::new(schedule, with_loss, keep_per_mode);
    if f.is_none() {
        log::warn!("always-on terms are not mode-local; integrating in the lab frame");
    }
    f
}

fn row_major(m: &CMatrix) -> Vec<C64> {
    m.transpose().as_slice().to_vec()
}

/// Evolves kets stored as the columns of `columns`, sampled at `times`.
fn ket_block_trajectory(
    schedule: &PulseSchedule,
    columns: &CMatrix,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<CMatrix>> {
    let n = schedule.space.total_dim();
    if columns.nrows() != n {
        return Err(Error::DimensionMismatch(format!("ket block has {} rows, space needs {n}", columns.nrows())));
    }
    warn_ignored_loss(schedule);
    let width = columns.ncols();
    if let Some(f) = frame_for(schedule, false, cfg) {
        let m = f.size();
        let out = propagate(schedule, Rhs::FrameKet { f: &f, width }, row_major(&f.ket_in(columns)), times, cfg)?;
        return Ok(out
            .iter()
            .zip(times)
            .map(|(y, &t)| f.ket_out(t, &CMatrix::from_row_slice(m, width, y)))
            .collect());
    }
    let compiled = Compiled::new(schedule, false);
    let out = propagate(schedule, Rhs::Ket { c: &compiled, width }, row_major(columns), times, cfg)?;
    Ok(out.iter().map(|y| CMatrix::from_row_slice(n, width, y)).collect())
}

/// Evolves a block of kets (the columns of `columns`) under `H(t)` only.
pub fn evolve_ket_block(schedule: &PulseSchedule, columns: &CMatrix, cfg: &IntegratorConfig) -> Result<CMatrix> {
    Ok(ket_block_trajectory(schedule, columns, &[schedule.t_total], cfg)?.pop().unwrap())
}

pub fn evolve_ket(schedule: &PulseSchedule, psi0: &FockKet, cfg: &IntegratorConfig) -> Result<FockKet> {
    Ok(evolve_ket_trajectory(schedule, psi0, &[schedule.t_total], cfg)?.pop().unwrap())
}

pub fn evolve_ket_trajectory(
    schedule: &PulseSchedule,
    psi0: &FockKet,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<FockKet>> {
    if psi0.space() != schedule.space {
        return Err(Error::DimensionMismatch("initial ket lives on a different Fock space".into()));
    }
    let col = CMatrix::from_column_slice(psi0.amplitudes().len(), 1, psi0.amplitudes().as_slice());
    ket_block_trajectory(schedule, &col, times, cfg)?
        .into_iter()
        .map(|m| FockKet::new(m.column(0).into_owned(), schedule.space))
        .collect()
}

pub fn evolve_density(
    schedule: &PulseSchedule,
    rho0: &FockDensityMatrix,
    cfg: &IntegratorConfig,
) -> Result<FockDensityMatrix> {
    Ok(evolve_density_trajectory(schedule, rho0, &[schedule.t_total], cfg)?.pop().unwrap())
}

/// Lindblad evolution sampled at `times`. Non-Hermitian inputs are split into
/// Hermitian and anti-Hermitian parts and evolved separately.
pub fn evolve_density_trajectory(
    schedule: &PulseSchedule,
    rho0: &FockDensityMatrix,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<FockDensityMatrix>> {
    if rho0.space() != schedule.space {
        return Err(Error::DimensionMismatch("initial state lives on a different Fock space".into()));
    }
    let frame = frame_for(schedule, true, cfg);
    let compiled = if frame.is_none() { Some(Compiled::new(schedule, true)) } else { None };
    let m = rho0.matrix();
    let herm = (m + m.adjoint()).scale(0.5);
    let anti = (m - m.adjoint()) * C64::new(0.0, -0.5);
    let n = schedule.space.total_dim();
    let run = |h: &CMatrix| -> Result<Vec<CMatrix>> {
        if let Some(f) = &frame {
            let k = f.size();
            let out = propagate(schedule, Rhs::FrameDensity { f }, row_major(&f.density_in(h)), times, cfg)?;
            return Ok(out
                .iter()
                .zip(times)
                .map(|(y, &t)| f.density_out(t, &CMatrix::from_row_slice(k, k, y)))
                .collect());
        }
        let c = compiled.as_ref().expect("lab frame compiled");
        let out = propagate(schedule, Rhs::Density { c }, row_major(h), times, cfg)?;
        Ok(out.into_iter().map(|y| CMatrix::from_row_slice(n, n, &y)).collect())
    };
    let scale = crate::linalg::max_norm(m).max(f64::MIN_POSITIVE);
    let mut result = run(&herm)?;
    if crate::linalg::max_norm(&anti) > 1e-14 * scale {
        for (r, a) in result.iter_mut().zip(run(&anti)?) {
            *r += a * I;
        }
    }
    result.into_iter().map(|r| FockDensityMatrix::new(r, schedule.space)).collect()
}

/// Evolves each input under the same schedule, in parallel.
pub fn channel_apply(
    schedule: &PulseSchedule,
    inputs: &[FockDensityMatrix],
    cfg: &IntegratorConfig,
) -> Result<Vec<FockDensityMatrix>> {
    inputs.par_iter().map(|rho| evolve_density(schedule, rho, cfg)).collect()
}

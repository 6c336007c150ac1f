//! Interaction picture with respect to the always-on part of a schedule.
//!
//! The static Hamiltonian must be a sum of single-mode terms. Each mode is
//! rotated into the eigenbasis of its static part, optionally keeping only the
//! `keep` highest-energy eigenstates, and every other operator is factorized
//! into Kronecker products of single-mode matrices so that it can be applied
//! one mode at a time.

use super::{caxpy, EnvelopeShape, PulseEnvelope, PulseSchedule};
use crate::linalg::{self, CMatrix, C64, ZERO};

/// Product of single-mode factors; `None` stands for the identity.
#[derive(Debug, Clone)]
pub(super) struct KronTerm {
    factors: Vec<Option<CMatrix>>,
}

pub(super) struct FrameCompiled {
    /// Kept eigenstates per mode.
    pub dims: Vec<usize>,
    energies: Vec<Vec<f64>>,
    /// `n x M` isometry onto the kept product eigenstates.
    pub basis: CMatrix,
    terms: Vec<(Vec<KronTerm>, PulseEnvelope)>,
    /// `½ Σ rate·P L†L P`, entering `H_eff` with a factor `−i`.
    decay: Vec<KronTerm>,
    jumps: Vec<(Vec<KronTerm>, f64)>,
}

fn always_on(env: &PulseEnvelope, t_total: f64) -> bool {
    matches!(env.shape, EnvelopeShape::Constant) && env.t_start <= 0.0 && env.t_end >= t_total
}

/// Flat index with mode 0 most significant.
fn flat(idx: &[usize], d: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * d + i)
}

fn digits(mut k: usize, d: usize, n_modes: usize) -> Vec<usize> {
    let mut out = vec![0; n_modes];
    for q in (0..n_modes).rev() {
        out[q] = k % d;
        k /= d;
    }
    out
}

/// Splits `h` into `Σ_q h_q` acting on single modes, if it has that form.
fn local_parts(h: &CMatrix, d: usize, n_modes: usize) -> Option<Vec<CMatrix>> {
    let n = h.nrows();
    let rest = (n / d) as f64;
    let mut parts = vec![CMatrix::zeros(d, d); n_modes];
    for i in 0..n {
        let di = digits(i, d, n_modes);
        for j in 0..n {
            let z = h[(i, j)];
            if z == ZERO {
                continue;
            }
            let dj = digits(j, d, n_modes);
            for q in 0..n_modes {
                if (0..n_modes).all(|p| p == q || di[p] == dj[p]) {
                    parts[q][(di[q], dj[q])] += z / rest;
                }
            }
        }
    }
    let c = h.trace() / n as f64;
    for k in 0..d {
        parts[0][(k, k)] -= c * (n_modes as f64 - 1.0);
    }
    let mut rebuilt = CMatrix::zeros(n, n);
    for (q, p) in parts.iter().enumerate() {
        rebuilt += embed(p, q, d, n_modes);
    }
    let tol = 1e-10 * linalg::max_norm(h).max(1.0);
    (linalg::max_abs_diff(&rebuilt, h) <= tol).then_some(parts)
}

fn embed(op: &CMatrix, q: usize, d: usize, n_modes: usize) -> CMatrix {
    let factors: Vec<CMatrix> =
        (0..n_modes).map(|p| if p == q { op.clone() } else { linalg::identity(d) }).collect();
    linalg::kron_all(&factors)
}

/// Operator-Schmidt decomposition of a two-mode operator.
fn schmidt_two_modes(x: &CMatrix, d: usize) -> Vec<KronTerm> {
    let mut r = CMatrix::zeros(d * d, d * d);
    for i1 in 0..d {
        for i2 in 0..d {
            for j1 in 0..d {
                for j2 in 0..d {
                    r[(i1 * d + j1, i2 * d + j2)] = x[(flat(&[i1, i2], d), flat(&[j1, j2], d))];
                }
            }
        }
    }
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= 1e-12 * smax {
            continue;
        }
        let a = CMatrix::from_fn(d, d, |i, j| u[(i * d + j, k)] * s);
        let b = CMatrix::from_fn(d, d, |i, j| vt[(k, i * d + j)]);
        out.push(KronTerm { factors: vec![Some(a), Some(b)] });
    }
    out
}

fn decompose(x: &CMatrix, d: usize, n_modes: usize) -> Option<Vec<KronTerm>> {
    if n_modes == 1 {
        return Some(vec![KronTerm { factors: vec![Some(x.clone())] }]);
    }
    if let Some(parts) = local_parts(x, d, n_modes) {
        let terms = parts
            .into_iter()
            .enumerate()
            .filter(|(_, p)| linalg::max_norm(p) > 0.0)
            .map(|(q, p)| {
                let mut factors = vec![None; n_modes];
                factors[q] = Some(p);
                KronTerm { factors }
            })
            .collect();
        return Some(terms);
    }
    (n_modes == 2).then(|| schmidt_two_modes(x, d))
}

impl KronTerm {
    fn project(mut self, vecs: &[CMatrix]) -> Self {
        for (f, v) in self.factors.iter_mut().zip(vecs) {
            if let Some(a) = f {
                *a = v.adjoint() * &*a * v;
            }
        }
        self
    }

    fn scaled(mut self, s: C64) -> Self {
        if let Some(a) = self.factors.iter_mut().flatten().next() {
            *a *= s;
        }
        self
    }
}

impl FrameCompiled {
    /// `None` when the static part is not a sum of single-mode terms or a
    /// term cannot be factorized.
    pub(super) fn new(schedule: &PulseSchedule, with_loss: bool, keep: Option<usize>) -> Option<Self> {
        let space = schedule.space();
        let (d, n_modes) = (space.dim(), space.n_modes());
        let n = space.total_dim();
        let mut h_static = CMatrix::zeros(n, n);
        for (op, env) in schedule.terms.iter().filter(|(_, e)| always_on(e, schedule.t_total)) {
            h_static += op.matrix() * C64::new(env.amplitude, 0.0);
        }
        let parts = local_parts(&h_static, d, n_modes)?;
        let m = keep.unwrap_or(d).clamp(1, d);
        let mut vecs = Vec::with_capacity(n_modes);
        let mut energies = Vec::with_capacity(n_modes);
        for p in &parts {
            let herm = (p + p.adjoint()).scale(0.5);
            let (vals, v) = linalg::eigh(&herm);
            // eigh sorts ascending; keep the top of the spectrum.
            let cols: Vec<usize> = (d - m..d).collect();
            energies.push(cols.iter().map(|&k| vals[k]).collect::<Vec<_>>());
            vecs.push(v.select_columns(&cols));
        }
        let basis = linalg::kron_all(&vecs);
        let project = |x: &CMatrix| -> Option<Vec<KronTerm>> {
            Some(decompose(x, d, n_modes)?.into_iter().map(|t| t.project(&vecs)).collect())
        };
        let mut terms = Vec::new();
        for (op, env) in schedule.terms.iter().filter(|(_, e)| !always_on(e, schedule.t_total)) {
            terms.push((project(op.matrix())?, env.clone()));
        }
        let mut decay = Vec::new();
        let mut jumps = Vec::new();
        if with_loss {
            for (l, rate) in schedule.collapse_ops.iter().filter(|(_, r)| *r > 0.0) {
                let ldl = l.matrix().adjoint() * l.matrix();
                decay.extend(project(&ldl)?.into_iter().map(|t| t.scaled(C64::new(0.5 * rate, 0.0))));
                jumps.push((project(l.matrix())?, *rate));
            }
        }
        Some(Self { dims: vec![m; n_modes], energies, basis, terms, decay, jumps })
    }

    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    fn phases(&self, t: f64) -> Vec<Vec<C64>> {
        self.energies.iter().map(|e| e.iter().map(|&w| C64::cis(w * t)).collect()).collect()
    }

    /// Factors in the interaction picture, `A_ij e^{i(ε_i − ε_j)t}`.
    fn rotate(term: &KronTerm, phases: &[Vec<C64>]) -> Vec<Option<CMatrix>> {
        term.factors
            .iter()
            .zip(phases)
            .map(|(f, u)| f.as_ref().map(|a| CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * u[i] * u[j].conj())))
            .collect()
    }

    /// `out += coeff · (⊗ factors) x`.
    fn apply_add(&self, factors: &[Option<CMatrix>], coeff: C64, x: &[C64], width: usize, out: &mut [C64], ws: &mut FrameWork) {
        let mut first = true;
        for (q, f) in factors.iter().enumerate() {
            let Some(a) = f else { continue };
            if first {
                apply_local(a, q, &self.dims, x, width, &mut ws.b1);
                first = false;
            } else {
                apply_local(a, q, &self.dims, &ws.b1, width, &mut ws.b2);
                std::mem::swap(&mut ws.b1, &mut ws.b2);
            }
        }
        if first {
            caxpy(coeff, x, out);
        } else {
            caxpy(coeff, &ws.b1, out);
        }
    }

    /// `H_eff(t)·x` in the rotating frame, `H_eff = H_c(t) − i·decay`.
    fn h_eff_apply(&self, t: f64, x: &[C64], width: usize, out: &mut [C64], ws: &mut FrameWork, with_decay: bool) {
        out.iter_mut().for_each(|z| *z = ZERO);
        let u = self.phases(t);
        for (parts, env) in &self.terms {
            let c = env.value(t);
            if c == 0.0 {
                continue;
            }
            for p in parts {
                self.apply_add(&Self::rotate(p, &u), C64::new(c, 0.0), x, width, out, ws);
            }
        }
        if with_decay {
            for p in &self.decay {
                self.apply_add(&Self::rotate(p, &u), C64::new(0.0, -1.0), x, width, out, ws);
            }
        }
    }

    pub(super) fn eval_ket(&self, t: f64, y: &[C64], width: usize, dy: &mut [C64], ws: &mut FrameWork) {
        self.h_eff_apply(t, y, width, dy, ws, false);
        for z in dy.iter_mut() {
            *z = C64::new(z.im, -z.re);
        }
    }

    pub(super) fn eval_density(&self, t: f64, y: &[C64], dy: &mut [C64], ws: &mut FrameWork) {
        let m = self.size();
        let mut tmat = std::mem::take(&mut ws.t);
        self.h_eff_apply(t, y, m, &mut tmat, ws, true);
        super::minus_i_hermitian_part(&tmat, m, dy);
        ws.t = tmat;
        if self.jumps.is_empty() {
            return;
        }
        let u = self.phases(t);
        for (parts, rate) in &self.jumps {
            let rotated: Vec<_> = parts.iter().map(|p| Self::rotate(p, &u)).collect();
            // X = Lρ, then LρL† = L X† for Hermitian ρ.
            let mut x = std::mem::take(&mut ws.x);
            x.iter_mut().for_each(|z| *z = ZERO);
            for f in &rotated {
                self.apply_add(f, C64::new(1.0, 0.0), y, m, &mut x, ws);
            }
            let mut xd = std::mem::take(&mut ws.xd);
            for i in 0..m {
                for j in 0..m {
                    xd[i * m + j] = x[j * m + i].conj();
                }
            }
            for f in &rotated {
                self.apply_add(f, C64::new(*rate, 0.0), &xd, m, dy, ws);
            }
            ws.x = x;
            ws.xd = xd;
        }
    }

    /// Rotating-frame coordinates of lab kets (columns of `psi`).
    pub(super) fn ket_in(&self, psi: &CMatrix) -> CMatrix {
        self.basis.adjoint() * psi
    }

    pub(super) fn ket_out(&self, t: f64, c: &CMatrix) -> CMatrix {
        let back = self.back_phases(t);
        let mut c = c.clone();
        for (i, mut row) in c.row_iter_mut().enumerate() {
            row *= back[i];
        }
        &self.basis * c
    }

    pub(super) fn density_in(&self, rho: &CMatrix) -> CMatrix {
        self.basis.adjoint() * rho * &self.basis
    }

    pub(super) fn density_out(&self, t: f64, r: &CMatrix) -> CMatrix {
        let back = self.back_phases(t);
        let r = CMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] * back[i] * back[j].conj());
        &self.basis * r * self.basis.adjoint()
    }

    /// `e^{−iε_k t}` for every kept product state.
    fn back_phases(&self, t: f64) -> Vec<C64> {
        let m = self.size();
        let n_modes = self.dims.len();
        (0..m)
            .map(|k| {
                let mut rem = k;
                let mut e = 0.0;
                for q in (0..n_modes).rev() {
                    e += self.energies[q][rem % self.dims[q]];
                    rem /= self.dims[q];
                }
                C64::cis(-e * t)
            })
            .collect()
    }

    pub(super) fn workspace(&self, width: usize) -> FrameWork {
        let len = self.size() * width;
        FrameWork { b1: vec![ZERO; len], b2: vec![ZERO; len], t: vec![ZERO; len], x: vec![ZERO; len], xd: vec![ZERO; len] }
    }
}

pub(super) struct FrameWork {
    b1: Vec<C64>,
    b2: Vec<C64>,
    t: Vec<C64>,
    x: Vec<C64>,
    xd: Vec<C64>,
}

/// `out = (A on mode q) · x` for a row-major block of `width` columns.
fn apply_local(a: &CMatrix, q: usize, dims: &[usize], x: &[C64], width: usize, out: &mut [C64]) {
    let mq = dims[q];
    let outer: usize = dims[..q].iter().product();
    let block = dims[q + 1..].iter().product::<usize>() * width;
    out.iter_mut().for_each(|z| *z = ZERO);
    for o in 0..outer {
        for i in 0..mq {
            let dst = &mut out[(o * mq + i) * block..(o * mq + i + 1) * block];
            for k in 0..mq {
                let c = a[(i, k)];
                if c != ZERO {
                    caxpy(c, &x[(o * mq + k) * block..(o * mq + k + 1) * block], dst);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_split_round_trips() {
        let d = 3;
        let a = CMatrix::from_fn(d, d, |i, j| C64::new((i + 2 * j) as f64, (i as f64) - (j as f64)));
        let b = CMatrix::from_fn(d, d, |i, j| C64::new((i * j) as f64 + 1.0, 0.0));
        let h = embed(&a, 0, d, 2) + embed(&b, 1, d, 2);
        let parts = local_parts(&h, d, 2).unwrap();
        let rebuilt = embed(&parts[0], 0, d, 2) + embed(&parts[1], 1, d, 2);
        assert!(linalg::max_abs_diff(&rebuilt, &h) < 1e-12);
        let coupled = linalg::kron(&a, &b);
        assert!(local_parts(&coupled, d, 2).is_none());
    }

    #[test]
    fn schmidt_rebuilds_operator() {
        let d = 3;
        let a = CMatrix::from_fn(d, d, |i, j| C64::new(i as f64 - j as f64, 0.5 * (i + j) as f64));
        let b = CMatrix::from_fn(d, d, |i, j| C64::new((i + j) as f64, 0.0));
        let x = linalg::kron(&a, &b) + linalg::kron(&b, &a.adjoint());
        let terms = schmidt_two_modes(&x, d);
        assert_eq!(terms.len(), 2);
        let mut rebuilt = CMatrix::zeros(d * d, d * d);
        for t in &terms {
            rebuilt += linalg::kron(t.factors[0].as_ref().unwrap(), t.factors[1].as_ref().unwrap());
        }
        assert!(linalg::max_abs_diff(&rebuilt, &x) < 1e-12);
    }

    #[test]
    fn local_application_matches_kron() {
        let dims = [2, 3];
        let a = CMatrix::from_fn(3, 3, |i, j| C64::new((1 + i * 3 + j) as f64, j as f64));
        let x: Vec<C64> = (0..12).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let mut out = vec![ZERO; 12];
        apply_local(&a, 1, &dims, &x, 2, &mut out);
        let full = linalg::kron(&linalg::identity(2), &a);
        let xm = CMatrix::from_row_slice(6, 2, &x);
        let expected = full * xm;
        let got = CMatrix::from_row_slice(6, 2, &out);
        assert!(linalg::max_abs_diff(&expected, &got) < 1e-12);
    }
}

//! Helpers shared by the integration targets.
#![allow(dead_code)]

use catqaoa::linalg::{CMatrix, CVector, C64};
use catqaoa::qaoa::{InputState, IsingProblem, Mixer, QaoaParams, Sense};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
}

pub fn random_hermitian(r: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let m = random_matrix(r, d, d);
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Kraus operators cut from a random isometry `C^d -> C^(d k)`.
pub fn random_kraus(r: &mut ChaCha8Rng, d: usize, k: usize) -> Vec<CMatrix> {
    let v = random_matrix(r, d * k, d).qr().q();
    (0..k).map(|j| v.rows(j * d, d).into_owned()).collect()
}

pub fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn cmax_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
/// Dense `⊗` with qubit 0 as the leftmost factor.
pub fn kron_chain(factors: &[CMatrix]) -> CMatrix {
    factors.iter().skip(1).fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

/// `e^{−iβH_M} e^{−iγH_C}` layer by layer, with the cost diagonal evaluated
/// bit by bit.
pub fn oracle_state(problem: &IsingProblem, params: &QaoaParams) -> CVector {
    let n = problem.n;
    let d = 1usize << n;
    let spin = |z: usize, q: usize| if (z >> (n - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
    let cost: Vec<f64> = (0..d)
        .map(|z| {
            let mut c = problem.offset;
            for cp in &problem.couplings {
                c += cp.value * spin(z, cp.i) * spin(z, cp.j);
            }
            for (q, h) in problem.fields.iter().enumerate() {
                c += h * spin(z, q);
            }
            c
        })
        .collect();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let single = match params.input {
        InputState::Plus => CMatrix::from_column_slice(2, 1, &[C64::new(s, 0.0), C64::new(s, 0.0)]),
        InputState::PlusI => CMatrix::from_column_slice(2, 1, &[C64::new(s, 0.0), C64::new(0.0, s)]),
    };
    let mut psi: CVector = kron_chain(&vec![single; n]).column(0).into_owned();
    for (g, b) in params.gammas.iter().zip(&params.betas) {
        for (z, a) in psi.iter_mut().enumerate() {
            *a *= C64::from_polar(1.0, -g * cost[z]);
        }
        let (cb, sb) = (b.cos(), b.sin());
        let rot = match params.mixer {
            Mixer::X => CMatrix::from_row_slice(2, 2, &[C64::new(cb, 0.0), C64::new(0.0, -sb), C64::new(0.0, -sb), C64::new(cb, 0.0)]),
            Mixer::Y => CMatrix::from_row_slice(2, 2, &[C64::new(cb, 0.0), C64::new(-sb, 0.0), C64::new(sb, 0.0), C64::new(cb, 0.0)]),
        };
        psi = kron_chain(&vec![rot; n]) * psi;
    }
    psi
}

pub fn random_problem(r: &mut ChaCha8Rng, n: usize) -> IsingProblem {
    let mut couplings = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(0.7) {
                couplings.push((i, j, r.random_range(-1.5..1.5)));
            }
        }
    }
    let fields = (0..n).map(|_| if r.random_bool(0.5) { r.random_range(-1.0..1.0) } else { 0.0 }).collect();
    let sense = if r.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    IsingProblem::new(n, &couplings, fields, r.random_range(-2.0..2.0), sense).unwrap()
}

pub fn random_params(r: &mut ChaCha8Rng, p: usize) -> QaoaParams {
    let gammas = (0..p).map(|_| r.random_range(-4.0..4.0)).collect();
    let betas = (0..p).map(|_| r.random_range(-4.0..4.0)).collect();
    let mixer = if r.random_bool(0.5) { Mixer::X } else { Mixer::Y };
    let input = if r.random_bool(0.5) { InputState::Plus } else { InputState::PlusI };
    QaoaParams::new(gammas, betas, mixer, input).unwrap()
}

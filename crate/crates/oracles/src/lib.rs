//! Brute-force reference implementations for the `qdyn` test suites.
//!
//! Everything here is deliberately naive: dense `2^n × 2^n` matrices instead
//! of matrix-free gates, explicit loops instead of linear algebra, finite
//! differences instead of commutators. Nothing in this crate is part of the
//! public library surface.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use qdyn::ansatz::{Ansatz, FixedOp};
use qdyn::kernels::Tensor3;
use qdyn::qsim::{Observable, QuantumState};
use qdyn::taskdata::Datum;

/// Largest Hilbert-space dimension the dense oracles accept.
pub const MAX_ORACLE_DIM: usize = 256;
/// Largest parameter count for finite-difference Hessians.
pub const MAX_FD_HESSIAN_PARAMS: usize = 16;

#[derive(Debug, Clone, Copy)]
pub struct OracleTolerance {
    pub absolute: f64,
    pub relative: f64,
    pub context: &'static str,
}

impl OracleTolerance {
    pub fn new(absolute: f64, relative: f64, context: &'static str) -> Self {
        assert!(absolute > 0.0 && relative > 0.0, "tolerances must be positive");
        Self { absolute, relative, context }
    }

    pub fn accepts(&self, measured: f64, reference: f64) -> bool {
        (measured - reference).abs() <= self.absolute + self.relative * reference.abs()
    }

    pub fn assert_close(&self, measured: f64, reference: f64) {
        assert!(self.accepts(measured, reference), "{}: measured {measured:e} vs reference {reference:e}", self.context);
    }
}

fn cnot_dense(n: usize, c: usize, t: usize) -> DMatrix<C64> {
    let d = 1usize << n;
    let mut m = DMatrix::zeros(d, d);
    for x in 0..d {
        let cb = (x >> (n - 1 - c)) & 1;
        let y = if cb == 1 { x ^ (1 << (n - 1 - t)) } else { x };
        m[(y, x)] = C64::new(1.0, 0.0);
    }
    m
}

/// Dense matrix of layer `l`: `W_l · (cos(θ/2) I − i sin(θ/2) X_l)`.
pub fn dense_layer(a: &Ansatz, l: usize, theta: f64) -> DMatrix<C64> {
    let d = a.dim();
    let layer = &a.layers()[l];
    let p = layer.generator.to_dense();
    let rot = DMatrix::<C64>::identity(d, d) * C64::new((theta / 2.0).cos(), 0.0) - p * C64::new(0.0, (theta / 2.0).sin());
    let w = match &layer.fixed {
        FixedOp::None => DMatrix::identity(d, d),
        FixedOp::Dense(u) => u.matrix().clone(),
        FixedOp::Cnots(list) => list.iter().fold(DMatrix::identity(d, d), |acc, &(c, t)| cnot_dense(a.n_qubits(), c, t) * acc),
    };
    w * rot
}

/// Full dense product of layers `[from, to)`.
pub fn dense_segment(a: &Ansatz, p: &[f64], from: usize, to: usize) -> DMatrix<C64> {
    assert!(a.dim() <= MAX_ORACLE_DIM, "dense oracle limited to dim {MAX_ORACLE_DIM}");
    (from..to).fold(DMatrix::identity(a.dim(), a.dim()), |acc, l| dense_layer(a, l, p[l]) * acc)
}

pub fn dense_circuit_oracle(a: &Ansatz, p: &[f64]) -> DMatrix<C64> {
    dense_segment(a, p, 0, a.n_params())
}

fn state_vec(s: &QuantumState) -> DVector<C64> {
    DVector::from_column_slice(s.amplitudes())
}

/// `⟨ψ|U†OU|ψ⟩ − y` with everything dense.
pub fn dense_error(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> f64 {
    let u = dense_circuit_oracle(a, p);
    let out = u * state_vec(&d.state);
    let om = o.to_dense();
    (out.adjoint() * om * &out)[(0, 0)].re - d.target
}

/// Central differences of [`dense_error`].
pub fn fd_grad_oracle(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable, h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + h;
            let fp = dense_error(a, &q, d, o);
            q[i] = p[i] - h;
            let fm = dense_error(a, &q, d, o);
            q[i] = p[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn fd_hessian_oracle(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable, h: f64) -> DMatrix<f64> {
    let l = p.len();
    assert!(l <= MAX_FD_HESSIAN_PARAMS, "FD Hessian oracle limited to L <= {MAX_FD_HESSIAN_PARAMS}");
    let f = |q: &[f64]| dense_error(a, q, d, o);
    let mut out = DMatrix::zeros(l, l);
    let f0 = f(p);
    for i in 0..l {
        for j in 0..l {
            let mut q = p.to_vec();
            out[(i, j)] = if i == j {
                q[i] = p[i] + h;
                let fp = f(&q);
                q[i] = p[i] - h;
                (fp - 2.0 * f0 + f(&q)) / (h * h)
            } else {
                let mut g = |si: f64, sj: f64| {
                    q[i] = p[i] + si * h;
                    q[j] = p[j] + sj * h;
                    f(&q)
                };
                (g(1.0, 1.0) - g(1.0, -1.0) - g(-1.0, 1.0) + g(-1.0, -1.0)) / (4.0 * h * h)
            };
        }
    }
    out
}

/// `K` by explicit loops.
pub fn qntk_loops(grads: &[Vec<f64>]) -> DMatrix<f64> {
    let n = grads.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for l in 0..grads[a].len() {
                s += grads[a][l] * grads[b][l];
            }
            k[(a, b)] = s;
        }
    }
    k
}

/// `μ_{γαβ}` by a quadruple loop.
pub fn dqntk_loops(grads: &[Vec<f64>], hessians: &[DMatrix<f64>]) -> Tensor3 {
    let n = grads.len();
    let l = grads[0].len();
    Tensor3::from_fn(n, |g, a, b| {
        let mut s = 0.0;
        for i in 0..l {
            for j in 0..l {
                s += grads[g][i] * hessians[a][(i, j)] * grads[b][j];
            }
        }
        s
    })
}

/// `f_{αβ}` by a triple loop.
pub fn f_loops(k: &DMatrix<f64>, eps: &[f64], lambda: &Tensor3) -> DMatrix<f64> {
    let n = eps.len();
    let mut f = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            for g in 0..n {
                f[(a, b)] += k[(g, g)].sqrt() * eps[g] * lambda.get(g, a, b);
            }
        }
    }
    f
}

/// First-order prediction of the one-step error change: `−(η/N) K ε`.
pub fn eq5_step_oracle(k: &DMatrix<f64>, eps: &[f64], eta: f64) -> Vec<f64> {
    let n = eps.len();
    (0..n).map(|a| -(eta / n as f64) * (0..n).map(|b| k[(a, b)] * eps[b]).sum::<f64>()).collect()
}

/// First-order prediction of the one-step kernel change:
/// `δK_{αβ} = −(η/N) Σ_γ ε_γ (μ_{γβα} + μ_{γαβ})`.
pub fn eqk_step_oracle(mu: &Tensor3, eps: &[f64], eta: f64) -> DMatrix<f64> {
    let n = eps.len();
    DMatrix::from_fn(n, n, |a, b| -(eta / n as f64) * (0..n).map(|g| eps[g] * (mu.get(g, b, a) + mu.get(g, a, b))).sum::<f64>())
}

/// Classical RK4 for autonomous systems (independent of the library's integrator).
pub fn rk4_oracle(f: impl Fn(&[f64]) -> Vec<f64>, y0: &[f64], h: f64, steps: usize) -> Vec<f64> {
    let mut y = y0.to_vec();
    let axpy = |y: &[f64], k: &[f64], s: f64| y.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&axpy(&y, &k1, h / 2.0));
        let k3 = f(&axpy(&y, &k2, h / 2.0));
        let k4 = f(&axpy(&y, &k3, h));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

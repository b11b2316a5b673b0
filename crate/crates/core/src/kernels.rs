//! Kernel hierarchy built from per-datum gradients and Hessians.
//!
//! The relative dQNTK `λ_{γαβ} = μ_{γαβ}/√(K_γγ K_ββ)` is normalized by the
//! two *outer* indices only; the middle (Hessian) index `α` does not enter
//! the denominator, so `λ` is symmetric under `γ ↔ β` but not otherwise.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ansatz::Ansatz;
use crate::derivatives::{error_grad_hessian, GradientVector, HessianMatrix};
use crate::error::{Error, Result};
use crate::taskdata::Dataset;

/// Tolerance below which a kernel eigenvalue triggers a PSD warning.
pub const PSD_TOL: f64 = -1e-10;

/// Dense `N×N×N` tensor indexed `[γ][α][β]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for g in 0..n {
            for a in 0..n {
                for b in 0..n {
                    t.set(g, a, b, f(g, a, b));
                }
            }
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, g: usize, a: usize, b: usize) -> f64 {
        self.data[(g * self.n + a) * self.n + b]
    }

    #[inline]
    pub fn set(&mut self, g: usize, a: usize, b: usize, v: f64) {
        self.data[(g * self.n + a) * self.n + b] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sum of absolute values of the finite entries.
    pub fn norm1(&self) -> f64 {
        self.data.iter().filter(|v| v.is_finite()).map(|v| v.abs()).sum()
    }
}

fn check_grads(grads: &[GradientVector]) -> Result<usize> {
    let l = grads.first().map(|g| g.len()).ok_or_else(|| Error::Shape("no gradients".into()))?;
    if grads.iter().any(|g| g.len() != l) {
        return Err(Error::Shape("gradient vectors have different lengths".into()));
    }
    Ok(l)
}

/// `K_{αβ} = ⟨∇ε_α, ∇ε_β⟩`.
pub fn qntk(grads: &[GradientVector]) -> Result<DMatrix<f64>> {
    check_grads(grads)?;
    let n = grads.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v: f64 = grads[a].iter().zip(&grads[b]).map(|(x, y)| x * y).sum();
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    Ok(k)
}

/// Cosine of the angle between gradients; NaN where a diagonal vanishes.
pub fn angle_matrix(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::Shape("kernel is not square".into()));
    }
    if let Some(i) = (0..n).find(|&i| k[(i, i)] < 0.0) {
        return Err(Error::InvalidKernel(format!("negative diagonal K[{i}][{i}] = {}", k[(i, i)])));
    }
    Ok(DMatrix::from_fn(n, n, |a, b| {
        let den = (k[(a, a)] * k[(b, b)]).sqrt();
        if den > 0.0 {
            k[(a, b)] / den
        } else {
            f64::NAN
        }
    }))
}

/// `μ_{γαβ} = ∇ε_γᵀ H_α ∇ε_β`.
pub fn dqntk(grads: &[GradientVector], hessians: &[HessianMatrix]) -> Result<Tensor3> {
    let l = check_grads(grads)?;
    let n = grads.len();
    if hessians.len() != n || hessians.iter().any(|h| h.nrows() != l || h.ncols() != l) {
        return Err(Error::Shape("Hessians do not match gradients".into()));
    }
    let gs: Vec<nalgebra::DVector<f64>> = grads.iter().map(|g| nalgebra::DVector::from_column_slice(g)).collect();
    let mut mu = Tensor3::zeros(n);
    for (a, h) in hessians.iter().enumerate() {
        let hg: Vec<nalgebra::DVector<f64>> = gs.iter().map(|g| h * g).collect();
        for g in 0..n {
            for b in g..n {
                let v = gs[g].dot(&hg[b]);
                mu.set(g, a, b, v);
                mu.set(b, a, g, v);
            }
        }
    }
    Ok(mu)
}

/// `λ_{γαβ} = μ_{γαβ}/√(K_γγ K_ββ)`; NaN where the denominator vanishes.
pub fn relative_dqntk(mu: &Tensor3, k: &DMatrix<f64>) -> Tensor3 {
    Tensor3::from_fn(mu.n(), |g, a, b| {
        let den = (k[(g, g)] * k[(b, b)]).sqrt();
        if den > 0.0 {
            mu.get(g, a, b) / den
        } else {
            f64::NAN
        }
    })
}

/// `f_{αβ} = Σ_γ √K_γγ ε_γ λ_{γαβ}`.
pub fn f_matrix(k: &DMatrix<f64>, eps: &[f64], lambda: &Tensor3) -> DMatrix<f64> {
    let n = eps.len();
    DMatrix::from_fn(n, n, |a, b| (0..n).map(|g| k[(g, g)].max(0.0).sqrt() * eps[g] * lambda.get(g, a, b)).sum())
}

/// Fixed-point charges `C_α = K*_αα − 2 λ_ααα ε*_α`.
pub fn charges(k_star: &[f64], eps_star: &[f64], lambda: &Tensor3) -> Vec<f64> {
    (0..k_star.len()).map(|a| k_star[a] - 2.0 * lambda.get(a, a, a) * eps_star[a]).collect()
}

/// Loss Hessian `Σ_β (∇ε_β ∇ε_βᵀ + ε_β H_β)` (no `1/N` prefactor).
pub fn loss_hessian(grads: &[GradientVector], hessians: &[HessianMatrix], eps: &[f64]) -> Result<DMatrix<f64>> {
    let l = check_grads(grads)?;
    if hessians.len() != grads.len() || eps.len() != grads.len() {
        return Err(Error::Shape("inconsistent numbers of data".into()));
    }
    let mut h = DMatrix::zeros(l, l);
    for ((g, hb), &e) in grads.iter().zip(hessians).zip(eps) {
        if hb.nrows() != l || hb.ncols() != l {
            return Err(Error::Shape("Hessian size does not match gradient".into()));
        }
        let gv = nalgebra::DVector::from_column_slice(g);
        h += &gv * gv.transpose() + hb * e;
    }
    Ok(h)
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn hessian_spectrum(h: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = h.clone().symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Everything measured at one point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSnapshot {
    pub step: usize,
    pub errors: Vec<f64>,
    pub k: DMatrix<f64>,
    pub angles: DMatrix<f64>,
    pub mu: Tensor3,
    pub lambda: Tensor3,
    pub warnings: Vec<String>,
}

/// Per-datum errors, gradients and Hessians at one parameter point.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub errors: Vec<f64>,
    pub grads: Vec<GradientVector>,
    pub hessians: Vec<HessianMatrix>,
}

pub fn derivative_bundle(a: &Ansatz, p: &[f64], ds: &Dataset) -> Result<DerivativeBundle> {
    let mut errors = Vec::with_capacity(ds.len());
    let mut grads = Vec::with_capacity(ds.len());
    let mut hessians = Vec::with_capacity(ds.len());
    for (i, d) in ds.data().iter().enumerate() {
        let (e, g, h) = error_grad_hessian(a, p, d, ds.observable(i))?;
        errors.push(e);
        grads.push(g);
        hessians.push(h);
    }
    Ok(DerivativeBundle { errors, grads, hessians })
}

impl KernelSnapshot {
    pub fn from_bundle(step: usize, b: &DerivativeBundle) -> Result<Self> {
        let k = qntk(&b.grads)?;
        let mut warnings = Vec::new();
        let min_eig = k.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < PSD_TOL {
            warnings.push(format!("QNTK eigenvalue {min_eig:.3e} below PSD tolerance"));
        }
        let angles = angle_matrix(&k)?;
        let mu = dqntk(&b.grads, &b.hessians)?;
        let lambda = relative_dqntk(&mu, &k);
        Ok(Self { step, errors: b.errors.clone(), k, angles, mu, lambda, warnings })
    }

    pub fn measure(step: usize, a: &Ansatz, p: &[f64], ds: &Dataset) -> Result<Self> {
        Self::from_bundle(step, &derivative_bundle(a, p, ds)?)
    }

    pub fn n(&self) -> usize {
        self.errors.len()
    }

    pub fn k_diag(&self) -> Vec<f64> {
        (0..self.n()).map(|a| self.k[(a, a)]).collect()
    }

    pub fn f_matrix(&self) -> DMatrix<f64> {
        f_matrix(&self.k, &self.errors, &self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_example() {
        let k = DMatrix::from_row_slice(2, 2, &[4.0, 3.0, 3.0, 9.0]);
        let ang = angle_matrix(&k).unwrap();
        assert!((ang[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(ang[(0, 0)], 1.0);
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(angle_matrix(&bad).is_err());
        let zero = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(angle_matrix(&zero).unwrap()[(0, 1)].is_nan());
    }

    #[test]
    fn charges_arithmetic() {
        let lam = Tensor3::from_fn(1, |_, _, _| -1.0);
        assert_eq!(charges(&[0.0], &[2.0], &lam), vec![4.0]);
        assert_eq!(charges(&[1.5], &[0.0], &lam), vec![1.5]);
    }

    #[test]
    fn identical_gradients_rank_one() {
        let g = vec![vec![1.0, 2.0, 3.0]; 3];
        let k = qntk(&g).unwrap();
        assert!(k.iter().all(|&v| v == 14.0));
        assert!(angle_matrix(&k).unwrap().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }
}

//! Exact first and second derivatives of per-datum errors.
//!
//! The commutator forms are evaluated matrix-free: forward states
//! `φ_ℓ = U_{ℓ−}|ψ⟩` and co-states `χ_ℓ = O_{ℓ+} φ_ℓ` (with
//! `O_{ℓ+} = U_{ℓ+}† O U_{ℓ+}`) give
//!
//! * `∂ε/∂θ_ℓ = −Im⟨φ_ℓ|X_ℓ|χ_ℓ⟩`
//! * `∂²ε/∂θ_ℓ² = −½ Re(⟨φ_ℓ|χ_ℓ⟩ − ⟨X_ℓφ_ℓ|ζ_ℓ⟩)`, `ζ_ℓ = O_{ℓ+} X_ℓ φ_ℓ`
//! * `∂²ε/∂θ_a∂θ_b = −½ Re(⟨c|X_b|χ_b⟩ − ⟨c|ζ_b⟩)` for `a < b`, where `c` is
//!   `X_a φ_a` pushed through layers `a..b`.
//!
//! Finite differences and parameter-shift rules are kept as independent
//! checks.

use nalgebra::DMatrix;

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::qsim::{dot, Observable, C64};
use crate::taskdata::{error, Datum, Dataset};

pub type GradientVector = Vec<f64>;
pub type HessianMatrix = DMatrix<f64>;

fn zeros(d: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); d]
}

fn check(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> Result<()> {
    a.check_params(p)?;
    a.check_state(&d.state)?;
    if o.dim() != a.dim() {
        return Err(Error::Shape(format!("observable of dim {} for ansatz of dim {}", o.dim(), a.dim())));
    }
    Ok(())
}

/// Forward states `φ_0..φ_L` (`φ_L` is the circuit output).
fn forward_states(a: &Ansatz, p: &[f64], psi: &[C64]) -> Vec<Vec<C64>> {
    let l = a.n_params();
    let mut states = Vec::with_capacity(l + 1);
    let mut cur = psi.to_vec();
    let mut scratch = zeros(psi.len());
    states.push(cur.clone());
    for i in 0..l {
        a.apply_layer(i, p[i], &mut cur, &mut scratch);
        states.push(cur.clone());
    }
    states
}

/// Error and analytic gradient in one adjoint sweep.
pub fn error_and_grad(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> Result<(f64, GradientVector)> {
    check(a, p, d, o)?;
    Ok(error_and_grad_unchecked(a, p, d, o))
}

pub(crate) fn error_and_grad_unchecked(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> (f64, GradientVector) {
    let l = a.n_params();
    let dim = a.dim();
    let states = forward_states(a, p, d.state.amplitudes());
    let out = &states[l];
    let mut chi = zeros(dim);
    o.apply_into(out, &mut chi);
    let eps = dot(out, &chi).re - d.target;
    let mut scratch = zeros(dim);
    let mut grad = vec![0.0; l];
    for i in (0..l).rev() {
        a.apply_layer_adjoint(i, p[i], &mut chi, &mut scratch);
        grad[i] = -a.layers()[i].generator.sandwich(&states[i], &chi).im;
    }
    (eps, grad)
}

/// `∂ε/∂θ` from the commutator form.
pub fn grad_error(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> Result<GradientVector> {
    Ok(error_and_grad(a, p, d, o)?.1)
}

/// Errors and gradients of every datum.
pub fn errors_and_grads(a: &Ansatz, p: &[f64], ds: &Dataset) -> Result<(Vec<f64>, Vec<GradientVector>)> {
    let mut eps = Vec::with_capacity(ds.len());
    let mut grads = Vec::with_capacity(ds.len());
    for (i, d) in ds.data().iter().enumerate() {
        let (e, g) = error_and_grad(a, p, d, ds.observable(i))?;
        eps.push(e);
        grads.push(g);
    }
    Ok((eps, grads))
}

/// Error, gradient and Hessian of one datum.
pub fn error_grad_hessian(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> Result<(f64, GradientVector, HessianMatrix)> {
    check(a, p, d, o)?;
    let l = a.n_params();
    let dim = a.dim();
    let layers = a.layers();
    let states = forward_states(a, p, d.state.amplitudes());
    let out = &states[l];

    // Co-states χ_ℓ.
    let mut chis = vec![zeros(dim); l + 1];
    o.apply_into(out, &mut chis[l]);
    let eps = dot(out, &chis[l]).re - d.target;
    let mut scratch = zeros(dim);
    for i in (0..l).rev() {
        let mut c = chis[i + 1].clone();
        a.apply_layer_adjoint(i, p[i], &mut c, &mut scratch);
        chis[i] = c;
    }
    let grad: Vec<f64> = (0..l).map(|i| -layers[i].generator.sandwich(&states[i], &chis[i]).im).collect();

    let mut h = DMatrix::<f64>::zeros(l, l);
    let mut zetas: Vec<Vec<C64>> = vec![Vec::new(); l];
    let mut tmp = zeros(dim);
    for i in (0..l).rev() {
        let gen = &layers[i].generator;
        let mut c = zeros(dim);
        gen.apply_into(&states[i], &mut c);
        let x_phi = c.clone();
        for j in i..l {
            if j > i {
                let w = layers[j].generator.sandwich(&c, &chis[j]) - dot(&c, &zetas[j]);
                let v = -0.5 * w.re;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
            a.apply_layer(j, p[j], &mut c, &mut scratch);
        }
        o.apply_into(&c, &mut tmp);
        std::mem::swap(&mut c, &mut tmp);
        for j in (i..l).rev() {
            a.apply_layer_adjoint(j, p[j], &mut c, &mut scratch);
        }
        h[(i, i)] = -0.5 * (dot(&states[i], &chis[i]).re - dot(&x_phi, &c).re);
        zetas[i] = c;
    }
    Ok((eps, grad, h))
}

/// `∂²ε/∂θ∂θ` from the nested-commutator forms.
pub fn hessian_error(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> Result<HessianMatrix> {
    Ok(error_grad_hessian(a, p, d, o)?.2)
}

/// Central-difference gradient of an arbitrary scalar function.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian of an arbitrary scalar function.
pub fn central_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut y = x.to_vec();
    let f0 = f(x);
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in i + 1..n {
            let mut eval = |si: f64, sj: f64| {
                y[i] = x[i] + si * h;
                y[j] = x[j] + sj * h;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn error_fn<'a>(a: &'a Ansatz, d: &'a Datum, o: &'a Observable) -> impl Fn(&[f64]) -> f64 + 'a {
    move |q: &[f64]| error(a, q, d, o).expect("shapes validated")
}

/// Central finite-difference gradient of `ε` (default step 1e-5).
pub fn fd_grad(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable, h: f64) -> Result<GradientVector> {
    check(a, p, d, o)?;
    check_step(h)?;
    Ok(central_gradient(error_fn(a, d, o), p, h))
}

/// Central finite-difference Hessian of `ε` (default step 1e-4).
pub fn fd_hessian(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable, h: f64) -> Result<HessianMatrix> {
    check(a, p, d, o)?;
    check_step(h)?;
    Ok(central_hessian(error_fn(a, d, o), p, h))
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")))
    }
}

/// Parameter-shift gradient `[ε(θ+π/2) − ε(θ−π/2)]/2`.
pub fn shift_grad(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> Result<GradientVector> {
    check(a, p, d, o)?;
    let f = error_fn(a, d, o);
    let mut y = p.to_vec();
    let half = std::f64::consts::FRAC_PI_2;
    Ok((0..p.len())
        .map(|i| {
            y[i] = p[i] + half;
            let fp = f(&y);
            y[i] = p[i] - half;
            let fm = f(&y);
            y[i] = p[i];
            0.5 * (fp - fm)
        })
        .collect())
}

/// Parameter-shift second derivatives `(ε(θ+π) + ε(θ−π) − 2ε(θ))/4`.
///
/// With `ε(θ) = A + B cos θ + C sin θ` the bracket equals `−4(B cos θ + C sin θ)`,
/// i.e. four times the curvature.
pub fn shift_hessian_diag(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> Result<Vec<f64>> {
    check(a, p, d, o)?;
    let f = error_fn(a, d, o);
    let f0 = f(p);
    let mut y = p.to_vec();
    let pi = std::f64::consts::PI;
    Ok((0..p.len())
        .map(|i| {
            y[i] = p[i] + pi;
            let fp = f(&y);
            y[i] = p[i] - pi;
            let fm = f(&y);
            y[i] = p[i];
            0.25 * (fp + fm - 2.0 * f0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{FixedOp, Layer};
    use crate::qsim::{PauliString, QuantumState};

    #[test]
    fn one_qubit_closed_form() {
        // ε(θ) = cos θ − y for RX(θ) on |0⟩ measured in Z.
        let a = Ansatz::from_layers(1, vec![Layer { generator: PauliString::parse("X").unwrap(), fixed: FixedOp::None }]).unwrap();
        let d = Datum { state: QuantumState::zero(1).unwrap(), target: 0.25 };
        let o = Observable::z(1, 0).unwrap();
        for theta in [0.0, 0.3, 1.7, -2.2] {
            let (e, g, h) = error_grad_hessian(&a, &[theta], &d, &o).unwrap();
            assert!((e - (theta.cos() - 0.25)).abs() < 1e-14);
            assert!((g[0] + theta.sin()).abs() < 1e-14);
            assert!((h[(0, 0)] + (e + 0.25)).abs() < 1e-14);
        }
    }

    #[test]
    fn fd_exact_on_quadratic() {
        let f = |x: &[f64]| 1.5 * x[0] * x[0] - 0.5 * x[0] * x[1] + 2.0 * x[1] * x[1];
        let h = central_hessian(f, &[0.3, -0.7], 1e-3);
        assert!((h[(0, 0)] - 3.0).abs() < 1e-7);
        assert!((h[(0, 1)] + 0.5).abs() < 1e-7);
        assert!((h[(1, 1)] - 4.0).abs() < 1e-7);
    }
}

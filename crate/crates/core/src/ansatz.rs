//! Layered parameterized circuits.
//!
//! Every trainable layer `ℓ` (0-based) applies the rotation
//! `V_ℓ(θ_ℓ) = e^{−iθ_ℓ X_ℓ/2}` first and then its fixed part `W_ℓ`, so the
//! full circuit is `U = W_{L−1}V_{L−1} ⋯ W_0 V_0` and layer 0 acts first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{haar_unitary, stream_rng, Pauli, PauliString, QuantumState, Rng, UnitaryMatrix, C64};

/// Trainable angles, one per layer.
pub type ParameterVector = Vec<f64>;

const STREAM_STRUCTURE: u64 = 0x5354_5255;

#[derive(Debug, Clone, PartialEq)]
pub enum FixedOp {
    None,
    Dense(UnitaryMatrix),
    /// CNOTs as (control, target), applied in order.
    Cnots(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub generator: PauliString,
    pub fixed: FixedOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    Rpa,
    Hea,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    kind: AnsatzKind,
    n_qubits: usize,
    layers: Vec<Layer>,
    structure_seed: u64,
}

/// JSON-friendly description; together with the seed it reconstructs the
/// circuit exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnsatzDescription {
    pub kind: AnsatzKind,
    pub n_qubits: usize,
    pub n_params: usize,
    pub structure_seed: u64,
    pub layer_order: String,
    pub generators: Vec<String>,
}

impl Ansatz {
    /// Random Pauli ansatz: `L` layers of a full-support Pauli rotation
    /// followed by a fresh Haar unitary.
    pub fn rpa(n: usize, l: usize, structure_seed: u64) -> Result<Self> {
        if n == 0 || l == 0 {
            return Err(Error::InvalidParameter(format!("rpa requires n >= 1 and L >= 1 (got n={n}, L={l})")));
        }
        let mut rng = stream_rng(structure_seed, STREAM_STRUCTURE);
        let dim = 1usize << n;
        let mut layers = Vec::with_capacity(l);
        for _ in 0..l {
            let generator = PauliString::random_full_support(n, &mut rng)?;
            let fixed = FixedOp::Dense(haar_unitary(dim, &mut rng)?);
            layers.push(Layer { generator, fixed });
        }
        Ok(Self { kind: AnsatzKind::Rpa, n_qubits: n, layers, structure_seed })
    }

    /// Hardware-efficient ansatz: per block, RY on every qubit, RZ on every
    /// qubit, then a brickwall of nearest-neighbour CNOTs.
    pub fn hea(n: usize, depth: usize, structure_seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("hea requires n >= 2 (got {n})")));
        }
        if depth == 0 {
            return Err(Error::InvalidParameter("hea requires D >= 1".into()));
        }
        let mut bricks: Vec<(usize, usize)> = (0..n - 1).step_by(2).map(|q| (q, q + 1)).collect();
        bricks.extend((1..n - 1).step_by(2).map(|q| (q, q + 1)));
        let mut layers = Vec::with_capacity(2 * n * depth);
        for _ in 0..depth {
            for axis in [Pauli::Y, Pauli::Z] {
                for q in 0..n {
                    layers.push(Layer { generator: PauliString::single(n, q, axis)?, fixed: FixedOp::None });
                }
            }
            layers.last_mut().expect("n >= 2").fixed = FixedOp::Cnots(bricks.clone());
        }
        Ok(Self { kind: AnsatzKind::Hea, n_qubits: n, layers, structure_seed })
    }

    /// Builds an ansatz from explicit layers (used by tests and custom circuits).
    pub fn from_layers(n: usize, layers: Vec<Layer>) -> Result<Self> {
        for (i, layer) in layers.iter().enumerate() {
            if layer.generator.n_qubits() != n {
                return Err(Error::Shape(format!("layer {i} generator acts on {} qubits", layer.generator.n_qubits())));
            }
            if let FixedOp::Dense(u) = &layer.fixed {
                if u.dim() != 1 << n {
                    return Err(Error::Shape(format!("layer {i} fixed unitary has dim {}", u.dim())));
                }
            }
        }
        Ok(Self { kind: AnsatzKind::Rpa, n_qubits: n, layers, structure_seed: 0 })
    }

    pub fn kind(&self) -> AnsatzKind {
        self.kind
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Number of trainable angles `L`.
    pub fn n_params(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn structure_seed(&self) -> u64 {
        self.structure_seed
    }

    pub fn describe(&self) -> AnsatzDescription {
        AnsatzDescription {
            kind: self.kind,
            n_qubits: self.n_qubits,
            n_params: self.n_params(),
            structure_seed: self.structure_seed,
            layer_order: "rotation then fixed; layer 0 acts first".into(),
            generators: self.layers.iter().map(|l| l.generator.to_string()).collect(),
        }
    }

    pub(crate) fn check_params(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Shape(format!("{} parameters for an ansatz with L={}", p.len(), self.n_params())));
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, s: &QuantumState) -> Result<()> {
        if s.dim() != self.dim() {
            return Err(Error::Shape(format!("state of dim {} for a {}-qubit ansatz", s.dim(), self.n_qubits)));
        }
        Ok(())
    }

    /// Applies layer `l` in place; `scratch` must have the state's length.
    #[inline]
    pub(crate) fn apply_layer(&self, l: usize, theta: f64, amps: &mut Vec<C64>, scratch: &mut Vec<C64>) {
        let layer = &self.layers[l];
        layer.generator.rotate_in_place(theta, amps);
        apply_fixed(&layer.fixed, self.n_qubits, amps, scratch);
    }

    /// Applies the inverse of layer `l` in place.
    #[inline]
    pub(crate) fn apply_layer_adjoint(&self, l: usize, theta: f64, amps: &mut Vec<C64>, scratch: &mut Vec<C64>) {
        let layer = &self.layers[l];
        apply_fixed_adjoint(&layer.fixed, self.n_qubits, amps, scratch);
        layer.generator.rotate_in_place(-theta, amps);
    }
}

fn apply_cnot(n: usize, control: usize, target: usize, amps: &mut [C64]) {
    let cbit = 1usize << (n - 1 - control);
    let tbit = 1usize << (n - 1 - target);
    for x in 0..amps.len() {
        if x & cbit != 0 && x & tbit == 0 {
            amps.swap(x, x | tbit);
        }
    }
}

fn apply_fixed(op: &FixedOp, n: usize, amps: &mut Vec<C64>, scratch: &mut Vec<C64>) {
    match op {
        FixedOp::None => {}
        FixedOp::Dense(u) => {
            u.apply_into(amps, scratch);
            std::mem::swap(amps, scratch);
        }
        FixedOp::Cnots(list) => {
            for &(c, t) in list {
                apply_cnot(n, c, t, amps);
            }
        }
    }
}

fn apply_fixed_adjoint(op: &FixedOp, n: usize, amps: &mut Vec<C64>, scratch: &mut Vec<C64>) {
    match op {
        FixedOp::None => {}
        FixedOp::Dense(u) => {
            u.apply_adjoint_into(amps, scratch);
            std::mem::swap(amps, scratch);
        }
        FixedOp::Cnots(list) => {
            for &(c, t) in list.iter().rev() {
                apply_cnot(n, c, t, amps);
            }
        }
    }
}

/// Initial angles, uniform in `[0, 2π)`.
pub fn random_parameters(l: usize, rng: &mut Rng) -> ParameterVector {
    use rand::Rng as _;
    (0..l).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

/// `U(θ)|ψ⟩`.
pub fn evolve(a: &Ansatz, p: &[f64], s: &QuantumState) -> Result<QuantumState> {
    evolve_range(a, p, 0, a.n_params(), s)
}

/// Applies layers `[from, to)` to `s`.
pub fn evolve_range(a: &Ansatz, p: &[f64], from: usize, to: usize, s: &QuantumState) -> Result<QuantumState> {
    a.check_params(p)?;
    a.check_state(s)?;
    check_range(a, from, to)?;
    let mut amps = s.amplitudes().to_vec();
    let mut scratch = vec![C64::new(0.0, 0.0); amps.len()];
    for l in from..to {
        a.apply_layer(l, p[l], &mut amps, &mut scratch);
    }
    QuantumState::from_amplitudes(a.n_qubits(), amps)
}

/// `U(θ)†|ψ⟩`.
pub fn evolve_adjoint(a: &Ansatz, p: &[f64], s: &QuantumState) -> Result<QuantumState> {
    a.check_params(p)?;
    a.check_state(s)?;
    let mut amps = s.amplitudes().to_vec();
    let mut scratch = vec![C64::new(0.0, 0.0); amps.len()];
    for l in (0..a.n_params()).rev() {
        a.apply_layer_adjoint(l, p[l], &mut amps, &mut scratch);
    }
    QuantumState::from_amplitudes(a.n_qubits(), amps)
}

fn check_range(a: &Ansatz, from: usize, to: usize) -> Result<()> {
    if from > to || to > a.n_params() {
        return Err(Error::InvalidParameter(format!("layer range [{from}, {to}) invalid for L={}", a.n_params())));
    }
    Ok(())
}

/// Dense product of layers `[from, to)`; `segment(ℓ, L) · segment(0, ℓ)` is
/// the full circuit.
pub fn segment_unitary(a: &Ansatz, p: &[f64], from: usize, to: usize) -> Result<UnitaryMatrix> {
    a.check_params(p)?;
    check_range(a, from, to)?;
    let d = a.dim();
    let mut m = nalgebra::DMatrix::<C64>::zeros(d, d);
    let mut scratch = vec![C64::new(0.0, 0.0); d];
    for j in 0..d {
        let mut col = vec![C64::new(0.0, 0.0); d];
        col[j] = C64::new(1.0, 0.0);
        for l in from..to {
            a.apply_layer(l, p[l], &mut col, &mut scratch);
        }
        m.column_mut(j).copy_from_slice(&col);
    }
    Ok(UnitaryMatrix::new_unchecked(m))
}

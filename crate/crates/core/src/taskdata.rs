//! Orthogonal datasets, observables, per-datum errors and the MSE loss.

use serde::{Deserialize, Serialize};

use crate::ansatz::{evolve, Ansatz};
use crate::error::{Error, Result};
use crate::qsim::{apply_unitary, haar_unitary, stream_rng, Observable, QuantumState};

pub(crate) const STREAM_DATA: u64 = 0x4441_5441;
const ORTHO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    pub state: QuantumState,
    pub target: f64,
}

/// How each datum is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObservableMode {
    /// σ^z on one qubit, shared by all data.
    PauliZ { qubit: usize },
    /// `O_α = |α⟩⟨α|`: projector onto the α-th computational basis state.
    StatePrep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Vec<Datum>,
    observables: Vec<Observable>,
    description: DatasetDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescription {
    pub n_qubits: usize,
    pub basis_indices: Vec<usize>,
    pub data_seed: u64,
    pub haar_rotated: bool,
    pub targets: Vec<f64>,
    pub observable: ObservableMode,
}

#[derive(Debug, Clone, Copy)]
pub struct DataOptions {
    pub observable: ObservableMode,
    /// Replace the shared Haar rotation by the identity (test hook).
    pub identity_rotation: bool,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self { observable: ObservableMode::PauliZ { qubit: 0 }, identity_rotation: false }
    }
}

/// `N` orthogonal inputs: one shared Haar unitary applied to the first `N`
/// computational basis states, measured with σ^z on qubit 0.
pub fn orthogonal_dataset(n: usize, big_n: usize, targets: &[f64], seed: u64) -> Result<Dataset> {
    orthogonal_dataset_with(n, big_n, targets, seed, DataOptions::default())
}

pub fn orthogonal_dataset_with(n: usize, big_n: usize, targets: &[f64], seed: u64, opts: DataOptions) -> Result<Dataset> {
    if n == 0 || n > crate::qsim::MAX_QUBITS {
        return Err(Error::InvalidDimension(format!("n_qubits {n} unsupported")));
    }
    let dim = 1usize << n;
    if big_n == 0 {
        return Err(Error::InvalidParameter("dataset needs at least one datum".into()));
    }
    if big_n > dim {
        return Err(Error::ImpossibleOrthogonality { requested: big_n, dim });
    }
    if targets.len() != big_n {
        return Err(Error::Shape(format!("{} targets for N={big_n}", targets.len())));
    }
    let rotation = if opts.identity_rotation { None } else { Some(haar_unitary(dim, &mut stream_rng(seed, STREAM_DATA))?) };
    let mut data = Vec::with_capacity(big_n);
    for (i, &y) in targets.iter().enumerate() {
        let basis = QuantumState::basis(n, i)?;
        let state = match &rotation {
            Some(u) => apply_unitary(u, &basis)?,
            None => basis,
        };
        data.push(Datum { state, target: y });
    }
    let observables = match opts.observable {
        ObservableMode::PauliZ { qubit } => vec![Observable::z(n, qubit)?; big_n],
        ObservableMode::StatePrep => (0..big_n).map(|i| QuantumState::basis(n, i).map(Observable::projector)).collect::<Result<_>>()?,
    };
    let description = DatasetDescription {
        n_qubits: n,
        basis_indices: (0..big_n).collect(),
        data_seed: seed,
        haar_rotated: rotation.is_some(),
        targets: targets.to_vec(),
        observable: opts.observable,
    };
    Dataset::new(data, observables, description, false)
}

impl Dataset {
    /// Validates shapes and pairwise orthogonality of the inputs (and of the
    /// projector targets in state-preparation mode).
    pub fn new(data: Vec<Datum>, observables: Vec<Observable>, description: DatasetDescription, allow_non_orthogonal: bool) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidParameter("empty dataset".into()));
        }
        if observables.len() != data.len() {
            return Err(Error::Shape(format!("{} observables for {} data", observables.len(), data.len())));
        }
        let dim = data[0].state.dim();
        for (d, o) in data.iter().zip(&observables) {
            if d.state.dim() != dim || o.dim() != dim {
                return Err(Error::Shape("inconsistent dimensions in dataset".into()));
            }
        }
        if !allow_non_orthogonal {
            check_orthogonal(data.iter().map(|d| &d.state))?;
            let projectors: Vec<&QuantumState> = observables
                .iter()
                .filter_map(|o| if let Observable::Projector(s) = o { Some(s) } else { None })
                .collect();
            if projectors.len() == observables.len() {
                check_orthogonal(projectors.into_iter())?;
            }
        }
        Ok(Self { data, observables, description })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Datum] {
        &self.data
    }

    pub fn observable(&self, alpha: usize) -> &Observable {
        &self.observables[alpha]
    }

    pub fn targets(&self) -> Vec<f64> {
        self.data.iter().map(|d| d.target).collect()
    }

    pub fn description(&self) -> &DatasetDescription {
        &self.description
    }

    /// Achievable observable range `(O_min, O_max)`.
    pub fn observable_range(&self) -> (f64, f64) {
        self.observables.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| {
            let (a, b) = o.range();
            (lo.min(a), hi.max(b))
        })
    }

    /// Replaces the targets, keeping states and observables.
    pub fn with_targets(&self, targets: &[f64]) -> Result<Self> {
        if targets.len() != self.len() {
            return Err(Error::Shape(format!("{} targets for N={}", targets.len(), self.len())));
        }
        let mut out = self.clone();
        for (d, &y) in out.data.iter_mut().zip(targets) {
            d.target = y;
        }
        out.description.targets = targets.to_vec();
        Ok(out)
    }
}

fn check_orthogonal<'a>(states: impl Iterator<Item = &'a QuantumState>) -> Result<()> {
    let states: Vec<&QuantumState> = states.collect();
    for a in 0..states.len() {
        for b in a + 1..states.len() {
            let overlap = states[a].inner(states[b])?.norm();
            if overlap >= ORTHO_TOL {
                return Err(Error::NonOrthogonal { a, b, overlap });
            }
        }
    }
    Ok(())
}

/// `ε = ⟨ψ|U†OU|ψ⟩ − y`.
pub fn error(a: &Ansatz, p: &[f64], d: &Datum, o: &Observable) -> Result<f64> {
    let out = evolve(a, p, &d.state)?;
    Ok(crate::qsim::expectation(&out, o)? - d.target)
}

pub fn errors(a: &Ansatz, p: &[f64], ds: &Dataset) -> Result<Vec<f64>> {
    ds.data().iter().enumerate().map(|(i, d)| error(a, p, d, ds.observable(i))).collect()
}

/// `(1/2N) Σ ε²`.
pub fn loss(a: &Ansatz, p: &[f64], ds: &Dataset) -> Result<f64> {
    Ok(loss_from_errors(&errors(a, p, ds)?))
}

pub fn loss_from_errors(eps: &[f64]) -> f64 {
    eps.iter().map(|e| e * e).sum::<f64>() / (2.0 * eps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_arithmetic() {
        assert_eq!(loss_from_errors(&[2.0]), 2.0);
        assert_eq!(loss_from_errors(&[1.0, -1.0]), 0.5);
        assert_eq!(loss_from_errors(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn identity_hook_gives_basis_states() {
        let opts = DataOptions { identity_rotation: true, ..Default::default() };
        let ds = orthogonal_dataset_with(3, 3, &[0.0, 0.1, 0.2], 1, opts).unwrap();
        for (i, d) in ds.data().iter().enumerate() {
            assert_eq!(d.state, QuantumState::basis(3, i).unwrap());
        }
    }

    #[test]
    fn too_many_data() {
        assert!(matches!(
            orthogonal_dataset(2, 5, &[0.0; 5], 0),
            Err(Error::ImpossibleOrthogonality { requested: 5, dim: 4 })
        ));
    }

    #[test]
    fn error_of_identity_circuit() {
        let layers = vec![crate::ansatz::Layer {
            generator: crate::qsim::PauliString::parse("XX").unwrap(),
            fixed: crate::ansatz::FixedOp::None,
        }];
        let a = Ansatz::from_layers(2, layers).unwrap();
        let opts = DataOptions { identity_rotation: true, ..Default::default() };
        let ds = orthogonal_dataset_with(2, 1, &[0.0], 0, opts).unwrap();
        assert!((error(&a, &[0.0], &ds.data()[0], ds.observable(0)).unwrap() - 1.0).abs() < 1e-15);
    }
}

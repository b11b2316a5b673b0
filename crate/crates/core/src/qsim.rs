//! Dense statevector primitives.
//!
//! Qubit 0 is the most significant bit of a basis index, so `|q0 q1 … q_{n-1}⟩`
//! reads as a binary number. Pauli strings act matrix-free on amplitudes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// The single PRNG family used throughout the crate.
pub type Rng = ChaCha20Rng;

/// Default cap on the number of qubits (dimension 4096).
pub const MAX_QUBITS: usize = 12;

const NORM_TOL: f64 = 1e-10;

/// Seeded generator on an independent ChaCha stream, so that structure,
/// data and initialization randomness never alias for the same seed.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumState {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl QuantumState {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::InvalidDimension(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps an amplitude vector, rejecting wrong lengths and unnormalized input.
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        check_qubits(n_qubits)?;
        if amps.len() != 1usize << n_qubits {
            return Err(Error::Shape(format!(
                "{} amplitudes for {} qubits",
                amps.len(),
                n_qubits
            )));
        }
        let s = Self { n_qubits, amps };
        let norm = s.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!("state norm {norm} is not 1")));
        }
        Ok(s)
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(n_qubits: usize, mut amps: Vec<C64>) -> Result<Self> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter("cannot normalize a zero vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Self::from_amplitudes(n_qubits, amps)
    }

    /// Haar-random pure state.
    pub fn random(n_qubits: usize, rng: &mut Rng) -> Result<Self> {
        check_qubits(n_qubits)?;
        let amps = (0..1usize << n_qubits).map(|_| gaussian_c64(rng)).collect();
        Self::normalized(n_qubits, amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &QuantumState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!("dims {} and {}", self.dim(), other.dim())));
        }
        Ok(dot(&self.amps, &other.amps))
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidDimension(format!(
            "n_qubits must be in 1..={MAX_QUBITS}, got {n}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis. `P|x⟩ = i^{#Y} (−1)^{|x ∧ z|} |x ⊕ m⟩`
/// with `m` the X/Y support and `z` the Y/Z support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PauliString {
    letters: Vec<Pauli>,
    #[serde(skip)]
    flip_mask: usize,
    #[serde(skip)]
    sign_mask: usize,
    #[serde(skip)]
    y_phase: C64,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Result<Self> {
        check_qubits(letters.len())?;
        let n = letters.len();
        let mut flip_mask = 0;
        let mut sign_mask = 0;
        let mut n_y = 0;
        for (q, p) in letters.iter().enumerate() {
            let bit = 1usize << (n - 1 - q);
            match p {
                Pauli::I => {}
                Pauli::X => flip_mask |= bit,
                Pauli::Y => {
                    flip_mask |= bit;
                    sign_mask |= bit;
                    n_y += 1;
                }
                Pauli::Z => sign_mask |= bit,
            }
        }
        let y_phase = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][n_y % 4];
        Ok(Self { letters, flip_mask, sign_mask, y_phase })
    }

    pub fn parse(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::InvalidParameter(format!("bad Pauli letter {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters)
    }

    /// Single-qubit Pauli `p` on `qubit`, identity elsewhere.
    pub fn single(n: usize, qubit: usize, p: Pauli) -> Result<Self> {
        if qubit >= n {
            return Err(Error::InvalidParameter(format!("qubit {qubit} out of range for n={n}")));
        }
        let mut letters = vec![Pauli::I; n];
        letters[qubit] = p;
        Self::new(letters)
    }

    /// Uniform over the 3^n strings with no identity letter.
    pub fn random_full_support(n: usize, rng: &mut Rng) -> Result<Self> {
        use rand::Rng as _;
        let letters = (0..n).map(|_| [Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..3)]).collect();
        Self::new(letters)
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    pub fn has_identity_letter(&self) -> bool {
        self.letters.iter().any(|&p| p == Pauli::I)
    }

    #[inline]
    fn phase(&self, x: usize) -> C64 {
        if (x & self.sign_mask).count_ones() % 2 == 1 {
            -self.y_phase
        } else {
            self.y_phase
        }
    }

    /// `dst = P src`.
    pub fn apply_into(&self, src: &[C64], dst: &mut [C64]) {
        debug_assert_eq!(src.len(), dst.len());
        for (x, &a) in src.iter().enumerate() {
            dst[x ^ self.flip_mask] = self.phase(x) * a;
        }
    }

    /// `⟨a|P|b⟩`.
    pub fn sandwich(&self, a: &[C64], b: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (x, &bx) in b.iter().enumerate() {
            acc += a[x ^ self.flip_mask].conj() * self.phase(x) * bx;
        }
        acc
    }

    /// In-place `e^{−iθP/2}`.
    pub fn rotate_in_place(&self, theta: f64, amps: &mut [C64]) {
        let (s, c) = (0.5 * theta).sin_cos();
        let mis = C64::new(0.0, -s);
        if self.flip_mask == 0 {
            for (x, a) in amps.iter_mut().enumerate() {
                *a *= c + mis * self.phase(x);
            }
            return;
        }
        for x in 0..amps.len() {
            let y = x ^ self.flip_mask;
            if y < x {
                continue;
            }
            let (ax, ay) = (amps[x], amps[y]);
            // P|y⟩ = phase(y)|x⟩ and P|x⟩ = phase(x)|y⟩.
            amps[x] = c * ax + mis * self.phase(y) * ay;
            amps[y] = c * ay + mis * self.phase(x) * ax;
        }
    }

    /// Dense `2^n × 2^n` matrix (tests and small oracles only).
    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = 1usize << self.n_qubits();
        let mut m = DMatrix::zeros(dim, dim);
        for x in 0..dim {
            m[(x ^ self.flip_mask, x)] = self.phase(x);
        }
        m
    }
}

impl std::fmt::Display for PauliString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: String = self.letters.iter().map(|p| p.as_char()).collect();
        f.write_str(&s)
    }
}

impl From<PauliString> for String {
    fn from(p: PauliString) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PauliString {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        PauliString::parse(&s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    m: DMatrix<C64>,
    /// Split real/imaginary copies of `U` and `U†` (column-major) for the
    /// small-dimension matvec kernel.
    planar: Option<Box<Planar>>,
}

/// Largest dimension served by the split-layout matvec kernel.
const PLANAR_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
struct Planar {
    fwd_re: Vec<f64>,
    fwd_im: Vec<f64>,
    adj_re: Vec<f64>,
    adj_im: Vec<f64>,
}

impl Planar {
    fn build(m: &DMatrix<C64>) -> Option<Box<Self>> {
        if m.nrows() > PLANAR_MAX_DIM {
            return None;
        }
        let adj = m.adjoint();
        Some(Box::new(Self {
            fwd_re: m.iter().map(|c| c.re).collect(),
            fwd_im: m.iter().map(|c| c.im).collect(),
            adj_re: adj.iter().map(|c| c.re).collect(),
            adj_im: adj.iter().map(|c| c.im).collect(),
        }))
    }
}

/// `dst = M src` for a column-major split-layout `M` of dimension `d ≤ 64`.
/// Written so the inner loop vectorizes; every output element sees the same
/// operation order as a scalar evaluation.
#[inline]
fn planar_matvec(re: &[f64], im: &[f64], src: &[C64], dst: &mut [C64]) {
    let d = src.len();
    let mut acc_re = [0.0f64; PLANAR_MAX_DIM];
    let mut acc_im = [0.0f64; PLANAR_MAX_DIM];
    let (ar, ai) = (&mut acc_re[..d], &mut acc_im[..d]);
    for (j, v) in src.iter().enumerate() {
        let (vr, vi) = (v.re, v.im);
        let cr = &re[j * d..(j + 1) * d];
        let ci = &im[j * d..(j + 1) * d];
        for i in 0..d {
            ar[i] += cr[i] * vr - ci[i] * vi;
            ai[i] += cr[i] * vi + ci[i] * vr;
        }
    }
    for (o, (r, i)) in dst.iter_mut().zip(ar.iter().zip(ai.iter())) {
        *o = C64::new(*r, *i);
    }
}

impl UnitaryMatrix {
    /// Accepts a matrix only if `U†U = I` within 1e-9 (max-abs).
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidDimension(format!("{}x{} is not a valid unitary shape", m.nrows(), m.ncols())));
        }
        let dev = unitarity_deviation(&m);
        if dev > 1e-9 {
            return Err(Error::InvalidParameter(format!("matrix is not unitary (deviation {dev:.3e})")));
        }
        Ok(Self::new_unchecked(m))
    }

    pub(crate) fn new_unchecked(m: DMatrix<C64>) -> Self {
        let planar = Planar::build(&m);
        Self { m, planar }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new_unchecked(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn adjoint(&self) -> Self {
        Self::new_unchecked(self.m.adjoint())
    }

    /// `self · rhs`.
    pub fn compose(&self, rhs: &UnitaryMatrix) -> Self {
        Self::new_unchecked(&self.m * &rhs.m)
    }

    /// Max-abs deviation of `U†U` from identity.
    pub fn unitarity_deviation(&self) -> f64 {
        unitarity_deviation(&self.m)
    }

    /// `dst = U src`.
    pub fn apply_into(&self, src: &[C64], dst: &mut [C64]) {
        if let Some(p) = &self.planar {
            return planar_matvec(&p.fwd_re, &p.fwd_im, src, dst);
        }
        let d = self.dim();
        dst.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for (j, &v) in src.iter().enumerate() {
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            let col = &self.m.as_slice()[j * d..(j + 1) * d];
            for (o, &u) in dst.iter_mut().zip(col) {
                *o += u * v;
            }
        }
    }

    /// `dst = U† src`.
    pub fn apply_adjoint_into(&self, src: &[C64], dst: &mut [C64]) {
        if let Some(p) = &self.planar {
            return planar_matvec(&p.adj_re, &p.adj_im, src, dst);
        }
        let d = self.dim();
        for (j, o) in dst.iter_mut().enumerate() {
            let col = &self.m.as_slice()[j * d..(j + 1) * d];
            *o = dot(col, src);
        }
    }
}

impl Serialize for UnitaryMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        // Row-major list of [re, im] pairs.
        let d = self.dim();
        let rows: Vec<Vec<[f64; 2]>> = (0..d)
            .map(|i| (0..d).map(|j| [self.m[(i, j)].re, self.m[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }
}

fn unitarity_deviation(m: &DMatrix<C64>) -> f64 {
    let p = m.adjoint() * m;
    let mut dev: f64 = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((p[(i, j)] - target).norm());
        }
    }
    dev
}

/// Conjugate-linear in the first argument.
#[inline]
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

fn gaussian_c64(rng: &mut Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the
/// phases of `diag(R)` moved into `Q`.
pub fn haar_unitary(dim: usize, rng: &mut Rng) -> Result<UnitaryMatrix> {
    if dim == 0 {
        return Err(Error::InvalidDimension("haar_unitary requires dim >= 1".into()));
    }
    let g = DMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= ph;
        }
    }
    Ok(UnitaryMatrix::new_unchecked(q))
}

/// Real orthogonal matrix from the Haar measure on O(n) (QR of a real
/// Gaussian matrix with sign correction).
pub fn haar_orthogonal(n: usize, rng: &mut Rng) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimension("orthogonal matrix requires n >= 1".into()));
    }
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// `e^{−iθP/2}|s⟩`.
pub fn apply_pauli_rotation(p: &PauliString, theta: f64, s: &QuantumState) -> Result<QuantumState> {
    if p.n_qubits() != s.n_qubits() {
        return Err(Error::Shape(format!(
            "Pauli string on {} qubits applied to {}-qubit state",
            p.n_qubits(),
            s.n_qubits()
        )));
    }
    let mut out = s.clone();
    p.rotate_in_place(theta, out.amplitudes_mut());
    Ok(out)
}

pub fn apply_unitary(u: &UnitaryMatrix, s: &QuantumState) -> Result<QuantumState> {
    if u.dim() != s.dim() {
        return Err(Error::Shape(format!("unitary of dim {} applied to state of dim {}", u.dim(), s.dim())));
    }
    let mut amps = vec![C64::new(0.0, 0.0); s.dim()];
    u.apply_into(s.amplitudes(), &mut amps);
    Ok(QuantumState { n_qubits: s.n_qubits(), amps })
}

/// Hermitian observables supported by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Pauli(PauliString),
    /// Rank-1 projector `|Φ⟩⟨Φ|`.
    Projector(QuantumState),
    /// Arbitrary Hermitian matrix (validated on construction).
    Dense(DMatrix<C64>),
}

impl Observable {
    /// σ^z on the given qubit.
    pub fn z(n: usize, qubit: usize) -> Result<Self> {
        Ok(Observable::Pauli(PauliString::single(n, qubit, Pauli::Z)?))
    }

    pub fn projector(target: QuantumState) -> Self {
        Observable::Projector(target)
    }

    pub fn dense(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidObservable("observable matrix is not square".into()));
        }
        let dev = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > 1e-12 {
            return Err(Error::InvalidObservable(format!("matrix is not Hermitian (deviation {dev:.3e})")));
        }
        Ok(Observable::Dense(m))
    }

    pub fn dim(&self) -> usize {
        match self {
            Observable::Pauli(p) => 1 << p.n_qubits(),
            Observable::Projector(s) => s.dim(),
            Observable::Dense(m) => m.nrows(),
        }
    }

    /// `dst = O src`.
    pub fn apply_into(&self, src: &[C64], dst: &mut [C64]) {
        match self {
            Observable::Pauli(p) => p.apply_into(src, dst),
            Observable::Projector(phi) => {
                let amp = dot(phi.amplitudes(), src);
                for (o, &f) in dst.iter_mut().zip(phi.amplitudes()) {
                    *o = f * amp;
                }
            }
            Observable::Dense(m) => {
                let v = m * nalgebra::DVector::from_column_slice(src);
                dst.copy_from_slice(v.as_slice());
            }
        }
    }

    /// `⟨s|O|s⟩` on raw amplitudes.
    pub fn expect_raw(&self, amps: &[C64]) -> f64 {
        match self {
            Observable::Pauli(p) => p.sandwich(amps, amps).re,
            Observable::Projector(phi) => dot(phi.amplitudes(), amps).norm_sqr(),
            Observable::Dense(_) => {
                let mut tmp = vec![C64::new(0.0, 0.0); amps.len()];
                self.apply_into(amps, &mut tmp);
                dot(amps, &tmp).re
            }
        }
    }

    /// Smallest and largest eigenvalue.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Observable::Pauli(p) if p.is_identity() => (1.0, 1.0),
            Observable::Pauli(_) => (-1.0, 1.0),
            Observable::Projector(_) => (0.0, 1.0),
            Observable::Dense(m) => {
                let eig = m.clone().symmetric_eigenvalues();
                let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            Observable::Pauli(p) => p.to_dense(),
            Observable::Projector(phi) => {
                let v = nalgebra::DVector::from_column_slice(phi.amplitudes());
                &v * v.adjoint()
            }
            Observable::Dense(m) => m.clone(),
        }
    }
}

pub fn expectation(s: &QuantumState, o: &Observable) -> Result<f64> {
    if o.dim() != s.dim() {
        return Err(Error::Shape(format!("observable of dim {} on state of dim {}", o.dim(), s.dim())));
    }
    Ok(o.expect_raw(s.amplitudes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rotation_by_pi_on_x() {
        let p = PauliString::parse("X").unwrap();
        let s = QuantumState::zero(1).unwrap();
        let out = apply_pauli_rotation(&p, std::f64::consts::PI, &s).unwrap();
        assert!((out.amplitudes()[0] - c(0.0, 0.0)).norm() < 1e-15);
        assert!((out.amplitudes()[1] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn rotation_by_two_pi_is_minus_identity() {
        let mut rng = stream_rng(3, 0);
        let s = QuantumState::random(3, &mut rng).unwrap();
        let p = PauliString::parse("XYZ").unwrap();
        let out = apply_pauli_rotation(&p, 2.0 * std::f64::consts::PI, &s).unwrap();
        for (a, b) in out.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a + b).norm() < 1e-14);
        }
    }

    #[test]
    fn pauli_dense_matches_matrix_free() {
        let mut rng = stream_rng(5, 0);
        let s = QuantumState::random(3, &mut rng).unwrap();
        for text in ["XYZ", "YYI", "ZIX", "III"] {
            let p = PauliString::parse(text).unwrap();
            let dense = p.to_dense() * nalgebra::DVector::from_column_slice(s.amplitudes());
            let mut out = vec![c(0.0, 0.0); 8];
            p.apply_into(s.amplitudes(), &mut out);
            for (a, b) in out.iter().zip(dense.iter()) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn z_on_first_qubit_is_msb() {
        let o = Observable::z(3, 0).unwrap();
        assert_eq!(expectation(&QuantumState::basis(3, 0).unwrap(), &o).unwrap(), 1.0);
        assert_eq!(expectation(&QuantumState::basis(3, 4).unwrap(), &o).unwrap(), -1.0);
        assert_eq!(expectation(&QuantumState::basis(3, 1).unwrap(), &o).unwrap(), 1.0);
    }

    #[test]
    fn haar_is_unitary_and_deterministic() {
        let a = haar_unitary(8, &mut stream_rng(1, 2)).unwrap();
        let b = haar_unitary(8, &mut stream_rng(1, 2)).unwrap();
        assert_eq!(a, b);
        assert!(a.unitarity_deviation() < 1e-12);
        let one = haar_unitary(1, &mut stream_rng(1, 2)).unwrap();
        assert!((one.matrix()[(0, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(haar_unitary(0, &mut stream_rng(1, 2)).is_err());
    }

    #[test]
    fn non_hermitian_dense_rejected() {
        let mut m = DMatrix::<C64>::identity(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(Observable::dense(m), Err(Error::InvalidObservable(_))));
    }

    #[test]
    fn projector_on_itself() {
        let mut rng = stream_rng(9, 0);
        let s = QuantumState::random(2, &mut rng).unwrap();
        let o = Observable::projector(s.clone());
        assert!((expectation(&s, &o).unwrap() - 1.0).abs() < 1e-14);
    }
}

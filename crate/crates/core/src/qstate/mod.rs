//! Dense states and operators for up to four polarization qubits.
//!
//! Basis convention: `|H⟩` is index 0 and `|V⟩` is index 1, and qubit 0 is the
//! most significant bit of a basis index. A three-qubit index `0b011` is
//! therefore `|H⟩₀|V⟩₁|V⟩₂`.

mod jones;

pub use jones::{jones_hwp, jones_qwp, rotation, waveplate_angles, WaveplateSetting};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub type C64 = Complex64;

/// Square complex matrix acting on one or more qubits.
pub type Operator = DMatrix<C64>;

pub const MAX_QUBITS: usize = 4;

/// Normalization and trace tolerance.
pub const NORM_TOL: f64 = 1e-12;
/// Unitarity tolerance for operators passed to [`DensityMatrix::apply_unitary`].
pub const UNITARY_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for a density matrix.
pub const PSD_TOL: f64 = -1e-10;
/// Outcomes rarer than this are reported as impossible.
pub const IMPOSSIBLE_PROB: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("{0} qubits requested, at most {MAX_QUBITS} supported")]
    TooManyQubits(usize),
    #[error("state vector has zero norm")]
    ZeroNorm,
    #[error("operator is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("operator dimension {op} does not match {targets} target qubit(s)")]
    OperatorSize { op: usize, targets: usize },
    #[error("qubit index {index} is invalid for a {qubits}-qubit register")]
    BadQubit { index: usize, qubits: usize },
    #[error("qubit index {0} listed twice")]
    DuplicateQubit(usize),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("trace {0} differs from 1")]
    BadTrace(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("effect is not bounded by the identity (max eigenvalue {0:.3e})")]
    EffectTooLarge(f64),
    #[error("outcome impossible (probability {0:.3e})")]
    ImpossibleOutcome(f64),
    #[error("mixture weights must be non-negative and sum to 1")]
    BadWeights,
}

pub type Result<T> = std::result::Result<T, StateError>;

fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(StateError::NotPowerOfTwo(dim));
    }
    let n = dim.trailing_zeros() as usize;
    if n > MAX_QUBITS {
        return Err(StateError::TooManyQubits(n));
    }
    Ok(n)
}

fn check_targets(targets: &[usize], qubits: usize) -> Result<()> {
    for (i, &t) in targets.iter().enumerate() {
        if t >= qubits {
            return Err(StateError::BadQubit { index: t, qubits });
        }
        if targets[..i].contains(&t) {
            return Err(StateError::DuplicateQubit(t));
        }
    }
    Ok(())
}

#[inline]
fn bit(index: usize, qubit: usize, qubits: usize) -> usize {
    (index >> (qubits - 1 - qubit)) & 1
}

/// Extracts the sub-index formed by `targets` (first target most significant).
fn sub_index(index: usize, targets: &[usize], qubits: usize) -> usize {
    targets
        .iter()
        .fold(0, |acc, &q| (acc << 1) | bit(index, q, qubits))
}

/// Index with the bits at `targets` cleared.
fn rest_mask(index: usize, targets: &[usize], qubits: usize) -> usize {
    targets
        .iter()
        .fold(index, |acc, &q| acc & !(1 << (qubits - 1 - q)))
}

/// Lifts `op` acting on `targets` to the full `qubits`-qubit space.
pub fn embed(op: &Operator, targets: &[usize], qubits: usize) -> Result<Operator> {
    check_targets(targets, qubits)?;
    if op.nrows() != op.ncols() || op.nrows() != 1 << targets.len() {
        return Err(StateError::OperatorSize {
            op: op.nrows(),
            targets: targets.len(),
        });
    }
    let dim = 1 << qubits;
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        if rest_mask(i, targets, qubits) == rest_mask(j, targets, qubits) {
            op[(sub_index(i, targets, qubits), sub_index(j, targets, qubits))]
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

fn max_abs(m: &Operator) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn check_unitary(u: &Operator) -> Result<()> {
    if u.nrows() != u.ncols() {
        return Err(StateError::OperatorSize {
            op: u.nrows(),
            targets: 0,
        });
    }
    let dev = max_abs(&(u.adjoint() * u - Operator::identity(u.nrows(), u.ncols())));
    if dev > UNITARY_TOL {
        return Err(StateError::NotUnitary(dev));
    }
    Ok(())
}

fn hermitian_eigenvalues(m: &Operator) -> DVector<f64> {
    m.clone().symmetric_eigenvalues()
}

pub fn pauli_x() -> Operator {
    let (o, l) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    Operator::from_row_slice(2, 2, &[o, l, l, o])
}

pub fn pauli_y() -> Operator {
    let (o, i) = (C64::new(0.0, 0.0), C64::new(0.0, 1.0));
    Operator::from_row_slice(2, 2, &[o, -i, i, o])
}

pub fn pauli_z() -> Operator {
    let (o, l) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    Operator::from_row_slice(2, 2, &[l, o, o, -l])
}

/// A normalized pure state of 1 to 4 qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: DVector<C64>,
    qubits: usize,
}

impl PureState {
    /// Builds a state from amplitudes, normalizing them.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let qubits = qubits_for_dim(amps.len())?;
        let v = DVector::from_vec(amps);
        let norm = v.norm();
        if norm < 1e-300 || !norm.is_finite() {
            return Err(StateError::ZeroNorm);
        }
        Ok(Self {
            amps: v.unscale(norm),
            qubits,
        })
    }

    /// Single-qubit state `alpha|H⟩ + beta|V⟩`.
    pub fn qubit(alpha: C64, beta: C64) -> Result<Self> {
        Self::new(vec![alpha, beta])
    }

    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize
            .checked_shl(qubits as u32)
            .ok_or(StateError::TooManyQubits(qubits))?;
        qubits_for_dim(dim)?;
        if index >= dim {
            return Err(StateError::BadQubit { index, qubits });
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Self::new(amps)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amps[index]
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let qubits = self.qubits + other.qubits;
        if qubits > MAX_QUBITS {
            return Err(StateError::TooManyQubits(qubits));
        }
        Ok(PureState {
            amps: self.amps.kronecker(&other.amps),
            qubits,
        })
    }

    pub fn apply_unitary(&self, u: &Operator, targets: &[usize]) -> Result<PureState> {
        check_unitary(u)?;
        let full = embed(u, targets, self.qubits)?;
        let amps = full * &self.amps;
        let norm = amps.norm();
        Ok(PureState {
            amps: amps.unscale(norm),
            qubits: self.qubits,
        })
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            m: &self.amps * self.amps.adjoint(),
            qubits: self.qubits,
        }
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &PureState) -> f64 {
        self.inner(other).norm_sqr()
    }
}

/// A validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: Operator,
    qubits: usize,
}

impl DensityMatrix {
    pub fn new(m: Operator) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(StateError::NotPowerOfTwo(m.nrows().max(m.ncols())));
        }
        let qubits = qubits_for_dim(m.nrows())?;
        let herm = max_abs(&(&m - m.adjoint()));
        if herm > NORM_TOL {
            return Err(StateError::NotHermitian(herm));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(StateError::BadTrace(tr.re));
        }
        let min = hermitian_eigenvalues(&m).min();
        if min < PSD_TOL {
            return Err(StateError::NotPositive(min));
        }
        Ok(Self { m, qubits })
    }

    /// Hermitizes and renormalizes a matrix produced by exact algebra on
    /// valid inputs. Round-off only; no validation.
    fn from_algebra(m: Operator, qubits: usize) -> Self {
        let h = (&m + m.adjoint()).scale(0.5);
        let tr = h.trace().re;
        Self {
            m: h.unscale(tr),
            qubits,
        }
    }

    pub fn maximally_mixed(qubits: usize) -> Result<Self> {
        let dim = 1usize
            .checked_shl(qubits as u32)
            .ok_or(StateError::TooManyQubits(qubits))?;
        qubits_for_dim(dim)?;
        Ok(Self {
            m: Operator::identity(dim, dim).unscale(dim as f64),
            qubits,
        })
    }

    /// Convex combination `Σ wᵢ ρᵢ`.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(StateError::BadWeights);
        };
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(StateError::BadWeights);
        }
        let dim = first.dim();
        let mut m = Operator::zeros(dim, dim);
        for (w, rho) in parts {
            if rho.dim() != dim {
                return Err(StateError::OperatorSize {
                    op: rho.dim(),
                    targets: first.qubits,
                });
            }
            m += rho.m.scale(*w);
        }
        Ok(Self::from_algebra(m, first.qubits))
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Operator {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        hermitian_eigenvalues(&self.m)
    }

    /// `Tr(op ρ)` for an operator on the full register.
    pub fn expectation(&self, op: &Operator) -> f64 {
        (op * &self.m).trace().re
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let qubits = self.qubits + other.qubits;
        if qubits > MAX_QUBITS {
            return Err(StateError::TooManyQubits(qubits));
        }
        Ok(DensityMatrix {
            m: self.m.kronecker(&other.m),
            qubits,
        })
    }

    /// `U ρ U†` with `U` acting on `targets`.
    pub fn apply_unitary(&self, u: &Operator, targets: &[usize]) -> Result<DensityMatrix> {
        check_unitary(u)?;
        let full = embed(u, targets, self.qubits)?;
        Ok(Self::from_algebra(&full * &self.m * full.adjoint(), self.qubits))
    }

    /// Applies a channel given by Kraus operators on `targets`.
    pub fn apply_kraus(&self, kraus: &[Operator], targets: &[usize]) -> Result<DensityMatrix> {
        let dim = self.dim();
        let mut out = Operator::zeros(dim, dim);
        for k in kraus {
            let full = embed(k, targets, self.qubits)?;
            out += &full * &self.m * full.adjoint();
        }
        Ok(Self::from_algebra(out, self.qubits))
    }

    /// Reduced state on `keep`, in the order listed.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        check_targets(keep, self.qubits)?;
        Ok(Self::from_algebra(
            reduce(&self.m, keep, self.qubits),
            keep.len(),
        ))
    }

    /// Conditions on a positive `effect` acting on `targets`.
    ///
    /// Returns the outcome probability `Tr((E ⊗ I) ρ)` and the normalized
    /// state of the remaining qubits (ascending order). The measured qubits are
    /// discarded, so `Tr_A((√E ⊗ I) ρ (√E ⊗ I)) = Tr_A((E ⊗ I) ρ)` and no
    /// square root is needed.
    pub fn condition(&self, effect: &Operator, targets: &[usize]) -> Result<Conditioned> {
        check_effect(effect)?;
        let full = embed(effect, targets, self.qubits)?;
        let weighted = &full * &self.m;
        let probability = weighted.trace().re.clamp(0.0, 1.0);
        if probability < IMPOSSIBLE_PROB {
            return Err(StateError::ImpossibleOutcome(probability));
        }
        let rest: Vec<usize> = (0..self.qubits).filter(|q| !targets.contains(q)).collect();
        let state = if rest.is_empty() {
            None
        } else {
            Some(Self::from_algebra(
                reduce(&weighted, &rest, self.qubits),
                rest.len(),
            ))
        };
        Ok(Conditioned { probability, state })
    }

    /// Max-entry distance to another density matrix.
    pub fn distance(&self, other: &DensityMatrix) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        max_abs(&(&self.m - &other.m))
    }
}

/// Partial trace of an arbitrary operator, keeping `keep` (no validation).
fn reduce(m: &Operator, keep: &[usize], qubits: usize) -> Operator {
    let traced: Vec<usize> = (0..qubits).filter(|q| !keep.contains(q)).collect();
    let k = keep.len();
    let dim_out = 1 << k;
    let compose = |kept: usize, tr: usize| -> usize {
        let mut idx = 0usize;
        for (pos, &q) in keep.iter().enumerate() {
            idx |= ((kept >> (k - 1 - pos)) & 1) << (qubits - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            idx |= ((tr >> (traced.len() - 1 - pos)) & 1) << (qubits - 1 - q);
        }
        idx
    };
    DMatrix::from_fn(dim_out, dim_out, |i, j| {
        (0..1usize << traced.len())
            .map(|t| m[(compose(i, t), compose(j, t))])
            .sum()
    })
}

fn check_effect(effect: &Operator) -> Result<()> {
    let herm = max_abs(&(effect - effect.adjoint()));
    if herm > 1e-10 {
        return Err(StateError::NotHermitian(herm));
    }
    let ev = hermitian_eigenvalues(effect);
    if ev.min() < -1e-10 {
        return Err(StateError::NotPositive(ev.min()));
    }
    if ev.max() > 1.0 + 1e-10 {
        return Err(StateError::EffectTooLarge(ev.max()));
    }
    Ok(())
}

/// Result of [`DensityMatrix::condition`].
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub probability: f64,
    /// `None` when every qubit was measured.
    pub state: Option<DensityMatrix>,
}

/// `Tr(ρ |χ⟩⟨χ|)`, clamped to `[0, 1]`.
pub fn fidelity(ideal: &PureState, rho: &DensityMatrix) -> f64 {
    assert_eq!(ideal.dim(), rho.dim(), "fidelity: dimension mismatch");
    let v = ideal.amplitudes();
    v.dotc(&(rho.matrix() * v)).re.clamp(0.0, 1.0)
}

/// The six polarization states of the three mutually unbiased qubit bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MubState {
    H,
    V,
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    R,
    L,
}

impl MubState {
    pub const ALL: [MubState; 6] = [
        MubState::H,
        MubState::V,
        MubState::Plus,
        MubState::Minus,
        MubState::R,
        MubState::L,
    ];

    pub fn state(self) -> PureState {
        let s = FRAC_1_SQRT_2;
        let (a, b) = match self {
            MubState::H => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            MubState::V => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
            MubState::Plus => (C64::new(s, 0.0), C64::new(s, 0.0)),
            MubState::Minus => (C64::new(s, 0.0), C64::new(-s, 0.0)),
            MubState::R => (C64::new(s, 0.0), C64::new(0.0, s)),
            MubState::L => (C64::new(s, 0.0), C64::new(0.0, -s)),
        };
        PureState {
            amps: DVector::from_vec(vec![a, b]),
            qubits: 1,
        }
    }

    pub fn orthogonal(self) -> MubState {
        match self {
            MubState::H => MubState::V,
            MubState::V => MubState::H,
            MubState::Plus => MubState::Minus,
            MubState::Minus => MubState::Plus,
            MubState::R => MubState::L,
            MubState::L => MubState::R,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MubState::H => "H",
            MubState::V => "V",
            MubState::Plus => "+",
            MubState::Minus => "-",
            MubState::R => "R",
            MubState::L => "L",
        }
    }
}

impl fmt::Display for MubState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MubState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        MubState::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown input state `{s}` (expected H, V, +, -, R or L)"))
    }
}

/// `|H⟩, |V⟩, |+⟩, |−⟩, |R⟩, |L⟩` with `|R⟩ = (|H⟩ + i|V⟩)/√2`.
pub fn mub_states() -> [PureState; 6] {
    MubState::ALL.map(MubState::state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    pub fn state(self) -> PureState {
        let s = C64::new(FRAC_1_SQRT_2, 0.0);
        let z = C64::new(0.0, 0.0);
        let amps = match self {
            BellState::PhiPlus => [s, z, z, s],
            BellState::PhiMinus => [s, z, z, -s],
            BellState::PsiPlus => [z, s, s, z],
            BellState::PsiMinus => [z, s, -s, z],
        };
        PureState {
            amps: DVector::from_vec(amps.to_vec()),
            qubits: 2,
        }
    }

    pub fn projector(self) -> Operator {
        self.state().to_density().m
    }
}

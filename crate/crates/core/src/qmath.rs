//! Dense complex linear algebra for one and two qubits.
//!
//! Everything here is a small value type. Pure states carry no canonical
//! global phase; compare them through [`fidelity`] or [`fs_angle`], never by
//! amplitude equality.

use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single complex amplitude.
pub type ComplexAmp = Complex64;

/// Tolerance for algebraic identities (normalization drift, Hermiticity, ...).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance applied when accepting caller-supplied states and operators.
pub const VALIDATION_TOL: f64 = 1e-9;

const ZERO: ComplexAmp = Complex64::new(0.0, 0.0);
const ONE: ComplexAmp = Complex64::new(1.0, 0.0);
const I: ComplexAmp = Complex64::new(0.0, 1.0);

fn c(re: f64) -> ComplexAmp {
    Complex64::new(re, 0.0)
}

fn all_finite(amps: &[ComplexAmp]) -> bool {
    amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
}

/// Normalized single-qubit state `a0|↑⟩ + a1|↓⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQubit", into = "RawQubit")]
pub struct PureQubit {
    a0: ComplexAmp,
    a1: ComplexAmp,
}

#[derive(Serialize, Deserialize)]
struct RawQubit {
    a0: [f64; 2],
    a1: [f64; 2],
}

impl TryFrom<RawQubit> for PureQubit {
    type Error = Error;

    fn try_from(raw: RawQubit) -> Result<Self> {
        PureQubit::new(
            Complex64::new(raw.a0[0], raw.a0[1]),
            Complex64::new(raw.a1[0], raw.a1[1]),
        )
    }
}

impl From<PureQubit> for RawQubit {
    fn from(q: PureQubit) -> Self {
        RawQubit {
            a0: [q.a0.re, q.a0.im],
            a1: [q.a1.re, q.a1.im],
        }
    }
}

impl PureQubit {
    /// Accepts amplitudes whose squared norm is within [`VALIDATION_TOL`] of 1,
    /// then renormalizes so the stored state is exact to rounding.
    pub fn new(a0: ComplexAmp, a1: ComplexAmp) -> Result<Self> {
        if !all_finite(&[a0, a1]) {
            return Err(Error::validation("qubit amplitudes must be finite"));
        }
        let norm_sqr = a0.norm_sqr() + a1.norm_sqr();
        if (norm_sqr - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::validation(format!(
                "qubit state is not normalized (|a0|²+|a1|² = {norm_sqr})"
            )));
        }
        let scale = norm_sqr.sqrt().recip();
        Ok(Self {
            a0: a0 * scale,
            a1: a1 * scale,
        })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(a0: ComplexAmp, a1: ComplexAmp) -> Result<Self> {
        if !all_finite(&[a0, a1]) {
            return Err(Error::validation("qubit amplitudes must be finite"));
        }
        let norm = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        if norm < 1e-150 {
            return Err(Error::validation("cannot normalize the zero vector"));
        }
        Ok(Self {
            a0: a0 / norm,
            a1: a1 / norm,
        })
    }

    pub fn up() -> Self {
        Self { a0: ONE, a1: ZERO }
    }

    pub fn down() -> Self {
        Self { a0: ZERO, a1: ONE }
    }

    /// `cos(half_angle)|↑⟩ + sin(half_angle)|↓⟩`, i.e. `R_y(2·half_angle)|↑⟩`.
    pub fn real(half_angle: f64) -> Self {
        Self {
            a0: c(half_angle.cos()),
            a1: c(half_angle.sin()),
        }
    }

    /// `(|↑⟩ + e^{iφ}|↓⟩)/√2`.
    pub fn equatorial(phase: f64) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            a0: c(h),
            a1: Complex64::from_polar(h, phase),
        }
    }

    pub fn a0(&self) -> ComplexAmp {
        self.a0
    }

    pub fn a1(&self) -> ComplexAmp {
        self.a1
    }

    pub fn amplitudes(&self) -> [ComplexAmp; 2] {
        [self.a0, self.a1]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a0.norm_sqr() + self.a1.norm_sqr()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureQubit) -> ComplexAmp {
        self.a0.conj() * other.a0 + self.a1.conj() * other.a1
    }

    pub fn with_global_phase(&self, gamma: f64) -> Self {
        let p = Complex64::from_polar(1.0, gamma);
        Self {
            a0: self.a0 * p,
            a1: self.a1 * p,
        }
    }

    /// The state orthogonal to `self`, `(-a1*, a0*)`.
    pub fn orthogonal(&self) -> Self {
        Self {
            a0: -self.a1.conj(),
            a1: self.a0.conj(),
        }
    }

    /// Removes the global phase so that `a0` is real and non-negative.
    /// Used for grid lookups only; protocol code never relies on it.
    pub fn phase_aligned(&self) -> Self {
        if self.a0.norm() > 0.0 {
            let p = self.a0.conj() / self.a0.norm();
            Self {
                a0: c(self.a0.norm()),
                a1: self.a1 * p,
            }
        } else {
            Self {
                a0: ZERO,
                a1: c(self.a1.norm()),
            }
        }
    }

    /// Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.
    pub fn bloch_vector(&self) -> [f64; 3] {
        let cross = self.a0.conj() * self.a1;
        [
            2.0 * cross.re,
            2.0 * cross.im,
            self.a0.norm_sqr() - self.a1.norm_sqr(),
        ]
    }
}

/// 2×2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operator2 {
    m: [[ComplexAmp; 2]; 2],
}

impl Operator2 {
    /// General matrix with finite entries; no structural constraint.
    pub fn from_matrix(m: [[ComplexAmp; 2]; 2]) -> Result<Self> {
        if !all_finite(&[m[0][0], m[0][1], m[1][0], m[1][1]]) {
            return Err(Error::validation("operator entries must be finite"));
        }
        Ok(Self { m })
    }

    /// Hermitian observable.
    pub fn observable(m: [[ComplexAmp; 2]; 2]) -> Result<Self> {
        let op = Self::from_matrix(m)?;
        if !op.is_hermitian(ALGEBRA_TOL) {
            return Err(Error::validation("observable is not Hermitian"));
        }
        Ok(op)
    }

    /// Unitary evolution.
    pub fn unitary(m: [[ComplexAmp; 2]; 2]) -> Result<Self> {
        let op = Self::from_matrix(m)?;
        if !op.is_unitary(ALGEBRA_TOL) {
            return Err(Error::validation("evolution is not unitary"));
        }
        Ok(op)
    }

    pub fn identity() -> Self {
        Self {
            m: [[ONE, ZERO], [ZERO, ONE]],
        }
    }

    pub fn pauli_x() -> Self {
        Self {
            m: [[ZERO, ONE], [ONE, ZERO]],
        }
    }

    pub fn pauli_y() -> Self {
        Self {
            m: [[ZERO, -I], [I, ZERO]],
        }
    }

    pub fn pauli_z() -> Self {
        Self {
            m: [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    pub fn entries(&self) -> [[ComplexAmp; 2]; 2] {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> ComplexAmp {
        self.m[row][col]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self {
            m: [
                [m[0][0].conj(), m[1][0].conj()],
                [m[0][1].conj(), m[1][1].conj()],
            ],
        }
    }

    pub fn trace(&self) -> ComplexAmp {
        self.m[0][0] + self.m[1][1]
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator2) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for k in 0..2 {
                worst = worst.max((self.m[r][k] - other.m[r][k]).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.adjoint() * *self).max_abs_diff(&Operator2::identity()) <= tol
    }

    /// Eigenvalues of a Hermitian matrix in ascending order, closed form.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues(&self.m)
    }

    fn act(&self, v: [ComplexAmp; 2]) -> [ComplexAmp; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
}

impl Mul for Operator2 {
    type Output = Operator2;

    fn mul(self, rhs: Operator2) -> Operator2 {
        let (a, b) = (&self.m, &rhs.m);
        let mut m = [[ZERO; 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (k, entry) in row.iter_mut().enumerate() {
                *entry = a[r][0] * b[0][k] + a[r][1] * b[1][k];
            }
        }
        Operator2 { m }
    }
}

fn hermitian_eigenvalues(m: &[[ComplexAmp; 2]; 2]) -> [f64; 2] {
    let a = m[0][0].re;
    let d = m[1][1].re;
    let mean = 0.5 * (a + d);
    let half_gap = 0.5 * (a - d);
    let spread = half_gap.hypot(m[0][1].norm());
    [mean - spread, mean + spread]
}

/// Rotation about the y axis, `exp(-i·angle·σy/2)`.
pub fn rotation_y(angle: f64) -> Operator2 {
    let (s, co) = (0.5 * angle).sin_cos();
    Operator2 {
        m: [[c(co), c(-s)], [c(s), c(co)]],
    }
}

/// Applies a unitary to a pure state.
pub fn apply(op: &Operator2, s: &PureQubit) -> Result<PureQubit> {
    if !op.is_unitary(VALIDATION_TOL) {
        return Err(Error::validation("cannot apply a non-unitary operator"));
    }
    let [a0, a1] = op.act(s.amplitudes());
    PureQubit::new(a0, a1)
}

/// `|⟨x|y⟩|²`.
pub fn fidelity(x: &PureQubit, y: &PureQubit) -> f64 {
    x.inner(y).norm_sqr().min(1.0)
}

/// `1 - |⟨x|y⟩|²`, evaluated without cancellation for nearby states.
pub fn infidelity(x: &PureQubit, y: &PureQubit) -> f64 {
    perpendicular_norm(x, y).powi(2).min(1.0)
}

/// Length of the component of `y` orthogonal to `x`; equals `sin` of the
/// Fubini-Study angle.
fn perpendicular_norm(x: &PureQubit, y: &PureQubit) -> f64 {
    let ov = x.inner(y);
    let r0 = y.a0 - ov * x.a0;
    let r1 = y.a1 - ov * x.a1;
    (r0.norm_sqr() + r1.norm_sqr()).sqrt()
}

/// Fubini-Study angle `arccos|⟨x|y⟩|` in `[0, π/2]`.
pub fn fs_angle(x: &PureQubit, y: &PureQubit) -> f64 {
    perpendicular_norm(x, y).atan2(x.inner(y).norm())
}

/// Joint Alice–Bob state; amplitude index is `2·alice + bob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    c: [ComplexAmp; 4],
}

impl TwoQubitState {
    /// Amplitudes in the order `|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩` (Alice first).
    pub fn new(amps: [ComplexAmp; 4]) -> Result<Self> {
        if !all_finite(&amps) {
            return Err(Error::validation("joint amplitudes must be finite"));
        }
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::validation(format!(
                "joint state is not normalized (Σ|c|² = {norm_sqr})"
            )));
        }
        let scale = norm_sqr.sqrt().recip();
        Ok(Self {
            c: amps.map(|a| a * scale),
        })
    }

    /// `(|↑↓⟩ - |↓↑⟩)/√2`.
    pub fn singlet() -> Self {
        let h = c(std::f64::consts::FRAC_1_SQRT_2);
        Self {
            c: [ZERO, h, -h, ZERO],
        }
    }

    pub fn product(alice: &PureQubit, bob: &PureQubit) -> Self {
        let (a, b) = (alice.amplitudes(), bob.amplitudes());
        Self {
            c: [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]],
        }
    }

    pub fn amplitudes(&self) -> [ComplexAmp; 4] {
        self.c
    }

    pub fn amplitude(&self, alice: usize, bob: usize) -> ComplexAmp {
        self.c[2 * alice + bob]
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &TwoQubitState) -> f64 {
        self.c
            .iter()
            .zip(other.c.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<ComplexAmp>()
            .norm_sqr()
    }
}

/// Single-qubit density operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOp {
    m: [[ComplexAmp; 2]; 2],
}

impl DensityOp {
    /// Validates Hermiticity and unit trace at [`VALIDATION_TOL`] and positivity
    /// at [`ALGEBRA_TOL`], then stores the exactly Hermitian, trace-one part.
    pub fn new(m: [[ComplexAmp; 2]; 2]) -> Result<Self> {
        let op = Operator2::from_matrix(m)?;
        if !op.is_hermitian(VALIDATION_TOL) {
            return Err(Error::validation("density operator is not Hermitian"));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > VALIDATION_TOL {
            return Err(Error::validation(format!(
                "density operator trace is {tr}, expected 1"
            )));
        }
        let off = 0.5 * (m[0][1] + m[1][0].conj()) / tr.re;
        let rho = Self {
            m: [
                [c(m[0][0].re / tr.re), off],
                [off.conj(), c(m[1][1].re / tr.re)],
            ],
        };
        if rho.eigenvalues()[0] < -ALGEBRA_TOL {
            return Err(Error::validation(
                "density operator has a negative eigenvalue",
            ));
        }
        Ok(rho)
    }

    pub fn maximally_mixed() -> Self {
        Self {
            m: [[c(0.5), ZERO], [ZERO, c(0.5)]],
        }
    }

    pub fn diagonal(p0: f64) -> Result<Self> {
        Self::new([[c(p0), ZERO], [ZERO, c(1.0 - p0)]])
    }

    pub fn from_pure(s: &PureQubit) -> Self {
        let [a0, a1] = s.amplitudes();
        Self {
            m: [
                [c(a0.norm_sqr()), a0 * a1.conj()],
                [a1 * a0.conj(), c(a1.norm_sqr())],
            ],
        }
    }

    /// `(I + r·σ)/2`; requires `|r| ≤ 1`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if !len.is_finite() || len > 1.0 + ALGEBRA_TOL {
            return Err(Error::validation(format!(
                "Bloch vector length {len} exceeds 1"
            )));
        }
        let off = Complex64::new(0.5 * r[0], -0.5 * r[1]);
        Ok(Self {
            m: [
                [c(0.5 * (1.0 + r[2])), off],
                [off.conj(), c(0.5 * (1.0 - r[2]))],
            ],
        })
    }

    /// Convex combination `Σ wᵢ|ψᵢ⟩⟨ψᵢ|` with weights summing to one.
    pub fn mixture(parts: &[(f64, PureQubit)]) -> Result<Self> {
        let mut m = [[ZERO; 2]; 2];
        for (w, s) in parts {
            let p = DensityOp::from_pure(s).m;
            for r in 0..2 {
                for k in 0..2 {
                    m[r][k] += p[r][k] * *w;
                }
            }
        }
        Self::new(m)
    }

    pub fn entries(&self) -> [[ComplexAmp; 2]; 2] {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> ComplexAmp {
        self.m[row][col]
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues(&self.m)
    }

    pub fn bloch_vector(&self) -> [f64; 3] {
        [
            2.0 * self.m[1][0].re,
            2.0 * self.m[1][0].im,
            self.m[0][0].re - self.m[1][1].re,
        ]
    }

    pub fn max_abs_diff(&self, other: &DensityOp) -> f64 {
        Operator2 { m: self.m }.max_abs_diff(&Operator2 { m: other.m })
    }
}

/// Bob's reduced state `tr_A |s⟩⟨s|`.
pub fn partial_trace_a(s: &TwoQubitState) -> DensityOp {
    let mut m = [[ZERO; 2]; 2];
    for alice in 0..2 {
        for (j, row) in m.iter_mut().enumerate() {
            for (k, entry) in row.iter_mut().enumerate() {
                *entry += s.amplitude(alice, j) * s.amplitude(alice, k).conj();
            }
        }
    }
    // Normalized input keeps every invariant; only rounding is left to absorb.
    DensityOp::new(m).expect("reduced state of a normalized joint state")
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(r: &DensityOp) -> Result<f64> {
    let eig = r.eigenvalues();
    if eig[0] < -ALGEBRA_TOL {
        return Err(Error::validation(format!(
            "negative eigenvalue {} in density operator",
            eig[0]
        )));
    }
    Ok(eig
        .iter()
        .map(|&l| l.clamp(0.0, 1.0))
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.log2())
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

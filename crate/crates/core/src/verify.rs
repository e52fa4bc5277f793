//! Verifying a transmitted state against its m-bit description.
//!
//! A state `α|↑⟩ + β|↓⟩` with real amplitudes is the +1 eigenvector of
//! `M(θ) = [[cos θ, sin θ], [sin θ, -cos θ]]` with `θ = 2·arccos α`. Bob
//! measures `M(θ)` directly, or equivalently rotates by `-θ` and measures
//! `M(0) = σz`; either way a +1 confirms the transfer.
//!
//! If the true state is one resolvable step `φ = 2^{-m/2}` away from the
//! described one, the failure probability is `sin²φ < φ² = 2^{-m}`. Ignoring
//! the last `n` bits of the description widens the step to `2^{-(m-n)/2}`
//! and multiplies the failure rate by roughly `2^n`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::precision::{dequantize, phi_min, truncate, GridMode, GridPoint, PrecisionSpec};
use crate::protocol::{teleport_state, EprResource};
use crate::qmath::{apply, fidelity, infidelity, rotation_y, ComplexAmp, Operator2, PureQubit};
use crate::rng::SeedStream;

/// Significance of the one-sided binomial test behind [`VerificationReport::passed`].
pub const VERIFICATION_SIGNIFICANCE: f64 = 1e-3;

/// The ±1-valued observable `M(θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationOp {
    theta: f64,
    matrix: Operator2,
}

impl VerificationOp {
    pub fn from_theta(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let re = |x: f64| ComplexAmp::new(x, 0.0);
        let matrix = Operator2::observable([[re(c), re(s)], [re(s), re(-c)]])
            .expect("M(θ) is real symmetric");
        Self { theta, matrix }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn matrix(&self) -> &Operator2 {
        &self.matrix
    }

    /// `(cos θ/2, sin θ/2)`.
    pub fn plus_eigenvector(&self) -> PureQubit {
        PureQubit::real(0.5 * self.theta)
    }

    pub fn minus_eigenvector(&self) -> PureQubit {
        PureQubit::real(0.5 * self.theta + std::f64::consts::FRAC_PI_2)
    }

    /// Born probability of +1.
    pub fn prob_plus(&self, state: &PureQubit) -> f64 {
        fidelity(&self.plus_eigenvector(), state)
    }

    /// Born probability of -1, accurate for nearly verified states.
    pub fn prob_minus(&self, state: &PureQubit) -> f64 {
        infidelity(&self.plus_eigenvector(), state)
    }
}

/// `M(θ)` for the state `α|↑⟩ + √(1-α²)|↓⟩`.
pub fn verification_op(alpha: f64) -> Result<VerificationOp> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::validation(format!(
            "alpha = {alpha} must lie in [0, 1]"
        )));
    }
    Ok(VerificationOp::from_theta(2.0 * alpha.acos()))
}

/// Verification setting for a rotation-grid description.
pub fn verification_op_for(g: &GridPoint) -> Result<VerificationOp> {
    g.theta().map(VerificationOp::from_theta).ok_or_else(|| {
        Error::domain("M(θ) settings exist for rotation-grid points only; use AlignedVerification")
    })
}

/// Measures `M(θ)`; returns +1 or -1.
pub fn measure_verify<R: Rng + ?Sized>(state: &PureQubit, op: &VerificationOp, rng: &mut R) -> i8 {
    if rng.random::<f64>() < op.prob_minus(state) {
        -1
    } else {
        1
    }
}

/// Rotates through `-θ`, then measures `σz`.
pub fn rotate_then_measure<R: Rng + ?Sized>(state: &PureQubit, theta: f64, rng: &mut R) -> i8 {
    let rotated = apply(&rotation_y(-theta), state).expect("rotation is unitary");
    if rng.random::<f64>() < rotated.a1().norm_sqr() {
        -1
    } else {
        1
    }
}

/// Verification of a complex target: a phase rotation about z first makes the
/// target real, after which `M(θ)` applies unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedVerification {
    alignment: Operator2,
    op: VerificationOp,
}

impl AlignedVerification {
    pub fn new(target: &PureQubit) -> Self {
        let t = target.phase_aligned();
        let phase = if t.a1().norm() > 0.0 {
            t.a1() / t.a1().norm()
        } else {
            ComplexAmp::new(1.0, 0.0)
        };
        let one = ComplexAmp::new(1.0, 0.0);
        let zero = ComplexAmp::new(0.0, 0.0);
        let alignment =
            Operator2::unitary([[one, zero], [zero, phase.conj()]]).expect("diagonal phase");
        let theta = 2.0 * t.a1().norm().atan2(t.a0().re);
        Self {
            alignment,
            op: VerificationOp::from_theta(theta),
        }
    }

    pub fn for_grid_point(g: &GridPoint) -> Self {
        Self::new(&dequantize(g))
    }

    pub fn op(&self) -> &VerificationOp {
        &self.op
    }

    pub fn prob_minus(&self, state: &PureQubit) -> f64 {
        let aligned = apply(&self.alignment, state).expect("alignment is unitary");
        self.op.prob_minus(&aligned)
    }

    pub fn measure<R: Rng + ?Sized>(&self, state: &PureQubit, rng: &mut R) -> i8 {
        let aligned = apply(&self.alignment, state).expect("alignment is unitary");
        measure_verify(&aligned, &self.op, rng)
    }
}

/// Lower bound on the success probability with `n` of `m` bits ignored,
/// `1 - 2^{-(m-n)}`.
pub fn success_bound(m: u32, n: u32) -> Result<f64> {
    if n >= m {
        return Err(Error::validation(format!(
            "cannot ignore {n} of {m} description bits"
        )));
    }
    Ok(1.0 - (-((m - n) as f64)).exp2())
}

/// Exact failure probability `sin²(2^{-m/2})` for a state one resolvable step
/// from its description.
pub fn worst_case_failure(m: u32) -> f64 {
    phi_min(m).sin().powi(2)
}

/// `sin²(2^{-(m-n)/2}) / sin²(2^{-m/2})`; tends to `2^n` for small angles.
pub fn analytic_failure_ratio(m: u32, n: u32) -> f64 {
    worst_case_failure(m - n) / worst_case_failure(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub m: u32,
    pub n: u32,
    /// Zero for an exact (analytic) report.
    pub trials: u64,
    pub successes: u64,
    /// Observed success rate, or the exact success probability when `trials = 0`.
    pub p_hat: f64,
    pub bound: f64,
    pub passed: bool,
    /// One-sided p-value of `P_s ≥ bound`; 1 for analytic reports that hold.
    pub p_value: f64,
}

impl VerificationReport {
    /// One-sided exact binomial test of `P_s ≥ bound` at `significance`.
    pub fn sampled(m: u32, n: u32, trials: u64, successes: u64, significance: f64) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(Error::validation(format!(
                "{successes} successes out of {trials} trials"
            )));
        }
        let bound = success_bound(m, n)?;
        let failure_bound = 1.0 - bound;
        let failures = trials - successes;
        let p_value = if failures == 0 {
            1.0
        } else {
            Binomial::new(failure_bound, trials)
                .expect("bound is a probability")
                .sf(failures - 1)
        };
        Ok(Self {
            m,
            n,
            trials,
            successes,
            p_hat: successes as f64 / trials as f64,
            bound,
            passed: p_value >= significance,
            p_value,
        })
    }

    pub fn analytic(m: u32, n: u32, success_probability: f64) -> Result<Self> {
        let bound = success_bound(m, n)?;
        let passed = success_probability > bound;
        Ok(Self {
            m,
            n,
            trials: 0,
            successes: 0,
            p_hat: success_probability,
            bound,
            passed,
            p_value: if passed { 1.0 } else { 0.0 },
        })
    }

    pub fn failures(&self) -> u64 {
        self.trials - self.successes
    }

    pub fn failure_rate(&self) -> f64 {
        1.0 - self.p_hat
    }

    pub fn csv_row(&self) -> VerificationCsvRow {
        VerificationCsvRow {
            m: self.m,
            n: self.n,
            trials: self.trials,
            successes: self.successes,
            p_hat: self.p_hat,
            bound: self.bound,
            passed: self.passed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationCsvRow {
    pub m: u32,
    pub n: u32,
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Teleports `prepared` `trials` times and counts +1 outcomes of `op`.
/// Trial `i` uses substream `i` of `streams`.
pub fn teleport_and_verify(
    prepared: &PureQubit,
    prep_bits: u32,
    op: &VerificationOp,
    trials: u64,
    streams: &SeedStream,
) -> Result<u64> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.substream(i);
            let run = teleport_state(
                *prepared,
                None,
                prep_bits,
                &mut EprResource::singlet(),
                &mut rng,
            )?;
            let bob = run.bob_final.expect("completed run");
            Ok::<_, Error>((measure_verify(&bob, op, &mut rng) == 1) as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// The worst case an m-bit description allows: the state sits one
/// resolvable step above the described grid point.
pub fn worst_case_setting(spec: &PrecisionSpec, index: u64) -> Result<(GridPoint, GridPoint)> {
    if spec.mode() != GridMode::RealRotation {
        return Err(Error::domain(
            "verification experiments run on the rotation grid",
        ));
    }
    let setting = GridPoint::new(*spec, &[index])?;
    let state = GridPoint::new(*spec, &[index + 1])?;
    Ok((state, setting))
}

/// Success rate at full precision for the worst-case mismatch, sampled
/// through teleportation.
pub fn verify_bound(
    spec: &PrecisionSpec,
    trials: u64,
    streams: &SeedStream,
    significance: f64,
) -> Result<VerificationReport> {
    let (state, setting) = worst_case_setting(spec, spec.cardinality() / 4)?;
    let op = verification_op_for(&setting)?;
    if trials == 0 {
        return VerificationReport::analytic(spec.m(), 0, op.prob_plus(&dequantize(&state)));
    }
    let successes = teleport_and_verify(&dequantize(&state), spec.m(), &op, trials, streams)?;
    VerificationReport::sampled(spec.m(), 0, trials, successes, significance)
}

/// Where, inside its truncated cell, the verifier's full setting lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellPlacement {
    /// The setting is the cell's last member, maximizing the truncated mismatch.
    WorstCase,
    /// The setting is drawn uniformly from the cell's members.
    UniformAverage,
}

/// Full versus truncated verification of the same worst-case preparation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationResult {
    pub m: u32,
    pub n: u32,
    pub placement: CellPlacement,
    pub full: VerificationReport,
    pub truncated: VerificationReport,
    /// `(1 - p̂_trunc) / (1 - p̂_full)`, or the exact Born ratio for analytic runs.
    pub failure_ratio: f64,
    /// Delta-method standard error of the sampled ratio; 0 when analytic.
    pub ratio_std_err: f64,
    /// Ratio of the exact failure probabilities of this configuration.
    pub expected_ratio: f64,
    /// `2^n`.
    pub nominal_factor: f64,
}

struct CellLayout {
    members: Vec<GridPoint>,
    coarse: GridPoint,
}

fn truncation_cell(spec: &PrecisionSpec, n: u32) -> Result<CellLayout> {
    let card = spec.cardinality();
    // Cell 1 of the coarse grid; cell 0 would put the setting at |↑⟩'s edge for n = 0 only.
    let target = truncate(&GridPoint::new(*spec, &[0])?, n)?.spec();
    let mut members = Vec::new();
    for k in 0..card - 1 {
        let g = GridPoint::new(*spec, &[k])?;
        let t = truncate(&g, n)?;
        if t.indices()[0] == 1 {
            members.push(g);
        } else if t.indices()[0] > 1 {
            break;
        }
    }
    let coarse = GridPoint::new(target, &[1])?;
    if members.is_empty() {
        return Err(Error::validation("truncated cell has no members"));
    }
    Ok(CellLayout { members, coarse })
}

/// Verification with the full setting versus the setting with its last `n`
/// bits dropped.
///
/// The state is one fine step above the full setting (the worst case an
/// m-bit description allows). For [`CellPlacement::WorstCase`] the setting
/// is the last member of its truncated cell, so the truncated mismatch is
/// exactly `2^{-(m-n)/2}` for even `n`. `trials = 0` returns exact Born
/// probabilities instead of sampling.
pub fn truncation_experiment(
    spec: &PrecisionSpec,
    n: u32,
    trials: u64,
    placement: CellPlacement,
    streams: &SeedStream,
) -> Result<TruncationResult> {
    if spec.mode() != GridMode::RealRotation {
        return Err(Error::domain(
            "verification experiments run on the rotation grid",
        ));
    }
    let m = spec.m();
    success_bound(m, n)?;
    let cell = truncation_cell(spec, n)?;
    let trunc_op = verification_op_for(&cell.coarse)?;

    let setups: Vec<(PureQubit, VerificationOp)> = cell
        .members
        .iter()
        .map(|g| {
            let (state, _) = worst_case_setting(spec, g.indices()[0])?;
            Ok((dequantize(&state), verification_op_for(g)?))
        })
        .collect::<Result<_>>()?;
    let chosen = match placement {
        CellPlacement::WorstCase => &setups[setups.len() - 1..],
        CellPlacement::UniformAverage => &setups[..],
    };

    let exact_full =
        chosen.iter().map(|(s, op)| op.prob_minus(s)).sum::<f64>() / chosen.len() as f64;
    let exact_trunc = chosen
        .iter()
        .map(|(s, _)| trunc_op.prob_minus(s))
        .sum::<f64>()
        / chosen.len() as f64;
    let expected_ratio = exact_trunc / exact_full;
    let nominal_factor = (n as f64).exp2();

    if trials == 0 {
        return Ok(TruncationResult {
            m,
            n,
            placement,
            full: VerificationReport::analytic(m, 0, 1.0 - exact_full)?,
            truncated: VerificationReport::analytic(m, n, 1.0 - exact_trunc)?,
            failure_ratio: expected_ratio,
            ratio_std_err: 0.0,
            expected_ratio,
            nominal_factor,
        });
    }

    // Trial i: substreams 2i (full) and 2i + 1 (truncated), one fresh pair each.
    let (full_ok, trunc_ok) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut pick = streams.substream(2 * i);
            let (state, full_op) = &chosen[pick.random_range(0..chosen.len())];
            let run_verify = |op: &VerificationOp,
                              rng: &mut rand_chacha::ChaCha8Rng|
             -> Result<u64> {
                let run = teleport_state(*state, None, m, &mut EprResource::singlet(), rng)?;
                Ok((measure_verify(&run.bob_final.expect("completed run"), op, rng) == 1) as u64)
            };
            let a = run_verify(full_op, &mut pick)?;
            let b = run_verify(&trunc_op, &mut streams.substream(2 * i + 1))?;
            Ok::<_, Error>((a, b))
        })
        .try_reduce(|| (0, 0), |x, y| Ok((x.0 + y.0, x.1 + y.1)))?;

    let full = VerificationReport::sampled(m, 0, trials, full_ok, VERIFICATION_SIGNIFICANCE)?;
    let truncated = VerificationReport::sampled(m, n, trials, trunc_ok, VERIFICATION_SIGNIFICANCE)?;
    let (ff, ft) = (full.failure_rate(), truncated.failure_rate());
    let (failure_ratio, ratio_std_err) = if full.failures() > 0 && truncated.failures() > 0 {
        let r = ft / ff;
        let rel = ((1.0 - ft) / (trials as f64 * ft) + (1.0 - ff) / (trials as f64 * ff)).sqrt();
        (r, r * rel)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(TruncationResult {
        m,
        n,
        placement,
        full,
        truncated,
        failure_ratio,
        ratio_std_err,
        expected_ratio,
        nominal_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::quantize;
    use crate::qmath::fs_angle;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    #[test]
    fn verification_op_examples() {
        let z = verification_op(1.0).unwrap();
        assert_eq!(z.theta(), 0.0);
        assert!(z.matrix().max_abs_diff(&Operator2::pauli_z()) < 1e-15);
        assert!(fidelity(&z.plus_eigenvector(), &PureQubit::up()) == 1.0);

        let x = verification_op(FRAC_1_SQRT_2).unwrap();
        assert!((x.theta() - FRAC_PI_2).abs() < 1e-15);
        assert!(x.matrix().max_abs_diff(&Operator2::pauli_x()) < 1e-15);

        let theta = 44.8881_f64.to_radians();
        let alpha = (theta / 2.0).cos();
        assert!((alpha - 0.9242528).abs() < 1e-7);
        assert!((verification_op(alpha).unwrap().theta() - theta).abs() < 1e-12);

        assert!(verification_op(1.5).is_err());
        assert!(verification_op(-0.1).is_err());
    }

    #[test]
    fn plus_eigenvector_is_an_eigenvector() {
        for theta in [0.0, 0.3, 1.9, 3.1] {
            let op = VerificationOp::from_theta(theta);
            let v = op.plus_eigenvector();
            let mv = apply(&(*op.matrix() * Operator2::identity()), &v);
            // M is Hermitian and unitary (an involution), so apply() accepts it.
            assert!(fidelity(&mv.unwrap(), &v) > 1.0 - 1e-12);
            let [a, b] = [v.a0(), v.a1()];
            let m = op.matrix().entries();
            assert!((m[0][0] * a + m[0][1] * b - a).norm() < 1e-12);
            assert!((m[1][0] * a + m[1][1] * b - b).norm() < 1e-12);
            assert!(op.prob_plus(&op.minus_eigenvector()) < 1e-30);
        }
    }

    #[test]
    fn eigenvector_outcomes_are_certain() {
        let mut rng = SeedStream::new(4).substream(0);
        let op = VerificationOp::from_theta(0.9);
        for _ in 0..1000 {
            assert_eq!(measure_verify(&op.plus_eigenvector(), &op, &mut rng), 1);
            assert_eq!(measure_verify(&op.minus_eigenvector(), &op, &mut rng), -1);
            assert_eq!(rotate_then_measure(&PureQubit::up(), 0.0, &mut rng), 1);
            assert_eq!(
                rotate_then_measure(&op.plus_eigenvector(), 0.9, &mut rng),
                1
            );
        }
    }

    #[test]
    fn born_probability_at_an_angle() {
        let op = VerificationOp::from_theta(1.0);
        for phi in [0.0, 0.01, 0.2, 1.0] {
            let s = PureQubit::real(0.5 + phi);
            assert!((fs_angle(&s, &op.plus_eigenvector()) - phi).abs() < 1e-12);
            assert!((op.prob_plus(&s) - phi.cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn success_bound_examples() {
        assert_eq!(success_bound(16, 0).unwrap(), 1.0 - (-16f64).exp2());
        assert_eq!(success_bound(16, 8).unwrap(), 1.0 - (-8f64).exp2());
        assert_eq!(success_bound(2, 0).unwrap(), 0.75);
        assert!(success_bound(8, 8).is_err());
    }

    #[test]
    fn success_bound_monotonicity() {
        for m in 2..40 {
            for n in 0..m - 1 {
                assert!(success_bound(m, n + 1).unwrap() < success_bound(m, n).unwrap());
                assert!(success_bound(m + 1, n).unwrap() > success_bound(m, n).unwrap());
            }
        }
    }

    #[test]
    fn analytic_ratio_examples() {
        // sin²(2⁻⁴)/sin²(2⁻⁸)
        let r = analytic_failure_ratio(16, 8);
        assert!((r - 255.66814).abs() < 1e-4, "{r}");
        assert!((r / 256.0 - 1.0).abs() < 0.005);
        assert_eq!(analytic_failure_ratio(16, 0), 1.0);
    }

    #[test]
    fn analytic_truncation_matches_closed_form() {
        let spec = PrecisionSpec::real_rotation(16).unwrap();
        for n in [0, 2, 4, 8] {
            let res =
                truncation_experiment(&spec, n, 0, CellPlacement::WorstCase, &SeedStream::new(0))
                    .unwrap();
            assert!(
                (res.failure_ratio / analytic_failure_ratio(16, n) - 1.0).abs() < 1e-9,
                "n={n}"
            );
            assert!(res.full.passed && res.truncated.passed);
        }
        let avg = truncation_experiment(
            &spec,
            8,
            0,
            CellPlacement::UniformAverage,
            &SeedStream::new(0),
        )
        .unwrap();
        assert!(avg.failure_ratio < analytic_failure_ratio(16, 8));
    }

    #[test]
    fn truncation_needs_rotation_grid() {
        let spec = PrecisionSpec::general(8).unwrap();
        assert!(matches!(
            truncation_experiment(&spec, 2, 0, CellPlacement::WorstCase, &SeedStream::new(0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn report_statistics() {
        // 20 failures in 1000 trials against a 2⁻⁸ failure bound is far too many.
        let r = VerificationReport::sampled(8, 0, 1000, 980, 1e-3).unwrap();
        assert!(!r.passed);
        let ok = VerificationReport::sampled(8, 0, 1000, 997, 1e-3).unwrap();
        assert!(ok.passed);
        assert_eq!(ok.p_hat, 0.997);
        assert!(VerificationReport::sampled(8, 0, 0, 0, 1e-3).is_err());
    }

    #[test]
    fn aligned_verification_handles_complex_targets() {
        let spec = PrecisionSpec::general(10).unwrap();
        let target = quantize(&PureQubit::equatorial(1.3), &spec).unwrap();
        let v = AlignedVerification::for_grid_point(&target);
        let s = dequantize(&target).with_global_phase(0.4);
        assert!(v.prob_minus(&s) < 1e-24);
        assert!((v.prob_minus(&s.orthogonal()) - 1.0).abs() < 1e-12);
        let mut rng = SeedStream::new(1).substream(0);
        assert!((0..200).all(|_| v.measure(&s, &mut rng) == 1));
    }

    #[test]
    fn sampled_verification_is_reproducible() {
        let spec = PrecisionSpec::real_rotation(6).unwrap();
        let streams = SeedStream::new(8);
        let a = verify_bound(&spec, 2000, &streams, 1e-3).unwrap();
        let b = verify_bound(&spec, 2000, &streams, 1e-3).unwrap();
        assert_eq!(a, b);
        assert!(a.passed);
    }
}

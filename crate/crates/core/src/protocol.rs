//! Teleportation and remote state preparation, step by step.
//!
//! A run is strictly sequential: prepare → Alice measures → classical message
//! → Bob corrects. Each run consumes one [`EprResource`]; a consumed resource
//! refuses further use.
//!
//! Bell outcomes are ordered `(Φ⁺, Φ⁻, Ψ⁺, Ψ⁻)`. With the `|Ψ⁻⟩` resource,
//! Bob's conditional state is `σₖ|ψ⟩` up to global phase, with
//! `σₖ = (σy, σx, σz, I)` in that order, and the same Pauli undoes it.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{account, LedgerRecord};
use crate::precision::{dequantize, real_half_angle, GridMode, GridPoint};
use crate::qmath::{
    apply, rotation_y, ComplexAmp, DensityOp, Operator2, PureQubit, TwoQubitState, VALIDATION_TOL,
};
use crate::rng::{sample_discrete, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "QT")]
    Teleportation,
    #[serde(rename = "RSP")]
    RemoteStatePreparation,
}

impl Protocol {
    /// Classical bits per run.
    pub fn message_len(self) -> usize {
        match self {
            Protocol::Teleportation => 2,
            Protocol::RemoteStatePreparation => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Protocol::Teleportation => "QT",
            Protocol::RemoteStatePreparation => "RSP",
        }
    }
}

/// The state all parties agreed on before any preparation: `|↑⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceState;

impl ReferenceState {
    pub fn state() -> PureQubit {
        PureQubit::up()
    }
}

/// One shared entangled pair (Alice holds the first qubit).
#[derive(Debug, Clone)]
pub struct EprResource {
    joint: TwoQubitState,
    consumed: bool,
}

impl EprResource {
    /// A fresh `|Ψ⁻⟩` pair.
    pub fn singlet() -> Self {
        Self::from_state(TwoQubitState::singlet())
    }

    /// Any joint state, e.g. an unentangled pair for control experiments.
    pub fn from_state(joint: TwoQubitState) -> Self {
        Self {
            joint,
            consumed: false,
        }
    }

    pub fn joint(&self) -> &TwoQubitState {
        &self.joint
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    fn consume(&mut self) -> Result<TwoQubitState> {
        if self.consumed {
            return Err(Error::ProtocolOrder(
                "EPR pair was already consumed by an earlier measurement".into(),
            ));
        }
        self.consumed = true;
        Ok(self.joint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome::PhiPlus,
        BellOutcome::PhiMinus,
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::validation(format!("Bell outcome index {i} out of range")))
    }

    pub fn state(self) -> TwoQubitState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (z, p, n) = (
            ComplexAmp::new(0.0, 0.0),
            ComplexAmp::new(h, 0.0),
            ComplexAmp::new(-h, 0.0),
        );
        let amps = match self {
            BellOutcome::PhiPlus => [p, z, z, p],
            BellOutcome::PhiMinus => [p, z, z, n],
            BellOutcome::PsiPlus => [z, p, p, z],
            BellOutcome::PsiMinus => [z, p, n, z],
        };
        TwoQubitState::new(amps).expect("Bell states are normalized")
    }

    /// Bob's Pauli correction for this outcome on the `|Ψ⁻⟩` resource.
    pub fn correction(self) -> Operator2 {
        match self {
            BellOutcome::PhiPlus => Operator2::pauli_y(),
            BellOutcome::PhiMinus => Operator2::pauli_x(),
            BellOutcome::PsiPlus => Operator2::pauli_z(),
            BellOutcome::PsiMinus => Operator2::identity(),
        }
    }
}

/// The bits Alice sends over the classical channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassicalMessage {
    protocol: Protocol,
    bits: Vec<u8>,
}

impl ClassicalMessage {
    pub fn new(protocol: Protocol, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != protocol.message_len() {
            return Err(Error::validation(format!(
                "{} message needs {} bits, got {}",
                protocol.label(),
                protocol.message_len(),
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::validation("message bits must be 0 or 1"));
        }
        Ok(Self { protocol, bits })
    }

    pub fn teleportation(outcome: BellOutcome) -> Self {
        let i = outcome.index() as u8;
        Self {
            protocol: Protocol::Teleportation,
            bits: vec![i >> 1, i & 1],
        }
    }

    pub fn rsp(correct: bool) -> Self {
        Self {
            protocol: Protocol::RemoteStatePreparation,
            bits: vec![correct as u8],
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// The bits read as a big-endian integer.
    pub fn value(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }
}

/// Unitary that carries `|ref⟩` to the grid point's state.
pub fn preparation_unitary(g: &GridPoint) -> Operator2 {
    match g.spec().mode() {
        GridMode::RealRotation => rotation_y(g.theta().expect("rotation grid point")),
        GridMode::General => {
            let s = dequantize(g);
            let (a0, a1) = (s.a0(), s.a1());
            Operator2::unitary([[a0, -a1.conj()], [a1, a0.conj()]])
                .expect("columns of a normalized state and its complement are orthonormal")
        }
    }
}

/// Charlie's preparation: the grid point's unitary applied to `|ref⟩`.
pub fn prepare(g: &GridPoint) -> PureQubit {
    apply(&preparation_unitary(g), &ReferenceState::state()).expect("preparation is unitary")
}

/// Branch of a projective measurement: its Born probability and, when that
/// is nonzero, Bob's normalized conditional state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub probability: f64,
    pub bob: Option<PureQubit>,
}

fn branch(v: [ComplexAmp; 2]) -> Branch {
    let probability = v[0].norm_sqr() + v[1].norm_sqr();
    Branch {
        probability,
        bob: (probability > 1e-300)
            .then(|| PureQubit::normalized(v[0], v[1]).expect("nonzero branch vector")),
    }
}

/// Exact Bell-measurement branches for Alice's input qubit together with
/// her half of `joint`; indexed as [`BellOutcome::ALL`].
pub fn bell_branches(input: &PureQubit, joint: &TwoQubitState) -> [Branch; 4] {
    let psi = input.amplitudes();
    BellOutcome::ALL.map(|outcome| {
        let bell = outcome.state();
        let mut v = [ComplexAmp::new(0.0, 0.0); 2];
        for (a, &psi_a) in psi.iter().enumerate() {
            for b in 0..2 {
                let w = bell.amplitude(a, b).conj() * psi_a;
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                for (c, slot) in v.iter_mut().enumerate() {
                    *slot += w * joint.amplitude(b, c);
                }
            }
        }
        branch(v)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellMeasurement {
    pub outcome: BellOutcome,
    pub bob_conditional: PureQubit,
    pub probabilities: [f64; 4],
}

/// Alice's Bell measurement; samples the outcome by inverse CDF over the exact
/// Born probabilities and consumes the resource.
pub fn bell_measure<R: Rng + ?Sized>(
    input: &PureQubit,
    resource: &mut EprResource,
    rng: &mut R,
) -> Result<BellMeasurement> {
    let joint = resource.consume()?;
    let branches = bell_branches(input, &joint);
    let probabilities = branches.map(|b| b.probability);
    let k = sample_discrete(&probabilities, rng);
    Ok(BellMeasurement {
        outcome: BellOutcome::ALL[k],
        bob_conditional: branches[k].bob.expect("sampled branch has support"),
        probabilities,
    })
}

/// Bob's correction after receiving Alice's two bits.
pub fn qt_correct(bob_conditional: &PureQubit, message: &ClassicalMessage) -> Result<PureQubit> {
    if message.protocol() != Protocol::Teleportation {
        return Err(Error::validation(
            "teleportation correction needs a QT message",
        ));
    }
    let outcome = BellOutcome::from_index(message.value())?;
    apply(&outcome.correction(), bob_conditional)
}

/// A protocol run as recorded in the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub protocol: Protocol,
    /// Charlie's (QT) or Alice's (RSP) grid description, when the state came from a grid.
    pub prepared: Option<GridPoint>,
    pub input: PureQubit,
    /// Preparation precision `m` of the transmitted state.
    pub prep_bits: u32,
    /// Bell outcome index (QT) or Alice's basis outcome (RSP, 0 = η, 1 = η⊥).
    pub outcome: Option<u8>,
    pub message: Option<ClassicalMessage>,
    pub bob_final: Option<PureQubit>,
    pub ledger: Option<LedgerRecord>,
}

impl RunRecord {
    fn started(
        protocol: Protocol,
        input: PureQubit,
        prepared: Option<GridPoint>,
        prep_bits: u32,
    ) -> Self {
        Self {
            protocol,
            prepared,
            input,
            prep_bits,
            outcome: None,
            message: None,
            bob_final: None,
            ledger: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.outcome.is_some() && self.message.is_some() && self.bob_final.is_some()
    }
}

/// Full teleportation of a grid state prepared by Charlie.
pub fn teleport<R: Rng + ?Sized>(
    g: &GridPoint,
    resource: &mut EprResource,
    rng: &mut R,
) -> Result<RunRecord> {
    teleport_state(prepare(g), Some(*g), g.spec().m(), resource, rng)
}

/// Teleportation of an arbitrary state described with `prep_bits` of precision.
pub fn teleport_state<R: Rng + ?Sized>(
    input: PureQubit,
    prepared: Option<GridPoint>,
    prep_bits: u32,
    resource: &mut EprResource,
    rng: &mut R,
) -> Result<RunRecord> {
    let mut record = RunRecord::started(Protocol::Teleportation, input, prepared, prep_bits);
    let meas = bell_measure(&input, resource, rng)?;
    let message = ClassicalMessage::teleportation(meas.outcome);
    let bob_final = qt_correct(&meas.bob_conditional, &message)?;
    record.outcome = Some(meas.outcome.index() as u8);
    record.message = Some(message);
    record.bob_final = Some(bob_final);
    record.ledger = Some(account(&record)?);
    Ok(record)
}

/// State families Alice can send with a single classical bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RspFamily {
    /// `(|↑⟩ + e^{iφ}|↓⟩)/√2`; the orthogonal partner is `σz|η⟩`.
    Equatorial,
    /// `cos t|↑⟩ + sin t|↓⟩`; the orthogonal partner is `σy|η⟩` up to phase.
    Real,
}

impl RspFamily {
    pub fn of(eta: &PureQubit) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        if (eta.a0().norm() - h).abs() <= VALIDATION_TOL
            && (eta.a1().norm() - h).abs() <= VALIDATION_TOL
        {
            return Ok(RspFamily::Equatorial);
        }
        real_half_angle(eta).map(|_| RspFamily::Real).map_err(|_| {
            Error::domain("state is neither equatorial nor real; one-bit RSP cannot send it")
        })
    }

    pub fn correction(self) -> Operator2 {
        match self {
            RspFamily::Equatorial => Operator2::pauli_z(),
            RspFamily::Real => Operator2::pauli_y(),
        }
    }
}

/// Alice measures her half of `joint` in the basis `(η, η⊥)`; index 0 is η.
pub fn rsp_branches(eta: &PureQubit, joint: &TwoQubitState) -> [Branch; 2] {
    [*eta, eta.orthogonal()].map(|basis| {
        let b = basis.amplitudes();
        let mut v = [ComplexAmp::new(0.0, 0.0); 2];
        for (a, ba) in b.iter().enumerate() {
            for (c, slot) in v.iter_mut().enumerate() {
                *slot += ba.conj() * joint.amplitude(a, c);
            }
        }
        branch(v)
    })
}

/// Bob's RSP correction: the family's flip when the bit is set.
pub fn rsp_correct(
    bob_conditional: &PureQubit,
    message: &ClassicalMessage,
    family: RspFamily,
) -> Result<PureQubit> {
    if message.protocol() != Protocol::RemoteStatePreparation {
        return Err(Error::validation("RSP correction needs an RSP message"));
    }
    if message.value() == 1 {
        apply(&family.correction(), bob_conditional)
    } else {
        Ok(*bob_conditional)
    }
}

/// Remote preparation of a state Alice knows.
///
/// On the singlet, Alice finding η leaves Bob with η⊥ (bit 1, Bob flips);
/// finding η⊥ leaves Bob with η (bit 0).
pub fn rsp_run<R: Rng + ?Sized>(
    eta: &PureQubit,
    prep_bits: u32,
    resource: &mut EprResource,
    rng: &mut R,
) -> Result<RunRecord> {
    let family = RspFamily::of(eta)?;
    let joint = resource.consume()?;
    let branches = rsp_branches(eta, &joint);
    let k = sample_discrete(&branches.map(|b| b.probability), rng);
    let bob = branches[k].bob.expect("sampled branch has support");
    let message = ClassicalMessage::rsp(k == 0);
    let bob_final = rsp_correct(&bob, &message, family)?;

    let mut record = RunRecord::started(Protocol::RemoteStatePreparation, *eta, None, prep_bits);
    record.outcome = Some(k as u8);
    record.message = Some(message);
    record.bob_final = Some(bob_final);
    record.ledger = Some(account(&record)?);
    Ok(record)
}

/// Alice's measurement basis `(R_y(angle)|↑⟩, R_y(angle)|↓⟩)`.
pub fn alice_basis(angle: f64) -> [PureQubit; 2] {
    let t = 0.5 * angle;
    [
        PureQubit::real(t),
        PureQubit::real(t + std::f64::consts::FRAC_PI_2),
    ]
}

/// Bob's state averaged over Alice's outcomes, computed exactly.
pub fn bob_marginal_exact(joint: &TwoQubitState, basis: &[PureQubit; 2]) -> Result<DensityOp> {
    let parts: Vec<(f64, PureQubit)> = basis
        .iter()
        .map(|b| rsp_branches(b, joint)[0])
        .filter_map(|br| br.bob.map(|s| (br.probability, s)))
        .collect();
    DensityOp::mixture(&parts)
}

/// Reconstruction of Bob's state from his own measurement record only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoSignalingEstimate {
    pub alice_basis_angle: f64,
    pub runs: u64,
    /// `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.
    pub bloch: [f64; 3],
    pub std_err: [f64; 3],
    #[serde(skip)]
    pub rho: DensityOp,
}

/// Alice measures her half of fresh copies of `template` in a rotated basis;
/// Bob, never told her outcome, measures σx, σy, σz in turn.
///
/// `n_runs = 0` returns the exact marginal instead of a sampled estimate.
pub fn no_signaling_probe(
    template: &TwoQubitState,
    alice_basis_angle: f64,
    n_runs: u64,
    streams: &SeedStream,
) -> Result<NoSignalingEstimate> {
    let basis = alice_basis(alice_basis_angle);
    if n_runs == 0 {
        let rho = bob_marginal_exact(template, &basis)?;
        return Ok(NoSignalingEstimate {
            alice_basis_angle,
            runs: 0,
            bloch: rho.bloch_vector(),
            std_err: [0.0; 3],
            rho,
        });
    }

    let tallies = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.substream(i);
            let mut resource = EprResource::from_state(*template);
            let joint = resource.consume()?;
            let branches = rsp_branches(&basis[0], &joint);
            let k = sample_discrete(&branches.map(|b| b.probability), &mut rng);
            let bob = branches[k].bob.expect("sampled branch has support");
            let axis = (i % 3) as usize;
            let p_up = 0.5 * (1.0 + bob.bloch_vector()[axis]);
            let up = rng.random::<f64>() < p_up;
            let mut t = [(0i64, 0u64); 3];
            t[axis] = (if up { 1 } else { -1 }, 1);
            Ok::<_, Error>(t)
        })
        .try_reduce(
            || [(0i64, 0u64); 3],
            |a, b| Ok([0, 1, 2].map(|k| (a[k].0 + b[k].0, a[k].1 + b[k].1))),
        )?;

    let mut bloch = [0.0; 3];
    let mut std_err = [0.0; 3];
    for k in 0..3 {
        let (sum, n) = tallies[k];
        if n > 0 {
            let r = sum as f64 / n as f64;
            bloch[k] = r;
            std_err[k] = ((1.0 - r * r).max(0.0) / n as f64)
                .sqrt()
                .max(1.0 / n as f64);
        }
    }
    let len = bloch.iter().map(|x| x * x).sum::<f64>().sqrt();
    let shrink = if len > 1.0 { len.recip() } else { 1.0 };
    let rho = DensityOp::from_bloch(bloch.map(|x| x * shrink))?;
    Ok(NoSignalingEstimate {
        alice_basis_angle,
        runs: n_runs,
        bloch,
        std_err,
        rho,
    })
}

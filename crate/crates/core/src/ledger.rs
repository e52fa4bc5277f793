//! Information accounting for protocol runs.
//!
//! Each run is charged `c` classical bits (2 for teleportation, 1 for
//! equatorial/real RSP) while transferring `m` bits of preparation
//! information. The ledger attributes the full `m` bits to the EPR channel;
//! the classical bits only undo the rotation Alice's outcome introduced. The
//! two rejected attributions, `m - c` and `m + c`, are kept as comparison
//! columns and never treated as balances.
//!
//! The EPR-channel figure is a lower bound in the sense that verifying the
//! transfer needs at least `m` bits; the ledger stores exactly `m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::prep_info;
use crate::protocol::{Protocol, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub protocol: Protocol,
    pub classical_bits_c: u32,
    pub prep_bits_m: u32,
    pub epr_pairs_consumed: u32,
    /// Preparation information carried (scrambled) by the EPR channel.
    pub epr_channel_bits: u32,
    /// Bits left after the verifier ignored `truncated_bits` of them.
    pub verified_bits: u32,
    pub truncated_bits: u32,
}

impl LedgerRecord {
    /// `m - c`: the preparation information not accounted for by the
    /// classical channel.
    pub fn hidden_cost(&self) -> i64 {
        self.epr_channel_bits as i64 - self.classical_bits_c as i64
    }

    /// True when `m = c`, the case in which the EPR pair would carry nothing.
    pub fn is_degenerate(&self) -> bool {
        self.prep_bits_m == self.classical_bits_c
    }

    /// The rejected `m - c` attribution, for comparison output.
    pub fn epr_if_minus_c(&self) -> i64 {
        self.prep_bits_m as i64 - self.classical_bits_c as i64
    }

    /// The rejected `m + c` attribution, for comparison output.
    pub fn epr_if_plus_c(&self) -> i64 {
        self.prep_bits_m as i64 + self.classical_bits_c as i64
    }

    /// Same record with the verifier ignoring the last `n` bits.
    pub fn with_truncation(mut self, n: u32) -> Result<Self> {
        if n >= self.prep_bits_m {
            return Err(Error::validation(format!(
                "cannot ignore {n} of {} preparation bits",
                self.prep_bits_m
            )));
        }
        self.truncated_bits = n;
        self.verified_bits = self.prep_bits_m - n;
        Ok(self)
    }

    pub fn csv_row(&self) -> LedgerCsvRow {
        LedgerCsvRow {
            protocol: self.protocol.label(),
            c: self.classical_bits_c,
            m: self.prep_bits_m,
            n: self.truncated_bits,
            hidden_cost: self.hidden_cost(),
            epr_pairs: self.epr_pairs_consumed,
            verified_bits: self.verified_bits,
        }
    }
}

/// One row of the ledger CSV.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerCsvRow {
    pub protocol: &'static str,
    pub c: u32,
    pub m: u32,
    pub n: u32,
    pub hidden_cost: i64,
    pub epr_pairs: u32,
    pub verified_bits: u32,
}

/// Charges a completed run.
pub fn account(run: &RunRecord) -> Result<LedgerRecord> {
    let message = match (&run.message, run.outcome, run.bob_final) {
        (Some(msg), Some(_), Some(_)) => msg,
        _ => {
            return Err(Error::validation(
                "run is incomplete: no outcome, message, or final state recorded",
            ))
        }
    };
    if message.protocol() != run.protocol {
        return Err(Error::validation("run message belongs to another protocol"));
    }
    let m = run.prep_bits;
    let prep = prep_info(2, m as u64)? as u32;
    Ok(LedgerRecord {
        protocol: run.protocol,
        classical_bits_c: message.bits().len() as u32,
        prep_bits_m: prep,
        epr_pairs_consumed: 1,
        epr_channel_bits: prep,
        verified_bits: prep,
        truncated_bits: 0,
    })
}

/// Classical cost `2·S(ρ)` of teleporting a qubit whose reduced state has
/// entropy `S` bits.
pub fn classical_cost_bound(rho_entropy_bits: f64) -> f64 {
    2.0 * rho_entropy_bits
}

/// Phase-space volume in units of `ħ³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPhaseSpace {
    volume_in_hbar3: f64,
}

impl CvPhaseSpace {
    pub fn new(volume_in_hbar3: f64) -> Result<Self> {
        if !(volume_in_hbar3.is_finite() && volume_in_hbar3 > 0.0) {
            return Err(Error::validation(format!(
                "phase-space volume {volume_in_hbar3} must be positive and finite"
            )));
        }
        Ok(Self { volume_in_hbar3 })
    }

    /// Number of whole cells.
    pub fn cells(&self) -> u64 {
        self.volume_in_hbar3.floor() as u64
    }
}

/// Preparation information `(N - 1)·m` for a particle spread over `N` cells.
pub fn cv_prep_info(space: &CvPhaseSpace, m: u32) -> Result<u64> {
    match space.cells() {
        0 => Err(Error::validation("phase space holds less than one cell")),
        1 => Ok(0),
        n => prep_info(n, m as u64),
    }
}

/// Totals over many runs; merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleLedger {
    pub runs: u64,
    pub classical_bits: u64,
    pub prep_bits: u64,
    pub epr_pairs: u64,
    pub epr_channel_bits: u64,
    pub verified_bits: u64,
    pub hidden_cost: i64,
}

impl EnsembleLedger {
    pub fn record(&mut self, r: &LedgerRecord) {
        self.merge(&EnsembleLedger::from(r));
    }

    pub fn merge(&mut self, other: &EnsembleLedger) {
        self.runs += other.runs;
        self.classical_bits += other.classical_bits;
        self.prep_bits += other.prep_bits;
        self.epr_pairs += other.epr_pairs;
        self.epr_channel_bits += other.epr_channel_bits;
        self.verified_bits += other.verified_bits;
        self.hidden_cost += other.hidden_cost;
    }
}

impl From<&LedgerRecord> for EnsembleLedger {
    fn from(r: &LedgerRecord) -> Self {
        EnsembleLedger {
            runs: 1,
            classical_bits: r.classical_bits_c as u64,
            prep_bits: r.prep_bits_m as u64,
            epr_pairs: r.epr_pairs_consumed as u64,
            epr_channel_bits: r.epr_channel_bits as u64,
            verified_bits: r.verified_bits as u64,
            hidden_cost: r.hidden_cost(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::GridPoint;
    use crate::protocol::{rsp_run, teleport, EprResource};
    use crate::qmath::PureQubit;
    use crate::rng::SeedStream;

    #[test]
    fn teleportation_at_two_bytes() {
        let mut rng = SeedStream::new(3).substream(0);
        let g = GridPoint::rotation(16, 101).unwrap();
        let run = teleport(&g, &mut EprResource::singlet(), &mut rng).unwrap();
        let l = account(&run).unwrap();
        assert_eq!(
            (l.classical_bits_c, l.prep_bits_m, l.hidden_cost()),
            (2, 16, 14)
        );
        assert_eq!(l.epr_channel_bits, l.prep_bits_m);
        assert_eq!(l.epr_pairs_consumed, 1);
        assert_eq!((l.epr_if_minus_c(), l.epr_if_plus_c()), (14, 18));
    }

    #[test]
    fn rsp_at_two_bytes() {
        let mut rng = SeedStream::new(3).substream(1);
        let run = rsp_run(
            &PureQubit::equatorial(0.3),
            16,
            &mut EprResource::singlet(),
            &mut rng,
        )
        .unwrap();
        let l = account(&run).unwrap();
        assert_eq!(
            (l.classical_bits_c, l.prep_bits_m, l.hidden_cost()),
            (1, 16, 15)
        );
    }

    #[test]
    fn two_bit_teleportation_is_degenerate() {
        let mut rng = SeedStream::new(3).substream(2);
        let g = GridPoint::rotation(2, 3).unwrap();
        let l = account(&teleport(&g, &mut EprResource::singlet(), &mut rng).unwrap()).unwrap();
        assert_eq!(l.hidden_cost(), 0);
        assert!(l.is_degenerate());
    }

    #[test]
    fn incomplete_run_is_rejected() {
        let mut rng = SeedStream::new(3).substream(0);
        let mut run = teleport(
            &GridPoint::rotation(8, 1).unwrap(),
            &mut EprResource::singlet(),
            &mut rng,
        )
        .unwrap();
        run.bob_final = None;
        assert!(matches!(account(&run), Err(Error::Validation(_))));
    }

    #[test]
    fn classical_cost_examples() {
        assert_eq!(classical_cost_bound(1.0), 2.0);
        assert_eq!(classical_cost_bound(0.0), 0.0);
        assert_eq!(classical_cost_bound(0.5), 1.0);
    }

    #[test]
    fn cv_examples() {
        let cells = |v: f64| CvPhaseSpace::new(v).unwrap();
        assert_eq!(cv_prep_info(&cells(2.0), 16).unwrap(), 16);
        assert_eq!(cv_prep_info(&cells(10.0), 16).unwrap(), 144);
        assert_eq!(cv_prep_info(&cells(10.9), 16).unwrap(), 144);
        assert_eq!(cv_prep_info(&cells(1.0), 16).unwrap(), 0);
        assert!(cv_prep_info(&cells(0.5), 16).is_err());
        assert!(CvPhaseSpace::new(-1.0).is_err());
        for n in 2..200u64 {
            assert_eq!(
                cv_prep_info(&cells(n as f64), 7).unwrap(),
                prep_info(n, 7).unwrap()
            );
        }
    }

    #[test]
    fn truncation_reduces_verified_bits() {
        let mut rng = SeedStream::new(3).substream(0);
        let run = teleport(
            &GridPoint::rotation(16, 9).unwrap(),
            &mut EprResource::singlet(),
            &mut rng,
        )
        .unwrap();
        let l = account(&run).unwrap().with_truncation(8).unwrap();
        assert_eq!(l.verified_bits, 8);
        assert_eq!(l.epr_channel_bits, 16);
        assert!(account(&run).unwrap().with_truncation(16).is_err());
    }

    #[test]
    fn ensemble_merge_is_order_free() {
        let recs: Vec<LedgerRecord> = (0..5)
            .map(|i| LedgerRecord {
                protocol: if i % 2 == 0 {
                    Protocol::Teleportation
                } else {
                    Protocol::RemoteStatePreparation
                },
                classical_bits_c: if i % 2 == 0 { 2 } else { 1 },
                prep_bits_m: 8 + i,
                epr_pairs_consumed: 1,
                epr_channel_bits: 8 + i,
                verified_bits: 8 + i,
                truncated_bits: 0,
            })
            .collect();
        let mut fwd = EnsembleLedger::default();
        recs.iter().for_each(|r| fwd.record(r));
        let mut rev = EnsembleLedger::default();
        recs.iter().rev().for_each(|r| rev.record(r));
        assert_eq!(fwd, rev);
        assert_eq!(fwd.runs, 5);
        assert_eq!(fwd.hidden_cost, (fwd.prep_bits - fwd.classical_bits) as i64);
    }
}

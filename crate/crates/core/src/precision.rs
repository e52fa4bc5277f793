//! Finite-precision grids over the qubit's projective state space.
//!
//! Two parameterizations are offered:
//!
//! * [`GridMode::RealRotation`]: states `cos(t)|↑⟩ + sin(t)|↓⟩` with `t` on a
//!   uniform grid of step `2^{-m/2}` over `[0, π)`. Adjacent points are exactly
//!   one minimum resolvable angle apart.
//! * [`GridMode::General`]: `Re a1` and `Im a1` are each an `m/2`-bit signed
//!   fixed-point number on `[-1, 1)`, `a0 = √(1-|a1|²)` is real. Codes with
//!   `|a1| ≥ 1` are excluded except the single representative `a1 = -1` of
//!   `|↓⟩`, so every grid point is a distinct projective state.
//!
//! General-mode membership is decided in exact integer arithmetic.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{fidelity, ComplexAmp, PureQubit, VALIDATION_TOL};

/// Upper limit on `m` for the single-angle grid.
pub const MAX_ROTATION_BITS: u32 = 64;
/// Upper limit on `m` for the two-component grid; quantization scans
/// `O(2^{m/2})` rows.
pub const MAX_GENERAL_BITS: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    RealRotation,
    General,
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridMode::RealRotation => "real_rotation",
            GridMode::General => "general",
        })
    }
}

impl FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "real_rotation" | "realrotation" | "real" => Ok(GridMode::RealRotation),
            "general" => Ok(GridMode::General),
            other => Err(Error::validation(format!("unknown grid mode '{other}'"))),
        }
    }
}

/// Precision `m` (total preparation bits per qubit state) and grid layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrecisionSpec {
    m: u32,
    mode: GridMode,
}

impl PrecisionSpec {
    pub fn new(m: u32, mode: GridMode) -> Result<Self> {
        if m < 2 {
            return Err(Error::validation(format!(
                "precision m = {m} must be at least 2"
            )));
        }
        match mode {
            GridMode::RealRotation if m > MAX_ROTATION_BITS => Err(Error::validation(format!(
                "precision m = {m} exceeds {MAX_ROTATION_BITS} for the rotation grid"
            ))),
            GridMode::General if !m.is_multiple_of(2) => Err(Error::validation(format!(
                "general grid needs even m (got {m}) to split bits between Re and Im"
            ))),
            GridMode::General if m > MAX_GENERAL_BITS => Err(Error::validation(format!(
                "precision m = {m} exceeds {MAX_GENERAL_BITS} for the general grid"
            ))),
            _ => Ok(Self { m, mode }),
        }
    }

    pub fn real_rotation(m: u32) -> Result<Self> {
        Self::new(m, GridMode::RealRotation)
    }

    pub fn general(m: u32) -> Result<Self> {
        Self::new(m, GridMode::General)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    /// Minimum resolvable Fubini-Study angle `2^{-m/2}`.
    pub fn phi_min(&self) -> f64 {
        phi_min(self.m)
    }

    /// Number of distinct grid points.
    pub fn cardinality(&self) -> u64 {
        match self.mode {
            GridMode::RealRotation => (PI / self.phi_min()).ceil() as u64,
            GridMode::General => {
                let c = self.half_range() as u128;
                let inside: u128 = (1..2 * c)
                    .map(|k| {
                        let j = k.abs_diff(c);
                        2 * (c * c - j * j - 1).isqrt() + 1
                    })
                    .sum();
                (inside + 1) as u64
            }
        }
    }

    fn component_bits(&self) -> u32 {
        self.m / 2
    }

    /// Fixed-point scale `2^{m/2 - 1}`; component value = `(code - scale) / scale`.
    fn half_range(&self) -> i64 {
        1i64 << (self.component_bits() - 1)
    }

    fn codes_per_component(&self) -> u64 {
        1u64 << self.component_bits()
    }
}

pub fn phi_min(m: u32) -> f64 {
    (-(m as f64) / 2.0).exp2()
}

/// A resolvable state vector on a precision grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGridPoint", into = "RawGridPoint")]
pub struct GridPoint {
    spec: PrecisionSpec,
    idx: [u64; 2],
}

#[derive(Serialize, Deserialize)]
struct RawGridPoint {
    mode: GridMode,
    m: u32,
    indices: Vec<u64>,
}

impl TryFrom<RawGridPoint> for GridPoint {
    type Error = Error;

    fn try_from(raw: RawGridPoint) -> Result<Self> {
        GridPoint::new(PrecisionSpec::new(raw.m, raw.mode)?, &raw.indices)
    }
}

impl From<GridPoint> for RawGridPoint {
    fn from(g: GridPoint) -> Self {
        RawGridPoint {
            mode: g.spec.mode,
            m: g.spec.m,
            indices: g.indices(),
        }
    }
}

impl GridPoint {
    /// One index for the rotation grid, `(re_code, im_code)` for the general grid.
    pub fn new(spec: PrecisionSpec, indices: &[u64]) -> Result<Self> {
        match (spec.mode, indices) {
            (GridMode::RealRotation, &[k]) => {
                let card = spec.cardinality();
                if k >= card {
                    return Err(Error::validation(format!(
                        "rotation index {k} out of range 0..{card}"
                    )));
                }
                Ok(Self { spec, idx: [k, 0] })
            }
            (GridMode::General, &[re, im]) => {
                let codes = spec.codes_per_component();
                if re >= codes || im >= codes {
                    return Err(Error::validation(format!(
                        "general codes ({re}, {im}) out of range 0..{codes}"
                    )));
                }
                let c = spec.half_range();
                if !general_member(re as i64 - c, im as i64 - c, c) {
                    return Err(Error::validation(format!(
                        "general codes ({re}, {im}) lie outside the unit disc"
                    )));
                }
                Ok(Self {
                    spec,
                    idx: [re, im],
                })
            }
            (mode, other) => Err(Error::validation(format!(
                "{mode} grid point needs {} indices, got {}",
                if mode == GridMode::RealRotation { 1 } else { 2 },
                other.len()
            ))),
        }
    }

    /// Rotation-grid point nearest to half-angle `k·2^{-m/2}`.
    pub fn rotation(m: u32, k: u64) -> Result<Self> {
        Self::new(PrecisionSpec::real_rotation(m)?, &[k])
    }

    pub fn spec(&self) -> PrecisionSpec {
        self.spec
    }

    pub fn indices(&self) -> Vec<u64> {
        match self.spec.mode {
            GridMode::RealRotation => vec![self.idx[0]],
            GridMode::General => self.idx.to_vec(),
        }
    }

    /// Position in the grid's canonical order, used for tie-breaking.
    pub fn linear_index(&self) -> u64 {
        match self.spec.mode {
            GridMode::RealRotation => self.idx[0],
            GridMode::General => self.idx[0] * self.spec.codes_per_component() + self.idx[1],
        }
    }

    /// Rotation angle θ with the state equal to `R_y(θ)|↑⟩`; rotation grid only.
    pub fn theta(&self) -> Option<f64> {
        match self.spec.mode {
            GridMode::RealRotation => Some(2.0 * self.idx[0] as f64 * self.spec.phi_min()),
            GridMode::General => None,
        }
    }

    fn signed(&self) -> (i64, i64) {
        let c = self.spec.half_range();
        (self.idx[0] as i64 - c, self.idx[1] as i64 - c)
    }
}

fn general_member(j: i64, l: i64, c: i64) -> bool {
    let (j, l, c) = (j as i128, l as i128, c as i128);
    j * j + l * l < c * c || (j == -c && l == 0)
}

fn general_state(j: i64, l: i64, c: i64) -> PureQubit {
    let (ji, li, ci) = (j as i128, l as i128, c as i128);
    let scale = c as f64;
    let a0 = ((ci * ci - ji * ji - li * li) as f64).sqrt() / scale;
    let a1 = ComplexAmp::new(j as f64 / scale, l as f64 / scale);
    PureQubit::normalized(ComplexAmp::new(a0, 0.0), a1)
        .expect("grid amplitudes are finite and nonzero")
}

/// Summary of how finely a precision grid resolves state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub m: u32,
    /// Minimum resolvable Fubini-Study angle `2^{-m/2}`; drives every bound.
    pub phi_min: f64,
    /// Alternative resolution figure `2^{-m}·π`; reported only.
    pub sphere_size: f64,
    /// `1 - 2^{-m}`.
    pub overlap_bound: f64,
}

pub fn resolution(spec: &PrecisionSpec) -> ResolutionReport {
    resolution_for_bits(spec.m)
}

/// Same as [`resolution`] without the grid-mode constraints on `m`.
pub fn resolution_for_bits(m: u32) -> ResolutionReport {
    let two_m = (-(m as f64)).exp2();
    ResolutionReport {
        m,
        phi_min: phi_min(m),
        sphere_size: two_m * PI,
        overlap_bound: 1.0 - two_m,
    }
}

/// Preparation information `(D - 1)·m` bits for a `D`-level system at precision `m`.
pub fn prep_info(dimension: u64, m: u64) -> Result<u64> {
    if dimension < 2 {
        return Err(Error::validation(format!(
            "Hilbert space dimension {dimension} must be at least 2"
        )));
    }
    (dimension - 1)
        .checked_mul(m)
        .ok_or_else(|| Error::validation("preparation information overflows u64"))
}

/// Shannon entropy in bits of a probability vector.
pub fn shannon_entropy_bits<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// Entropy of the uniform ensemble over every point of the grid, obtained by
/// enumerating the grid.
pub fn uniform_ensemble_entropy(spec: &PrecisionSpec) -> f64 {
    let n = grid_points(*spec).count() as f64;
    shannon_entropy_bits(grid_points(*spec).map(|_| 1.0 / n))
}

/// Every point of the grid in canonical order.
pub fn grid_points(spec: PrecisionSpec) -> Box<dyn Iterator<Item = GridPoint>> {
    match spec.mode {
        GridMode::RealRotation => {
            Box::new((0..spec.cardinality()).map(move |k| GridPoint { spec, idx: [k, 0] }))
        }
        GridMode::General => {
            let codes = spec.codes_per_component();
            let c = spec.half_range();
            Box::new(
                (0..codes)
                    .flat_map(move |re| (0..codes).map(move |im| (re, im)))
                    .filter(move |&(re, im)| general_member(re as i64 - c, im as i64 - c, c))
                    .map(move |(re, im)| GridPoint {
                        spec,
                        idx: [re, im],
                    }),
            )
        }
    }
}

pub fn dequantize(g: &GridPoint) -> PureQubit {
    match g.spec.mode {
        GridMode::RealRotation => PureQubit::real(g.idx[0] as f64 * g.spec.phi_min()),
        GridMode::General => {
            let (j, l) = g.signed();
            general_state(j, l, g.spec.half_range())
        }
    }
}

#[derive(Clone, Copy)]
struct Best {
    fid: f64,
    linear: u64,
    point: GridPoint,
}

impl Best {
    /// Higher fidelity wins; near-exact ties go to the lower linear index.
    fn offer(slot: &mut Option<Best>, point: GridPoint, fid: f64) {
        const TIE: f64 = 1e-15;
        let linear = point.linear_index();
        let better = match slot {
            None => true,
            Some(b) => fid > b.fid + TIE || ((fid - b.fid).abs() <= TIE && linear < b.linear),
        };
        if better {
            *slot = Some(Best { fid, linear, point });
        }
    }
}

/// Nearest grid point under the Fubini-Study distance.
///
/// The rotation grid only holds real states; anything else is a domain error.
pub fn quantize(s: &PureQubit, spec: &PrecisionSpec) -> Result<GridPoint> {
    match spec.mode {
        GridMode::RealRotation => quantize_rotation(s, spec),
        GridMode::General => Ok(quantize_general(s, spec)),
    }
}

/// Half-angle `t ∈ [0, π)` of a state that is real up to global phase.
pub fn real_half_angle(s: &PureQubit) -> Result<f64> {
    let aligned = s.phase_aligned();
    if aligned.a1().im.abs() > VALIDATION_TOL {
        return Err(Error::domain(
            "state is not real up to global phase; the rotation grid cannot hold it",
        ));
    }
    let t = aligned.a1().re.atan2(aligned.a0().re);
    Ok(if t < 0.0 { t + PI } else { t })
}

fn quantize_rotation(s: &PureQubit, spec: &PrecisionSpec) -> Result<GridPoint> {
    let t = real_half_angle(s)?;
    let card = spec.cardinality();
    let step = spec.phi_min();
    let k = ((t / step).floor() as u64).min(card - 1);
    let mut best = None;
    for cand in [k.saturating_sub(1), k, k + 1, 0, card - 1] {
        if cand < card {
            let g = GridPoint {
                spec: *spec,
                idx: [cand, 0],
            };
            Best::offer(&mut best, g, fidelity(&dequantize(&g), s));
        }
    }
    Ok(best.expect("rotation grid is never empty").point)
}

fn quantize_general(s: &PureQubit, spec: &PrecisionSpec) -> GridPoint {
    let aligned = s.phase_aligned();
    let c = spec.half_range();
    let cf = c as f64;
    let mut best = None;
    let offer = |j: i64, l: i64, best: &mut Option<Best>| {
        if j < -c || j >= c || l < -c || l >= c || !general_member(j, l, c) {
            return;
        }
        let g = GridPoint {
            spec: *spec,
            idx: [(j + c) as u64, (l + c) as u64],
        };
        Best::offer(best, g, fidelity(&general_state(j, l, c), s));
    };

    // Seed with the neighbourhood of the rounded amplitude and with |↓⟩.
    let j0 = (aligned.a1().re * cf).round() as i64;
    let l0 = (aligned.a1().im * cf).round() as i64;
    for dj in -2..=2 {
        for dl in -2..=2 {
            offer(j0 + dj, l0 + dl, &mut best);
        }
    }
    offer(-c, 0, &mut best);

    // Every grid point g satisfies fs(g, s) ≥ |t_g - t_s| with t = arcsin|a1|,
    // so only an annulus around |a1_s| can beat the current best.
    let t_s = aligned.a1().norm().min(1.0).asin();
    let d = fidelity_to_angle(best.expect("seeded").fid);
    let r_lo = (t_s - d).max(0.0).sin() * cf;
    let r_hi = (t_s + d).min(std::f64::consts::FRAC_PI_2).sin() * cf;
    let lo2 = ((r_lo * r_lo).floor() as i128 - 2).max(0);
    let hi2 = (r_hi * r_hi).ceil() as i128 + 2;
    for j in -c..c {
        let jj = (j as i128) * (j as i128);
        if jj > hi2 {
            continue;
        }
        let l_hi = (hi2 - jj).isqrt() as i64;
        let l_lo = if lo2 > jj {
            (lo2 - jj).isqrt() as i64
        } else {
            0
        };
        for l in l_lo..=l_hi {
            offer(j, l, &mut best);
            if l != 0 {
                offer(j, -l, &mut best);
            }
        }
    }
    best.expect("general grid is never empty").point
}

fn fidelity_to_angle(fid: f64) -> f64 {
    fid.clamp(0.0, 1.0).sqrt().acos()
}

/// Drops the last `n` bits of a grid point's description.
///
/// The rotation grid floors the angle onto the coarser grid; the general grid
/// truncates each signed fixed-point component toward zero by `n/2` bits, so
/// the coarse point always stays inside the unit disc.
pub fn truncate(g: &GridPoint, n: u32) -> Result<GridPoint> {
    let m = g.spec.m;
    if n >= m {
        return Err(Error::validation(format!(
            "cannot drop {n} bits from an {m}-bit description"
        )));
    }
    if n == 0 {
        return Ok(*g);
    }
    let coarse = PrecisionSpec::new(m - n, g.spec.mode).map_err(|e| {
        Error::validation(format!(
            "dropping {n} of {m} bits leaves no valid grid: {e}"
        ))
    })?;
    match g.spec.mode {
        GridMode::RealRotation => {
            let k = g.idx[0];
            let kc = if n.is_multiple_of(2) {
                k >> (n / 2)
            } else {
                (k as f64 * (-(n as f64) / 2.0).exp2()).floor() as u64
            };
            GridPoint::new(coarse, &[kc.min(coarse.cardinality() - 1)])
        }
        GridMode::General => {
            let shift = n / 2;
            let (j, l) = g.signed();
            let cc = coarse.half_range();
            let jc = j / (1i64 << shift);
            let lc = l / (1i64 << shift);
            GridPoint::new(coarse, &[(jc + cc) as u64, (lc + cc) as u64])
        }
    }
}

/// Uniform random grid point.
pub fn sample_grid_point<R: Rng + ?Sized>(spec: &PrecisionSpec, rng: &mut R) -> GridPoint {
    match spec.mode {
        GridMode::RealRotation => GridPoint {
            spec: *spec,
            idx: [rng.random_range(0..spec.cardinality()), 0],
        },
        GridMode::General => {
            let codes = spec.codes_per_component();
            let c = spec.half_range();
            loop {
                let re = rng.random_range(0..codes);
                let im = rng.random_range(0..codes);
                if general_member(re as i64 - c, im as i64 - c, c) {
                    return GridPoint {
                        spec: *spec,
                        idx: [re, im],
                    };
                }
            }
        }
    }
}

/// `size` i.i.d. uniform grid points; identical for identical seeds.
pub fn uniform_ensemble(spec: &PrecisionSpec, size: usize, seed: u64) -> Vec<GridPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| sample_grid_point(spec, &mut rng))
        .collect()
}

//! Emission schedules for clean and timing-steganography streams.
//!
//! Two methods are modeled through their timing signature only:
//!
//! * LACK-style delaying: selected packets are emitted `T2` late. With
//!   `T1 < T2 < 2*T1` a delayed packet leaves after its successor, so the
//!   wire-order gaps around it form three groups: `2*T1` (successor after
//!   predecessor), `|T2 - T1|` (delayed packet after its successor) and
//!   `|2*T1 - T2|` (first regular packet after the delayed one).
//! * Delay modulation: a modulated packet is shifted `+T2` for bit 1 and
//!   `-T2` for bit 0 (`T2 < T1`, so emission order is preserved), which
//!   puts one gap at `T1 + T2` and one at `T1 - T2` per modulated packet.
//!
//! All times are integer microseconds. Schedules are deterministic
//! functions of (spec, method, seed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::NodeId;

/// Parameters of one packet stream: nominal inter-packet interval `T1`
/// and total duration, both in microseconds. The packet count is
/// `duration / T1` (floor).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub id: String,
    pub source: NodeId,
    pub destination: NodeId,
    pub t1_us: u64,
    pub duration_us: u64,
}

impl StreamSpec {
    pub fn packet_count(&self) -> u64 {
        self.duration_us / self.t1_us
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1_us == 0 {
            return Err(Error::InvalidParameter(format!(
                "stream {}: T1 must be positive",
                self.id
            )));
        }
        if self.duration_us < self.t1_us {
            return Err(Error::InvalidParameter(format!(
                "stream {}: duration {} us shorter than T1 {} us",
                self.id, self.duration_us, self.t1_us
            )));
        }
        Ok(())
    }
}

/// Steganography method applied to a stream, or `None` for a clean
/// stream. `p` is the fraction of packets carrying the steganogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum StegMethod {
    None,
    Lack {
        t2_us: u64,
        p: f64,
    },
    DelayMod {
        t2_us: u64,
        p: f64,
        /// Send-buffer length in packets; modeled as a constant
        /// `buffer_len * T1` latency offset.
        buffer_len: u32,
        /// Bits to embed. When absent, a seeded random sequence sized to
        /// the modulated-packet count is generated.
        bits: Option<Vec<bool>>,
    },
}

/// Minimum sequence-number difference between two LACK packets: two
/// regular packets in between keep the three gap groups exact (a closer
/// pair would create gaps outside the groups).
const LACK_MIN_DIFF: u64 = 3;
/// Minimum sequence-number difference between two modulated packets; one
/// packet in between already keeps every gap at `T1` or `T1 +- T2`.
const DELAYMOD_MIN_DIFF: u64 = 2;

impl StegMethod {
    /// Checks the method parameters against the stream's `T1`.
    pub fn validate(&self, t1_us: u64) -> Result<()> {
        match *self {
            StegMethod::None => Ok(()),
            StegMethod::Lack { t2_us, p } => {
                if t2_us == 0 {
                    return Err(Error::InvalidParameter("lack: T2 must be positive".into()));
                }
                check_fraction(p, 1.0 / 3.0, "lack")
            }
            StegMethod::DelayMod {
                t2_us,
                p,
                buffer_len,
                ref bits,
            } => {
                if t2_us == 0 || t2_us >= t1_us {
                    return Err(Error::InvalidParameter(format!(
                        "delaymod: need 0 < T2 < T1, got T2={t2_us} T1={t1_us}"
                    )));
                }
                if buffer_len == 0 {
                    return Err(Error::InvalidParameter(
                        "delaymod: buffer length must be >= 1".into(),
                    ));
                }
                if let Some(b) = bits {
                    if b.is_empty() {
                        return Err(Error::InvalidParameter(
                            "delaymod: explicit bit sequence is empty".into(),
                        ));
                    }
                }
                check_fraction(p, 0.5, "delaymod")
            }
        }
    }
}

fn check_fraction(p: f64, limit: f64, what: &str) -> Result<()> {
    if !p.is_finite() || !(0.0..limit).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "{what}: P must lie in [0, {limit:.4}), got {p}"
        )));
    }
    Ok(())
}

/// One scheduled packet departure at the stream source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmissionEntry {
    pub seq: u64,
    pub emit_us: u64,
    pub steg: bool,
    pub symbol: Option<bool>,
}

/// Per-packet departure times at the source, ordered by sequence number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmissionSchedule {
    pub entries: Vec<EmissionEntry>,
}

impl EmissionSchedule {
    /// Inter-packet gaps in wire (emission-time) order: what a probe at
    /// the first hop observes under zero noise.
    pub fn wire_gaps(&self) -> Vec<u64> {
        let mut times: Vec<u64> = self.entries.iter().map(|e| e.emit_us).collect();
        times.sort_unstable();
        times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn steg_count(&self) -> usize {
        self.entries.iter().filter(|e| e.steg).count()
    }
}

/// Entry `k` departs at `k * T1`.
pub fn schedule_clean(spec: &StreamSpec) -> Result<EmissionSchedule> {
    spec.validate()?;
    let entries = (0..spec.packet_count())
        .map(|k| EmissionEntry {
            seq: k,
            emit_us: k * spec.t1_us,
            steg: false,
            symbol: None,
        })
        .collect();
    Ok(EmissionSchedule { entries })
}

/// Picks steganogram positions by a seeded left-to-right scan over
/// `eligible`, keeping at least `min_diff` between selected sequence
/// numbers. The per-slot probability is inflated to `p / (1 - b*p)`
/// (b = blocked slots per pick) so the realized fraction of all `n`
/// packets comes out at `p` despite the spacing constraint.
fn select_steg_positions(
    n: u64,
    eligible: std::ops::Range<u64>,
    p: f64,
    min_diff: u64,
    rng: &mut ChaCha12Rng,
) -> Vec<u64> {
    if p == 0.0 || n == 0 {
        return Vec::new();
    }
    let blocked = (min_diff - 1) as f64;
    let q = (p / (1.0 - blocked * p)).min(1.0);
    let mut picks = Vec::new();
    let mut next_eligible = eligible.start;
    for k in eligible {
        if k < next_eligible {
            continue;
        }
        if rng.random_bool(q) {
            picks.push(k);
            next_eligible = k + min_diff;
        }
    }
    picks
}

/// LACK schedule: selected packets depart at `k * T1 + T2`, everything
/// else at `k * T1`. Selection is seeded and keeps selected packets at
/// least three sequence numbers apart; the last packet is never selected
/// (a delayed packet needs a successor to swap with).
pub fn schedule_lack(
    spec: &StreamSpec,
    t2_us: u64,
    p: f64,
    rng_seed: u64,
) -> Result<EmissionSchedule> {
    spec.validate()?;
    StegMethod::Lack { t2_us, p }.validate(spec.t1_us)?;
    let n = spec.packet_count();
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let picks = select_steg_positions(n, 0..n.saturating_sub(1), p, LACK_MIN_DIFF, &mut rng);
    let mut schedule = schedule_clean(spec)?;
    for k in picks {
        let e = &mut schedule.entries[k as usize];
        e.emit_us += t2_us;
        e.steg = true;
    }
    Ok(schedule)
}

/// Delay-modulation schedule: every packet carries the constant buffer
/// latency `buffer_len * T1`; a modulated packet is shifted `+T2` for
/// bit 1 and `-T2` for bit 0. Modulated packets are at least two
/// sequence numbers apart and never first or last (the decoder reads the
/// gap on both sides). Explicit bits fill the selected positions in
/// order and must fit.
pub fn schedule_delaymod(
    spec: &StreamSpec,
    t2_us: u64,
    p: f64,
    buffer_len: u32,
    bits: Option<&[bool]>,
    rng_seed: u64,
) -> Result<EmissionSchedule> {
    spec.validate()?;
    StegMethod::DelayMod {
        t2_us,
        p,
        buffer_len,
        bits: None,
    }
    .validate(spec.t1_us)?;

    let n = spec.packet_count();
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let eligible = 1..n.saturating_sub(1);
    let picks = select_steg_positions(n, eligible, p, DELAYMOD_MIN_DIFF, &mut rng);

    let symbols: Vec<bool> = match bits {
        Some(b) => {
            if b.len() > picks.len() {
                return Err(Error::InvalidParameter(format!(
                    "delaymod: {} bits exceed the {} modulated-packet slots selected at P={p}",
                    b.len(),
                    picks.len()
                )));
            }
            b.to_vec()
        }
        None => (0..picks.len()).map(|_| rng.random_bool(0.5)).collect(),
    };

    let latency = u64::from(buffer_len) * spec.t1_us;
    let mut schedule = schedule_clean(spec)?;
    for e in &mut schedule.entries {
        e.emit_us += latency;
    }
    for (&k, &bit) in picks.iter().zip(symbols.iter()) {
        let e = &mut schedule.entries[k as usize];
        e.emit_us = if bit {
            e.emit_us + t2_us
        } else {
            e.emit_us - t2_us
        };
        e.steg = true;
        e.symbol = Some(bit);
    }
    debug_assert!(schedule
        .entries
        .windows(2)
        .all(|w| w[0].emit_us < w[1].emit_us));
    Ok(schedule)
}

/// Expected inter-packet gap values and their fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct GapProfile {
    /// `(gap value in us, expected fraction)` sorted by gap value;
    /// duplicate gap values are merged by summing fractions and the
    /// nominal gap holds the residual, so fractions sum to one.
    pub entries: Vec<(u64, f64)>,
}

impl GapProfile {
    fn from_parts(nominal_us: u64, nominal_fraction: f64, others: &[(u64, f64)]) -> Self {
        let mut merged: Vec<(u64, f64)> = vec![(nominal_us, nominal_fraction)];
        for &(gap, frac) in others {
            match merged.iter_mut().find(|(g, _)| *g == gap) {
                Some((_, f)) => *f += frac,
                None => merged.push((gap, frac)),
            }
        }
        merged.sort_by_key(|&(g, _)| g);
        merged.retain(|&(_, f)| f > 0.0);
        let profile = GapProfile { entries: merged };
        debug_assert!((profile.total_fraction() - 1.0).abs() <= 1e-9);
        profile
    }

    pub fn total_fraction(&self) -> f64 {
        self.entries.iter().map(|&(_, f)| f).sum()
    }

    /// Distinct gap values, ascending: the segmentation seeds.
    pub fn centers(&self) -> Vec<f64> {
        self.entries.iter().map(|&(g, _)| g as f64).collect()
    }

    pub fn fraction_of(&self, gap_us: u64) -> f64 {
        self.entries
            .iter()
            .find(|&&(g, _)| g == gap_us)
            .map_or(0.0, |&(_, f)| f)
    }
}

/// Zero-noise first-hop gap distribution implied by a method.
///
/// * clean: all gaps at `T1`.
/// * LACK: `|T2-T1|`, `2*T1` and `|2*T1-T2|` each at fraction `P`
///   (coinciding values merged), the rest at `T1`.
/// * delay modulation: `T1+T2` and `T1-T2` at `P` each, the rest at `T1`.
pub fn analytic_gap_profile(method: &StegMethod, t1_us: u64) -> GapProfile {
    match *method {
        StegMethod::None => GapProfile::from_parts(t1_us, 1.0, &[]),
        StegMethod::Lack { t2_us, p } => GapProfile::from_parts(
            t1_us,
            1.0 - 3.0 * p,
            &[
                (t2_us.abs_diff(t1_us), p),
                (2 * t1_us, p),
                ((2 * t1_us).abs_diff(t2_us), p),
            ],
        ),
        StegMethod::DelayMod { t2_us, p, .. } => GapProfile::from_parts(
            t1_us,
            1.0 - 2.0 * p,
            &[(t1_us + t2_us, p), (t1_us - t2_us, p)],
        ),
    }
}

/// Recovers the delay-modulation bit sequence from arrival-order gaps of
/// a single (probe, stream) pair.
///
/// Each gap is classified to the nearest of `T1 - T2`, `T1`, `T1 + T2`
/// when within `T2 / 2` of it (farther gaps count as nominal); a
/// high-then-low pair of adjacent gaps reads as 1, low-then-high as 0.
/// A series without modulated gaps yields an empty sequence.
pub fn decode_delaymod(gaps: &[u64], t1_us: u64, t2_us: u64) -> Vec<bool> {
    #[derive(PartialEq, Clone, Copy)]
    enum Class {
        Low,
        Nominal,
        High,
    }
    let threshold = t2_us as f64 / 2.0;
    let classify = |gap: u64| {
        let gap = gap as f64;
        let low = (t1_us - t2_us) as f64;
        let high = (t1_us + t2_us) as f64;
        let mut best = Class::Nominal;
        let mut best_dist = (gap - t1_us as f64).abs();
        if (gap - low).abs() < best_dist {
            best = Class::Low;
            best_dist = (gap - low).abs();
        }
        if (gap - high).abs() < best_dist {
            best = Class::High;
            best_dist = (gap - high).abs();
        }
        if best_dist <= threshold {
            best
        } else {
            Class::Nominal
        }
    };

    let classes: Vec<Class> = gaps.iter().map(|&g| classify(g)).collect();
    let mut bits = Vec::new();
    let mut i = 0;
    while i + 1 < classes.len() {
        match (classes[i], classes[i + 1]) {
            (Class::High, Class::Low) => {
                bits.push(true);
                i += 2;
            }
            (Class::Low, Class::High) => {
                bits.push(false);
                i += 2;
            }
            _ => i += 1,
        }
    }
    bits
}

/// Draws `count` random bits from a seed; used where a scenario leaves
/// the embedded payload unspecified.
pub fn random_bits(count: usize, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_bool(0.5)).collect()
}

/// Adds seeded zero-mean gaussian noise to each gap (clamped at zero);
/// test helper for decoder robustness.
pub fn perturb_gaps(gaps: &[u64], stddev_us: f64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, stddev_us).expect("valid stddev");
    gaps.iter()
        .map(|&g| {
            let noisy = g as f64 + normal.sample(&mut rng);
            noisy.max(0.0).round() as u64
        })
        .collect()
}

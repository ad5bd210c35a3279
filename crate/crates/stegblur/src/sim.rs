//! Discrete-event forwarding of emission schedules along routes.
//!
//! Every node a packet enters adds a constant processing delay plus a
//! jitter draw. Draws are independent per packet and per node unless a
//! node's `rho` enables first-order autoregression across successive
//! packets of the same stream. No FIFO order is enforced on links: a
//! large enough draw reorders packets, the way a delay-emulation qdisc
//! on an outgoing interface would. The whole run is a deterministic
//! function of the scenario (including its seed).

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;
use crate::steg::{schedule_clean, schedule_delaymod, schedule_lack, StegMethod};
use crate::topology::{NodeId, Route};

/// Per-packet jitter distribution at a node, in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Jitter {
    #[default]
    None,
    Uniform {
        lo_us: u64,
        hi_us: u64,
    },
    Normal {
        mean_us: u64,
        stddev_us: u64,
    },
    Exponential {
        mean_us: u64,
    },
}

impl Jitter {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Jitter::None => Ok(()),
            Jitter::Uniform { lo_us, hi_us } => {
                if lo_us > hi_us {
                    Err(Error::InvalidParameter(format!(
                        "uniform jitter: lo {lo_us} > hi {hi_us}"
                    )))
                } else {
                    Ok(())
                }
            }
            Jitter::Normal { .. } => Ok(()),
            Jitter::Exponential { mean_us } => {
                if mean_us == 0 {
                    Err(Error::InvalidParameter(
                        "exponential jitter: mean must be positive".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// One raw (unclamped) sample.
    pub(crate) fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        match *self {
            Jitter::None => 0.0,
            Jitter::Uniform { lo_us, hi_us } => {
                if lo_us == hi_us {
                    lo_us as f64
                } else {
                    rng.random_range(lo_us as f64..hi_us as f64)
                }
            }
            Jitter::Normal { mean_us, stddev_us } => Normal::new(mean_us as f64, stddev_us as f64)
                .expect("validated stddev")
                .sample(rng),
            Jitter::Exponential { mean_us } => Exp::new(1.0 / mean_us as f64)
                .expect("validated mean")
                .sample(rng),
        }
    }
}

/// Per-node delay model: constant processing delay plus jitter, with an
/// optional autoregression coefficient on successive draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(default)]
    pub d_proc_us: u64,
    #[serde(default)]
    pub jitter: Jitter,
    #[serde(default)]
    pub rho: f64,
}

impl NoiseModel {
    /// No delay at all.
    pub fn zero() -> Self {
        NoiseModel {
            d_proc_us: 0,
            jitter: Jitter::None,
            rho: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.jitter.validate()?;
        if !self.rho.is_finite() || !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Overrides the default noise model at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub node: NodeId,
    pub model: NoiseModel,
}

/// One packet observation: which probe saw which packet of which stream,
/// and when.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub probe: NodeId,
    pub stream: String,
    pub seq: u64,
    pub arrival_us: u64,
}

/// Output of one scenario run: every probe record, the route each stream
/// took, and the scenario (with its effective seed) that produced them.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<ProbeRecord>,
    pub routes: Vec<(String, Route)>,
    pub seed: u64,
    pub scenario: ScenarioConfig,
}

impl RunResult {
    /// Probes that lie on no stream route and therefore yielded no
    /// records; a configuration warning, not an error.
    pub fn unused_probes(&self) -> Vec<NodeId> {
        self.scenario
            .probes
            .iter()
            .copied()
            .filter(|p| !self.routes.iter().any(|(_, r)| r.contains(*p)))
            .collect()
    }
}

/// One per-hop delay draw.
///
/// `prev_draw` is the clamped jitter (without `d_proc_us`) drawn for the
/// previous packet at the same node, used when `rho > 0`:
/// `raw = rho * prev + (1 - rho) * sample`. The return value is
/// `max(0, raw) + d_proc_us`; clamping happens before the processing
/// delay is added, mirroring a delay tool that cannot accelerate
/// packets. Subtract `d_proc_us` from the return value to obtain the
/// next `prev_draw`.
pub fn draw_node_delay(model: &NoiseModel, prev_draw: Option<u64>, rng: &mut ChaCha12Rng) -> u64 {
    let sample = model.jitter.sample(rng);
    let raw = match prev_draw {
        Some(prev) if model.rho > 0.0 => model.rho * prev as f64 + (1.0 - model.rho) * sample,
        _ => sample,
    };
    raw.max(0.0).round() as u64 + model.d_proc_us
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable sub-seed derivation, so each (purpose, stream, node) gets an
/// independent deterministic RNG stream.
pub(crate) fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &p in parts {
        state ^= p;
        out = splitmix64(&mut state);
    }
    out
}

const TAG_SCHEDULE: u64 = 0x5343_4845_4455_4c45; // "SCHEDULE"
const TAG_DELAY: u64 = 0x4e4f_4445_4a49_5454; // "NODEJITT"

/// Runs a scenario: schedules every stream, forwards each packet along
/// its route and records arrivals at every probe the route crosses
/// (including the source when it is listed as a probe). Arrival at the
/// i-th route node is the departure time plus the delay draws of every
/// node entered so far.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunResult> {
    let topo = config.build_topology()?;
    config.validate(&topo)?;

    let probe_set: BTreeSet<NodeId> = config.probes.iter().copied().collect();
    let mut records = Vec::new();
    let mut routes = Vec::new();

    for (si, entry) in config.streams.iter().enumerate() {
        let spec = &entry.spec;
        let schedule_seed = derive_seed(config.seed, &[TAG_SCHEDULE, si as u64]);
        let schedule = match &entry.method {
            StegMethod::None => schedule_clean(spec)?,
            StegMethod::Lack { t2_us, p } => schedule_lack(spec, *t2_us, *p, schedule_seed)?,
            StegMethod::DelayMod {
                t2_us,
                p,
                buffer_len,
                bits,
            } => schedule_delaymod(
                spec,
                *t2_us,
                *p,
                *buffer_len,
                bits.as_deref(),
                schedule_seed,
            )?,
        };
        let route = topo.shortest_path(spec.source, spec.destination)?;

        // Per-hop RNG and autoregression state. Streams are simulated
        // independently even where routes share nodes.
        let transit = &route.hops[1..];
        let mut rngs: Vec<ChaCha12Rng> = transit
            .iter()
            .map(|node| {
                ChaCha12Rng::seed_from_u64(derive_seed(
                    config.seed,
                    &[TAG_DELAY, si as u64, u64::from(node.0)],
                ))
            })
            .collect();
        let mut prev_draw: Vec<Option<u64>> = vec![None; transit.len()];
        let models: Vec<&NoiseModel> = transit.iter().map(|n| config.noise_at(*n)).collect();
        let record_at: Vec<bool> = transit.iter().map(|n| probe_set.contains(n)).collect();
        let record_source = probe_set.contains(&route.hops[0]);

        for e in &schedule.entries {
            let mut t = e.emit_us;
            if record_source {
                records.push(ProbeRecord {
                    probe: route.hops[0],
                    stream: spec.id.clone(),
                    seq: e.seq,
                    arrival_us: t,
                });
            }
            for h in 0..transit.len() {
                let delay = draw_node_delay(models[h], prev_draw[h], &mut rngs[h]);
                prev_draw[h] = Some(delay - models[h].d_proc_us);
                t += delay;
                if record_at[h] {
                    records.push(ProbeRecord {
                        probe: transit[h],
                        stream: spec.id.clone(),
                        seq: e.seq,
                        arrival_us: t,
                    });
                }
            }
        }
        routes.push((spec.id.clone(), route));
    }

    Ok(RunResult {
        records,
        routes,
        seed: config.seed,
        scenario: config.clone(),
    })
}

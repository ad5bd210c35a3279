//! Scenario configuration: TOML files, validation and canned presets.
//!
//! Scenario files use field units matching the experiment tables they
//! mirror (milliseconds for `T1`/`T2`, percent for `P`, seconds for the
//! duration), while noise models are written directly in microseconds.
//! Conversion to the internal microsecond representation happens exactly
//! once, at parse time.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::{DisturbanceSpec, Jitter, NoiseModel};
use crate::steg::{StegMethod, StreamSpec};
use crate::topology::{make_line, make_manhattan, NodeId, Topology};

/// How to build the run's topology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologySpec {
    Line {
        n: u32,
    },
    Manhattan {
        w: u32,
        h: u32,
    },
    Edges {
        node_count: u32,
        edges: Vec<(u32, u32)>,
    },
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        match self {
            TopologySpec::Line { n } => make_line(*n),
            TopologySpec::Manhattan { w, h } => make_manhattan(*w, *h),
            TopologySpec::Edges { node_count, edges } => Topology::from_edges(*node_count, edges),
        }
    }
}

/// One stream plus the steganography method applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub spec: StreamSpec,
    pub method: StegMethod,
}

/// A complete, validated experiment description. All times are in
/// microseconds; a run is a pure function of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub topology: TopologySpec,
    pub streams: Vec<StreamEntry>,
    pub default_noise: NoiseModel,
    pub disturbances: Vec<DisturbanceSpec>,
    pub probes: Vec<NodeId>,
    pub duration_us: u64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn build_topology(&self) -> Result<Topology> {
        self.topology.build()
    }

    /// Effective noise model at a node: a disturbance override when one
    /// exists, the scenario default otherwise.
    pub fn noise_at(&self, node: NodeId) -> &NoiseModel {
        self.disturbances
            .iter()
            .find(|d| d.node == node)
            .map(|d| &d.model)
            .unwrap_or(&self.default_noise)
    }

    pub fn validate(&self, topo: &Topology) -> Result<()> {
        if self.duration_us == 0 {
            return Err(Error::InvalidParameter("duration must be positive".into()));
        }
        if self.streams.is_empty() {
            return Err(Error::InvalidParameter(
                "scenario defines no streams".into(),
            ));
        }
        self.default_noise.validate()?;
        for entry in &self.streams {
            entry.spec.validate()?;
            entry.method.validate(entry.spec.t1_us)?;
            for node in [entry.spec.source, entry.spec.destination] {
                if !topo.contains_node(node) {
                    return Err(Error::InvalidParameter(format!(
                        "stream {}: node {node} outside the topology",
                        entry.spec.id
                    )));
                }
            }
            if entry.spec.source == entry.spec.destination {
                return Err(Error::InvalidParameter(format!(
                    "stream {}: source equals destination",
                    entry.spec.id
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.disturbances {
            if !topo.contains_node(d.node) {
                return Err(Error::InvalidParameter(format!(
                    "disturbance node {} outside the topology",
                    d.node
                )));
            }
            if !seen.insert(d.node) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate disturbance on node {}",
                    d.node
                )));
            }
            d.model.validate()?;
        }
        for p in &self.probes {
            if !topo.contains_node(*p) {
                return Err(Error::InvalidParameter(format!(
                    "probe {p} outside the topology"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; written into record files so
    /// analysis never silently runs against records from a different
    /// scenario.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

// ---------------------------------------------------------------------
// Scenario file (TOML) parsing

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: Option<String>,
    duration_s: f64,
    seed: u64,
    probes: Vec<u32>,
    topology: TopologyDoc,
    noise: Option<NoiseModel>,
    #[serde(default)]
    disturbances: Vec<DisturbanceSpec>,
    streams: Vec<StreamDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    kind: String,
    n: Option<u32>,
    w: Option<u32>,
    h: Option<u32>,
    node_count: Option<u32>,
    edges: Option<Vec<(u32, u32)>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamDoc {
    id: String,
    source: u32,
    destination: u32,
    method: String,
    t1_ms: f64,
    t2_ms: Option<f64>,
    p_percent: Option<f64>,
    l: Option<u32>,
    bits: Option<String>,
}

fn ms_to_us(ms: f64, what: &str) -> Result<u64> {
    if !ms.is_finite() || ms < 0.0 {
        return Err(Error::InvalidParameter(format!("{what}: bad value {ms}")));
    }
    Ok((ms * 1_000.0).round() as u64)
}

fn parse_bits(text: &str) -> Result<Vec<bool>> {
    text.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::InvalidParameter(format!(
                "bits: expected 0/1, found {other:?}"
            ))),
        })
        .collect()
}

impl TopologyDoc {
    fn into_spec(self) -> Result<TopologySpec> {
        let missing = |field: &str, kind: &str| {
            Error::InvalidParameter(format!("topology kind={kind} needs field {field}"))
        };
        match self.kind.as_str() {
            "line" => Ok(TopologySpec::Line {
                n: self.n.ok_or_else(|| missing("n", "line"))?,
            }),
            "manhattan" => Ok(TopologySpec::Manhattan {
                w: self.w.ok_or_else(|| missing("w", "manhattan"))?,
                h: self.h.ok_or_else(|| missing("h", "manhattan"))?,
            }),
            "edges" => Ok(TopologySpec::Edges {
                node_count: self
                    .node_count
                    .ok_or_else(|| missing("node_count", "edges"))?,
                edges: self.edges.ok_or_else(|| missing("edges", "edges"))?,
            }),
            other => Err(Error::InvalidParameter(format!(
                "unknown topology kind {other:?}"
            ))),
        }
    }
}

impl StreamDoc {
    fn into_entry(self, duration_us: u64) -> Result<StreamEntry> {
        let t1_us = ms_to_us(self.t1_ms, "t1_ms")?;
        let t2 = || -> Result<u64> {
            ms_to_us(
                self.t2_ms.ok_or_else(|| {
                    Error::InvalidParameter(format!("stream {}: t2_ms required", self.id))
                })?,
                "t2_ms",
            )
        };
        let p = || -> Result<f64> {
            let percent = self.p_percent.ok_or_else(|| {
                Error::InvalidParameter(format!("stream {}: p_percent required", self.id))
            })?;
            Ok(percent / 100.0)
        };
        let method = match self.method.as_str() {
            "none" => StegMethod::None,
            "lack" => StegMethod::Lack {
                t2_us: t2()?,
                p: p()?,
            },
            "delaymod" => StegMethod::DelayMod {
                t2_us: t2()?,
                p: p()?,
                buffer_len: self.l.ok_or_else(|| {
                    Error::InvalidParameter(format!("stream {}: l required", self.id))
                })?,
                bits: self.bits.as_deref().map(parse_bits).transpose()?,
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "stream {}: unknown method {other:?}",
                    self.id
                )))
            }
        };
        Ok(StreamEntry {
            spec: StreamSpec {
                id: self.id,
                source: NodeId(self.source),
                destination: NodeId(self.destination),
                t1_us,
                duration_us,
            },
            method,
        })
    }
}

/// Parses a scenario document, converting interface units (ms, percent,
/// seconds) to microseconds. Syntax errors carry the TOML line/column.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if !doc.duration_s.is_finite() || doc.duration_s <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "duration_s: bad value {}",
            doc.duration_s
        )));
    }
    let duration_us = (doc.duration_s * 1_000_000.0).round() as u64;
    let streams = doc
        .streams
        .into_iter()
        .map(|s| s.into_entry(duration_us))
        .collect::<Result<Vec<_>>>()?;
    let config = ScenarioConfig {
        name: doc.name.unwrap_or_else(|| "scenario".into()),
        topology: doc.topology.into_spec()?,
        streams,
        default_noise: doc.noise.unwrap_or_else(NoiseModel::zero),
        disturbances: doc.disturbances,
        probes: doc.probes.into_iter().map(NodeId).collect(),
        duration_us,
        seed: doc.seed,
    };
    let topo = config.build_topology()?;
    config.validate(&topo)?;
    Ok(config)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)?;
    parse_scenario(&text)
}

// ---------------------------------------------------------------------
// Canned presets

const MS: u64 = 1_000;
const SEC: u64 = 1_000_000;

/// Baseline per-hop noise for the canned presets: 50 us processing plus
/// uniform jitter up to 500 us, independent across packets. Chosen so
/// gap groups stay separable for roughly twenty hops and blur beyond;
/// scenario files may override it freely.
fn default_preset_noise() -> NoiseModel {
    NoiseModel {
        d_proc_us: 50,
        jitter: Jitter::Uniform {
            lo_us: 0,
            hi_us: 500,
        },
        rho: 0.0,
    }
}

fn lack_stream(id: &str, source: u32, destination: u32, p: f64) -> StreamEntry {
    StreamEntry {
        spec: StreamSpec {
            id: id.into(),
            source: NodeId(source),
            destination: NodeId(destination),
            t1_us: 20 * MS,
            duration_us: 120 * SEC,
        },
        method: StegMethod::Lack { t2_us: 30 * MS, p },
    }
}

/// Line of 50 hosts, one LACK stream 0 -> 49 (T1 = 20 ms, T2 = 30 ms,
/// P = 15%), 120 s, probes at every transit node 1..=48.
pub fn case1() -> ScenarioConfig {
    ScenarioConfig {
        name: "case1".into(),
        topology: TopologySpec::Line { n: 50 },
        streams: vec![lack_stream("s0", 0, 49, 0.15)],
        default_noise: default_preset_noise(),
        disturbances: vec![],
        probes: (1..=48).map(NodeId).collect(),
        duration_us: 120 * SEC,
        seed: 1,
    }
}

/// Line of 50 hosts, one delay-modulation stream 0 -> 49 (T1 = 50 ms,
/// T2 = 25 ms, P = 5%, L = 100), 120 s, plus an overloaded node 15
/// adding normal(30 ms, 15 ms) delay to every packet through it.
pub fn case2() -> ScenarioConfig {
    ScenarioConfig {
        name: "case2".into(),
        topology: TopologySpec::Line { n: 50 },
        streams: vec![StreamEntry {
            spec: StreamSpec {
                id: "s0".into(),
                source: NodeId(0),
                destination: NodeId(49),
                t1_us: 50 * MS,
                duration_us: 120 * SEC,
            },
            method: StegMethod::DelayMod {
                t2_us: 25 * MS,
                p: 0.05,
                buffer_len: 100,
                bits: None,
            },
        }],
        default_noise: default_preset_noise(),
        disturbances: vec![DisturbanceSpec {
            node: NodeId(15),
            model: NoiseModel {
                d_proc_us: 50,
                jitter: Jitter::Normal {
                    mean_us: 30 * MS,
                    stddev_us: 15 * MS,
                },
                rho: 0.0,
            },
        }],
        probes: (1..=48).map(NodeId).collect(),
        duration_us: 120 * SEC,
        seed: 1,
    }
}

/// Manhattan 6x6, LACK streams from node 0 to nodes 5 and 35
/// (T1 = 20 ms, T2 = 30 ms, P = 5%), 120 s, thirteen probes forming
/// three "walls" between 0 and 35, and a disturbing node 12 adding
/// normal(30 ms, 15 ms) delay with 15% correlation between successive
/// draws.
pub fn case3() -> ScenarioConfig {
    ScenarioConfig {
        name: "case3".into(),
        topology: TopologySpec::Manhattan { w: 6, h: 6 },
        streams: vec![
            lack_stream("s0", 0, 5, 0.05),
            lack_stream("s1", 0, 35, 0.05),
        ],
        default_noise: default_preset_noise(),
        disturbances: vec![DisturbanceSpec {
            node: NodeId(12),
            model: NoiseModel {
                d_proc_us: 50,
                jitter: Jitter::Normal {
                    mean_us: 30 * MS,
                    stddev_us: 15 * MS,
                },
                rho: 0.15,
            },
        }],
        probes: [1, 6, 7, 3, 9, 15, 21, 20, 19, 18, 34, 28, 29]
            .into_iter()
            .map(NodeId)
            .collect(),
        duration_us: 120 * SEC,
        seed: 1,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["case1", "case2", "case3"]
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "case1" => Some(case1()),
        "case2" => Some(case2()),
        "case3" => Some(case3()),
        _ => None,
    }
}

//! Source localization: rank candidate nodes by how well blur grows
//! with hop distance from them.
//!
//! For a candidate `c` each (probe, stream) measurement point
//! contributes a pair (hop distance from `c` to the probe, blur metric
//! at that probe). The candidate's score is the mean over the three
//! blur metrics of the Spearman rank correlation between distance and
//! metric: spread and entropy grow away from the source and count
//! as-is, group separation shrinks and is negated.
//!
//! The verdict is flagged confident only when the top score clears the
//! absolute threshold `tau` AND exceeds, by the margin `delta`, the
//! largest correlation that could plausibly arise by chance at the
//! available number of measurement points (a one-sided 99% critical
//! value). With only a handful of probes even a perfectly ordered blur
//! gradient stays below that bar, so sparse observations are reported
//! as inconclusive.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::analysis::{BlurMetrics, RunAnalysis};
use crate::error::{Error, Result};
use crate::sim::RunResult;
use crate::topology::{NodeId, Topology};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_DELTA: f64 = 0.1;

/// One candidate's aggregate distance-vs-blur correlation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateScore {
    #[serde(rename = "node")]
    pub candidate: NodeId,
    pub score: f64,
    #[serde(skip)]
    pub probes_used: usize,
}

/// Ranked candidates plus the confidence verdict and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationResult {
    pub ranking: Vec<CandidateScore>,
    pub confident: bool,
    pub tau: f64,
    pub delta: f64,
    pub probes_used: usize,
}

impl LocalizationResult {
    pub fn top(&self) -> &CandidateScore {
        &self.ranking[0]
    }
}

/// Localization of every stream originating at one source node,
/// correlated jointly across the source's routes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceReport {
    pub source: NodeId,
    pub streams: Vec<String>,
    #[serde(flatten)]
    pub result: LocalizationResult,
}

/// Average ranks, ties averaged.
fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; zero when either side has no variation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman inputs must pair up");
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..n {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// One-sided 99% critical value for a Spearman correlation observed at
/// `n` points (Fisher z approximation, se = 1.06 / sqrt(n - 3)): the
/// smallest correlation that is distinguishable from chance ordering.
/// At n <= 3 nothing is, so the bound is 1.
pub fn min_supported_correlation(n: usize) -> f64 {
    if n <= 3 {
        return 1.0;
    }
    const Z_99: f64 = 2.326_348;
    (Z_99 * 1.06 / ((n - 3) as f64).sqrt()).tanh()
}

/// Scores every candidate against the measurement points and flags the
/// verdict. `metrics` holds one entry per (probe, stream) pair; probes
/// may repeat across streams of one source.
pub fn localize(
    metrics: &[BlurMetrics],
    topo: &Topology,
    candidates: &[NodeId],
    tau: f64,
    delta: f64,
) -> Result<LocalizationResult> {
    let n = metrics.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "localization needs at least 3 measurement points, got {n}"
        )));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty candidate set".into()));
    }

    let stddev: Vec<f64> = metrics.iter().map(|m| m.gap_stddev_us).collect();
    let entropy: Vec<f64> = metrics.iter().map(|m| m.histogram_entropy_bits).collect();
    let separation: Vec<f64> = metrics.iter().map(|m| m.separation_score).collect();

    let mut ranking = Vec::with_capacity(candidates.len());
    for &candidate in candidates {
        if !topo.contains_node(candidate) {
            return Err(Error::InvalidParameter(format!(
                "candidate {candidate} outside the topology"
            )));
        }
        let dist_field = topo.bfs_distances(candidate);
        let distances: Vec<f64> = metrics
            .iter()
            .map(|m| dist_field[m.probe.index()] as f64)
            .collect();
        let score = (spearman(&distances, &stddev) + spearman(&distances, &entropy)
            - spearman(&distances, &separation))
            / 3.0;
        ranking.push(CandidateScore {
            candidate,
            score,
            probes_used: n,
        });
    }
    ranking.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.candidate.0.cmp(&b.candidate.0))
    });

    let top = ranking[0].score;
    let confident = top >= tau && top - min_supported_correlation(n) >= delta;
    Ok(LocalizationResult {
        ranking,
        confident,
        tau,
        delta,
        probes_used: n,
    })
}

/// Localizes every source in a run. Streams are analyzed separately but
/// all streams leaving one source share a single candidate scoring, so
/// a multi-destination source contributes measurement points from all
/// of its routes. Candidates default to every node on any of those
/// routes. Sources without enough points are skipped and reported in
/// the second return value.
pub fn localize_run(
    run: &RunResult,
    analysis: &RunAnalysis,
    tau: f64,
    delta: f64,
) -> Result<(Vec<SourceReport>, Vec<String>)> {
    let topo = run.scenario.build_topology()?;

    let mut sources: Vec<NodeId> = Vec::new();
    for entry in &run.scenario.streams {
        if !sources.contains(&entry.spec.source) {
            sources.push(entry.spec.source);
        }
    }

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for source in sources {
        let stream_ids: Vec<String> = run
            .scenario
            .streams
            .iter()
            .filter(|e| e.spec.source == source)
            .map(|e| e.spec.id.clone())
            .collect();

        let mut metrics: Vec<BlurMetrics> = Vec::new();
        let mut candidate_set: BTreeSet<NodeId> = BTreeSet::new();
        for id in &stream_ids {
            if let Some(sa) = analysis.stream(id) {
                metrics.extend(sa.probes.iter().map(|p| p.blur.clone()));
            }
            if let Some((_, route)) = run.routes.iter().find(|(rid, _)| rid == id) {
                candidate_set.extend(route.hops.iter().copied());
            }
        }
        let candidates: Vec<NodeId> = candidate_set.into_iter().collect();
        match localize(&metrics, &topo, &candidates, tau, delta) {
            Ok(result) => reports.push(SourceReport {
                source,
                streams: stream_ids,
                result,
            }),
            Err(Error::InsufficientData(msg)) => {
                skipped.push(format!("source {source}: {msg}"));
            }
            Err(e) => return Err(e),
        }
    }
    if reports.is_empty() {
        return Err(Error::InsufficientData(
            "no source has enough measurement points to localize".into(),
        ));
    }
    Ok((reports, skipped))
}

/// Deterministic JSON for the localization reports (one object per
/// source).
pub fn reports_json(reports: &[SourceReport]) -> String {
    let mut text = serde_json::to_string_pretty(reports).expect("reports serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::make_line;

    fn metric(probe: u32, sd: f64, entropy: f64, sep: f64) -> BlurMetrics {
        BlurMetrics {
            probe: NodeId(probe),
            gap_stddev_us: sd,
            separation_score: sep,
            histogram_entropy_bits: entropy,
        }
    }

    /// Synthetic monotone blur away from node 0 on a line.
    fn monotone_line_metrics(probes: impl Iterator<Item = u32>) -> Vec<BlurMetrics> {
        probes
            .map(|p| {
                let h = p as f64;
                metric(p, 200.0 * h.sqrt(), 2.0 + 0.05 * h, 50.0 / h.sqrt())
            })
            .collect()
    }

    #[test]
    fn spearman_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[9.0, 7.0, 5.0, 3.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[5.0, 5.0, 5.0, 5.0]), 0.0);
        // monotone in ranks, not values
        assert!((spearman(&x, &[1.0, 100.0, 101.0, 1e6]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_with_ties_uses_average_ranks() {
        let x = [1.0, 1.0, 3.0, 3.0, 9.0];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let rho = spearman(&x, &y);
        assert!((rho - 0.9486832980505139).abs() < 1e-12, "rho = {rho}");
    }

    #[test]
    fn critical_value_shrinks_with_probes() {
        assert_eq!(min_supported_correlation(3), 1.0);
        let c5 = min_supported_correlation(5);
        let c10 = min_supported_correlation(10);
        let c48 = min_supported_correlation(48);
        assert!(c5 > c10 && c10 > c48);
        assert!((c5 - 0.940).abs() < 0.01, "c5 = {c5}");
        assert!((c48 - 0.352).abs() < 0.01, "c48 = {c48}");
    }

    #[test]
    fn dense_monotone_blur_localizes_the_source() {
        let topo = make_line(50).unwrap();
        let metrics = monotone_line_metrics(1..=48);
        let candidates: Vec<NodeId> = (0..50).map(NodeId).collect();
        let result = localize(&metrics, &topo, &candidates, DEFAULT_TAU, DEFAULT_DELTA).unwrap();
        assert!(
            result.top().candidate.0 <= 1,
            "top {}",
            result.top().candidate
        );
        assert!(result.confident);
        // reflection sanity: the far end scores strictly worse
        let score_0 = result
            .ranking
            .iter()
            .find(|c| c.candidate == NodeId(0))
            .unwrap()
            .score;
        let score_49 = result
            .ranking
            .iter()
            .find(|c| c.candidate == NodeId(49))
            .unwrap()
            .score;
        assert!(score_0 > score_49);
    }

    #[test]
    fn sparse_probes_stay_inconclusive() {
        // The same perfectly monotone blur, but only five measurement
        // points: no confident verdict at this sample size.
        let topo = make_line(50).unwrap();
        let metrics = monotone_line_metrics([1, 3, 9, 20, 40].into_iter());
        let candidates: Vec<NodeId> = (0..50).map(NodeId).collect();
        let result = localize(&metrics, &topo, &candidates, DEFAULT_TAU, DEFAULT_DELTA).unwrap();
        assert!(!result.confident);
        assert!(result.top().score > 0.9, "gradient itself is clean");
    }

    #[test]
    fn constant_metrics_score_zero() {
        let topo = make_line(10).unwrap();
        let metrics: Vec<BlurMetrics> = (1..=8).map(|p| metric(p, 5.0, 2.0, 7.0)).collect();
        let candidates: Vec<NodeId> = (0..10).map(NodeId).collect();
        let result = localize(&metrics, &topo, &candidates, DEFAULT_TAU, DEFAULT_DELTA).unwrap();
        assert!(result.ranking.iter().all(|c| c.score == 0.0));
        assert!(!result.confident);
    }

    #[test]
    fn scaling_metrics_preserves_ranking() {
        let topo = make_line(50).unwrap();
        let metrics = monotone_line_metrics(1..=20);
        let scaled: Vec<BlurMetrics> = metrics
            .iter()
            .map(|m| BlurMetrics {
                probe: m.probe,
                gap_stddev_us: m.gap_stddev_us * 37.5,
                separation_score: m.separation_score * 0.01,
                histogram_entropy_bits: m.histogram_entropy_bits * 3.0,
            })
            .collect();
        let candidates: Vec<NodeId> = (0..50).map(NodeId).collect();
        let a = localize(&metrics, &topo, &candidates, 0.5, 0.1).unwrap();
        let b = localize(&scaled, &topo, &candidates, 0.5, 0.1).unwrap();
        let order_a: Vec<u32> = a.ranking.iter().map(|c| c.candidate.0).collect();
        let order_b: Vec<u32> = b.ranking.iter().map(|c| c.candidate.0).collect();
        assert_eq!(order_a, order_b);
    }

    #[test]
    fn too_few_points_error() {
        let topo = make_line(10).unwrap();
        let metrics = monotone_line_metrics([1, 2].into_iter());
        let candidates = vec![NodeId(0)];
        assert!(matches!(
            localize(&metrics, &topo, &candidates, 0.5, 0.1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn unattainable_tau_is_never_confident() {
        let topo = make_line(50).unwrap();
        let metrics = monotone_line_metrics(1..=48);
        let candidates: Vec<NodeId> = (0..50).map(NodeId).collect();
        let result = localize(&metrics, &topo, &candidates, 1.01, 0.1).unwrap();
        assert!(!result.confident);
    }

    #[test]
    fn run_localization_matches_direct_call_for_single_stream() {
        use crate::analysis::analyze_run;
        use crate::scenario::{ScenarioConfig, StreamEntry, TopologySpec};
        use crate::sim::{run_scenario, Jitter, NoiseModel};
        use crate::steg::{StegMethod, StreamSpec};

        let mut config = ScenarioConfig {
            name: "single".into(),
            topology: TopologySpec::Line { n: 10 },
            streams: vec![StreamEntry {
                spec: StreamSpec {
                    id: "s0".into(),
                    source: NodeId(0),
                    destination: NodeId(9),
                    t1_us: 20_000,
                    duration_us: 40_000_000,
                },
                method: StegMethod::Lack {
                    t2_us: 30_000,
                    p: 0.15,
                },
            }],
            default_noise: NoiseModel {
                d_proc_us: 50,
                jitter: Jitter::Uniform {
                    lo_us: 0,
                    hi_us: 500,
                },
                rho: 0.0,
            },
            disturbances: vec![],
            probes: (1..=8).map(NodeId).collect(),
            duration_us: 40_000_000,
            seed: 21,
        };

        // add a second, unanalyzable single-packet stream from another
        // source: it must be skipped without disturbing the first
        let mut tiny = config.streams[0].clone();
        tiny.spec.id = "tiny".into();
        tiny.spec.source = NodeId(9);
        tiny.spec.destination = NodeId(0);
        tiny.spec.t1_us = 40_000_000;
        tiny.method = StegMethod::None;
        config.streams.push(tiny);

        let run = run_scenario(&config).unwrap();
        let analysis = analyze_run(&run).unwrap();
        let (reports, skipped) = localize_run(&run, &analysis, DEFAULT_TAU, DEFAULT_DELTA).unwrap();
        assert_eq!(reports.len(), 1, "only the analyzable source is scored");
        assert_eq!(reports[0].source, NodeId(0));
        assert_eq!(skipped.len(), 1, "single-packet source is skipped");

        // a single-stream source localizes exactly as a direct call
        let topo = config.build_topology().unwrap();
        let metrics: Vec<BlurMetrics> = analysis
            .stream("s0")
            .unwrap()
            .probes
            .iter()
            .map(|p| p.blur.clone())
            .collect();
        let candidates: Vec<NodeId> = (0..10).map(NodeId).collect();
        let direct = localize(&metrics, &topo, &candidates, DEFAULT_TAU, DEFAULT_DELTA).unwrap();
        assert_eq!(reports[0].result, direct);
    }

    #[test]
    fn ranking_is_total_permutation() {
        let topo = make_line(20).unwrap();
        let metrics = monotone_line_metrics(1..=18);
        let candidates: Vec<NodeId> = (0..20).map(NodeId).collect();
        let result = localize(&metrics, &topo, &candidates, 0.5, 0.1).unwrap();
        let mut seen: Vec<u32> = result.ranking.iter().map(|c| c.candidate.0).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
        // exact score ties break toward the lower node id
        for w in result.ranking.windows(2) {
            if w[0].score == w[1].score {
                assert!(w[0].candidate.0 < w[1].candidate.0);
            }
        }
    }
}

//! Event-based reporting: centers upload parameters only when their local
//! concordance improved by at least ε since the previous round.
//!
//! Round 0 is a mandatory full round that also establishes each center's
//! baseline concordance. In every later round the datasets evolve per their
//! perturbation schedules, each center refits locally from scratch and
//! applies the upload rule; only participants' (β, r_k) reach aggregation,
//! but every center receives and applies the broadcast result. If no center
//! participates, aggregation is skipped and the previous global parameters
//! are rebroadcast.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::cluster;
use crate::datagen::{self, PerturbationSchedule, SimulationConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::survival::FitOptions;

use super::{
    apply_to_center, check_nonempty, fit_local_models, id_order, participation_decision,
    presence_vectors, weighted_average, AggregationResult, Center, CenterRound, PhaseTimings,
    RoundReport,
};

/// Which one-shot aggregator runs inside each event round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregatorKind {
    /// Common-feature averaging over the participants.
    CommonFeature,
    /// Presence-clustered component-wise averaging with the given cluster
    /// count (capped at the number of participants per round).
    Clustered { clusters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventReportingConfig {
    /// Minimum concordance improvement that triggers an upload.
    pub epsilon: f64,
    /// Total number of rounds including the mandatory round 0; must be >= 2.
    pub rounds: usize,
}

/// Run the protocol. `schedules[i]` is the growth schedule of `centers[i]`;
/// fresh rows are generated under `sim` (the same law that produced the
/// cohorts).
pub fn run_event_based(
    centers: &mut [Center],
    schedules: &[PerturbationSchedule],
    sim: &SimulationConfig,
    config: &EventReportingConfig,
    aggregator: AggregatorKind,
    seed: u64,
    options: &FitOptions,
) -> Result<Vec<RoundReport>> {
    check_nonempty(centers)?;
    if config.rounds < 2 {
        return Err(Error::invalid("event-based runs need >= 2 rounds"));
    }
    if config.epsilon < 0.0 {
        return Err(Error::invalid("epsilon must be >= 0"));
    }
    if schedules.len() != centers.len() {
        return Err(Error::DimensionMismatch {
            expected: centers.len(),
            actual: schedules.len(),
        });
    }

    let mut reports = Vec::with_capacity(config.rounds);
    let mut last_global: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();

    for round in 0..config.rounds {
        let mut timings = PhaseTimings::default();

        // Perturb and refit. Round 0 uses the cohorts as-is.
        if round > 0 {
            let perturbed = exec::par_map(centers, |center| {
                datagen::perturb_dataset(
                    &center.dataset,
                    schedules[center.id],
                    sim,
                    center.id,
                    round,
                )
            });
            for (center, dataset) in centers.iter_mut().zip(perturbed) {
                center.dataset = dataset?;
                center.local_model = None;
                center.last_cindex = None;
            }
        }
        let previous_ci: Vec<Option<f64>> = reports
            .last()
            .map(|r: &RoundReport| {
                centers
                    .iter()
                    .map(|c| {
                        r.per_center
                            .iter()
                            .find(|pc| pc.center_id == c.id)
                            .map(|pc| pc.cindex_before)
                    })
                    .collect()
            })
            .unwrap_or_else(|| vec![None; centers.len()]);
        timings.local_fit = fit_local_models(centers, options)?;

        // Upload decision against the previous round's local concordance.
        let participated: Vec<bool> = centers
            .iter()
            .enumerate()
            .map(|(i, center)| {
                let current = center.last_cindex.expect("cached concordance");
                match previous_ci[i] {
                    None => true, // round 0: everyone reports
                    Some(previous) => participation_decision(current, previous, config.epsilon),
                }
            })
            .collect();
        let uploads = participated.iter().filter(|p| **p).count();

        // Aggregate over participants only.
        let started = Instant::now();
        let mut aggregation = if uploads == 0 {
            log::warn!("round {round}: every center opted out; rebroadcasting previous parameters");
            AggregationResult {
                per_cluster_beta: last_global.clone(),
                cluster_assignment: None,
                common_features: None,
            }
        } else {
            aggregate_participants(centers, &participated, aggregator, seed)?
        };
        timings.aggregation = started.elapsed();

        // Broadcast: every center applies its cluster's parameters (or the
        // single global map), participant or not.
        let membership: BTreeMap<usize, usize> = match &aggregation.cluster_assignment {
            Some(assignment) => assignment.assignment.clone(),
            None => centers.iter().map(|c| (c.id, 0usize)).collect(),
        };
        for center in centers.iter_mut() {
            let cluster = membership.get(&center.id).copied().unwrap_or(0);
            if let Some(global) = aggregation.per_cluster_beta.get(&cluster) {
                apply_to_center(center, global);
            }
        }

        // Evaluate the received model; the participation baseline for the
        // next round stays the *local* refit concordance.
        let after: Vec<Result<f64>> = exec::par_map(centers, |center| {
            center.concordance_of(center.local_model.as_ref().expect("model present"))
        });
        let mut per_center = Vec::with_capacity(centers.len());
        for ((center, after), participated) in centers.iter().zip(after).zip(participated.iter()) {
            per_center.push(CenterRound {
                center_id: center.id,
                cindex_before: center.last_cindex.expect("cached concordance"),
                cindex_after: after?,
                participated: *participated,
            });
        }

        if uploads > 0 {
            last_global = aggregation.per_cluster_beta.clone();
        } else {
            aggregation.per_cluster_beta = last_global.clone();
        }
        reports.push(RoundReport {
            round,
            per_center,
            aggregation,
            timings,
            uploads,
        });
    }
    Ok(reports)
}

/// One aggregation pass restricted to the participating centers. Cluster
/// membership (for the clustered aggregator) is computed over *all* centers
/// — presence bits are metadata, not gated parameters — but only
/// participants contribute coefficients.
fn aggregate_participants(
    centers: &[Center],
    participated: &[bool],
    aggregator: AggregatorKind,
    seed: u64,
) -> Result<AggregationResult> {
    let order = id_order(centers);
    let participants: Vec<usize> = order.iter().copied().filter(|&i| participated[i]).collect();
    debug_assert!(!participants.is_empty());

    match aggregator {
        AggregatorKind::CommonFeature => {
            let mut common = centers[participants[0]].dataset.feature_set();
            for &i in &participants[1..] {
                let set = centers[i].dataset.feature_set();
                common = common.intersection(&set).cloned().collect();
            }
            let contributions: Vec<(&BTreeMap<String, f64>, usize)> = participants
                .iter()
                .map(|&i| {
                    (
                        &centers[i]
                            .local_model
                            .as_ref()
                            .expect("model present")
                            .coefficients,
                        centers[i].weight(),
                    )
                })
                .collect();
            let mut global = BTreeMap::new();
            for feature in &common {
                if let Some(value) = weighted_average(&contributions, feature) {
                    global.insert(feature.clone(), value);
                }
            }
            Ok(AggregationResult {
                per_cluster_beta: BTreeMap::from([(0, global)]),
                cluster_assignment: None,
                common_features: Some(common),
            })
        }
        AggregatorKind::Clustered { clusters } => {
            let c = clusters.clamp(1, centers.len());
            let (_registry, vectors) = presence_vectors(centers)?;
            // Presence bits never change across rounds, so a fixed seed keeps
            // the clustering stable for the whole run.
            let assignment = cluster::hamming_kmeans(&vectors, c, seed)?;
            let mut per_cluster_beta = BTreeMap::new();
            for cluster_index in 0..c {
                let member_participants: Vec<usize> = participants
                    .iter()
                    .copied()
                    .filter(|&i| assignment.assignment[&centers[i].id] == cluster_index)
                    .collect();
                let contributions: Vec<(&BTreeMap<String, f64>, usize)> = member_participants
                    .iter()
                    .map(|&i| {
                        (
                            &centers[i]
                                .local_model
                                .as_ref()
                                .expect("model present")
                                .coefficients,
                            centers[i].weight(),
                        )
                    })
                    .collect();
                let mut features: std::collections::BTreeSet<String> = Default::default();
                for &i in &member_participants {
                    features.extend(centers[i].dataset.feature_names().iter().cloned());
                }
                let mut aggregated = BTreeMap::new();
                for feature in &features {
                    if let Some(value) = weighted_average(&contributions, feature) {
                        aggregated.insert(feature.clone(), value);
                    }
                }
                per_cluster_beta.insert(cluster_index, aggregated);
            }
            Ok(AggregationResult {
                per_cluster_beta,
                cluster_assignment: Some(assignment),
                common_features: None,
            })
        }
    }
}

//! Federated learning rounds over multiple centers.
//!
//! Two one-shot aggregation strategies — common-feature averaging over all
//! centers ([`run_common_feature_round`], `alg1` in configs and result
//! tables) and feature-presence clustered component-wise averaging
//! ([`run_clustered_round`], `alg2`) — plus a loss-driven iterative
//! clustering baseline ([`run_ifca`]), the event-based reporting protocol
//! ([`run_event_based`]) and a synchronized gradient loop for
//! contraction-rate verification ([`run_gradient_mode`]).
//!
//! Local fits and concordance evaluations run data-parallel across centers;
//! every reduction over centers happens in fixed center-id order, so results
//! do not depend on scheduling.

mod event;
mod gradient;
mod ifca;

pub use event::{run_event_based, AggregatorKind, EventReportingConfig};
pub use gradient::{run_gradient_mode, GradientModeOptions, GradientTrajectory, StartPoint};
pub use ifca::run_ifca;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crate::cluster::{self, ClusterAssignment, FeatureRegistry};
use crate::error::{Error, Result};
use crate::exec;
use crate::survival::{self, CoxModel, FitOptions, SurvivalDataset};

/// One participating center: its cohort, cached local model and the
/// concordance of that model.
///
/// Models are scored on `eval_dataset` when one is attached (the improvement
/// experiments hold out a fresh cohort from the same law, so accuracy gains
/// are not masked by the local fit's in-sample advantage) and on the fitting
/// cohort itself otherwise.
#[derive(Debug, Clone)]
pub struct Center {
    pub id: usize,
    pub dataset: SurvivalDataset,
    pub eval_dataset: Option<SurvivalDataset>,
    pub local_model: Option<CoxModel>,
    pub last_cindex: Option<f64>,
}

impl Center {
    pub fn new(id: usize, dataset: SurvivalDataset) -> Self {
        Center {
            id,
            dataset,
            eval_dataset: None,
            local_model: None,
            last_cindex: None,
        }
    }

    pub fn with_eval(mut self, eval: SurvivalDataset) -> Self {
        self.eval_dataset = Some(eval);
        self
    }

    /// Aggregation weight r_k: the number of rows in the center's dataset.
    pub fn weight(&self) -> usize {
        self.dataset.n_subjects()
    }

    /// Concordance of the given model's coefficients at this center.
    pub fn concordance_of(&self, model: &CoxModel) -> Result<f64> {
        let data = self.eval_dataset.as_ref().unwrap_or(&self.dataset);
        let beta = model.coefficient_vector(data);
        survival::concordance_index(data, beta.view())
    }
}

/// Build centers with ids equal to their position.
pub fn centers_from_datasets(datasets: Vec<SurvivalDataset>) -> Vec<Center> {
    datasets
        .into_iter()
        .enumerate()
        .map(|(i, d)| Center::new(i, d))
        .collect()
}

/// Aggregated coefficients per cluster. Single-pseudo-cluster for the
/// common-feature strategy (which also records the common feature set);
/// the presence-clustered strategy records the clustering itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    pub per_cluster_beta: BTreeMap<usize, BTreeMap<String, f64>>,
    pub cluster_assignment: Option<ClusterAssignment>,
    pub common_features: Option<BTreeSet<String>>,
}

/// Per-center outcome of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterRound {
    pub center_id: usize,
    pub cindex_before: f64,
    pub cindex_after: f64,
    pub participated: bool,
}

/// Wall-clock timings of the three phases the complexity analysis names.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub local_fit: Duration,
    pub clustering: Duration,
    pub aggregation: Duration,
}

impl PhaseTimings {
    /// Algorithm-specific overhead beyond the local fits (the fits are
    /// identical work across strategies).
    pub fn beyond_fit(&self) -> Duration {
        self.clustering + self.aggregation
    }
}

/// Record of one federated round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub per_center: Vec<CenterRound>,
    pub aggregation: AggregationResult,
    pub timings: PhaseTimings,
    /// Number of centers that uploaded parameters this round.
    pub uploads: usize,
}

impl RoundReport {
    pub fn improved_count(&self) -> usize {
        self.per_center
            .iter()
            .filter(|c| c.cindex_after > c.cindex_before)
            .count()
    }
}

/// Component-wise weighted average over the contributions possessing the
/// feature: Σ r_k β_k(f) / Σ r_k. `None` when no contributor has the
/// feature (the caller leaves it at its local value).
pub fn weighted_average(
    contributions: &[(&BTreeMap<String, f64>, usize)],
    feature: &str,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (beta, weight) in contributions {
        if let Some(value) = beta.get(feature) {
            num += *weight as f64 * value;
            den += *weight as f64;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Fit every center without a cached model and cache the concordance of the
/// local model on the center's own data.
///
/// Degenerate fits — zero events, or Newton-Raphson that did not converge
/// (flat or separated likelihoods) — are replaced by the all-zero model,
/// whose concordance on the center's data is 0.5 by construction. Such
/// centers still carry their r_k weight into aggregation.
pub fn fit_local_models(centers: &mut [Center], options: &FitOptions) -> Result<Duration> {
    let started = Instant::now();
    let results = exec::par_map_mut(centers, |center| -> Result<()> {
        if center.local_model.is_none() {
            let model = match survival::fit_cox(&center.dataset, options) {
                Ok(m) if m.converged => m,
                Ok(_) | Err(Error::DegenerateFit) => CoxModel::zeros(&center.dataset),
                Err(e) => return Err(e),
            };
            center.local_model = Some(model);
            center.last_cindex = None;
        }
        if center.last_cindex.is_none() {
            let model = center.local_model.as_ref().expect("just fitted");
            center.last_cindex = Some(center.concordance_of(model)?);
        }
        Ok(())
    });
    for r in results {
        r?;
    }
    Ok(started.elapsed())
}

fn check_nonempty(centers: &[Center]) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::invalid("need at least one center"));
    }
    Ok(())
}

/// Indices of `centers` in ascending center-id order; all reductions walk
/// this order.
fn id_order(centers: &[Center]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by_key(|&i| centers[i].id);
    order
}

fn evaluate_after(centers: &mut [Center]) -> Result<Vec<CenterRound>> {
    let rounds = exec::par_map(centers, |center| -> Result<CenterRound> {
        let model = center.local_model.as_ref().expect("model present");
        Ok(CenterRound {
            center_id: center.id,
            cindex_before: center.last_cindex.expect("cached before-concordance"),
            cindex_after: center.concordance_of(model)?,
            participated: true,
        })
    });
    rounds.into_iter().collect()
}

/// Apply aggregated coefficients to a center's model, touching only the
/// features the center actually owns.
fn apply_to_center(center: &mut Center, aggregated: &BTreeMap<String, f64>) {
    let model = center.local_model.as_mut().expect("model present");
    for (feature, value) in aggregated {
        if let Some(slot) = model.coefficients.get_mut(feature) {
            *slot = *value;
        }
    }
}

/// One-shot common-feature averaging over all centers.
///
/// Computes the intersection of the centers' feature sets, averages the
/// local coefficients of those features weighted by r_k over every center,
/// and writes the result back into each center's model (non-common
/// coefficients keep their local values). An empty intersection completes
/// with an empty aggregation.
pub fn run_common_feature_round(
    centers: &mut [Center],
    options: &FitOptions,
) -> Result<RoundReport> {
    check_nonempty(centers)?;
    let mut timings = PhaseTimings {
        local_fit: fit_local_models(centers, options)?,
        ..Default::default()
    };

    let started = Instant::now();
    let order = id_order(centers);
    let mut common = centers[order[0]].dataset.feature_set();
    for &i in &order[1..] {
        let set = centers[i].dataset.feature_set();
        common = common.intersection(&set).cloned().collect();
    }
    if common.is_empty() {
        log::warn!("no features are common to all centers; nothing to aggregate");
    }

    let contributions: Vec<(&BTreeMap<String, f64>, usize)> = order
        .iter()
        .map(|&i| {
            let c = &centers[i];
            (
                &c.local_model.as_ref().expect("model present").coefficients,
                c.weight(),
            )
        })
        .collect();
    let mut global = BTreeMap::new();
    for feature in &common {
        if let Some(value) = weighted_average(&contributions, feature) {
            global.insert(feature.clone(), value);
        }
    }

    for center in centers.iter_mut() {
        apply_to_center(center, &global);
    }
    timings.aggregation = started.elapsed();

    let uploads = centers.len();
    let per_center = evaluate_after(centers)?;
    Ok(RoundReport {
        round: 0,
        per_center,
        aggregation: AggregationResult {
            per_cluster_beta: BTreeMap::from([(0, global)]),
            cluster_assignment: None,
            common_features: Some(common),
        },
        timings,
        uploads,
    })
}

/// Presence vectors for the given centers over the registry of all their
/// feature names, in center-id order.
pub fn presence_vectors(
    centers: &[Center],
) -> Result<(FeatureRegistry, Vec<cluster::FeaturePresenceVector>)> {
    let registry = FeatureRegistry::from_names(
        centers
            .iter()
            .flat_map(|c| c.dataset.feature_names().iter().cloned()),
    );
    let order = id_order(centers);
    let vectors = order
        .iter()
        .map(|&i| {
            cluster::build_presence_vector(
                centers[i].id,
                &centers[i].dataset.feature_set(),
                &registry,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((registry, vectors))
}

/// One-shot presence-clustered component-wise averaging.
///
/// Centers are clustered by Hamming k-means on their feature presence
/// vectors; within each cluster every feature held by at least one member is
/// averaged over its possessors (weights renormalized over possessors) and
/// written back to the members that own it. With c = 1 and a homogeneous
/// feature space this reproduces [`run_common_feature_round`] exactly.
pub fn run_clustered_round(
    centers: &mut [Center],
    c: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<RoundReport> {
    check_nonempty(centers)?;
    if c < 1 || c > centers.len() {
        return Err(Error::invalid(format!(
            "cluster count {c} must be in 1..={}",
            centers.len()
        )));
    }
    let mut timings = PhaseTimings {
        local_fit: fit_local_models(centers, options)?,
        ..Default::default()
    };

    let started = Instant::now();
    let (_registry, vectors) = presence_vectors(centers)?;
    let assignment = cluster::hamming_kmeans(&vectors, c, seed)?;
    timings.clustering = started.elapsed();

    let started = Instant::now();
    let order = id_order(centers);
    let mut per_cluster_beta = BTreeMap::new();
    for cluster_index in 0..c {
        let members: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| assignment.assignment[&centers[i].id] == cluster_index)
            .collect();
        let contributions: Vec<(&BTreeMap<String, f64>, usize)> = members
            .iter()
            .map(|&i| {
                let center = &centers[i];
                (
                    &center
                        .local_model
                        .as_ref()
                        .expect("model present")
                        .coefficients,
                    center.weight(),
                )
            })
            .collect();
        let mut features: BTreeSet<String> = BTreeSet::new();
        for &i in &members {
            features.extend(centers[i].dataset.feature_names().iter().cloned());
        }
        let mut aggregated = BTreeMap::new();
        for feature in &features {
            if let Some(value) = weighted_average(&contributions, feature) {
                aggregated.insert(feature.clone(), value);
            }
        }
        for &i in &members {
            apply_to_center(&mut centers[i], &aggregated);
        }
        per_cluster_beta.insert(cluster_index, aggregated);
    }
    timings.aggregation = started.elapsed();

    let uploads = centers.len();
    let per_center = evaluate_after(centers)?;
    Ok(RoundReport {
        round: 0,
        per_center,
        aggregation: AggregationResult {
            per_cluster_beta,
            cluster_assignment: Some(assignment),
            common_features: None,
        },
        timings,
        uploads,
    })
}

/// `ci_current - ci_previous >= epsilon`, the upload rule of the
/// event-based protocol.
pub fn participation_decision(ci_current: f64, ci_previous: f64, epsilon: f64) -> bool {
    ci_current - ci_previous >= epsilon
}

//! Experiment drivers: the three-way improvement comparison, the
//! event-based selection-frequency experiment, and the timing sweep.
//!
//! Every driver is a pure function of (config, seed): repetitions draw
//! per-repetition seeds, outputs are ordered by (cluster count, repetition)
//! and all emitted CSVs are deterministic. Timing CSVs are the one
//! exception — wall-clock columns vary run to run.

use std::time::Duration;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::datagen::{self, PerturbGroup, PerturbationSchedule, SimulationConfig};
use crate::error::Result;
use crate::exec;
use crate::federation::{
    centers_from_datasets, run_clustered_round, run_common_feature_round, run_event_based,
    run_ifca, AggregatorKind, Center, EventReportingConfig, RoundReport,
};
use crate::survival::FitOptions;

use super::config::ExperimentConfig;

/// Per-(repetition, cluster count, algorithm) round detail emitted alongside
/// the summary tables.
pub type RunDetail = Vec<(usize, usize, &'static str, RoundReport)>;

/// Improvement counts per cluster count, averaged over repetitions, with a
/// paired t-test over the per-center concordance deltas (clustered averaging
/// minus common-feature averaging, paired by center across all repetitions).
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementTable {
    pub rows: Vec<ImprovementRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementRow {
    pub clusters: usize,
    pub improved_alg1: f64,
    pub improved_ifca: f64,
    pub improved_alg2: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

impl ImprovementTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("clusters,alg1,ifca,alg2,t_stat,p_value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.clusters,
                r.improved_alg1,
                r.improved_ifca,
                r.improved_alg2,
                r.t_statistic,
                r.p_value
            ));
        }
        out
    }
}

/// Per-(group, round) selection frequency with its standard error over
/// repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    pub rows: Vec<EventRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub group: &'static str,
    pub round: usize,
    pub selection_ratio: f64,
    pub stderr: f64,
}

impl EventTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,round,selection_ratio,stderr\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.group, r.round, r.selection_ratio, r.stderr
            ));
        }
        out
    }

    pub fn mean_ratio(&self, group: PerturbGroup, skip_round_zero: bool) -> f64 {
        let rows: Vec<&EventRow> = self
            .rows
            .iter()
            .filter(|r| r.group == group.label() && (!skip_round_zero || r.round > 0))
            .collect();
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|r| r.selection_ratio).sum::<f64>() / rows.len() as f64
    }
}

/// Wall-clock seconds per (algorithm, cluster count, phase).
#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub algorithm: &'static str,
    pub clusters: usize,
    pub phase: &'static str,
    pub seconds: f64,
}

impl TimingTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,clusters,phase,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.algorithm, r.clusters, r.phase, r.seconds
            ));
        }
        out
    }

    /// Sum of the named phase over rows of one algorithm and cluster count.
    pub fn seconds_of(&self, algorithm: &str, clusters: usize, phase: &str) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.clusters == clusters && r.phase == phase)
            .map(|r| r.seconds)
            .sum()
    }
}

/// Detailed per-center outcomes of every run, deterministic (no timing
/// columns) and therefore byte-comparable across identically seeded runs.
pub fn round_reports_csv(rows: &[(usize, usize, &'static str, &RoundReport)]) -> String {
    let mut out = String::from(
        "repetition,clusters,algorithm,round,center,cindex_before,cindex_after,participated\n",
    );
    for (repetition, clusters, algorithm, report) in rows {
        for c in &report.per_center {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                repetition,
                clusters,
                algorithm,
                report.round,
                c.center_id,
                c.cindex_before,
                c.cindex_after,
                u8::from(c.participated)
            ));
        }
    }
    out
}

fn repetition_sim(base: &SimulationConfig, repetition: usize) -> SimulationConfig {
    SimulationConfig::new(
        base.n_centers,
        base.rows_min,
        base.rows_max,
        base.p_total,
        base.n_common,
        base.baseline_lambda,
        base.seed.wrapping_add(repetition as u64),
    )
    .with_censor_bound(base.censor_bound)
}

/// Outcome of one (repetition, cluster count) cell of the improvement
/// experiment.
struct ComparisonCell {
    repetition: usize,
    clusters: usize,
    /// alg1, ifca, alg2 in that order.
    reports: [RoundReport; 3],
    /// Per-center concordance delta of alg2 minus alg1, paired by center.
    paired_deltas: Vec<f64>,
}

/// Run the three strategies on identical cohorts for every cluster count and
/// repetition. Local models are fitted once per repetition and shared by
/// cloning, so the comparison differs only in aggregation.
pub fn run_improvement_experiment(
    config: &ExperimentConfig,
) -> Result<(ImprovementTable, RunDetail)> {
    config.validate()?;
    let options = FitOptions::default();
    let cluster_values = config.clusters.values();

    let fitted: Vec<Result<Vec<Center>>> =
        exec::par_map_indices(config.repetitions, |repetition| {
            let sim = repetition_sim(&config.simulation, repetition);
            let mut centers: Vec<Center> = datagen::generate_federation(&sim)?
                .into_iter()
                .enumerate()
                .map(|(i, dataset)| -> Result<Center> {
                    // Held-out cohort from the same law: improvements are
                    // measured as generalization, not in-sample refit.
                    let eval = datagen::generate_eval_cohort(
                        &sim,
                        i,
                        dataset.feature_names(),
                        dataset.n_subjects(),
                    )?;
                    Ok(Center::new(i, dataset).with_eval(eval))
                })
                .collect::<Result<_>>()?;
            crate::federation::fit_local_models(&mut centers, &options)?;
            Ok(centers)
        });
    let fitted: Vec<Vec<Center>> = fitted.into_iter().collect::<Result<_>>()?;

    let mut cells: Vec<ComparisonCell> = Vec::new();
    for (repetition, base) in fitted.iter().enumerate() {
        let cell_seed = config.seed.wrapping_add(repetition as u64);
        let per_c: Vec<Result<ComparisonCell>> = exec::par_map(&cluster_values, |&clusters| {
            let mut alg1_centers = base.clone();
            let mut ifca_centers = base.clone();
            let mut alg2_centers = base.clone();
            let alg1 = run_common_feature_round(&mut alg1_centers, &options)?;
            let ifca = run_ifca(
                &mut ifca_centers,
                clusters,
                config.rounds,
                cell_seed,
                &options,
            )?;
            let alg2 = run_clustered_round(&mut alg2_centers, clusters, cell_seed, &options)?;
            let paired_deltas = alg2
                .per_center
                .iter()
                .zip(&alg1.per_center)
                .map(|(a2, a1)| {
                    debug_assert_eq!(a2.center_id, a1.center_id);
                    (a2.cindex_after - a2.cindex_before) - (a1.cindex_after - a1.cindex_before)
                })
                .collect();
            Ok(ComparisonCell {
                repetition,
                clusters,
                reports: [alg1, ifca, alg2],
                paired_deltas,
            })
        });
        for cell in per_c {
            cells.push(cell?);
        }
    }
    cells.sort_by_key(|cell| (cell.clusters, cell.repetition));

    let mut rows = Vec::new();
    for &clusters in &cluster_values {
        let of_c: Vec<&ComparisonCell> = cells.iter().filter(|x| x.clusters == clusters).collect();
        let reps = of_c.len() as f64;
        let mean_improved = |idx: usize| {
            of_c.iter()
                .map(|cell| cell.reports[idx].improved_count() as f64)
                .sum::<f64>()
                / reps
        };
        let deltas: Vec<f64> = of_c
            .iter()
            .flat_map(|cell| cell.paired_deltas.iter().copied())
            .collect();
        let (t_statistic, p_value) = paired_t_test(&deltas);
        rows.push(ImprovementRow {
            clusters,
            improved_alg1: mean_improved(0),
            improved_ifca: mean_improved(1),
            improved_alg2: mean_improved(2),
            t_statistic,
            p_value,
        });
    }

    let mut detail = Vec::new();
    for cell in cells {
        let [alg1, ifca, alg2] = cell.reports;
        detail.push((cell.repetition, cell.clusters, "alg1", alg1));
        detail.push((cell.repetition, cell.clusters, "ifca", ifca));
        detail.push((cell.repetition, cell.clusters, "alg2", alg2));
    }
    Ok((ImprovementTable { rows }, detail))
}

/// One-sample t-test of the paired deltas against zero mean. Returns
/// (t, two-sided p).
pub fn paired_t_test(deltas: &[f64]) -> (f64, f64) {
    let n = deltas.len();
    if n < 2 {
        return (0.0, 1.0);
    }
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        // All deltas identical: degenerate; by convention no evidence when
        // the common value is zero, overwhelming evidence otherwise.
        return if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, p)
}

/// Event-based selection-frequency experiment. Centers are assigned to the
/// four growth groups round-robin; each repetition regenerates the cohorts
/// and replays the protocol.
pub fn run_event_experiment(config: &ExperimentConfig) -> Result<(EventTable, RunDetail)> {
    config.validate()?;
    let options = FitOptions::default();
    let groups: Vec<PerturbGroup> = (0..config.simulation.n_centers)
        .map(|i| PerturbGroup::ALL[i % PerturbGroup::ALL.len()])
        .collect();
    let schedules: Vec<PerturbationSchedule> = groups
        .iter()
        .map(|&group| PerturbationSchedule {
            group,
            mode: config.event_mode,
        })
        .collect();
    let aggregator = match config.algorithm {
        super::config::Algorithm::Alg2 => AggregatorKind::Clustered {
            clusters: config.clusters.values()[0],
        },
        _ => AggregatorKind::CommonFeature,
    };

    let runs: Vec<Result<Vec<RoundReport>>> =
        exec::par_map_indices(config.repetitions, |repetition| {
            let sim = repetition_sim(&config.simulation, repetition);
            // Concordance deltas are scored against a fixed held-out cohort
            // per center: growth then shows up as model improvement. Scored
            // in-sample instead, extra rows dilute the fit's own optimism
            // and the selection frequencies invert across the groups.
            let mut centers: Vec<Center> = datagen::generate_federation(&sim)?
                .into_iter()
                .enumerate()
                .map(|(i, dataset)| -> Result<Center> {
                    let eval = datagen::generate_eval_cohort(
                        &sim,
                        i,
                        dataset.feature_names(),
                        dataset.n_subjects(),
                    )?;
                    Ok(Center::new(i, dataset).with_eval(eval))
                })
                .collect::<Result<_>>()?;
            run_event_based(
                &mut centers,
                &schedules,
                &sim,
                &EventReportingConfig {
                    epsilon: config.epsilon,
                    rounds: config.rounds,
                },
                aggregator,
                config.seed.wrapping_add(repetition as u64),
                &options,
            )
        });
    let runs: Vec<Vec<RoundReport>> = runs.into_iter().collect::<Result<_>>()?;

    // Selection ratio per (group, round, repetition), then mean and standard
    // error over repetitions.
    let mut rows = Vec::new();
    for group in PerturbGroup::ALL {
        let members: Vec<usize> = (0..config.simulation.n_centers)
            .filter(|&i| groups[i] == group)
            .collect();
        if members.is_empty() {
            continue;
        }
        for round in 0..config.rounds {
            let ratios: Vec<f64> = runs
                .iter()
                .map(|reports| {
                    let report = &reports[round];
                    let selected = report
                        .per_center
                        .iter()
                        .filter(|c| members.contains(&c.center_id) && c.participated)
                        .count();
                    selected as f64 / members.len() as f64
                })
                .collect();
            let n = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / n;
            let stderr = if ratios.len() > 1 {
                let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            rows.push(EventRow {
                group: group.label(),
                round,
                selection_ratio: mean,
                stderr,
            });
        }
    }

    let mut detail = Vec::new();
    for (repetition, reports) in runs.into_iter().enumerate() {
        for report in reports {
            detail.push((repetition, 0usize, "event", report));
        }
    }
    Ok((EventTable { rows }, detail))
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Timing sweep over cluster counts: fresh unfitted centers per algorithm so
/// each measurement includes the full fit + cluster + aggregate pipeline.
pub fn run_bench_sweep(
    sim: &SimulationConfig,
    cluster_values: &[usize],
    rounds: usize,
    seed: u64,
) -> Result<TimingTable> {
    let options = FitOptions::default();
    let datasets = datagen::generate_federation(sim)?;
    let mut rows = Vec::new();
    for &clusters in cluster_values {
        let mut alg1_centers = centers_from_datasets(datasets.clone());
        let alg1 = run_common_feature_round(&mut alg1_centers, &options)?;
        let mut ifca_centers = centers_from_datasets(datasets.clone());
        let ifca = run_ifca(&mut ifca_centers, clusters, rounds, seed, &options)?;
        let mut alg2_centers = centers_from_datasets(datasets.clone());
        let alg2 = run_clustered_round(&mut alg2_centers, clusters, seed, &options)?;

        for (algorithm, report) in [("alg1", &alg1), ("ifca", &ifca), ("alg2", &alg2)] {
            rows.push(TimingRow {
                algorithm,
                clusters,
                phase: "local_fit",
                seconds: secs(report.timings.local_fit),
            });
            rows.push(TimingRow {
                algorithm,
                clusters,
                phase: "clustering",
                seconds: secs(report.timings.clustering),
            });
            rows.push(TimingRow {
                algorithm,
                clusters,
                phase: "aggregation",
                seconds: secs(report.timings.aggregation),
            });
        }
    }
    Ok(TimingTable { rows })
}

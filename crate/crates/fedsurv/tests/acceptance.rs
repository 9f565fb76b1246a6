//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).
//! Every tolerance and threshold is pinned here, in code.

mod common;

use std::time::{Duration, Instant};

use common::*;
use ndarray::array;
use rand::Rng;

use fedsurv::cluster::{hamming_kmeans, FeaturePresenceVector};
use fedsurv::datagen::{
    generate_eval_cohort, generate_federation, generate_planted_clusters, PerturbGroup,
    SimulationConfig,
};
use fedsurv::federation::{
    centers_from_datasets, presence_vectors, run_common_feature_round, run_gradient_mode, Center,
    GradientModeOptions, StartPoint,
};
use fedsurv::io::{
    round_reports_csv, run_bench_sweep, run_event_experiment, run_improvement_experiment,
    Algorithm, ClusterSpec, ExperimentConfig,
};
use fedsurv::survival::{
    concordance_index, fit_cox, gradient, hessian, neg_log_partial_likelihood, FitOptions,
};

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn budget(criterion: &str, elapsed: Duration, limit: Duration) {
    assert!(
        elapsed <= limit,
        "criterion {criterion} exceeded its runtime budget: {elapsed:?} > {limit:?}"
    );
}

/// Runtime-budgeted criteria take this lock so their wall-clock measurement
/// reflects their own work, not contention with the other criteria saturating
/// the shared thread pool.
static EXCLUSIVE: std::sync::Mutex<()> = std::sync::Mutex::new(());

fn exclusive() -> std::sync::MutexGuard<'static, ()> {
    EXCLUSIVE
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[test]
fn criterion_01_gradient_and_hessian_match_finite_differences() {
    let _lock = exclusive();
    let started = Instant::now();
    let mut rng = seeded_rng(0xC1);
    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for _ in 0..200 {
        let d = random_dataset(&mut rng, 50, 5);
        let beta = random_beta(&mut rng, d.n_features(), 1.0);
        let ridge = if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.01..1.0)
        };

        let analytic = gradient(&d, beta.view(), ridge).unwrap();
        let numeric = finite_difference_gradient(
            |b| neg_log_partial_likelihood(&d, b.view(), ridge).unwrap(),
            &beta,
            1e-6,
        );
        for j in 0..beta.len() {
            let rel = (analytic[j] - numeric[j]).abs() / 1.0f64.max(numeric[j].abs());
            worst_grad = worst_grad.max(rel);
        }

        let h = hessian(&d, beta.view(), ridge).unwrap();
        let h_numeric =
            finite_difference_jacobian(|b| gradient(&d, b.view(), ridge).unwrap(), &beta, 1e-5);
        for i in 0..beta.len() {
            for j in 0..beta.len() {
                let rel =
                    (h[[i, j]] - h_numeric[[i, j]]).abs() / 1.0f64.max(h_numeric[[i, j]].abs());
                worst_hess = worst_hess.max(rel);
            }
        }
    }
    let elapsed = started.elapsed();
    report(
        "1 (derivative correctness)",
        worst_grad < 1e-5 && worst_hess < 1e-4,
        &format!(
            "200 instances: worst gradient rel err {worst_grad:.2e} (< 1e-5), worst Hessian rel err {worst_hess:.2e} (< 1e-4), {elapsed:?}"
        ),
    );
    budget("1", elapsed, Duration::from_secs(10));
}

#[test]
fn criterion_02_fit_matches_grid_search_oracle() {
    let _lock = exclusive();
    let started = Instant::now();
    let d = dataset_from_rows(
        &["a"],
        &[
            (1.0, true, &[1.0]),
            (2.0, false, &[1.0]),
            (3.0, true, &[0.0]),
            (4.0, true, &[1.0]),
            (5.0, false, &[0.0]),
            (6.0, true, &[0.0]),
        ],
    );
    let (grid_beta, _) = grid_search_min(|b| nll_oracle(&d, &array![b], 0.0), -10.0, 10.0, 1e-4);
    let model = fit_cox(&d, &FitOptions::default()).unwrap();
    let fitted = model.coefficients["a"];
    let elapsed = started.elapsed();
    report(
        "2 (fit oracle)",
        model.converged && (fitted - grid_beta).abs() < 1e-3,
        &format!("fitted {fitted:.6} vs grid argmin {grid_beta:.6} (tol 1e-3), {elapsed:?}"),
    );
    budget("2", elapsed, Duration::from_secs(1));
}

#[test]
fn criterion_03_concordance_equals_pairwise_enumeration() {
    let mut rng = seeded_rng(0xC3);
    let mut checked = 0;
    for _ in 0..500 {
        let d = random_dataset(&mut rng, 12, 3);
        let beta = random_beta(&mut rng, d.n_features(), 1.5);
        let ours = concordance_index(&d, beta.view()).unwrap();
        let oracle = concordance_oracle(&d, &beta);
        assert_eq!(ours, oracle, "dataset {checked}: {ours} != {oracle}");
        checked += 1;
    }
    report(
        "3 (concordance oracle)",
        checked == 500,
        &format!("{checked} random datasets matched the O(n^2) enumeration exactly"),
    );
}

#[test]
fn criterion_04_breslow_matches_direct_summation() {
    let mut rng = seeded_rng(0xC4);
    let mut worst = 0.0f64;
    let mut with_ties = 0usize;
    for _ in 0..200 {
        let d = random_dataset(&mut rng, 16, 3);
        let beta = random_beta(&mut rng, d.n_features(), 1.0);
        let ours = fedsurv::survival::breslow_baseline(&d, beta.view()).unwrap();
        let oracle = breslow_oracle(&d, &beta);
        assert_eq!(ours.len(), oracle.len());
        let mut event_times: Vec<f64> = (0..d.n_subjects())
            .filter(|&i| d.event()[i])
            .map(|i| d.time()[i])
            .collect();
        event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let had_tie = event_times.windows(2).any(|w| w[0] == w[1]);
        if had_tie {
            with_ties += 1;
        }
        for ((t1, h1), (t2, h2)) in ours.iter().zip(&oracle) {
            assert_eq!(t1, t2);
            worst = worst.max((h1 - h2).abs());
        }
    }
    report(
        "4 (Breslow oracle)",
        worst < 1e-12 && with_ties > 10,
        &format!(
            "200 datasets ({with_ties} with tied event times): worst deviation {worst:.2e} (< 1e-12)"
        ),
    );
}

#[test]
fn criterion_05_hamming_kmeans_recovers_planted_structure_and_optimum() {
    // Planted recovery via the generator for c = 2 and c = 3.
    for (c, seed) in [(2usize, 1u64), (3, 2)] {
        let cfg = SimulationConfig::new(6 * c, 30, 40, 24, 4, 1.0, seed);
        let datasets = generate_planted_clusters(&cfg, c, seed).unwrap();
        let centers = centers_from_datasets(datasets);
        let (_r, vectors) = presence_vectors(&centers).unwrap();
        let out = hamming_kmeans(&vectors, c, seed).unwrap();
        let mut exact = out.objective == 0;
        for i in 0..centers.len() {
            for j in 0..centers.len() {
                exact &= (out.assignment[&i] == out.assignment[&j]) == (i % c == j % c);
            }
        }
        assert!(exact, "planted {c}-cluster structure not recovered");
    }

    // Best-of-restarts vs the exhaustive-partition optimum.
    let mut rng = seeded_rng(0xC5);
    let trials = 100;
    let mut hits = 0;
    for trial in 0..trials {
        let k = rng.gen_range(4..=10usize);
        let p = rng.gen_range(4..=12usize);
        let c = rng.gen_range(2..=3usize.min(k));
        let bits: Vec<Vec<u8>> = (0..k)
            .map(|_| (0..p).map(|_| u8::from(rng.gen_bool(0.5))).collect())
            .collect();
        let vectors: Vec<FeaturePresenceVector> = bits
            .iter()
            .enumerate()
            .map(|(i, b)| FeaturePresenceVector {
                center_id: i,
                bits: b.clone(),
            })
            .collect();
        let out = hamming_kmeans(&vectors, c, 31_000 + trial as u64).unwrap();
        let optimum = exhaustive_partition_objective(&bits, c);
        assert!(
            out.objective >= optimum,
            "k-means beat the exhaustive lower bound"
        );
        if out.objective == optimum {
            hits += 1;
        }
    }
    report(
        "5 (Hamming k-means)",
        hits * 100 >= 95 * trials,
        &format!("planted 2/3-cluster recovery exact; optimum matched in {hits}/{trials} random trials (need >= 95)"),
    );
}

#[test]
fn criterion_06_improvement_ordering_alg2_vs_alg1() {
    let _lock = exclusive();
    let started = Instant::now();
    let seeds = 10u64;
    let cluster_range = 2..=9usize;
    let mut wins: std::collections::BTreeMap<usize, usize> =
        cluster_range.clone().map(|c| (c, 0)).collect();
    let mut ifca_between = 0usize;
    let mut cells = 0usize;
    for seed in 0..seeds {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::Alg2,
            clusters: ClusterSpec::Range(2, 9),
            repetitions: 1,
            seed,
            simulation: SimulationConfig::new(50, 900, 1100, 100, 11, 1.0, seed),
            ..ExperimentConfig::default()
        };
        let (table, _) = run_improvement_experiment(&cfg).unwrap();
        for row in &table.rows {
            cells += 1;
            if row.improved_alg2 >= row.improved_alg1 {
                *wins.get_mut(&row.clusters).unwrap() += 1;
            }
            if row.improved_alg2 >= row.improved_ifca && row.improved_ifca >= row.improved_alg1 {
                ifca_between += 1;
            }
        }
    }
    let all_ok = wins.values().all(|&w| w * 10 >= 7 * seeds as usize);
    let elapsed = started.elapsed();
    report(
        "6 (improvement ordering)",
        all_ok,
        &format!(
            "50 centers, alg2 >= alg1 wins per c over {seeds} seeds: {wins:?} (need >= 7 each); \
             alg2 >= ifca >= alg1 held in {ifca_between}/{cells} cells (reported, not asserted); {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_06b_degenerate_centers_gain_from_federation() {
    // Degenerate-recovery rider: zero-event fitting data (degenerate local
    // fit, 0.5 by convention) scored on held-out cohorts with events rises
    // above 0.5 after receiving the weighted-by-rows global coefficients.
    let cfg = SimulationConfig::new(1, 800, 800, 1, 1, 1.0, 5);
    let strong = generate_federation(&cfg)
        .unwrap()
        .into_iter()
        .next()
        .unwrap();
    let names: Vec<String> = strong.feature_names().to_vec();
    let censored = |rows: usize| {
        let entries: Vec<(f64, bool, Vec<f64>)> = (0..rows)
            .map(|i| {
                (
                    0.1 + i as f64 * 0.05,
                    false,
                    vec![(i as f64 / rows as f64) - 0.5],
                )
            })
            .collect();
        let borrowed: Vec<(f64, bool, &[f64])> = entries
            .iter()
            .map(|(t, e, xs)| (*t, *e, xs.as_slice()))
            .collect();
        dataset_from_rows(&["f000"], &borrowed)
    };
    let mut centers = vec![
        Center::new(0, censored(40)).with_eval(generate_eval_cohort(&cfg, 0, &names, 400).unwrap()),
        Center::new(1, censored(60)).with_eval(generate_eval_cohort(&cfg, 1, &names, 400).unwrap()),
        Center::new(2, strong),
    ];
    let round = run_common_feature_round(&mut centers, &FitOptions::default()).unwrap();
    let ok = [0usize, 1].iter().all(|&i| {
        round.per_center[i].cindex_before == 0.5 && round.per_center[i].cindex_after > 0.5
    });
    report(
        "6b (degenerate-center recovery)",
        ok,
        &format!(
            "before/after: {:?}",
            round.per_center[..2]
                .iter()
                .map(|r| (r.cindex_before, r.cindex_after))
                .collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_07_contraction_bound_holds_across_twenty_seeds() {
    let _lock = exclusive();
    let started = Instant::now();
    let mut worst_ratio = 0.0f64;
    for seed in 0..20u64 {
        let cfg = SimulationConfig::new(3, 130, 170, 5, 5, 1.0, 1000 + seed);
        let centers = centers_from_datasets(generate_federation(&cfg).unwrap());
        let run = run_gradient_mode(
            &centers,
            &GradientModeOptions {
                eta: None, // picks 0.5 * mu / L^2 from the curvature estimates
                iterations: 200,
                ridge_lambda: 1.0,
                start: StartPoint::Zero,
            },
        )
        .unwrap();
        assert!(
            run.within_guarantee,
            "seed {seed}: eta left the guarantee region"
        );
        let d0_sq = run.distances[0] * run.distances[0];
        for (t, d) in run.distances.iter().enumerate() {
            let bound = run.contraction_factor.powi(t as i32) * d0_sq;
            let ratio = if bound > 0.0 { d * d / bound } else { 0.0 };
            worst_ratio = worst_ratio.max(ratio);
            assert!(
                d * d <= bound * (1.0 + 1e-6),
                "seed {seed}, t = {t}: squared distance {} above bound {bound}",
                d * d
            );
        }
    }
    let elapsed = started.elapsed();
    report(
        "7 (contraction bound)",
        worst_ratio <= 1.0 + 1e-6,
        &format!(
            "20 seeds x 200 iterations at eta = 0.5*mu/L^2: worst (distance^2)/bound = {worst_ratio:.6} (slack 1+1e-6), {elapsed:?}"
        ),
    );
    budget("7", elapsed, Duration::from_secs(30));
}

#[test]
fn criterion_08_event_protocol_selection_frequencies() {
    let _lock = exclusive();
    let started = Instant::now();
    let cfg = ExperimentConfig {
        algorithm: Algorithm::Event,
        clusters: ClusterSpec::One(2),
        epsilon: 1e-5,
        rounds: 5,
        repetitions: 25,
        seed: 0,
        simulation: SimulationConfig::new(20, 900, 1100, 100, 11, 1.0, 0),
        ..ExperimentConfig::default()
    };
    let (table, _) = run_event_experiment(&cfg).unwrap();

    let none_after_round0: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.group == "none" && r.round > 0)
        .map(|r| r.selection_ratio)
        .collect();
    let none_zero = !none_after_round0.is_empty() && none_after_round0.iter().all(|r| *r == 0.0);
    let small = table.mean_ratio(PerturbGroup::Small, true);
    let large = table.mean_ratio(PerturbGroup::Large, true);
    let elapsed = started.elapsed();
    report(
        "8 (event-based protocol)",
        none_zero && large >= small,
        &format!(
            "group none after round 0: {none_after_round0:?} (must all be exactly 0); \
             mean selection ratio large {large:.4} >= small {small:.4}; {elapsed:?}"
        ),
    );
    budget("8", elapsed, Duration::from_secs(300));
}

#[test]
fn criterion_09_clustered_averaging_is_faster_than_ifca() {
    let _lock = exclusive();
    let started = Instant::now();
    let sim = SimulationConfig::new(25, 900, 1100, 100, 11, 1.0, 3);
    let clusters: Vec<usize> = (2..=9).collect();
    let table = run_bench_sweep(&sim, &clusters, 5, 3).unwrap();
    let mut ok = true;
    let mut lines = Vec::new();
    for &c in &clusters {
        // Algorithm-specific phases; the local-fit phase is identical work
        // in both strategies and only adds scheduling noise.
        let alg2 =
            table.seconds_of("alg2", c, "clustering") + table.seconds_of("alg2", c, "aggregation");
        let ifca =
            table.seconds_of("ifca", c, "clustering") + table.seconds_of("ifca", c, "aggregation");
        ok &= alg2 < ifca;
        lines.push(format!("c={c}: alg2 {alg2:.4}s vs ifca {ifca:.4}s"));
    }
    println!("criterion 9 timings CSV:\n{}", table.to_csv());
    let elapsed = started.elapsed();
    report(
        "9 (running-time trend)",
        ok,
        &format!(
            "25 centers, clustering+aggregation phases: {}; {elapsed:?}",
            lines.join("; ")
        ),
    );
}

#[test]
fn criterion_10_runs_are_byte_deterministic() {
    let run_once = || {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::Alg2,
            clusters: ClusterSpec::Range(2, 3),
            repetitions: 2,
            seed: 11,
            simulation: SimulationConfig::new(6, 100, 140, 12, 4, 1.0, 11),
            ..ExperimentConfig::default()
        };
        let (table, detail) = run_improvement_experiment(&cfg).unwrap();
        let rows: Vec<_> = detail
            .iter()
            .map(|(rep, c, alg, report)| (*rep, *c, *alg, report))
            .collect();
        (table.to_csv(), round_reports_csv(&rows))
    };
    let (improvement_a, rounds_a) = run_once();
    let (improvement_b, rounds_b) = run_once();

    let event_once = || {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::Event,
            clusters: ClusterSpec::One(2),
            epsilon: 1e-5,
            rounds: 3,
            repetitions: 3,
            seed: 7,
            simulation: SimulationConfig::new(8, 100, 140, 12, 4, 1.0, 7),
            ..ExperimentConfig::default()
        };
        run_event_experiment(&cfg).unwrap().0.to_csv()
    };
    let event_a = event_once();
    let event_b = event_once();

    // Generated datasets byte-for-byte (save twice, compare bytes).
    let dir = tempfile::tempdir().unwrap();
    let sim = SimulationConfig::new(3, 50, 70, 8, 3, 1.0, 99);
    let mut gen_bytes = Vec::new();
    for pass in 0..2 {
        let mut all = Vec::new();
        for (i, d) in generate_federation(&sim).unwrap().iter().enumerate() {
            let path = dir.path().join(format!("p{pass}_c{i}.csv"));
            fedsurv::io::save_dataset(d, &path).unwrap();
            all.push(std::fs::read(&path).unwrap());
        }
        gen_bytes.push(all);
    }

    let ok = improvement_a == improvement_b
        && rounds_a == rounds_b
        && event_a == event_b
        && gen_bytes[0] == gen_bytes[1];
    report(
        "10 (determinism)",
        ok,
        "improvement, per-round and event CSVs plus generated dataset files are byte-identical across identically seeded runs",
    );
}

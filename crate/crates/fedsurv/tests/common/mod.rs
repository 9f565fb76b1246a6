//! Independent test oracles: straightforward, slow reference
//! implementations kept deliberately separate from the library's code paths.

#![allow(dead_code)] // each integration test binary uses a subset

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedsurv::survival::SurvivalDataset;

pub fn dataset_from_rows(names: &[&str], rows: &[(f64, bool, &[f64])]) -> SurvivalDataset {
    let n = rows.len();
    let p = names.len();
    let mut covariates = Array2::zeros((n, p));
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for (i, (t, e, xs)) in rows.iter().enumerate() {
        assert_eq!(xs.len(), p);
        for (j, x) in xs.iter().enumerate() {
            covariates[[i, j]] = *x;
        }
        time.push(*t);
        event.push(*e);
    }
    SurvivalDataset::new(
        names.iter().map(|s| s.to_string()).collect(),
        covariates,
        time,
        event,
    )
    .unwrap()
}

/// Double-loop negative log partial likelihood: for every event, sum
/// exponentials over its risk set directly. Breslow ties fall out of the
/// definition (tied events see the same risk set).
pub fn nll_oracle(data: &SurvivalDataset, beta: &Array1<f64>, ridge: f64) -> f64 {
    let n = data.n_subjects();
    let x = data.covariates();
    let eta: Vec<f64> = (0..n).map(|i| x.row(i).dot(beta)).collect();
    let mut loss = 0.0;
    for i in 0..n {
        if !data.event()[i] {
            continue;
        }
        let denom: f64 = (0..n)
            .filter(|&j| data.time()[j] >= data.time()[i])
            .map(|j| eta[j].exp())
            .sum();
        loss -= eta[i] - denom.ln();
    }
    loss + 0.5 * ridge * beta.dot(beta)
}

/// Central finite differences of a scalar function.
pub fn finite_difference_gradient<F>(f: F, at: &Array1<f64>, step: f64) -> Array1<f64>
where
    F: Fn(&Array1<f64>) -> f64,
{
    let mut grad = Array1::zeros(at.len());
    let mut point = at.clone();
    for i in 0..at.len() {
        point[i] = at[i] + step;
        let plus = f(&point);
        point[i] = at[i] - step;
        let minus = f(&point);
        point[i] = at[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Central finite differences of a vector function (column j = d f / d x_j).
pub fn finite_difference_jacobian<F>(f: F, at: &Array1<f64>, step: f64) -> Array2<f64>
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
{
    let probe = f(at);
    let mut jac = Array2::zeros((probe.len(), at.len()));
    let mut point = at.clone();
    for j in 0..at.len() {
        point[j] = at[j] + step;
        let plus = f(&point);
        point[j] = at[j] - step;
        let minus = f(&point);
        point[j] = at[j];
        for i in 0..probe.len() {
            jac[[i, j]] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    jac
}

/// Breslow baseline increments by direct summation per distinct event time.
pub fn breslow_oracle(data: &SurvivalDataset, beta: &Array1<f64>) -> Vec<(f64, f64)> {
    let n = data.n_subjects();
    let x = data.covariates();
    let eta: Vec<f64> = (0..n).map(|i| x.row(i).dot(beta)).collect();
    let mut times: Vec<f64> = (0..n)
        .filter(|&i| data.event()[i])
        .map(|i| data.time()[i])
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    times
        .into_iter()
        .map(|t| {
            let d = (0..n)
                .filter(|&i| data.event()[i] && data.time()[i] == t)
                .count() as f64;
            let denom: f64 = (0..n)
                .filter(|&j| data.time()[j] >= t)
                .map(|j| eta[j].exp())
                .sum();
            (t, d / denom)
        })
        .collect()
}

/// Harrell's C by enumerating every ordered pair straight from the
/// definition.
pub fn concordance_oracle(data: &SurvivalDataset, beta: &Array1<f64>) -> f64 {
    let n = data.n_subjects();
    let x = data.covariates();
    let score: Vec<f64> = (0..n).map(|i| x.row(i).dot(beta)).collect();
    let mut comparable = 0u64;
    let mut credit = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // (i, j) comparable iff subject i had an event strictly before
            // subject j's observed time.
            if data.event()[i] && data.time()[i] < data.time()[j] {
                comparable += 1;
                if score[i] > score[j] {
                    credit += 1.0;
                } else if score[i] == score[j] {
                    credit += 0.5;
                }
            }
        }
    }
    if comparable == 0 {
        0.5
    } else {
        credit / comparable as f64
    }
}

/// Grid search for the 1-feature fit oracle: argmin of `f` over
/// [lo, hi] with the given step.
pub fn grid_search_min<F>(f: F, lo: f64, hi: f64, step: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let mut best_x = lo;
    let mut best_v = f(lo);
    let mut x = lo;
    while x <= hi {
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_x = x;
        }
        x += step;
    }
    (best_x, best_v)
}

/// Exhaustive best objective over all partitions of the vectors into at most
/// c non-empty clusters, via restricted-growth-string enumeration. For a
/// fixed partition the optimal binary centroid is the per-bit majority.
pub fn exhaustive_partition_objective(bits: &[Vec<u8>], c: usize) -> u64 {
    fn partition_cost(bits: &[Vec<u8>], assignment: &[usize], blocks: usize) -> u64 {
        let p = bits[0].len();
        let mut total = 0u64;
        for b in 0..blocks {
            let members: Vec<&Vec<u8>> = bits
                .iter()
                .zip(assignment)
                .filter(|(_, &a)| a == b)
                .map(|(v, _)| v)
                .collect();
            if members.is_empty() {
                continue;
            }
            for bit in 0..p {
                let ones = members.iter().filter(|v| v[bit] == 1).count();
                // Majority centroid: cost is the minority count either way.
                total += ones.min(members.len() - ones) as u64;
            }
        }
        total
    }

    fn recurse(
        bits: &[Vec<u8>],
        c: usize,
        assignment: &mut Vec<usize>,
        used: usize,
        best: &mut u64,
    ) {
        if assignment.len() == bits.len() {
            *best = (*best).min(partition_cost(bits, assignment, used));
            return;
        }
        // Restricted growth: next element joins an existing block or opens
        // the next one, which enumerates set partitions exactly once.
        for b in 0..used.min(c) {
            assignment.push(b);
            recurse(bits, c, assignment, used, best);
            assignment.pop();
        }
        if used < c {
            assignment.push(used);
            recurse(bits, c, assignment, used + 1, best);
            assignment.pop();
        }
    }

    let mut best = u64::MAX;
    recurse(bits, c, &mut Vec::with_capacity(bits.len()), 0, &mut best);
    best
}

/// Random small survival dataset for randomized oracle sweeps. Times are
/// drawn with a coarse grid (multiples of 0.25) so ties occur regularly.
pub fn random_dataset(rng: &mut ChaCha8Rng, max_n: usize, max_p: usize) -> SurvivalDataset {
    let n = rng.gen_range(2..=max_n.max(2));
    let p = rng.gen_range(1..=max_p.max(1));
    let covariates = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.5..1.5));
    let time: Vec<f64> = (0..n)
        .map(|_| 0.25 * rng.gen_range(1..=4 * n) as f64)
        .collect();
    let mut event: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
    if !event.iter().any(|e| *e) {
        event[0] = true;
    }
    let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    SurvivalDataset::new(names, covariates, time, event).unwrap()
}

pub fn random_beta(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(p, |_| rng.gen_range(-scale..scale))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

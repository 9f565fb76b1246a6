//! Cox proportional hazards estimation from first principles.
//!
//! Implements the negative log partial likelihood with Breslow tie handling,
//! its analytic gradient and Hessian, Newton-Raphson fitting with step
//! halving and optional ridge regularization, the Breslow baseline hazard
//! estimator, and Harrell's concordance index.
//!
//! All operations are pure functions of their inputs and safe to call from
//! multiple threads; results are bit-deterministic for fixed inputs.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg;

/// One center's cohort: named covariate columns, observed time and event
/// indicator per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    feature_names: Vec<String>,
    covariates: Array2<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
}

impl SurvivalDataset {
    pub fn new(
        feature_names: Vec<String>,
        covariates: Array2<f64>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let n = covariates.nrows();
        if time.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: time.len(),
            });
        }
        if event.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: event.len(),
            });
        }
        if covariates.ncols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                actual: covariates.ncols(),
            });
        }
        let unique: BTreeSet<&String> = feature_names.iter().collect();
        if unique.len() != feature_names.len() {
            return Err(Error::invalid("duplicate feature names"));
        }
        for (i, t) in time.iter().enumerate() {
            if !t.is_finite() || *t < 0.0 {
                return Err(Error::invalid(format!(
                    "time for subject {i} must be finite and nonnegative, got {t}"
                )));
            }
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates must be finite"));
        }
        Ok(Self {
            feature_names,
            covariates,
            time,
            event,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.time.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_set(&self) -> BTreeSet<String> {
        self.feature_names.iter().cloned().collect()
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    /// Risk score per subject under the given coefficient vector.
    pub fn linear_predictor(&self, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_beta(beta)?;
        Ok(self.covariates.dot(&beta))
    }

    /// New dataset with the given rows appended (same feature layout).
    pub fn with_rows_appended(
        &self,
        rows: Array2<f64>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        if rows.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: rows.ncols(),
            });
        }
        let n_new = self.n_subjects() + rows.nrows();
        let mut covariates = Array2::zeros((n_new, self.n_features()));
        covariates
            .slice_mut(ndarray::s![..self.n_subjects(), ..])
            .assign(&self.covariates);
        covariates
            .slice_mut(ndarray::s![self.n_subjects().., ..])
            .assign(&rows);
        let mut t = self.time.clone();
        t.extend(time);
        let mut e = self.event.clone();
        e.extend(event);
        Self::new(self.feature_names.clone(), covariates, t, e)
    }

    /// New dataset keeping only the rows whose indices are listed (order
    /// preserved, indices must be valid and unique).
    pub fn with_rows_kept(&self, keep: &[usize]) -> Result<Self> {
        let mut covariates = Array2::zeros((keep.len(), self.n_features()));
        let mut time = Vec::with_capacity(keep.len());
        let mut event = Vec::with_capacity(keep.len());
        for (out, &i) in keep.iter().enumerate() {
            if i >= self.n_subjects() {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            covariates.row_mut(out).assign(&self.covariates.row(i));
            time.push(self.time[i]);
            event.push(self.event[i]);
        }
        Self::new(self.feature_names.clone(), covariates, time, event)
    }

    fn check_beta(&self, beta: ArrayView1<f64>) -> Result<()> {
        if beta.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: beta.len(),
            });
        }
        Ok(())
    }
}

/// Newton-Raphson controls. `ridge_lambda > 0` adds (λ/2)‖β‖² to the loss,
/// making it strongly convex with curvature floor λ.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub ridge_lambda: f64,
    pub step_halving_max: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-7,
            ridge_lambda: 0.0,
            step_halving_max: 30,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if !self.gradient_tolerance.is_finite() || self.gradient_tolerance <= 0.0 {
            return Err(Error::invalid("gradient_tolerance must be > 0"));
        }
        if self.ridge_lambda < 0.0 {
            return Err(Error::invalid("ridge_lambda must be >= 0"));
        }
        Ok(())
    }
}

/// Fitted Cox model: coefficient map, Breslow baseline hazard increments at
/// event times, and fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxModel {
    pub coefficients: BTreeMap<String, f64>,
    /// (event time, baseline hazard increment), strictly increasing in time.
    pub baseline: Vec<(f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
    pub final_loss: f64,
    /// Loss at β = 0 followed by the loss after each accepted Newton step;
    /// nonincreasing up to the floating-point resolution of the loss.
    pub loss_trace: Vec<f64>,
}

impl CoxModel {
    /// All-zero model over the dataset's features. Used by the federation
    /// layer as the degenerate-fit substitute.
    pub fn zeros(dataset: &SurvivalDataset) -> Self {
        CoxModel {
            coefficients: dataset
                .feature_names()
                .iter()
                .map(|f| (f.clone(), 0.0))
                .collect(),
            baseline: Vec::new(),
            converged: false,
            iterations: 0,
            final_loss: 0.0,
            loss_trace: Vec::new(),
        }
    }

    /// Coefficients as a vector aligned with the dataset's feature order;
    /// features absent from the map contribute 0.
    pub fn coefficient_vector(&self, dataset: &SurvivalDataset) -> Array1<f64> {
        Array1::from_iter(
            dataset
                .feature_names()
                .iter()
                .map(|f| self.coefficients.get(f).copied().unwrap_or(0.0)),
        )
    }
}

/// How much of the partial-likelihood evaluation to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd)]
enum EvalLevel {
    Loss,
    Gradient,
    Hessian,
}

struct Evaluation {
    loss: f64,
    gradient: Option<Array1<f64>>,
    hessian: Option<Array2<f64>>,
}

/// Subject indices ordered by descending time, grouped by tied time values.
/// Walking groups in this order lets risk-set sums accumulate incrementally:
/// R(t) = everyone already absorbed once the sweep reaches t.
fn descending_time_groups(time: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| {
        time[b]
            .partial_cmp(&time[a])
            .expect("times are finite")
            .then(a.cmp(&b))
    });
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for idx in order {
        match groups.last_mut() {
            Some(g) if time[g[0]] == time[idx] => g.push(idx),
            _ => groups.push(vec![idx]),
        }
    }
    groups
}

/// Single sweep over the risk sets computing loss and, on request, the
/// analytic gradient and Hessian of the ridge-augmented negative log partial
/// likelihood. Exponentials are rescaled by the maximum linear predictor so
/// the running sums stay bounded.
fn evaluate(
    data: &SurvivalDataset,
    beta: ArrayView1<f64>,
    ridge_lambda: f64,
    level: EvalLevel,
) -> Result<Evaluation> {
    data.check_beta(beta)?;
    if ridge_lambda < 0.0 {
        return Err(Error::invalid("ridge_lambda must be >= 0"));
    }
    let n = data.n_subjects();
    let p = data.n_features();
    let want_grad = level >= EvalLevel::Gradient;
    let want_hess = level >= EvalLevel::Hessian;

    let eta = data.covariates.dot(&beta);
    let shift = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));

    let mut loss = 0.0;
    let mut grad = want_grad.then(|| Array1::<f64>::zeros(p));
    let mut hess = want_hess.then(|| Array2::<f64>::zeros((p, p)));

    // Running risk-set sums, all scaled by exp(-shift):
    //   s0 = Σ w_j, s1 = Σ w_j x_j, s2 = Σ w_j x_j x_jᵀ with w_j = exp(η_j).
    let mut s0 = 0.0f64;
    let mut s1 = vec![0.0f64; if want_grad { p } else { 0 }];
    let mut s2 = vec![0.0f64; if want_hess { p * p } else { 0 }];

    if n > 0 {
        let x = data.covariates();
        for group in descending_time_groups(&data.time) {
            for &j in &group {
                let w = (eta[j] - shift).exp();
                s0 += w;
                if want_grad {
                    let row = x.row(j);
                    for (a, s) in s1.iter_mut().enumerate() {
                        *s += w * row[a];
                    }
                }
                if want_hess {
                    let row = x.row(j);
                    for a in 0..p {
                        let wa = w * row[a];
                        for b in a..p {
                            s2[a * p + b] += wa * row[b];
                        }
                    }
                }
            }

            let events: Vec<usize> = group.iter().copied().filter(|&i| data.event[i]).collect();
            if events.is_empty() {
                continue;
            }
            let d = events.len() as f64;
            let sum_eta: f64 = events.iter().map(|&i| eta[i]).sum();
            loss -= sum_eta - d * (shift + s0.ln());

            if let Some(g) = grad.as_mut() {
                for a in 0..p {
                    let sum_x: f64 = events.iter().map(|&i| x[[i, a]]).sum();
                    g[a] -= sum_x - d * s1[a] / s0;
                }
            }
            if let Some(h) = hess.as_mut() {
                for a in 0..p {
                    let ma = s1[a] / s0;
                    for b in a..p {
                        let v = d * (s2[a * p + b] / s0 - ma * s1[b] / s0);
                        h[[a, b]] += v;
                    }
                }
            }
        }
    }

    if ridge_lambda > 0.0 {
        loss += 0.5 * ridge_lambda * beta.dot(&beta);
        if let Some(g) = grad.as_mut() {
            for (a, ga) in g.iter_mut().enumerate() {
                *ga += ridge_lambda * beta[a];
            }
        }
        if let Some(h) = hess.as_mut() {
            for a in 0..p {
                h[[a, a]] += ridge_lambda;
            }
        }
    }

    if let Some(h) = hess.as_mut() {
        // Mirror the upper triangle.
        for a in 0..p {
            for b in (a + 1)..p {
                h[[b, a]] = h[[a, b]];
            }
        }
    }

    Ok(Evaluation {
        loss,
        gradient: grad,
        hessian: hess,
    })
}

/// Negative log partial likelihood with Breslow tie handling plus the ridge
/// term (λ/2)‖β‖². Zero-event datasets yield the ridge term alone.
pub fn neg_log_partial_likelihood(
    data: &SurvivalDataset,
    beta: ArrayView1<f64>,
    ridge_lambda: f64,
) -> Result<f64> {
    evaluate(data, beta, ridge_lambda, EvalLevel::Loss).map(|e| e.loss)
}

/// Analytic gradient of [`neg_log_partial_likelihood`].
pub fn gradient(
    data: &SurvivalDataset,
    beta: ArrayView1<f64>,
    ridge_lambda: f64,
) -> Result<Array1<f64>> {
    evaluate(data, beta, ridge_lambda, EvalLevel::Gradient)
        .map(|e| e.gradient.expect("gradient requested"))
}

/// Analytic Hessian of [`neg_log_partial_likelihood`]. Symmetric, positive
/// semidefinite, with smallest eigenvalue >= ridge_lambda.
pub fn hessian(
    data: &SurvivalDataset,
    beta: ArrayView1<f64>,
    ridge_lambda: f64,
) -> Result<Array2<f64>> {
    evaluate(data, beta, ridge_lambda, EvalLevel::Hessian)
        .map(|e| e.hessian.expect("hessian requested"))
}

/// Newton-Raphson fit from β = 0 with step halving on loss increase.
///
/// `converged` is true iff the gradient ∞-norm reached the tolerance within
/// the iteration budget. A singular Hessian (after escalating diagonal
/// stabilization) or exhausted step halving ends the fit with
/// `converged = false` rather than an error. Zero-event datasets are a
/// [`Error::DegenerateFit`] error: there is no likelihood to maximize.
pub fn fit_cox(data: &SurvivalDataset, options: &FitOptions) -> Result<CoxModel> {
    options.validate()?;
    if data.n_features() == 0 {
        return Err(Error::invalid("dataset has no features"));
    }
    if data.n_events() == 0 {
        return Err(Error::DegenerateFit);
    }

    let p = data.n_features();
    let mut beta = Array1::<f64>::zeros(p);
    let mut eval = evaluate(data, beta.view(), options.ridge_lambda, EvalLevel::Hessian)?;
    let mut loss_trace = vec![eval.loss];
    let mut iterations = 0usize;
    let mut converged =
        linalg::inf_norm(eval.gradient.as_ref().unwrap()) <= options.gradient_tolerance;

    while !converged && iterations < options.max_iterations {
        let g = eval.gradient.as_ref().unwrap();
        let h = eval.hessian.as_ref().unwrap();

        let Some(direction) = solve_with_stabilization(h, g) else {
            break; // singular even after stabilization
        };

        // Once the Newton decrement falls below the floating-point
        // resolution of the loss, a decrease can no longer be measured even
        // though the gradient may still sit above tolerance (large n).
        // Quadratic convergence of the unguarded full step finishes the job.
        let resolution = 64.0 * f64::EPSILON * (1.0 + eval.loss.abs());
        let sub_resolution = 0.5 * g.dot(&direction) <= resolution;

        let mut accepted = None;
        let mut step = 1.0f64;
        for _ in 0..=options.step_halving_max {
            let candidate = &beta - &(step * &direction);
            if candidate == beta {
                break; // step underflowed: no movement possible
            }
            let cand_loss =
                neg_log_partial_likelihood(data, candidate.view(), options.ridge_lambda)?;
            let ok = if sub_resolution {
                cand_loss.is_finite() && cand_loss <= eval.loss + resolution
            } else {
                cand_loss.is_finite() && cand_loss < eval.loss
            };
            if ok {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            break; // no descent possible from here
        };

        beta = next;
        eval = evaluate(data, beta.view(), options.ridge_lambda, EvalLevel::Hessian)?;
        loss_trace.push(eval.loss);
        iterations += 1;
        converged = linalg::inf_norm(eval.gradient.as_ref().unwrap()) <= options.gradient_tolerance;
    }

    let baseline = breslow_baseline(data, beta.view())?;
    Ok(CoxModel {
        coefficients: data
            .feature_names()
            .iter()
            .cloned()
            .zip(beta.iter().copied())
            .collect(),
        baseline,
        converged,
        iterations,
        final_loss: eval.loss,
        loss_trace,
    })
}

/// Newton solve with escalating diagonal stabilization when the Hessian is
/// not positive definite (flat directions, separation).
fn solve_with_stabilization(h: &Array2<f64>, g: &Array1<f64>) -> Option<Array1<f64>> {
    if let Some(x) = linalg::cholesky_solve(h, g) {
        return Some(x);
    }
    let p = h.nrows();
    let scale = (0..p)
        .map(|i| h[[i, i]].abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut bump = 1e-8 * scale;
    for _ in 0..6 {
        let mut stabilized = h.clone();
        for i in 0..p {
            stabilized[[i, i]] += bump;
        }
        if let Some(x) = linalg::cholesky_solve(&stabilized, g) {
            return Some(x);
        }
        bump *= 100.0;
    }
    None
}

/// Breslow baseline hazard increments: for each distinct event time t,
/// d_t / Σ_{j: t_j >= t} exp(βᵀx_j), sorted by time. Empty for zero-event
/// datasets.
pub fn breslow_baseline(data: &SurvivalDataset, beta: ArrayView1<f64>) -> Result<Vec<(f64, f64)>> {
    data.check_beta(beta)?;
    let eta = data.covariates.dot(&beta);
    let shift = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));

    let mut out = Vec::new();
    let mut s0 = 0.0f64;
    for group in descending_time_groups(&data.time) {
        for &j in &group {
            s0 += (eta[j] - shift).exp();
        }
        let d = group.iter().filter(|&&i| data.event[i]).count();
        if d > 0 {
            // d / (s0 · e^shift), written to avoid overflowing e^shift.
            out.push((data.time[group[0]], (d as f64 / s0) * (-shift).exp()));
        }
    }
    out.reverse();
    Ok(out)
}

/// Harrell's concordance index.
///
/// A pair (i, j) is comparable iff t_i < t_j and subject i had an event;
/// it is concordant iff the risk score of i exceeds that of j. Tied risk
/// scores count one half. Returns 0.5 when no comparable pairs exist (e.g.
/// zero events or an all-tied risk ranking).
pub fn concordance_index(data: &SurvivalDataset, beta: ArrayView1<f64>) -> Result<f64> {
    let score = data.linear_predictor(beta)?;
    let n = data.n_subjects();
    let mut comparable = 0u64;
    let mut concordant = 0u64;
    let mut tied = 0u64;
    for i in 0..n {
        if !data.event[i] {
            continue;
        }
        for j in 0..n {
            if data.time[i] < data.time[j] {
                comparable += 1;
                if score[i] > score[j] {
                    concordant += 1;
                } else if score[i] == score[j] {
                    tied += 1;
                }
            }
        }
    }
    if comparable == 0 {
        return Ok(0.5);
    }
    Ok((concordant as f64 + 0.5 * tied as f64) / comparable as f64)
}

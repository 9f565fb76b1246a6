//! Synchronized gradient rounds on a shared-feature cluster, used to verify
//! the geometric contraction of federated averaging on strongly convex
//! (ridge-regularized) Cox objectives.
//!
//! Each round, every center takes one gradient step from the common iterate
//! and the server averages the results weighted by r_k; that is exactly one
//! step of gradient descent on the r_k-weighted pooled loss. The run records
//! the distance to the pooled optimum at every iterate, a strong-convexity
//! estimate μ (smallest pooled-Hessian eigenvalue at the optimum) and a
//! smoothness estimate L (largest pooled-Hessian eigenvalue over the
//! trajectory). The per-step guarantee requires η < μ/L².

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;
use crate::survival::{self, SurvivalDataset};

use super::{check_nonempty, id_order, Center};

/// Initial iterate for the gradient rounds.
#[derive(Debug, Clone, PartialEq)]
pub enum StartPoint {
    /// β⁽⁰⁾ = 0, the default.
    Zero,
    /// Start at the pooled optimum (the distance should then stay at the
    /// fit-tolerance floor).
    AtOptimum,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientModeOptions {
    /// Learning rate; `None` picks 0.5·μ/L² from the curvature estimates.
    pub eta: Option<f64>,
    pub iterations: usize,
    /// Must be > 0: the ridge term supplies the strong-convexity floor.
    pub ridge_lambda: f64,
    pub start: StartPoint,
}

impl Default for GradientModeOptions {
    fn default() -> Self {
        GradientModeOptions {
            eta: None,
            iterations: 200,
            ridge_lambda: 1.0,
            start: StartPoint::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientTrajectory {
    /// ‖β⁽ᵗ⁾ − β*‖₂ for t = 0..=iterations.
    pub distances: Vec<f64>,
    pub eta: f64,
    /// Smallest pooled-Hessian eigenvalue at the optimum.
    pub mu: f64,
    /// Largest pooled-Hessian eigenvalue over the trajectory iterates.
    pub lipschitz: f64,
    /// Optimum of the r_k-weighted pooled objective.
    pub optimum: BTreeMap<String, f64>,
    /// η < μ/L², the region where the geometric bound applies.
    pub within_guarantee: bool,
    /// 1 − ημ(1 − ηL²/μ); the bound is factor^t · ‖β⁽⁰⁾ − β*‖².
    pub contraction_factor: f64,
}

impl GradientTrajectory {
    /// Right-hand side of the guarantee at iteration t.
    pub fn bound_at(&self, t: usize) -> f64 {
        self.contraction_factor.powi(t as i32) * self.distances[0] * self.distances[0]
    }
}

/// Weighted pooled loss/gradient/Hessian over the centers at a common β:
/// Σ_k (r_k/Σr) L_k(β), matching the server-side average of per-center
/// gradient steps.
struct Pooled<'a> {
    datasets: Vec<&'a SurvivalDataset>,
    weights: Vec<f64>,
    ridge: f64,
}

impl<'a> Pooled<'a> {
    fn new(centers: &'a [Center], ridge: f64) -> Self {
        let order = id_order(centers);
        let total: f64 = order.iter().map(|&i| centers[i].weight() as f64).sum();
        Pooled {
            datasets: order.iter().map(|&i| &centers[i].dataset).collect(),
            weights: order
                .iter()
                .map(|&i| centers[i].weight() as f64 / total)
                .collect(),
            ridge,
        }
    }

    fn loss(&self, beta: &Array1<f64>) -> Result<f64> {
        let parts = exec::par_map(&self.datasets, |d| {
            survival::neg_log_partial_likelihood(d, beta.view(), self.ridge)
        });
        let mut total = 0.0;
        for (part, w) in parts.into_iter().zip(&self.weights) {
            total += w * part?;
        }
        Ok(total)
    }

    fn gradient(&self, beta: &Array1<f64>) -> Result<Array1<f64>> {
        let parts = exec::par_map(&self.datasets, |d| {
            survival::gradient(d, beta.view(), self.ridge)
        });
        let mut total = Array1::zeros(beta.len());
        for (part, w) in parts.into_iter().zip(&self.weights) {
            total += &(*w * &part?);
        }
        Ok(total)
    }

    fn hessian(&self, beta: &Array1<f64>) -> Result<Array2<f64>> {
        let parts = exec::par_map(&self.datasets, |d| {
            survival::hessian(d, beta.view(), self.ridge)
        });
        let mut total = Array2::zeros((beta.len(), beta.len()));
        for (part, w) in parts.into_iter().zip(&self.weights) {
            total += &(*w * &part?);
        }
        Ok(total)
    }

    /// Newton minimization of the pooled objective (strongly convex, so the
    /// stabilized solve always descends). Stops at the gradient tolerance or
    /// when the Newton decrement falls below the loss's floating-point
    /// resolution, whichever comes first.
    fn minimize(&self) -> Result<Array1<f64>> {
        let p = self.datasets[0].n_features();
        let mut beta = Array1::zeros(p);
        let mut loss = self.loss(&beta)?;
        for _ in 0..200 {
            let g = self.gradient(&beta)?;
            if linalg::inf_norm(&g) <= 1e-10 {
                break;
            }
            let h = self.hessian(&beta)?;
            let Some(direction) = linalg::cholesky_solve(&h, &g) else {
                return Err(Error::invalid(
                    "pooled Hessian is singular despite the ridge floor",
                ));
            };
            let resolution = 64.0 * f64::EPSILON * (1.0 + loss.abs());
            if 0.5 * g.dot(&direction) <= resolution {
                // Sub-resolution decrement: one last unguarded full step.
                beta -= &direction;
                break;
            }
            let mut step = 1.0;
            for _ in 0..40 {
                let candidate = &beta - &(step * &direction);
                let cand_loss = self.loss(&candidate)?;
                if cand_loss < loss {
                    beta = candidate;
                    loss = cand_loss;
                    break;
                }
                step *= 0.5;
            }
        }
        Ok(beta)
    }
}

/// Run synchronized gradient rounds and measure the contraction toward the
/// pooled optimum.
///
/// Requires all centers to share the same feature space (the proper-cluster
/// surrogate) and a strictly positive ridge. Runs proceed even when η falls
/// outside the guarantee region; `within_guarantee` flags it.
pub fn run_gradient_mode(
    centers: &[Center],
    options: &GradientModeOptions,
) -> Result<GradientTrajectory> {
    check_nonempty(centers)?;
    if !options.ridge_lambda.is_finite() || options.ridge_lambda <= 0.0 {
        return Err(Error::invalid(
            "gradient mode needs ridge_lambda > 0 for strong convexity",
        ));
    }
    if options.iterations == 0 {
        return Err(Error::invalid("need at least one iteration"));
    }
    let names = centers[0].dataset.feature_names();
    for center in &centers[1..] {
        if center.dataset.feature_names() != names {
            return Err(Error::invalid(
                "gradient mode requires an identical feature space at every center",
            ));
        }
    }

    let pooled = Pooled::new(centers, options.ridge_lambda);
    let optimum = pooled.minimize()?;
    let mu = linalg::min_eigenvalue(&pooled.hessian(&optimum)?);

    let p = optimum.len();
    let start = match &options.start {
        StartPoint::Zero => Array1::zeros(p),
        StartPoint::AtOptimum => optimum.clone(),
        StartPoint::Custom(v) => {
            if v.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: v.len(),
                });
            }
            Array1::from_vec(v.clone())
        }
    };

    let eta = match options.eta {
        Some(eta) if eta > 0.0 => eta,
        Some(_) => return Err(Error::invalid("eta must be > 0")),
        None => {
            // 0.5·μ/L² from endpoint curvature estimates.
            let l0 = linalg::max_eigenvalue(&pooled.hessian(&start)?)
                .max(linalg::max_eigenvalue(&pooled.hessian(&optimum)?));
            0.5 * mu / (l0 * l0)
        }
    };

    let mut beta = start;
    let mut distances = Vec::with_capacity(options.iterations + 1);
    let mut lipschitz = f64::NEG_INFINITY;
    let mut diverged = false;
    for _ in 0..options.iterations {
        let diff = &beta - &optimum;
        distances.push(diff.dot(&diff).sqrt());
        if !beta.iter().all(|v| v.is_finite()) {
            // Oversized eta blew up the iterates; the trajectory is
            // truncated here rather than feeding infinities downstream.
            diverged = true;
            break;
        }
        lipschitz = lipschitz.max(linalg::max_eigenvalue(&pooled.hessian(&beta)?));
        // One synchronized round: each center steps from the shared iterate,
        // the server averages by weight; algebraically a pooled-gradient step.
        let g = pooled.gradient(&beta)?;
        beta -= &(eta * &g);
    }
    if !diverged {
        let diff = &beta - &optimum;
        distances.push(diff.dot(&diff).sqrt());
        if beta.iter().all(|v| v.is_finite()) {
            lipschitz = lipschitz.max(linalg::max_eigenvalue(&pooled.hessian(&beta)?));
        }
    }

    let within_guarantee = eta < mu / (lipschitz * lipschitz);
    if !within_guarantee {
        log::warn!(
            "eta = {eta} is outside the guarantee region (mu/L^2 = {})",
            mu / (lipschitz * lipschitz)
        );
    }
    let contraction_factor = 1.0 - eta * mu * (1.0 - eta * lipschitz * lipschitz / mu);
    Ok(GradientTrajectory {
        distances,
        eta,
        mu,
        lipschitz,
        optimum: names.iter().cloned().zip(optimum.iter().copied()).collect(),
        within_guarantee,
        contraction_factor,
    })
}

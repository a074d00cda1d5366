//! Geometric-distance transition kernel between consecutive networks.
//!
//! The weight of moving from `u` to `v` is `λ (1-λ)^(ε-1)` where `ε` is the
//! L1 distance between their adjacency matrices. Normalising over all
//! `2^{n(n-1)}` successors groups graphs by distance class:
//!
//! ```text
//! Z = Σ_{ε=0}^{n_e} C(n_e, ε) λ (1-λ)^(ε-1),   n_e = n(n-1)
//! ```
//!
//! Writing the exponent as `ε` instead of `ε-1` multiplies every weight by
//! the same factor `1-λ`, so both forms give the same normalised
//! distribution. This module implements the `ε-1` form.

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::numeric::{ln_binomial, log_sum_exp, softplus};

/// `S(κ) = 1 / (1 + e^{-κ})`.
pub fn sigmoid(kappa: f64) -> f64 {
    if kappa >= 0.0 {
        1.0 / (1.0 + (-kappa).exp())
    } else {
        let e = kappa.exp();
        e / (1.0 + e)
    }
}

pub fn logit(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(lambda.ln() - (-lambda).ln_1p())
}

/// `log S(κ)(1 - S(κ))`, the log-Jacobian of `λ = S(κ)`.
pub fn log_jacobian(kappa: f64) -> f64 {
    -softplus(-kappa) - softplus(kappa)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must lie in (0, 1), got {lambda}")))
    }
}

/// The smoothness parameter held in both scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothness {
    lambda: f64,
    kappa: f64,
}

impl Smoothness {
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        Ok(Smoothness {
            lambda,
            kappa: logit(lambda)?,
        })
    }

    pub fn from_kappa(kappa: f64) -> Result<Self> {
        let lambda = sigmoid(kappa);
        if !kappa.is_finite() || lambda <= 0.0 || lambda >= 1.0 {
            return Err(Error::invalid(format!(
                "kappa {kappa} maps outside the open unit interval"
            )));
        }
        Ok(Smoothness { lambda, kappa })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// `log Σ_{ε=0}^{n_e} C(n_e, ε) λ (1-λ)^(ε-1)` with `n_e = n(n-1)`.
pub fn log_transition_normalizer(lambda: f64, n: usize) -> Result<f64> {
    check_lambda(lambda)?;
    if n < 2 {
        return Err(Error::invalid(format!(
            "transition kernel needs at least 2 components, got {n}"
        )));
    }
    Ok(normalizer_terms(lambda, n).1)
}

// (per-class log weights, log normaliser)
fn normalizer_terms(lambda: f64, n: usize) -> (Vec<f64>, f64) {
    let ne = (n * (n - 1)) as u64;
    let ln_l = lambda.ln();
    let ln_1ml = (-lambda).ln_1p();
    let terms: Vec<f64> = (0..=ne)
        .map(|e| ln_binomial(ne, e) + ln_l + (e as f64 - 1.0) * ln_1ml)
        .collect();
    let z = log_sum_exp(&terms);
    (terms, z)
}

/// `log P(g_next | g_prev, λ)`.
pub fn log_transition_prob(g_prev: &Network, g_next: &Network, lambda: f64) -> Result<f64> {
    let eps = g_prev.distance(g_next)?;
    let kernel = TransitionKernel::new(g_prev.n(), lambda)?;
    Ok(kernel.log_prob(eps.value()))
}

/// Transition kernel with its normaliser cached for one `(n, λ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionKernel {
    n: usize,
    lambda: f64,
    ln_lambda: f64,
    ln_1m_lambda: f64,
    log_z: f64,
}

impl TransitionKernel {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        let log_z = log_transition_normalizer(lambda, n)?;
        Ok(TransitionKernel {
            n,
            lambda,
            ln_lambda: lambda.ln(),
            ln_1m_lambda: (-lambda).ln_1p(),
            log_z,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    pub fn ln_1m_lambda(&self) -> f64 {
        self.ln_1m_lambda
    }

    /// Log probability of a transition at distance `distance`.
    pub fn log_prob(&self, distance: u32) -> f64 {
        self.ln_lambda + (distance as f64 - 1.0) * self.ln_1m_lambda - self.log_z
    }

    /// Sum of log transition probabilities for `transitions` steps whose
    /// distances add up to `total_distance`.
    pub fn log_prob_total(&self, transitions: usize, total_distance: u64) -> f64 {
        let k = transitions as f64;
        k * (self.ln_lambda - self.log_z) + (total_distance as f64 - k) * self.ln_1m_lambda
    }

    /// Log ratio `P(ε_new) / P(ε_old)`; the normaliser cancels.
    pub fn log_ratio(&self, new_distance: u32, old_distance: u32) -> f64 {
        (new_distance as f64 - old_distance as f64) * self.ln_1m_lambda
    }

    /// Normalised probability of each distance class `ε = 0..=n_e`, i.e.
    /// the chance that the successor lies at distance `ε`.
    pub fn distance_class_probs(&self) -> Vec<f64> {
        let (terms, z) = normalizer_terms(self.lambda, self.n);
        terms.iter().map(|t| (t - z).exp()).collect()
    }
}

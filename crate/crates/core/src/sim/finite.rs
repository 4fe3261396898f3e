//! Finite-support distributions: exact expectations and i.i.d. sampling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FiniteDistribution<T> {
    outcomes: Vec<T>,
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl<T> FiniteDistribution<T> {
    /// Probabilities must be nonnegative and sum to one within `1e-12`.
    pub fn new(outcomes: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != probs.len() {
            return Err(Error::domain("support and probability vectors must be nonempty and equal length"));
        }
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::domain("probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        let sampler = WeightedIndex::new(&probs).map_err(|e| Error::domain(e.to_string()))?;
        Ok(Self { outcomes, probs, sampler })
    }

    pub fn uniform(outcomes: Vec<T>) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::domain("empty support"));
        }
        let probs = vec![1.0 / n as f64; n];
        let sampler = WeightedIndex::new(&probs).map_err(|e| Error::domain(e.to_string()))?;
        Ok(Self { outcomes, probs, sampler })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[T] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.outcomes.iter().zip(self.probs.iter().copied())
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    /// `n` i.i.d. draws.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a T> {
        (0..n).map(|_| &self.outcomes[self.sample_index(rng)]).collect()
    }

    /// `E[f]` computed exactly over the support.
    pub fn expectation(&self, mut f: impl FnMut(&T) -> f64) -> f64 {
        self.iter().map(|(o, p)| p * f(o)).sum()
    }

    /// Probability that the 0/1 loss fires: `L_D(C) = P[y not in C(x)]`.
    pub fn true_error(&self, mut loss: impl FnMut(&T) -> bool) -> f64 {
        self.iter().filter(|(o, _)| loss(o)).map(|(_, p)| p).sum()
    }
}

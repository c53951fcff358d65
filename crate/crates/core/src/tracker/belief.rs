use rand::Rng;
use thiserror::Error;

use crate::model::StateVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResampleError {
    #[error("cannot resample a belief whose weights sum to {0}")]
    DegenerateWeights(f64),
}

/// Weighted particle approximation of a kinematic belief.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief {
    pub particles: Vec<StateVector>,
    /// Normalized, length-matched with `particles`.
    pub weights: Vec<f64>,
}

impl ParticleBelief {
    pub fn uniform(particles: Vec<StateVector>) -> Self {
        let n = particles.len();
        Self {
            particles,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Weighted (MMSE) state estimate.
    pub fn mean(&self) -> StateVector {
        let mut m = StateVector::default();
        for (x, &w) in self.particles.iter().zip(&self.weights) {
            m.px += w * x.px;
            m.py += w * x.py;
            m.vx += w * x.vx;
            m.vy += w * x.vy;
        }
        m
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Effective sample size, 1 / sum(w^2).
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Systematic resampling to `n` equally weighted particles.
///
/// Weights need not be normalized.
pub fn resample_to<R: Rng + ?Sized>(
    b: &ParticleBelief,
    n: usize,
    rng: &mut R,
) -> Result<ParticleBelief, ResampleError> {
    let total: f64 = b.weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(ResampleError::DegenerateWeights(total));
    }
    let step = total / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut cum = b.weights[0];
    let last = b.len() - 1;
    for _ in 0..n {
        while u > cum && i < last {
            i += 1;
            cum += b.weights[i];
        }
        out.push(b.particles[i]);
        u += step;
    }
    Ok(ParticleBelief::uniform(out))
}

pub fn resample<R: Rng + ?Sized>(b: &ParticleBelief, rng: &mut R) -> Result<ParticleBelief, ResampleError> {
    resample_to(b, b.len(), rng)
}

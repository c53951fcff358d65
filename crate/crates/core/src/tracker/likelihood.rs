//! Pseudo-likelihood factors and belief updates for legacy and new PTs.
//!
//! The dummy density attached to nonexistent PTs is never represented: every
//! `r = 0` branch integrates to a scalar mass that is folded into
//! `beta[0]` (legacy) or the leading `1` of `xi` (new).

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;

use super::belief::{resample_to, ParticleBelief};
use super::{Label, PotentialTarget, PtKind, TrackerParams};
use crate::model::{detection_prob_at, likelihood_at, DetectionMode, Measurement, Sensor, StateVector};
use crate::par;

/// Clutter intensity used inside the filter.
///
/// Equal to the generator's uniform intensity over the FoV, but without the
/// hard range cutoff: a noisy detection of a target at the FoV edge can land
/// just beyond the radius and must still have a finite likelihood ratio.
pub fn filter_clutter_density(s: &Sensor) -> f64 {
    s.clutter_rate / (s.fov_radius * TAU)
}

/// Per-particle detection probabilities and likelihood ratios of one PT
/// against one scan, computed once and shared by the weight and update steps.
#[derive(Debug, Clone)]
pub struct Evidence {
    pub num_measurements: usize,
    /// Filter-mode detection probability per particle.
    pub pd: Vec<f64>,
    /// Row-major `[particle][m]`: `pd(x) f(z_m | x) / c(z_m)`.
    pub ratio: Vec<f64>,
}

impl Evidence {
    pub fn compute(belief: &ParticleBelief, zs: &[Measurement], s: &Sensor) -> Self {
        let n = belief.len();
        let m_count = zs.len();
        let mut pd = vec![0.0; n];
        par::map_into(&belief.particles, &mut pd, |_, x| {
            detection_prob_at(x.position(), s, DetectionMode::Filter)
        });
        let mut ratio = vec![0.0; n * m_count];
        if m_count > 0 && pd.iter().any(|&p| p > 0.0) {
            let inv_c = 1.0 / filter_clutter_density(s);
            par::fill_rows(&belief.particles, &mut ratio, m_count, |_, x, row| {
                let p = x.position();
                let d = detection_prob_at(p, s, DetectionMode::Filter);
                if d == 0.0 {
                    return;
                }
                let (range, azimuth) = s.project(p);
                for (slot, z) in row.iter_mut().zip(zs) {
                    *slot = d * likelihood_at(z, range, azimuth, s) * inv_c;
                }
            });
        }
        Self {
            num_measurements: m_count,
            pd,
            ratio,
        }
    }

    pub fn any_detectable(&self) -> bool {
        self.pd.iter().any(|&p| p > 0.0)
    }

    /// `beta` row of length M + 1 for existence `r` and particle `weights`.
    pub fn beta(&self, r: f64, weights: &[f64]) -> Vec<f64> {
        let m_count = self.num_measurements;
        let mut miss = 0.0;
        let mut row = vec![0.0; m_count + 1];
        for (p, &w) in weights.iter().enumerate() {
            miss += w * (1.0 - self.pd[p]);
            if m_count > 0 && self.pd[p] > 0.0 {
                let g = &self.ratio[p * m_count..(p + 1) * m_count];
                for (acc, v) in row[1..].iter_mut().zip(g) {
                    *acc += w * v;
                }
            }
        }
        row[0] = (1.0 - r) + r * miss;
        for v in &mut row[1..] {
            *v *= r;
        }
        row
    }
}

/// Legacy pseudo-likelihood weights of one PT against scan `zs`.
pub fn legacy_weights(pt: &PotentialTarget, zs: &[Measurement], s: &Sensor) -> Vec<f64> {
    Evidence::compute(&pt.belief, zs, s).beta(pt.existence, &pt.belief.weights)
}

/// Sample a birth proposal by inverting a measurement: polar draws around
/// `z` mapped to Cartesian, zero-mean Gaussian velocity, uniform weights.
pub fn birth_prior<R: Rng + ?Sized>(
    z: &Measurement,
    s: &Sensor,
    p: &TrackerParams,
    rng: &mut R,
) -> ParticleBelief {
    let mut particles = Vec::with_capacity(p.num_particles);
    for _ in 0..p.num_particles {
        let range = loop {
            let n: f64 = rng.sample(StandardNormal);
            let r = z.range + s.sigma_r * n;
            if r >= 0.0 {
                break r;
            }
        };
        let na: f64 = rng.sample(StandardNormal);
        let [px, py] = s.invert(range, z.azimuth + s.sigma_theta * na);
        let nvx: f64 = rng.sample(StandardNormal);
        let nvy: f64 = rng.sample(StandardNormal);
        particles.push(StateVector::new(
            px,
            py,
            p.birth_velocity_std * nvx,
            p.birth_velocity_std * nvy,
        ));
    }
    ParticleBelief::uniform(particles)
}

/// Importance ratio `f_n(x) f(z | x) / q(x)` of a birth particle, where
/// `f_n` is uniform over the FoV disc and `q` is the [`birth_prior`] proposal.
///
/// The measurement Gaussian in `f` cancels against the one in `q`; what is
/// left is the polar-to-Cartesian Jacobian (the particle's range) over the
/// FoV area.
#[inline]
fn birth_ratio(x: &StateVector, s: &Sensor) -> f64 {
    let p = x.position();
    if !s.in_fov(p) {
        return 0.0;
    }
    s.distance_to(p) / (PI * s.fov_radius * s.fov_radius)
}

/// New-PT weight `xi_m = 1 + mu_n / c(z) * E_fn[f(z | x)]`, with the
/// expectation estimated by importance sampling over the birth particles.
pub fn new_weights(_z: &Measurement, s: &Sensor, p: &TrackerParams, birth: &ParticleBelief) -> f64 {
    if p.mu_n == 0.0 {
        return 1.0;
    }
    let expected: f64 = birth
        .particles
        .iter()
        .zip(&birth.weights)
        .map(|(x, w)| w * birth_ratio(x, s))
        .sum();
    1.0 + p.mu_n / filter_clutter_density(s) * expected
}

/// Posterior of a legacy PT given its association marginal row.
///
/// Returns `None` when the posterior mass vanishes; the caller should zero
/// the existence and keep the predicted belief.
pub fn posterior_legacy(
    pt: &PotentialTarget,
    evidence: &Evidence,
    beta: &[f64],
    marginal: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let m_count = evidence.num_measurements;
    let r = pt.existence;
    let miss_scale = if beta[0] > 0.0 { marginal[0] / beta[0] } else { 0.0 };
    let hit_scale: Vec<f64> = (1..=m_count)
        .map(|m| if beta[m] > 0.0 { marginal[m] / beta[m] } else { 0.0 })
        .collect();
    let mut u = vec![0.0; pt.belief.len()];
    for (p, slot) in u.iter_mut().enumerate() {
        let mut f = (1.0 - evidence.pd[p]) * miss_scale;
        if m_count > 0 && evidence.pd[p] > 0.0 {
            let g = &evidence.ratio[p * m_count..(p + 1) * m_count];
            f += g.iter().zip(&hit_scale).map(|(a, b)| a * b).sum::<f64>();
        }
        *slot = pt.belief.weights[p] * r * f;
    }
    let existence = par::chunked_sum(&u);
    if !(existence > 1e-300 && existence.is_finite()) {
        return None;
    }
    Some((existence.min(1.0), u))
}

/// Update a legacy PT with its association marginals and resample.
pub fn update_legacy<R: Rng + ?Sized>(
    pt: &PotentialTarget,
    beta: &[f64],
    marginal: &[f64],
    zs: &[Measurement],
    s: &Sensor,
    rng: &mut R,
) -> PotentialTarget {
    let ev = Evidence::compute(&pt.belief, zs, s);
    apply_legacy_update(pt, &ev, beta, marginal, rng)
}

pub(crate) fn apply_legacy_update<R: Rng + ?Sized>(
    pt: &PotentialTarget,
    ev: &Evidence,
    beta: &[f64],
    marginal: &[f64],
    rng: &mut R,
) -> PotentialTarget {
    let mut out = pt.clone();
    out.kind = PtKind::Legacy;
    match posterior_legacy(pt, ev, beta, marginal) {
        None => {
            out.existence = 0.0;
        }
        Some((existence, u)) => {
            out.existence = existence;
            // Outside every particle's detection region the reweighting is
            // a constant factor and the belief is left untouched.
            if ev.any_detectable() {
                let total = existence;
                let reweighted = ParticleBelief {
                    particles: pt.belief.particles.clone(),
                    weights: u.iter().map(|v| v / total).collect(),
                };
                out.belief = resample_to(&reweighted, pt.belief.len(), rng)
                    .expect("positive posterior mass");
            }
        }
    }
    out
}

/// New PT spawned by measurement `z`.
pub fn update_new<R: Rng + ?Sized>(
    _z: &Measurement,
    s: &Sensor,
    xi: f64,
    p_b0: f64,
    birth: &ParticleBelief,
    label: Label,
    rng: &mut R,
) -> PotentialTarget {
    let existence = if xi > 0.0 { (p_b0 * (xi - 1.0) / xi).clamp(0.0, 1.0) } else { 0.0 };
    let weights: Vec<f64> = birth
        .particles
        .iter()
        .zip(&birth.weights)
        .map(|(x, w)| w * birth_ratio(x, s))
        .collect();
    let belief = match resample_to(
        &ParticleBelief {
            particles: birth.particles.clone(),
            weights,
        },
        birth.len(),
        rng,
    ) {
        Ok(b) => b,
        Err(_) => birth.clone(),
    };
    PotentialTarget {
        label,
        existence,
        belief,
        kind: PtKind::New,
    }
}

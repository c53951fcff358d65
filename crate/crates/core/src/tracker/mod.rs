//! Single-sensor particle BP tracker.
//!
//! Each potential target (PT) carries a Bernoulli existence probability and a
//! particle belief. A scan is processed as: predict, spawn one new PT per
//! measurement, compute pseudo-likelihood weights, run loopy BP over the
//! association variables, update legacy and new PTs, then prune and detect.

// Negated comparisons below are deliberate: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{predict_state, Measurement, MotionModel, Sensor};

pub mod association;
pub mod belief;
pub mod likelihood;

pub use association::{loopy_association, AssociationWeights, MarginalAssoc};
pub use belief::{resample, resample_to, ParticleBelief, ResampleError};
pub use likelihood::{
    birth_prior, filter_clutter_density, legacy_weights, new_weights, update_legacy, update_new, Evidence,
};

/// Tracker-scoped unique PT label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub tracker: u32,
    pub serial: u64,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.tracker, self.serial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtKind {
    Legacy,
    New,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTarget {
    pub label: Label,
    pub existence: f64,
    pub belief: ParticleBelief,
    pub kind: PtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerParams {
    pub num_particles: usize,
    /// Detection threshold on existence (strict `>`).
    pub p_th: f64,
    /// Pruning threshold on existence (strict `<`).
    pub p_prune: f64,
    /// Mean number of newborn targets per scan.
    pub mu_n: f64,
    /// Handover threshold on the receiver-side detection integral.
    pub gamma: f64,
    pub bp_max_iter: usize,
    pub bp_tol: f64,
    /// Per-axis std of the birth velocity prior, m/s.
    pub birth_velocity_std: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            num_particles: 10_000,
            p_th: 0.5,
            p_prune: 1e-5,
            mu_n: 0.01,
            gamma: 0.5,
            bp_max_iter: 50,
            bp_tol: 1e-6,
            birth_velocity_std: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub field: &'static str,
    pub reason: String,
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let err = |field, reason: &str| {
            Err(ParamError {
                field,
                reason: reason.to_string(),
            })
        };
        if self.num_particles == 0 {
            return err("particles", "must be at least 1");
        }
        if !(0.0 < self.p_prune && self.p_prune < self.p_th && self.p_th < 1.0) {
            return err("p_th", "thresholds need 0 < p_prune < p_th < 1");
        }
        if !(self.mu_n >= 0.0 && self.mu_n.is_finite()) {
            return err("mu_n", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return err("gamma", "must lie in [0, 1]");
        }
        if !(self.bp_tol > 0.0) {
            return err("bp_tol", "must be positive");
        }
        if !(self.birth_velocity_std >= 0.0 && self.birth_velocity_std.is_finite()) {
            return err("birth_velocity_std", "must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub label: Label,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub existence: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("sensor {0} has zero clutter rate; the filter needs a positive clutter intensity")]
    ZeroClutter(u32),
    #[error("invalid tracker parameter `{}`: {}", .0.field, .0.reason)]
    Params(ParamError),
}

/// Propagate every PT one step: particles through the motion model with
/// fresh noise, existence scaled by the survival probability.
pub fn predict<R: Rng + ?Sized>(pts: &mut [PotentialTarget], m: &MotionModel, rng: &mut R) {
    for pt in pts {
        for x in &mut pt.belief.particles {
            let v = m.sample_noise(rng);
            *x = predict_state(x, m, Some(&v));
        }
        pt.existence *= m.p_s;
        pt.kind = PtKind::Legacy;
    }
}

/// Drop PTs below `p_prune`; report the weighted mean of PTs above `p_th`.
pub fn prune_and_detect(
    pts: Vec<PotentialTarget>,
    params: &TrackerParams,
) -> (Vec<PotentialTarget>, Vec<TrackEstimate>) {
    let survivors: Vec<PotentialTarget> = pts.into_iter().filter(|pt| !(pt.existence < params.p_prune)).collect();
    let estimates = survivors
        .iter()
        .filter(|pt| pt.existence > params.p_th)
        .map(|pt| {
            let m = pt.belief.mean();
            TrackEstimate {
                label: pt.label,
                position: [m.px, m.py],
                velocity: [m.vx, m.vy],
                existence: pt.existence,
            }
        })
        .collect();
    (survivors, estimates)
}

/// Association results of one update pass, indexed like the legacy PTs
/// that entered the pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateOutcome {
    pub legacy_labels: Vec<Label>,
    pub weights: AssociationWeights,
    pub marginals: MarginalAssoc,
}

impl UpdateOutcome {
    pub fn row_of(&self, label: Label) -> Option<usize> {
        self.legacy_labels.iter().position(|l| *l == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub estimates: Vec<TrackEstimate>,
    pub outcome: UpdateOutcome,
}

/// A single-threaded tracker state machine with its own random stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    id: u32,
    params: TrackerParams,
    motion: MotionModel,
    pts: Vec<PotentialTarget>,
    next_serial: u64,
    rng: ChaCha8Rng,
}

impl Tracker {
    pub fn new(id: u32, params: TrackerParams, motion: MotionModel, rng: ChaCha8Rng) -> Result<Self, TrackerError> {
        params.validate().map_err(TrackerError::Params)?;
        Ok(Self {
            id,
            params,
            motion,
            pts: Vec::new(),
            next_serial: 0,
            rng,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn motion(&self) -> &MotionModel {
        &self.motion
    }

    pub fn pts(&self) -> &[PotentialTarget] {
        &self.pts
    }

    /// Direct access for scripted experiments; labels must stay unique.
    pub fn pts_mut(&mut self) -> &mut [PotentialTarget] {
        &mut self.pts
    }

    pub fn pt(&self, label: Label) -> Option<&PotentialTarget> {
        self.pts.iter().find(|pt| pt.label == label)
    }

    pub fn fresh_label(&mut self) -> Label {
        let label = Label {
            tracker: self.id,
            serial: self.next_serial,
        };
        self.next_serial += 1;
        label
    }

    /// Append an externally supplied prior as a legacy PT under a new local label.
    pub fn insert_legacy(&mut self, existence: f64, belief: ParticleBelief) -> Label {
        let label = self.fresh_label();
        self.pts.push(PotentialTarget {
            label,
            existence,
            belief,
            kind: PtKind::Legacy,
        });
        label
    }

    pub fn predict(&mut self) {
        predict(&mut self.pts, &self.motion, &mut self.rng);
    }

    /// One association + update pass with scan `zs` under sensor model `s`.
    ///
    /// Every PT present on entry is treated as legacy. With `births` set, each
    /// measurement also spawns a new PT that joins the list afterwards.
    pub fn update(&mut self, zs: &[Measurement], s: &Sensor, births: bool) -> Result<UpdateOutcome, TrackerError> {
        if !zs.is_empty() && !(s.clutter_rate > 0.0) {
            return Err(TrackerError::ZeroClutter(s.id));
        }
        for pt in &mut self.pts {
            pt.kind = PtKind::Legacy;
        }
        let evidence: Vec<Evidence> = self
            .pts
            .iter()
            .map(|pt| Evidence::compute(&pt.belief, zs, s))
            .collect();
        let beta: Vec<Vec<f64>> = self
            .pts
            .iter()
            .zip(&evidence)
            .map(|(pt, ev)| ev.beta(pt.existence, &pt.belief.weights))
            .collect();

        let births_on = births && self.params.mu_n > 0.0;
        let birth_beliefs: Vec<ParticleBelief> = if births_on {
            zs.iter()
                .map(|z| birth_prior(z, s, &self.params, &mut self.rng))
                .collect()
        } else {
            Vec::new()
        };
        let xi: Vec<f64> = if births_on {
            zs.iter()
                .zip(&birth_beliefs)
                .map(|(z, b)| new_weights(z, s, &self.params, b))
                .collect()
        } else {
            vec![1.0; zs.len()]
        };

        let weights = AssociationWeights { beta, xi };
        let marginals = loopy_association(&weights, &self.params);

        let legacy_labels: Vec<Label> = self.pts.iter().map(|pt| pt.label).collect();
        let mut updated = Vec::with_capacity(self.pts.len() + birth_beliefs.len());
        for (j, pt) in self.pts.iter().enumerate() {
            updated.push(likelihood::apply_legacy_update(
                pt,
                &evidence[j],
                &weights.beta[j],
                &marginals.p_a[j],
                &mut self.rng,
            ));
        }
        for (m, birth) in birth_beliefs.iter().enumerate() {
            let xi_m = weights.xi[m];
            let existence = marginals.p_b0[m] * (xi_m - 1.0) / xi_m;
            if !(existence > 0.0) {
                continue;
            }
            let label = self.fresh_label();
            updated.push(update_new(&zs[m], s, xi_m, marginals.p_b0[m], birth, label, &mut self.rng));
        }
        self.pts = updated;
        Ok(UpdateOutcome {
            legacy_labels,
            weights,
            marginals,
        })
    }

    pub fn prune_and_detect(&mut self) -> Vec<TrackEstimate> {
        let pts = std::mem::take(&mut self.pts);
        let (kept, estimates) = prune_and_detect(pts, &self.params);
        self.pts = kept;
        estimates
    }

    /// Full per-scan pipeline for a single sensor.
    pub fn step(&mut self, zs: &[Measurement], s: &Sensor) -> Result<StepOutput, TrackerError> {
        self.predict();
        let outcome = self.update(zs, s, true)?;
        let estimates = self.prune_and_detect();
        Ok(StepOutput { estimates, outcome })
    }

    /// Order-sensitive fingerprint of the full tracker state.
    pub fn state_hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.next_serial.hash(&mut h);
        for pt in &self.pts {
            pt.label.hash(&mut h);
            pt.existence.to_bits().hash(&mut h);
            for x in &pt.belief.particles {
                for v in [x.px, x.py, x.vx, x.vy] {
                    v.to_bits().hash(&mut h);
                }
            }
            for w in &pt.belief.weights {
                w.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateVector;
    use rand::SeedableRng;

    fn sensor() -> Sensor {
        Sensor {
            id: 1,
            position: [0.0, 0.0],
            fov_radius: 120.0,
            pd_filter: 0.9,
            pd_true: 1.0,
            sigma_r: 1.0,
            sigma_theta: 1f64.to_radians(),
            clutter_rate: 5.0,
        }
    }

    fn tracker(params: TrackerParams, seed: u64) -> Tracker {
        Tracker::new(
            1,
            params,
            MotionModel::new(1.0, 0.05, 0.99).unwrap(),
            ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    fn small() -> TrackerParams {
        TrackerParams {
            num_particles: 300,
            ..TrackerParams::default()
        }
    }

    #[test]
    fn survival_decay() {
        let mut pts = vec![PotentialTarget {
            label: Label { tracker: 0, serial: 0 },
            existence: 0.8,
            belief: ParticleBelief::uniform(vec![StateVector::new(1.0, 2.0, 1.0, -1.0); 3]),
            kind: PtKind::New,
        }];
        let m = MotionModel::new(1.0, 0.0, 0.99).unwrap();
        predict(&mut pts, &m, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((pts[0].existence - 0.792).abs() < 1e-12);
        assert_eq!(pts[0].kind, PtKind::Legacy);
        assert!(pts[0]
            .belief
            .particles
            .iter()
            .all(|x| *x == StateVector::new(2.0, 1.0, 1.0, -1.0)));
    }

    #[test]
    fn thresholds() {
        let mk = |r: f64, serial| PotentialTarget {
            label: Label { tracker: 0, serial },
            existence: r,
            belief: ParticleBelief::uniform(vec![StateVector::default(); 2]),
            kind: PtKind::Legacy,
        };
        let p = TrackerParams::default();
        let (kept, est) = prune_and_detect(vec![mk(1e-6, 0), mk(0.6, 1), mk(0.3, 2), mk(0.5, 3), mk(1e-5, 4)], &p);
        let labels: Vec<u64> = kept.iter().map(|pt| pt.label.serial).collect();
        assert_eq!(labels, vec![1, 2, 3, 4]);
        assert_eq!(est.len(), 1);
        assert_eq!(est[0].label.serial, 1);
    }

    #[test]
    fn empty_scan_is_pure_prediction() {
        let mut t = tracker(small(), 3);
        let label = t.insert_legacy(0.9, ParticleBelief::uniform(vec![StateVector::new(500.0, 0.0, 1.0, 0.0); 300]));
        let out = t.step(&[], &sensor()).unwrap();
        assert_eq!(t.pts().len(), 1);
        assert!((t.pt(label).unwrap().existence - 0.891).abs() < 1e-12);
        assert_eq!(out.estimates.len(), 1);
        assert!((out.estimates[0].position[0] - 501.0).abs() < 0.5);
    }

    #[test]
    fn no_births_means_no_tracks_from_clutter() {
        let p = TrackerParams {
            mu_n: 0.0,
            ..small()
        };
        let mut t = tracker(p, 5);
        let z = Measurement { range: 50.0, azimuth: 0.2, sensor_id: 1, time_index: 0 };
        for _ in 0..5 {
            t.step(&[z, z], &sensor()).unwrap();
            assert!(t.pts().is_empty());
        }
    }

    #[test]
    fn zero_clutter_is_rejected() {
        let mut t = tracker(small(), 1);
        let mut s = sensor();
        s.clutter_rate = 0.0;
        let z = Measurement { range: 50.0, azimuth: 0.2, sensor_id: 1, time_index: 0 };
        assert_eq!(t.update(&[z], &s, true).unwrap_err(), TrackerError::ZeroClutter(1));
        assert!(t.update(&[], &s, true).is_ok());
    }

    #[test]
    fn step_is_deterministic() {
        let s = sensor();
        let zs = [
            Measurement { range: 50.0, azimuth: 0.2, sensor_id: 1, time_index: 0 },
            Measurement { range: 80.0, azimuth: -1.0, sensor_id: 1, time_index: 0 },
        ];
        let run = || {
            let mut t = tracker(small(), 9);
            for _ in 0..4 {
                t.step(&zs, &s).unwrap();
            }
            t.state_hash()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pt_count_and_existence_bounds() {
        let s = sensor();
        let mut t = tracker(small(), 2);
        let zs = [
            Measurement { range: 50.0, azimuth: 0.2, sensor_id: 1, time_index: 0 },
            Measurement { range: 51.0, azimuth: 0.21, sensor_id: 1, time_index: 0 },
            Measurement { range: 90.0, azimuth: 2.0, sensor_id: 1, time_index: 0 },
        ];
        for _ in 0..6 {
            let before = t.pts().len();
            let out = t.step(&zs, &s).unwrap();
            assert!(t.pts().len() <= before + zs.len());
            for pt in t.pts() {
                assert!(pt.existence >= t.params().p_prune && pt.existence <= 1.0);
                assert!((pt.belief.weight_sum() - 1.0).abs() < 1e-9);
                assert_eq!(pt.belief.len(), 300);
            }
            for row in &out.outcome.marginals.p_a {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            assert!(out.outcome.marginals.p_b0.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = TrackerParams {
            p_prune: 0.6,
            ..TrackerParams::default()
        };
        assert!(Tracker::new(0, p, MotionModel::new(1.0, 0.0, 1.0).unwrap(), ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}

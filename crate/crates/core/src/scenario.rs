//! Ground-truth trajectories, per-sensor measurement synthesis and the
//! scenario file format.
//!
//! Scenario files are TOML with a fixed set of sections:
//!
//! ```toml
//! horizon = 100
//! seed = 1
//!
//! [motion]
//! dt = 1.0          # seconds
//! sigma_v = 0.05
//! p_s = 0.99
//!
//! [filter]
//! particles = 10000
//! mu_n = 0.01
//!
//! [sensor.1]
//! position = [0.0, 0.0]   # meters
//! sigma_theta = 1.0       # degrees
//!
//! [target.1]
//! birth = 0               # steps, inclusive
//! death = 70              # steps, exclusive
//! position = [-25.0, 25.0]
//! velocity = [2.5, -0.3]
//! ```
//!
//! Omitted keys take the defaults of the reference two-station setup.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    detection_prob, measure, predict_state, wrap_angle, DetectionMode, Measurement, ModelError,
    MotionModel, Sensor, StateVector,
};
use crate::tracker::TrackerParams;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario: {context}: {source}")]
    Model {
        context: String,
        #[source]
        source: ModelError,
    },
    #[error("invalid scenario: `{field}` {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// One target's lifetime and its state at `birth_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub id: u32,
    pub birth_step: usize,
    /// First step at which the target no longer exists.
    pub death_step: usize,
    pub initial_state: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Sensors in ascending id order.
    pub sensors: Vec<Sensor>,
    pub motion: MotionModel,
    pub trajectories: Vec<TrajectorySpec>,
    pub horizon: usize,
    pub filter: TrackerParams,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.sensors.is_empty() {
            return Err(invalid("sensor", "at least one sensor section is required"));
        }
        if self.horizon < 1 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        for s in &self.sensors {
            s.validate().map_err(|source| ScenarioError::Model {
                context: format!("sensor.{}", s.id),
                source,
            })?;
        }
        for w in self.sensors.windows(2) {
            if w[0].id >= w[1].id {
                return Err(invalid("sensor", "ids must be unique and sorted"));
            }
        }
        MotionModel::new(self.motion.dt, self.motion.sigma_v, self.motion.p_s).map_err(|source| {
            ScenarioError::Model {
                context: "motion".into(),
                source,
            }
        })?;
        for t in &self.trajectories {
            if !(t.birth_step < t.death_step && t.death_step <= self.horizon) {
                return Err(invalid(
                    format!("target.{}", t.id),
                    format!(
                        "needs birth < death <= horizon, got birth={} death={} horizon={}",
                        t.birth_step, t.death_step, self.horizon
                    ),
                ));
            }
            if !t.initial_state.is_finite() {
                return Err(invalid(format!("target.{}", t.id), "state must be finite"));
            }
        }
        self.filter
            .validate()
            .map_err(|e| invalid(format!("filter.{}", e.field), e.reason))?;
        Ok(())
    }

    pub fn sensor_index(&self, id: u32) -> Option<usize> {
        self.sensors.iter().position(|s| s.id == id)
    }
}

/// Alive targets per time step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub steps: Vec<Vec<(u32, StateVector)>>,
}

impl GroundTruth {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn positions(&self, k: usize) -> Vec<[f64; 2]> {
        self.steps[k].iter().map(|(_, x)| x.position()).collect()
    }

    pub fn state_of(&self, k: usize, target: u32) -> Option<&StateVector> {
        self.steps[k].iter().find(|(id, _)| *id == target).map(|(_, x)| x)
    }
}

/// Measurements per (time step, sensor index), with their hidden origins.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanSet {
    pub sensor_ids: Vec<u32>,
    /// `scans[k][s]`, sensors in the order of `sensor_ids`.
    pub scans: Vec<Vec<Vec<Measurement>>>,
    /// Same shape as `scans`; `Some(target)` for detections, `None` for clutter.
    pub origins: Vec<Vec<Vec<Option<u32>>>>,
}

impl ScanSet {
    pub fn horizon(&self) -> usize {
        self.scans.len()
    }

    pub fn scan(&self, k: usize, sensor_index: usize) -> &[Measurement] {
        &self.scans[k][sensor_index]
    }

    pub fn total_measurements(&self) -> usize {
        self.scans.iter().flatten().map(Vec::len).sum()
    }
}

/// Propagate every target from its birth state with sampled process noise.
pub fn generate_truth<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> GroundTruth {
    let mut steps = vec![Vec::new(); cfg.horizon];
    for t in &cfg.trajectories {
        let mut x = t.initial_state;
        for (k, slot) in steps
            .iter_mut()
            .enumerate()
            .take(t.death_step)
            .skip(t.birth_step)
        {
            if k > t.birth_step {
                let v = cfg.motion.sample_noise(rng);
                x = predict_state(&x, &cfg.motion, Some(&v));
            }
            slot.push((t.id, x));
        }
    }
    for s in &mut steps {
        s.sort_by_key(|(id, _)| *id);
    }
    GroundTruth { steps }
}

/// Synthesize per-sensor scans: at most one noisy detection per in-FoV
/// target, Poisson clutter uniform in (range, azimuth), shuffled order.
pub fn generate_measurements<R: Rng + ?Sized>(
    truth: &GroundTruth,
    sensors: &[Sensor],
    rng: &mut R,
) -> ScanSet {
    let mut scans = Vec::with_capacity(truth.horizon());
    let mut origins = Vec::with_capacity(truth.horizon());
    for (k, alive) in truth.steps.iter().enumerate() {
        let mut per_sensor = Vec::with_capacity(sensors.len());
        let mut per_sensor_origin = Vec::with_capacity(sensors.len());
        for s in sensors {
            let mut zs = Vec::new();
            let mut os = Vec::new();
            for (id, x) in alive {
                let pd = detection_prob(x, s, DetectionMode::Generator);
                if pd > 0.0 && rng.random::<f64>() < pd {
                    zs.push(noisy_measurement(x, s, k, rng));
                    os.push(Some(*id));
                }
            }
            let n_clutter = sample_poisson(s.clutter_rate, rng);
            for _ in 0..n_clutter {
                let range = s.fov_radius * rng.random::<f64>();
                // (-pi, pi]
                let azimuth = PI - TAU * rng.random::<f64>();
                zs.push(Measurement {
                    range,
                    azimuth,
                    sensor_id: s.id,
                    time_index: k,
                });
                os.push(None);
            }
            let mut order: Vec<usize> = (0..zs.len()).collect();
            order.shuffle(rng);
            per_sensor.push(order.iter().map(|&i| zs[i]).collect());
            per_sensor_origin.push(order.iter().map(|&i| os[i]).collect());
        }
        scans.push(per_sensor);
        origins.push(per_sensor_origin);
    }
    ScanSet {
        sensor_ids: sensors.iter().map(|s| s.id).collect(),
        scans,
        origins,
    }
}

fn noisy_measurement<R: Rng + ?Sized>(x: &StateVector, s: &Sensor, k: usize, rng: &mut R) -> Measurement {
    let clean = measure(x, s, k);
    loop {
        let nr: f64 = rng.sample(StandardNormal);
        let na: f64 = rng.sample(StandardNormal);
        let range = clean.range + s.sigma_r * nr;
        if range >= 0.0 {
            return Measurement {
                range,
                azimuth: wrap_angle(clean.azimuth + s.sigma_theta * na),
                ..clean
            };
        }
    }
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as usize
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default = "defaults::horizon")]
    horizon: usize,
    #[serde(default = "defaults::seed")]
    seed: u64,
    #[serde(default)]
    motion: RawMotion,
    #[serde(default)]
    filter: RawFilter,
    #[serde(default)]
    sensor: BTreeMap<String, RawSensor>,
    #[serde(default)]
    target: BTreeMap<String, RawTarget>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMotion {
    #[serde(default = "defaults::dt")]
    dt: f64,
    #[serde(default = "defaults::sigma_v")]
    sigma_v: f64,
    #[serde(default = "defaults::p_s")]
    p_s: f64,
}

impl Default for RawMotion {
    fn default() -> Self {
        Self {
            dt: defaults::dt(),
            sigma_v: defaults::sigma_v(),
            p_s: defaults::p_s(),
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    particles: Option<usize>,
    p_th: Option<f64>,
    p_prune: Option<f64>,
    mu_n: Option<f64>,
    gamma: Option<f64>,
    bp_max_iter: Option<usize>,
    bp_tol: Option<f64>,
    birth_velocity_std: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensor {
    position: [f64; 2],
    #[serde(default = "defaults::fov_radius")]
    fov_radius: f64,
    #[serde(default = "defaults::pd_filter")]
    pd_filter: f64,
    #[serde(default = "defaults::pd_true")]
    pd_true: f64,
    #[serde(default = "defaults::sigma_r")]
    sigma_r: f64,
    /// Degrees.
    #[serde(default = "defaults::sigma_theta_deg")]
    sigma_theta: f64,
    #[serde(default = "defaults::clutter_rate")]
    clutter_rate: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    birth: usize,
    death: usize,
    position: [f64; 2],
    velocity: [f64; 2],
}

mod defaults {
    pub fn horizon() -> usize {
        100
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn dt() -> f64 {
        1.0
    }
    pub fn sigma_v() -> f64 {
        0.05
    }
    pub fn p_s() -> f64 {
        0.99
    }
    pub fn fov_radius() -> f64 {
        120.0
    }
    pub fn pd_filter() -> f64 {
        0.9
    }
    pub fn pd_true() -> f64 {
        1.0
    }
    pub fn sigma_r() -> f64 {
        1.0
    }
    pub fn sigma_theta_deg() -> f64 {
        1.0
    }
    pub fn clutter_rate() -> f64 {
        5.0
    }
}

fn section_id(kind: &str, key: &str) -> Result<u32, ScenarioError> {
    key.parse::<u32>()
        .map_err(|_| invalid(format!("{kind}.{key}"), "section suffix must be a non-negative integer"))
}

/// Parse scenario text. `origin` is only used in error messages.
pub fn parse_scenario(text: &str, origin: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;

    let mut sensors = Vec::with_capacity(raw.sensor.len());
    for (key, s) in &raw.sensor {
        sensors.push(Sensor {
            id: section_id("sensor", key)?,
            position: s.position,
            fov_radius: s.fov_radius,
            pd_filter: s.pd_filter,
            pd_true: s.pd_true,
            sigma_r: s.sigma_r,
            sigma_theta: s.sigma_theta.to_radians(),
            clutter_rate: s.clutter_rate,
        });
    }
    sensors.sort_by_key(|s| s.id);
    if sensors.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(invalid("sensor", "duplicate sensor id"));
    }

    let mut trajectories = Vec::with_capacity(raw.target.len());
    for (key, t) in &raw.target {
        trajectories.push(TrajectorySpec {
            id: section_id("target", key)?,
            birth_step: t.birth,
            death_step: t.death,
            initial_state: StateVector::new(t.position[0], t.position[1], t.velocity[0], t.velocity[1]),
        });
    }
    trajectories.sort_by_key(|t| t.id);

    let d = TrackerParams::default();
    let f = &raw.filter;
    let filter = TrackerParams {
        num_particles: f.particles.unwrap_or(d.num_particles),
        p_th: f.p_th.unwrap_or(d.p_th),
        p_prune: f.p_prune.unwrap_or(d.p_prune),
        mu_n: f.mu_n.unwrap_or(d.mu_n),
        gamma: f.gamma.unwrap_or(d.gamma),
        bp_max_iter: f.bp_max_iter.unwrap_or(d.bp_max_iter),
        bp_tol: f.bp_tol.unwrap_or(d.bp_tol),
        birth_velocity_std: f.birth_velocity_std.unwrap_or(d.birth_velocity_std),
    };

    let cfg = ScenarioConfig {
        sensors,
        motion: MotionModel {
            dt: raw.motion.dt,
            sigma_v: raw.motion.sigma_v,
            p_s: raw.motion.p_s,
        },
        trajectories,
        horizon: raw.horizon,
        filter,
        seed: raw.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const MINIMAL: &str = r#"
horizon = 20
[sensor.1]
position = [0.0, 0.0]
[target.1]
birth = 0
death = 20
position = [10.0, 10.0]
velocity = [1.0, 0.0]
"#;

    fn cfg(text: &str) -> ScenarioConfig {
        parse_scenario(text, Path::new("inline")).unwrap()
    }

    #[test]
    fn defaults_are_filled() {
        let c = cfg(MINIMAL);
        let s = &c.sensors[0];
        assert_eq!(s.fov_radius, 120.0);
        assert_eq!(s.pd_filter, 0.9);
        assert_eq!(s.pd_true, 1.0);
        assert!((s.sigma_theta - 0.0174533).abs() < 1e-7);
        assert_eq!(s.clutter_rate, 5.0);
        assert_eq!(c.motion.p_s, 0.99);
        assert_eq!(c.filter.num_particles, 10_000);
    }

    #[test]
    fn negative_sigma_r_names_the_field() {
        let text = MINIMAL.replace("position = [0.0, 0.0]", "position = [0.0, 0.0]\nsigma_r = -1.0");
        let err = parse_scenario(&text, Path::new("inline")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sigma_r"), "{msg}");
        assert!(matches!(err, ScenarioError::Model { .. }));
    }

    #[test]
    fn errors_are_distinct() {
        let missing = load_scenario("/nonexistent/path.scenario").unwrap_err();
        assert!(matches!(missing, ScenarioError::Io { .. }));
        let bad = parse_scenario("horizon = [", Path::new("x")).unwrap_err();
        assert!(matches!(bad, ScenarioError::Parse { .. }));
        let unknown = parse_scenario(&format!("{MINIMAL}\n[motion]\ndtt = 1.0\n"), Path::new("x")).unwrap_err();
        assert!(matches!(unknown, ScenarioError::Parse { .. }));
        let late = MINIMAL.replace("death = 20", "death = 30");
        let err = parse_scenario(&late, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("target.1"));
        let no_sensor = "horizon = 5\n";
        assert!(matches!(
            parse_scenario(no_sensor, Path::new("x")).unwrap_err(),
            ScenarioError::Invalid { .. }
        ));
    }

    #[test]
    fn noiseless_truth_is_a_straight_line() {
        let mut c = cfg(MINIMAL);
        c.motion.sigma_v = 0.0;
        let truth = generate_truth(&c, &mut ChaCha8Rng::seed_from_u64(3));
        for k in 0..20 {
            let x = truth.state_of(k, 1).unwrap();
            assert!((x.px - (10.0 + k as f64)).abs() < 1e-12);
            assert_eq!(x.py, 10.0);
        }
    }

    #[test]
    fn truth_is_seed_deterministic() {
        let c = cfg(MINIMAL);
        let a = generate_truth(&c, &mut ChaCha8Rng::seed_from_u64(11));
        let b = generate_truth(&c, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        let sa = generate_measurements(&a, &c.sensors, &mut ChaCha8Rng::seed_from_u64(5));
        let sb = generate_measurements(&b, &c.sensors, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(sa, sb);
    }

    #[test]
    fn one_detection_per_step_without_clutter() {
        let mut c = cfg(MINIMAL);
        c.sensors[0].clutter_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = generate_truth(&c, &mut rng);
        let scans = generate_measurements(&truth, &c.sensors, &mut rng);
        for k in 0..c.horizon {
            assert_eq!(scans.scan(k, 0).len(), 1);
            assert_eq!(scans.origins[k][0], vec![Some(1)]);
        }
    }

    #[test]
    fn targets_outside_fov_are_never_detected() {
        let text = MINIMAL.replace("position = [10.0, 10.0]", "position = [200.0, 10.0]");
        let mut c = cfg(&text);
        c.sensors[0].clutter_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = generate_truth(&c, &mut rng);
        let scans = generate_measurements(&truth, &c.sensors, &mut rng);
        assert_eq!(scans.total_measurements(), 0);
    }

    #[test]
    fn clutter_count_mean() {
        let c = cfg(MINIMAL);
        let n = 10_000;
        let truth = GroundTruth {
            steps: vec![Vec::new(); n],
        };
        let scans = generate_measurements(&truth, &c.sensors, &mut ChaCha8Rng::seed_from_u64(9));
        let mean = scans.total_measurements() as f64 / n as f64;
        let mc_err = (5.0f64 / n as f64).sqrt();
        assert!((mean - 5.0).abs() <= 3.0 * mc_err, "{mean}");
        for scan in scans.scans.iter().flatten() {
            for z in scan {
                assert!(z.range >= 0.0 && z.range <= 120.0);
                assert!(z.azimuth > -PI && z.azimuth <= PI);
            }
        }
    }
}

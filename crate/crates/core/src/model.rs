//! Generative primitives shared by scenario synthesis and the tracker:
//! constant-velocity motion, range/azimuth sensors with a circular field of
//! view, detection and clutter models, and the measurement likelihood.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("`{field}` must be {requirement}, got {value}")]
    Invalid {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

fn check(field: &'static str, ok: bool, requirement: &'static str, value: f64) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::Invalid {
            field,
            requirement,
            value,
        })
    }
}

/// Planar kinematic state: position in meters, velocity in meters/second.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
}

impl StateVector {
    pub const fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self { px, py, vx, vy }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.px, self.py]
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.px, self.vx, self.py, self.vy]
    }
}

/// 4x4 covariance in (px, vx, py, vy) order.
pub type Covariance4 = [[f64; 4]; 4];

/// Constant velocity with white-noise acceleration and constant survival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub dt: f64,
    pub sigma_v: f64,
    pub p_s: f64,
}

impl MotionModel {
    pub fn new(dt: f64, sigma_v: f64, p_s: f64) -> Result<Self, ModelError> {
        check("dt", dt > 0.0 && dt.is_finite(), "positive and finite", dt)?;
        check("sigma_v", sigma_v >= 0.0 && sigma_v.is_finite(), "non-negative", sigma_v)?;
        check("p_s", (0.0..=1.0).contains(&p_s), "a probability in [0, 1]", p_s)?;
        Ok(Self { dt, sigma_v, p_s })
    }

    /// Draw one process-noise sample with covariance [`process_noise_cov`].
    ///
    /// Uses the closed-form Cholesky factor of the per-axis block.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        let dt = self.dt;
        let s = self.sigma_v;
        // L = s * [[sqrt(dt^3/3), 0], [sqrt(3 dt)/2, sqrt(dt)/2]]
        let l11 = s * (dt * dt * dt / 3.0).sqrt();
        let l21 = s * (3.0 * dt).sqrt() / 2.0;
        let l22 = s * dt.sqrt() / 2.0;
        let n: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        StateVector {
            px: l11 * n[0],
            vx: l21 * n[0] + l22 * n[1],
            py: l11 * n[2],
            vy: l21 * n[2] + l22 * n[3],
        }
    }
}

/// Apply the constant-velocity transition, plus `noise` when given.
pub fn predict_state(x: &StateVector, m: &MotionModel, noise: Option<&StateVector>) -> StateVector {
    let mut out = StateVector {
        px: x.px + m.dt * x.vx,
        py: x.py + m.dt * x.vy,
        vx: x.vx,
        vy: x.vy,
    };
    if let Some(v) = noise {
        out.px += v.px;
        out.py += v.py;
        out.vx += v.vx;
        out.vy += v.vy;
    }
    out
}

/// Process noise covariance in (px, vx, py, vy) order.
pub fn process_noise_cov(dt: f64, sigma_v: f64) -> Result<Covariance4, ModelError> {
    check("dt", dt > 0.0 && dt.is_finite(), "positive and finite", dt)?;
    check("sigma_v", sigma_v >= 0.0 && sigma_v.is_finite(), "non-negative", sigma_v)?;
    let q = sigma_v * sigma_v;
    let a = q * dt * dt * dt / 3.0;
    let b = q * dt * dt / 2.0;
    let c = q * dt;
    let mut cov = [[0.0; 4]; 4];
    for axis in 0..2 {
        let i = 2 * axis;
        cov[i][i] = a;
        cov[i][i + 1] = b;
        cov[i + 1][i] = b;
        cov[i + 1][i + 1] = c;
    }
    Ok(cov)
}

/// A base station with a circular field of view and a range/azimuth sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub id: u32,
    pub position: [f64; 2],
    pub fov_radius: f64,
    /// Detection probability assumed by the tracker inside the FoV.
    pub pd_filter: f64,
    /// Detection probability used when synthesizing data.
    pub pd_true: f64,
    pub sigma_r: f64,
    /// Azimuth noise standard deviation in radians.
    pub sigma_theta: f64,
    /// Expected clutter count per scan.
    pub clutter_rate: f64,
}

impl Sensor {
    pub fn validate(&self) -> Result<(), ModelError> {
        let [x, y] = self.position;
        check("position", x.is_finite() && y.is_finite(), "finite", if x.is_finite() { y } else { x })?;
        check("fov_radius", self.fov_radius > 0.0 && self.fov_radius.is_finite(), "positive", self.fov_radius)?;
        check("pd_filter", (0.0..=1.0).contains(&self.pd_filter), "a probability in [0, 1]", self.pd_filter)?;
        check("pd_true", (0.0..=1.0).contains(&self.pd_true), "a probability in [0, 1]", self.pd_true)?;
        check("sigma_r", self.sigma_r > 0.0 && self.sigma_r.is_finite(), "positive", self.sigma_r)?;
        check("sigma_theta", self.sigma_theta > 0.0 && self.sigma_theta.is_finite(), "positive", self.sigma_theta)?;
        check("clutter_rate", self.clutter_rate >= 0.0 && self.clutter_rate.is_finite(), "non-negative", self.clutter_rate)?;
        Ok(())
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.position[0]).hypot(p[1] - self.position[1])
    }

    /// Closed-ball FoV test: the boundary counts as inside.
    pub fn in_fov(&self, p: [f64; 2]) -> bool {
        self.distance_to(p) <= self.fov_radius
    }

    /// Noiseless (range, azimuth) of a planar position.
    pub fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let dx = p[0] - self.position[0];
        let dy = p[1] - self.position[1];
        let range = dx.hypot(dy);
        let azimuth = if range == 0.0 { 0.0 } else { wrap_angle(dy.atan2(dx)) };
        (range, azimuth)
    }

    /// Cartesian point at the given range and azimuth from the sensor.
    pub fn invert(&self, range: f64, azimuth: f64) -> [f64; 2] {
        [
            self.position[0] + range * azimuth.cos(),
            self.position[1] + range * azimuth.sin(),
        ]
    }

    /// Peak value of the measurement density, 1 / (2 pi sigma_r sigma_theta).
    pub fn likelihood_peak(&self) -> f64 {
        1.0 / (TAU * self.sigma_r * self.sigma_theta)
    }
}

/// One (range, azimuth) detection from a sensor at a time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub range: f64,
    /// Radians in (-pi, pi].
    pub azimuth: f64,
    pub sensor_id: u32,
    pub time_index: usize,
}

impl Measurement {
    /// A zero-range measurement has no defined azimuth.
    pub fn is_degenerate(&self) -> bool {
        self.range == 0.0
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Noiseless measurement of `x` by `s`. A target exactly at the sensor yields
/// range 0 and azimuth 0, see [`Measurement::is_degenerate`].
pub fn measure(x: &StateVector, s: &Sensor, time_index: usize) -> Measurement {
    let (range, azimuth) = s.project(x.position());
    Measurement {
        range,
        azimuth,
        sensor_id: s.id,
        time_index,
    }
}

/// Gaussian density of `z` given a predicted (range, azimuth).
#[inline]
pub fn likelihood_at(z: &Measurement, range: f64, azimuth: f64, s: &Sensor) -> f64 {
    let er = (z.range - range) / s.sigma_r;
    let ea = wrap_angle(z.azimuth - azimuth) / s.sigma_theta;
    s.likelihood_peak() * (-0.5 * (er * er + ea * ea)).exp()
}

/// N(z; h_s(x), diag(sigma_r^2, sigma_theta^2)) with a wrapped azimuth residual.
pub fn measurement_likelihood(z: &Measurement, x: &StateVector, s: &Sensor) -> f64 {
    debug_assert_eq!(z.sensor_id, s.id);
    let (range, azimuth) = s.project(x.position());
    likelihood_at(z, range, azimuth, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    Generator,
    Filter,
}

pub fn detection_prob(x: &StateVector, s: &Sensor, mode: DetectionMode) -> f64 {
    detection_prob_at(x.position(), s, mode)
}

#[inline]
pub fn detection_prob_at(p: [f64; 2], s: &Sensor, mode: DetectionMode) -> f64 {
    if !s.in_fov(p) {
        return 0.0;
    }
    match mode {
        DetectionMode::Generator => s.pd_true,
        DetectionMode::Filter => s.pd_filter,
    }
}

/// Clutter intensity: uniform over [0, R] x (-pi, pi] in measurement space.
pub fn clutter_density(z: &Measurement, s: &Sensor) -> f64 {
    if z.range >= 0.0 && z.range <= s.fov_radius {
        s.clutter_rate / (s.fov_radius * TAU)
    } else {
        0.0
    }
}

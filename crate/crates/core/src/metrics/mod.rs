//! GOSPA scoring and Monte Carlo curve aggregation.
//!
//! With `alpha = 2` the metric splits into a localization part over matched
//! pairs and `c^p / 2` per missed truth or false estimate. Components are
//! reported in p-th power units so they add up to `total^p`.

use thiserror::Error;

use crate::model::Sensor;

mod assignment;

pub use assignment::hungarian;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate curve sets with different shapes: {0}")]
    ShapeMismatch(String),
    #[error("cannot aggregate an empty list of curve sets")]
    Empty,
    #[error("invalid GOSPA parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GospaParams {
    pub c: f64,
    pub p: f64,
    pub alpha: f64,
}

impl Default for GospaParams {
    fn default() -> Self {
        Self { c: 10.0, p: 2.0, alpha: 2.0 }
    }
}

impl GospaParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(MetricsError::Params(format!("cutoff c must be positive, got {}", self.c)));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(MetricsError::Params(format!("order p must be at least 1, got {}", self.p)));
        }
        if self.alpha != 2.0 {
            return Err(MetricsError::Params(format!("alpha must be 2, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GospaResult {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_alarm: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// GOSPA between true and estimated 2-D positions.
pub fn gospa(truth: &[[f64; 2]], est: &[[f64; 2]], params: &GospaParams) -> GospaResult {
    let c = params.c;
    let p = params.p;
    let penalty = c.powf(p) / params.alpha;
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| est.iter().map(|e| dist(*t, *e).min(c).powf(p)).collect())
        .collect();
    let assignment = hungarian(&cost);

    let mut localization = 0.0;
    let mut matched = 0usize;
    for (i, a) in assignment.iter().enumerate() {
        if let Some(j) = *a {
            let d = dist(truth[i], est[j]);
            // a pair at or beyond the cutoff is a miss plus a false alarm
            if d < c {
                localization += d.powf(p);
                matched += 1;
            }
        }
    }
    let missed = penalty * (truth.len() - matched) as f64;
    let false_alarm = penalty * (est.len() - matched) as f64;
    GospaResult {
        total: (localization + missed + false_alarm).powf(1.0 / p),
        localization,
        missed,
        false_alarm,
    }
}

/// Positions inside the sensor's closed FoV disc.
pub fn filter_by_fov(items: &[[f64; 2]], s: &Sensor) -> Vec<[f64; 2]> {
    items.iter().copied().filter(|x| s.in_fov(*x)).collect()
}

/// Per-step GOSPA components for one architecture.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curve {
    pub total: Vec<f64>,
    pub localization: Vec<f64>,
    pub missed: Vec<f64>,
    pub false_alarm: Vec<f64>,
}

impl Curve {
    pub fn with_horizon(n: usize) -> Self {
        Self {
            total: vec![0.0; n],
            localization: vec![0.0; n],
            missed: vec![0.0; n],
            false_alarm: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    pub fn set(&mut self, k: usize, r: &GospaResult) {
        self.total[k] = r.total;
        self.localization[k] = r.localization;
        self.missed[k] = r.missed;
        self.false_alarm[k] = r.false_alarm;
    }

    fn columns_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.total, &mut self.localization, &mut self.missed, &mut self.false_alarm]
    }

    fn columns(&self) -> [&Vec<f64>; 4] {
        [&self.total, &self.localization, &self.missed, &self.false_alarm]
    }
}

/// Curves for one sensor: one per architecture plus the true-target count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveSet {
    pub architectures: Vec<String>,
    pub curves: Vec<Curve>,
    pub avg_targets: Vec<f64>,
}

impl CurveSet {
    pub fn horizon(&self) -> usize {
        self.avg_targets.len()
    }

    pub fn curve(&self, arch: &str) -> Option<&Curve> {
        self.architectures.iter().position(|a| a == arch).map(|i| &self.curves[i])
    }
}

/// Element-wise mean over trials.
pub fn mc_aggregate(sets: &[CurveSet]) -> Result<CurveSet, MetricsError> {
    let first = sets.first().ok_or(MetricsError::Empty)?;
    let n = first.horizon();
    for (t, s) in sets.iter().enumerate() {
        if s.architectures != first.architectures {
            return Err(MetricsError::ShapeMismatch(format!("trial {t} has different architectures")));
        }
        if s.horizon() != n || s.curves.iter().any(|c| c.len() != n) {
            return Err(MetricsError::ShapeMismatch(format!(
                "trial {t} has horizon {} but trial 0 has {n}",
                s.horizon()
            )));
        }
    }
    let scale = 1.0 / sets.len() as f64;
    let mut out = CurveSet {
        architectures: first.architectures.clone(),
        curves: vec![Curve::with_horizon(n); first.curves.len()],
        avg_targets: vec![0.0; n],
    };
    for s in sets {
        for (acc, c) in out.curves.iter_mut().zip(&s.curves) {
            for (dst, src) in acc.columns_mut().into_iter().zip(c.columns()) {
                dst.iter_mut().zip(src).for_each(|(d, v)| *d += v);
            }
        }
        out.avg_targets.iter_mut().zip(&s.avg_targets).for_each(|(d, v)| *d += v);
    }
    for c in &mut out.curves {
        for col in c.columns_mut() {
            col.iter_mut().for_each(|v| *v *= scale);
        }
    }
    out.avg_targets.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimization over all partial matchings.
    pub(crate) fn brute_force(truth: &[[f64; 2]], est: &[[f64; 2]], gp: &GospaParams) -> GospaResult {
        #[allow(clippy::too_many_arguments)]
        fn go(
            i: usize,
            truth: &[[f64; 2]],
            est: &[[f64; 2]],
            used: &mut Vec<bool>,
            loc: f64,
            matched: usize,
            gp: &GospaParams,
            best: &mut GospaResult,
        ) {
            if i == truth.len() {
                let pen = gp.c.powf(gp.p) / gp.alpha;
                let missed = pen * (truth.len() - matched) as f64;
                let fa = pen * (est.len() - matched) as f64;
                let sum = loc + missed + fa;
                if sum < best.total.powf(gp.p) {
                    *best = GospaResult {
                        total: sum.powf(1.0 / gp.p),
                        localization: loc,
                        missed,
                        false_alarm: fa,
                    };
                }
                return;
            }
            go(i + 1, truth, est, used, loc, matched, gp, best);
            for j in 0..est.len() {
                if !used[j] {
                    used[j] = true;
                    let d = dist(truth[i], est[j]).powf(gp.p);
                    go(i + 1, truth, est, used, loc + d, matched + 1, gp, best);
                    used[j] = false;
                }
            }
        }
        let mut best = GospaResult {
            total: f64::INFINITY,
            ..Default::default()
        };
        go(0, truth, est, &mut vec![false; est.len()], 0.0, 0, gp, &mut best);
        best
    }

    fn pts(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec(prop::array::uniform2(-20.0f64..20.0), 0..=max)
    }

    #[test]
    fn one_missed_truth() {
        let r = gospa(&[[3.0, 4.0]], &[], &GospaParams::default());
        assert!((r.total - 50f64.sqrt()).abs() < 1e-12);
        assert!((r.total - 7.0711).abs() < 1e-4);
        assert_eq!(r.missed, 50.0);
        assert_eq!(r.localization + r.false_alarm, 0.0);
    }

    #[test]
    fn identical_sets_score_zero() {
        let a = [[1.0, 2.0], [5.0, -3.0], [0.0, 0.0]];
        assert_eq!(gospa(&a, &a, &GospaParams::default()), GospaResult::default());
    }

    #[test]
    fn far_pair_is_miss_plus_false() {
        let r = gospa(&[[0.0, 0.0]], &[[30.0, 0.0]], &GospaParams::default());
        assert_eq!(r.localization, 0.0);
        assert_eq!(r.missed, 50.0);
        assert_eq!(r.false_alarm, 50.0);
        assert!((r.total - 10.0).abs() < 1e-12);
    }

    #[test]
    fn fov_boundary() {
        let s = Sensor {
            id: 1,
            position: [0.0, 0.0],
            fov_radius: 120.0,
            pd_filter: 0.9,
            pd_true: 1.0,
            sigma_r: 1.0,
            sigma_theta: 0.01,
            clutter_rate: 1.0,
        };
        assert_eq!(filter_by_fov(&[[120.0, 0.0], [120.001, 0.0]], &s), vec![[120.0, 0.0]]);
        assert!(filter_by_fov(&[], &s).is_empty());
    }

    fn constant_set(v: f64) -> CurveSet {
        let mut c = Curve::with_horizon(3);
        c.columns_mut().into_iter().for_each(|col| col.iter_mut().for_each(|x| *x = v));
        CurveSet {
            architectures: vec!["A".into()],
            curves: vec![c],
            avg_targets: vec![v; 3],
        }
    }

    #[test]
    fn aggregation() {
        let one = constant_set(2.0);
        assert_eq!(mc_aggregate(std::slice::from_ref(&one)).unwrap(), one);
        let mean = mc_aggregate(&[constant_set(1.0), constant_set(4.0)]).unwrap();
        assert_eq!(mean, constant_set(2.5));
        let mut short = constant_set(1.0);
        short.avg_targets.pop();
        assert!(matches!(mc_aggregate(&[one, short]), Err(MetricsError::ShapeMismatch(_))));
        assert_eq!(mc_aggregate(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn param_validation() {
        assert!(GospaParams::default().validate().is_ok());
        assert!(GospaParams { c: 0.0, ..Default::default() }.validate().is_err());
        assert!(GospaParams { p: 0.5, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(t in pts(4), e in pts(4), c in 1.0f64..15.0, p in 1.0f64..3.0) {
            let gp = GospaParams { c, p, alpha: 2.0 };
            let fast = gospa(&t, &e, &gp);
            let slow = brute_force(&t, &e, &gp);
            prop_assert!((fast.total - slow.total).abs() < 1e-9);
            prop_assert!((fast.localization - slow.localization).abs() < 1e-9);
            prop_assert!((fast.missed - slow.missed).abs() < 1e-9);
            prop_assert!((fast.false_alarm - slow.false_alarm).abs() < 1e-9);
        }

        #[test]
        fn swap_symmetry(t in pts(5), e in pts(5)) {
            let gp = GospaParams::default();
            let a = gospa(&t, &e, &gp);
            let b = gospa(&e, &t, &gp);
            prop_assert!((a.total - b.total).abs() < 1e-9);
            prop_assert!((a.missed - b.false_alarm).abs() < 1e-9);
            prop_assert!((a.false_alarm - b.missed).abs() < 1e-9);
        }

        #[test]
        fn order_invariant(t in pts(5), e in pts(5)) {
            let gp = GospaParams::default();
            let mut tr = t.clone();
            tr.reverse();
            let mut er = e.clone();
            er.rotate_left(e.len().min(1));
            prop_assert!((gospa(&t, &e, &gp).total - gospa(&tr, &er, &gp).total).abs() < 1e-9);
        }

        #[test]
        fn unmatched_estimate_never_helps(t in pts(5), e in pts(5), x in prop::array::uniform2(-20.0f64..20.0)) {
            let gp = GospaParams::default();
            let mut more = e.clone();
            // beyond the cutoff from every truth, so it cannot be matched
            more.push([x[0] + 100.0, x[1]]);
            prop_assert!(gospa(&t, &more, &gp).total >= gospa(&t, &e, &gp).total - 1e-9);
        }

        #[test]
        fn self_distance_is_zero(t in pts(6)) {
            prop_assert!(gospa(&t, &t, &GospaParams::default()).total.abs() < 1e-12);
        }
    }
}

//! Loopy belief propagation over the track-oriented (a) and
//! measurement-oriented (b) association variables.

use super::TrackerParams;

/// Scalar association factors after marginalizing the particle beliefs.
///
/// `beta[j][0]` is the missed-detection-or-nonexistence mass of legacy PT `j`
/// and `beta[j][m]` its mass for measurement `m` (1-based). `xi[m - 1]` is the
/// new-PT-or-clutter mass of measurement `m`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationWeights {
    pub beta: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
}

impl AssociationWeights {
    pub fn num_targets(&self) -> usize {
        self.beta.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.xi.len()
    }
}

/// Approximate association marginals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarginalAssoc {
    /// `p_a[j][m]`, m in 0..=M; each row sums to 1.
    pub p_a: Vec<Vec<f64>>,
    /// `p_b0[m - 1]`: probability that measurement m is not claimed by a legacy PT.
    pub p_b0: Vec<f64>,
}

impl MarginalAssoc {
    /// Most likely association for PT `j`; 0 means missed detection.
    pub fn argmax(&self, j: usize) -> usize {
        let row = &self.p_a[j];
        let mut best = 0;
        for (m, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = m;
            }
        }
        best
    }
}

/// Iterate the standard per-target / per-measurement message updates until the
/// largest change falls below `bp_tol` or `bp_max_iter` sweeps are done.
pub fn loopy_association(w: &AssociationWeights, p: &TrackerParams) -> MarginalAssoc {
    let j_count = w.num_targets();
    let m_count = w.num_measurements();
    debug_assert!(w.beta.iter().all(|row| row.len() == m_count + 1));

    if m_count == 0 {
        return MarginalAssoc {
            p_a: vec![vec![1.0]; j_count],
            p_b0: Vec::new(),
        };
    }
    if j_count == 0 {
        return MarginalAssoc {
            p_a: Vec::new(),
            p_b0: vec![1.0; m_count],
        };
    }

    // nu[j][m]: measurement m -> target j; phi[j][m]: target j -> measurement m
    let mut nu = vec![vec![1.0f64; m_count]; j_count];
    let mut phi = vec![vec![0.0f64; m_count]; j_count];
    let mut col_sum = vec![0.0f64; m_count];

    for _ in 0..p.bp_max_iter.max(1) {
        for j in 0..j_count {
            let b = &w.beta[j];
            let total: f64 = b[0] + (0..m_count).map(|m| b[m + 1] * nu[j][m]).sum::<f64>();
            for m in 0..m_count {
                let others = total - b[m + 1] * nu[j][m];
                phi[j][m] = if b[m + 1] == 0.0 { 0.0 } else { b[m + 1] / others };
            }
        }
        col_sum.iter_mut().for_each(|c| *c = 0.0);
        for row in &phi {
            for (c, v) in col_sum.iter_mut().zip(row) {
                *c += v;
            }
        }
        let mut delta = 0.0f64;
        for j in 0..j_count {
            for m in 0..m_count {
                let updated = 1.0 / (w.xi[m] + col_sum[m] - phi[j][m]);
                delta = delta.max((updated - nu[j][m]).abs());
                nu[j][m] = updated;
            }
        }
        if delta < p.bp_tol {
            break;
        }
    }

    let p_a = (0..j_count)
        .map(|j| {
            let b = &w.beta[j];
            let mut row = Vec::with_capacity(m_count + 1);
            row.push(b[0]);
            row.extend((0..m_count).map(|m| b[m + 1] * nu[j][m]));
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= z);
            row
        })
        .collect();
    let p_b0 = (0..m_count)
        .map(|m| w.xi[m] / (w.xi[m] + col_sum[m]))
        .collect();
    MarginalAssoc { p_a, p_b0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> TrackerParams {
        TrackerParams::default()
    }

    #[test]
    fn single_pair_is_exact() {
        let w = AssociationWeights {
            beta: vec![vec![0.3, 2.0]],
            xi: vec![1.5],
        };
        let m = loopy_association(&w, &params());
        // configurations: (a=0,b=0) weight 0.3*1.5, (a=1,b=1) weight 2.0
        let z = 0.3 * 1.5 + 2.0;
        assert!((m.p_a[0][1] - 2.0 / z).abs() < 1e-12);
        assert!((m.p_a[0][0] - 0.45 / z).abs() < 1e-12);
        assert!((m.p_b0[0] - 0.45 / z).abs() < 1e-12);
    }

    #[test]
    fn undetectable_target_stays_unassociated() {
        let w = AssociationWeights {
            beta: vec![vec![1.0, 0.0, 0.0], vec![0.2, 3.0, 0.1]],
            xi: vec![1.1, 1.0],
        };
        let m = loopy_association(&w, &params());
        assert_eq!(m.p_a[0][0], 1.0);
        assert_eq!(m.argmax(0), 0);
        assert_eq!(m.argmax(1), 1);
    }

    #[test]
    fn empty_sides() {
        let none = loopy_association(
            &AssociationWeights {
                beta: vec![vec![0.4]],
                xi: vec![],
            },
            &params(),
        );
        assert_eq!(none.p_a, vec![vec![1.0]]);
        let births = loopy_association(
            &AssociationWeights {
                beta: vec![],
                xi: vec![1.2, 3.0],
            },
            &params(),
        );
        assert_eq!(births.p_b0, vec![1.0, 1.0]);
    }

    #[test]
    fn permutation_like_instances_are_overconfident() {
        // Both targets surely exist and both measurements surely come from
        // them; exact marginals split 0.36 / 0.64 but the loopy fixed point
        // commits to the dominant pairing. The ranking still agrees.
        let w = AssociationWeights {
            beta: vec![vec![0.158, 785.0, 991.0], vec![0.196, 1022.0, 728.0]],
            xi: vec![1.001, 1.001],
        };
        let m = loopy_association(&w, &params());
        let swap: f64 = 991.0 * 1022.0;
        let keep = 785.0 * 728.0;
        let exact = swap / (swap + keep);
        assert!((exact - 0.639).abs() < 1e-3);
        assert!(m.p_a[0][2] > 0.99);
        assert_eq!(m.argmax(0), 2);
        assert_eq!(m.argmax(1), 1);
    }

    #[test]
    fn common_scaling_is_not_an_invariant() {
        // every configuration holds one beta factor per PT but one xi factor
        // only per unclaimed measurement, so a common factor does not cancel
        let w = AssociationWeights {
            beta: vec![vec![0.3, 2.0]],
            xi: vec![1.5],
        };
        let scaled = AssociationWeights {
            beta: vec![vec![0.6, 4.0]],
            xi: vec![3.0],
        };
        let (a, b) = (loopy_association(&w, &params()), loopy_association(&scaled, &params()));
        assert!((a.p_a[0][1] - 2.0 / 2.45).abs() < 1e-12);
        assert!((b.p_a[0][1] - 4.0 / 5.8).abs() < 1e-12);
    }

    fn instance() -> impl Strategy<Value = AssociationWeights> {
        (1usize..4, 1usize..4).prop_flat_map(|(j, m)| {
            (
                prop::collection::vec(prop::collection::vec(0.1f64..5.0, m + 1), j),
                prop::collection::vec(1.0f64..3.0, m),
            )
                .prop_map(|(beta, xi)| AssociationWeights { beta, xi })
        })
    }

    fn close(a: &MarginalAssoc, b: &MarginalAssoc, tol: f64) -> bool {
        a.p_a.iter().flatten().zip(b.p_a.iter().flatten()).all(|(x, y)| (x - y).abs() < tol)
            && a.p_b0.iter().zip(&b.p_b0).all(|(x, y)| (x - y).abs() < tol)
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(w in instance()) {
            let m = loopy_association(&w, &params());
            for row in &m.p_a {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            prop_assert!(m.p_b0.iter().all(|p| (0.0..=1.0).contains(p)));
        }

        #[test]
        fn measurement_reordering_permutes_marginals(w in instance(), rot in 0usize..3) {
            let m_count = w.num_measurements();
            let perm: Vec<usize> = (0..m_count).map(|i| (i + rot) % m_count).collect();
            let permuted = AssociationWeights {
                beta: w.beta.iter().map(|row| {
                    let mut r = vec![row[0]];
                    r.extend(perm.iter().map(|&i| row[i + 1]));
                    r
                }).collect(),
                xi: perm.iter().map(|&i| w.xi[i]).collect(),
            };
            let (a, b) = (loopy_association(&w, &params()), loopy_association(&permuted, &params()));
            for (j, row) in b.p_a.iter().enumerate() {
                prop_assert!((row[0] - a.p_a[j][0]).abs() < 1e-6);
                for (k, &i) in perm.iter().enumerate() {
                    prop_assert!((row[k + 1] - a.p_a[j][i + 1]).abs() < 1e-6);
                    prop_assert!((b.p_b0[k] - a.p_b0[i]).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn scaling_one_target_row_is_invariant(w in instance(), c in 0.01f64..100.0, pick in 0usize..3) {
            let mut scaled = w.clone();
            let j = pick % w.num_targets();
            scaled.beta[j].iter_mut().for_each(|v| *v *= c);
            let (a, b) = (loopy_association(&w, &params()), loopy_association(&scaled, &params()));
            prop_assert!(close(&a, &b, 1e-6));
        }

        #[test]
        fn scaling_one_measurement_column_is_invariant(w in instance(), c in 0.01f64..100.0, pick in 0usize..3) {
            let mut scaled = w.clone();
            let m = pick % w.num_measurements();
            scaled.beta.iter_mut().for_each(|row| row[m + 1] *= c);
            scaled.xi[m] *= c;
            let (a, b) = (loopy_association(&w, &params()), loopy_association(&scaled, &params()));
            // the stopping rule is in message units, so allow a few tolerances of slack
            prop_assert!(close(&a, &b, 1e-4));
        }
    }
}

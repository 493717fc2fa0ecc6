//! Accumulated evidence and the Bayesian posterior over target locations.

use std::sync::Arc;

use crate::environment::ResponseVector;
use crate::error::{Error, Result};
use crate::task::TaskConfig;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Sufficient statistic `s(i) = Σ_t d′²(i, k(t)) · W(i, k(t))` after `t` fixations.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    s: Vec<f64>,
    ln_prior: Arc<[f64]>,
    uniform_prior: bool,
    t: usize,
}

impl BeliefState {
    /// Empty belief (`s = 0`, `t = 0`).
    pub fn new(task: &TaskConfig) -> Self {
        Self {
            s: vec![0.0; task.n()],
            ln_prior: task.ln_prior().clone(),
            uniform_prior: task.has_uniform_prior(),
            t: 0,
        }
    }

    /// Belief with a given statistic, e.g. a network input or a test state.
    pub fn from_statistic(task: &TaskConfig, s: Vec<f64>, t: usize) -> Result<Self> {
        if s.len() != task.n() {
            return Err(Error::Dimension {
                expected: task.n(),
                got: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("belief statistic must be finite".into()));
        }
        Ok(Self {
            s,
            ..Self::new(task)
        }
        .with_t(t))
    }

    fn with_t(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    /// Replays a whole response history in one pass.
    pub fn from_history(task: &TaskConfig, history: &[ResponseVector]) -> Result<Self> {
        let mut s = vec![0.0; task.n()];
        for resp in history {
            check_response(task, resp)?;
            for (i, (acc, &w)) in s.iter_mut().zip(&resp.values).enumerate() {
                *acc += task.evidence(resp.fixation, i, w);
            }
        }
        Self::from_statistic(task, s, history.len())
    }

    /// Adds one fixation's evidence in place.
    pub fn absorb(&mut self, resp: &ResponseVector, task: &TaskConfig) -> Result<()> {
        check_response(task, resp)?;
        for (i, (acc, &w)) in self.s.iter_mut().zip(&resp.values).enumerate() {
            *acc += task.evidence(resp.fixation, i, w);
        }
        self.t += 1;
        Ok(())
    }

    /// Value-returning form of [`BeliefState::absorb`].
    pub fn update_statistic(&self, resp: &ResponseVector, task: &TaskConfig) -> Result<Self> {
        let mut next = self.clone();
        next.absorb(resp, task)?;
        Ok(next)
    }

    pub fn statistic(&self) -> &[f64] {
        &self.s
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// Normalized log posterior `ln p_i`; `-inf` where the prior is zero.
    pub fn log_posterior(&self) -> Vec<f64> {
        let mut a: Vec<f64> = self
            .s
            .iter()
            .zip(self.ln_prior.iter())
            .map(|(s, lp)| s + lp)
            .collect();
        let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + a.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in &mut a {
            *v -= lse;
        }
        a
    }

    /// `p_i ∝ P(i) · exp(s(i))`, evaluated with a max shift.
    pub fn posterior(&self) -> Vec<f64> {
        let a: Vec<f64> = self
            .s
            .iter()
            .zip(self.ln_prior.iter())
            .map(|(s, lp)| s + lp)
            .collect();
        let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = a.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        p
    }

    /// Maximum a posteriori location, lowest index on ties.
    pub fn map_choice(&self) -> usize {
        if self.uniform_prior {
            argmax(&self.s)
        } else {
            let a: Vec<f64> = self
                .s
                .iter()
                .zip(self.ln_prior.iter())
                .map(|(s, lp)| s + lp)
                .collect();
            argmax(&a)
        }
    }
}

fn check_response(task: &TaskConfig, resp: &ResponseVector) -> Result<()> {
    if resp.fixation >= task.n() {
        return Err(Error::IndexOutOfRange {
            index: resp.fixation,
            n: task.n(),
        });
    }
    if resp.values.len() != task.n() {
        return Err(Error::Dimension {
            expected: task.n(),
            got: resp.values.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{build_location_grid, LocationSet, Point, Prior, TaskParams, VisibilityMap};
    use approx::assert_relative_eq;

    fn three_location_task() -> TaskConfig {
        let locs = LocationSet::from_coords(
            vec![
                Point::new(0.0, 0.0),
                Point::new(3.0, 0.0),
                Point::new(0.0, 4.0),
            ],
            5.0,
        )
        .unwrap();
        TaskConfig::new(TaskParams::new(locs, VisibilityMap::default())).unwrap()
    }

    #[test]
    fn zero_response_leaves_statistic() {
        let task = three_location_task();
        let b = BeliefState::new(&task);
        let next = b
            .update_statistic(
                &ResponseVector {
                    fixation: 1,
                    values: vec![0.0; 3],
                },
                &task,
            )
            .unwrap();
        assert_eq!(next.statistic(), b.statistic());
        assert_eq!(next.t(), 1);
    }

    #[test]
    fn single_update_by_hand() {
        let task = three_location_task();
        let resp = ResponseVector {
            fixation: 0,
            values: vec![0.3, -0.2, 1.1],
        };
        let b = BeliefState::new(&task)
            .update_statistic(&resp, &task)
            .unwrap();
        // d'(0) = 4, d'(3) = 4/(1 + 0.75^1.5), d'(4) = 2
        let d1 = 4.0 / (1.0 + 0.75f64.powf(1.5));
        assert_relative_eq!(b.statistic()[0], 16.0 * 0.3, epsilon = 1e-15);
        assert_relative_eq!(b.statistic()[1], d1 * d1 * -0.2, epsilon = 1e-15);
        assert_relative_eq!(b.statistic()[2], 4.0 * 1.1, epsilon = 1e-15);
    }

    #[test]
    fn update_order_does_not_matter() {
        let task = three_location_task();
        let r1 = ResponseVector {
            fixation: 0,
            values: vec![0.25, -0.5, 0.125],
        };
        let r2 = ResponseVector {
            fixation: 2,
            values: vec![-0.75, 0.5, 1.0],
        };
        let b = BeliefState::new(&task);
        let ab = b
            .update_statistic(&r1, &task)
            .unwrap()
            .update_statistic(&r2, &task)
            .unwrap();
        let ba = b
            .update_statistic(&r2, &task)
            .unwrap()
            .update_statistic(&r1, &task)
            .unwrap();
        assert_eq!(ab.statistic(), ba.statistic());
    }

    #[test]
    fn uniform_belief_posterior() {
        let task = TaskConfig::reference();
        let p = BeliefState::new(&task).posterior();
        for v in p {
            assert_relative_eq!(v, 1.0 / 85.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_of_three() {
        let task = three_location_task();
        let b = BeliefState::from_statistic(&task, vec![1.0, 0.0, 0.0], 1).unwrap();
        let p = b.posterior();
        assert_relative_eq!(p[0], 0.576_116_884_765_829_6, epsilon = 1e-12);
        assert_relative_eq!(p[1], 0.211_941_557_617_085_2, epsilon = 1e-12);
        assert_relative_eq!(p[2], 0.211_941_557_617_085_2, epsilon = 1e-12);
    }

    #[test]
    fn delta_prior_is_absorbing() {
        let locs = build_location_grid(7, 1.0).unwrap();
        let mut params = TaskParams::new(locs, VisibilityMap::default());
        let mut prior = vec![0.0; 7];
        prior[4] = 1.0;
        params.prior = Prior::Explicit(prior);
        let task = TaskConfig::new(params).unwrap();
        let b = BeliefState::from_statistic(&task, vec![50.0, -3.0, 9.0, 0.0, -40.0, 2.0, 1.0], 2)
            .unwrap();
        let p = b.posterior();
        for (i, v) in p.iter().enumerate() {
            assert_eq!(*v, if i == 4 { 1.0 } else { 0.0 });
        }
        assert_eq!(b.map_choice(), 4);
        assert_eq!(b.log_posterior()[0], f64::NEG_INFINITY);
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax(&[0.1, 0.8, 0.1]), 1);
        assert_eq!(argmax(&[0.0, 0.1, 0.9, 0.0, 0.0, 0.9]), 2);
        assert_eq!(argmax(&[0.3; 5]), 0);
    }

    #[test]
    fn large_statistics_do_not_overflow() {
        let task = three_location_task();
        let b = BeliefState::from_statistic(&task, vec![1e4, -1e4, 9_999.0], 1).unwrap();
        let p = b.posterior();
        assert!(p.iter().all(|v| v.is_finite()));
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[0], 1.0 / (1.0 + (-1.0f64).exp()), epsilon = 1e-12);
    }
}

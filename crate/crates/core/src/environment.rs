//! Stochastic search environment: hidden target, per-fixation template
//! responses and the terminal localization reward.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{tag, SeedPath};
use crate::task::TaskConfig;

/// Template responses at every location for one fixation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector {
    pub fixation: usize,
    pub values: Vec<f64>,
}

/// Terminal reward: 1 for a correct localization, 0 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reward(u8);

impl Reward {
    pub fn from_outcome(correct: bool) -> Self {
        Reward(correct as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

/// Draws one response vector: location `i` gets Normal(μ₊ or μ₋, 1/d′(ε(i, fixation))).
///
/// Noise is fresh on every call (dynamic background).
pub fn sample_responses<R: Rng + ?Sized>(
    task: &TaskConfig,
    true_target: usize,
    fixation: usize,
    rng: &mut R,
) -> Result<ResponseVector> {
    let n = task.n();
    for index in [true_target, fixation] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    let values = task
        .dprime_row(fixation)
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mean = if i == true_target {
                task.mean_present()
            } else {
                task.mean_absent()
            };
            let z: f64 = rng.sample(StandardNormal);
            mean + z / d
        })
        .collect();
    Ok(ResponseVector { fixation, values })
}

/// Draws a target index from the task prior.
pub fn sample_target<R: Rng + ?Sized>(task: &TaskConfig, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let prior = task.prior();
    for (i, p) in prior.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final cumulative sum
    prior
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(prior.len() - 1)
}

/// One trial in progress. The true target is private to the environment;
/// searchers only see [`EpisodeState::responses`].
#[derive(Debug, Clone)]
pub struct EpisodeState<'a> {
    task: &'a TaskConfig,
    seed: SeedPath,
    true_target: usize,
    fixations: Vec<usize>,
    responses: Vec<ResponseVector>,
}

impl<'a> EpisodeState<'a> {
    /// Samples the target from the prior and the responses at the initial fixation.
    ///
    /// Target and per-fixation noise come from separate children of `seed`,
    /// so two searchers given the same seed face the same target and the
    /// same noise draws at each fixation number.
    pub fn start(task: &'a TaskConfig, seed: SeedPath) -> Result<Self> {
        let target = sample_target(task, &mut seed.child(tag::TARGET).rng());
        Self::start_with_target(task, seed, target)
    }

    /// Like [`EpisodeState::start`] with the target fixed by the caller.
    pub fn start_with_target(
        task: &'a TaskConfig,
        seed: SeedPath,
        true_target: usize,
    ) -> Result<Self> {
        if true_target >= task.n() {
            return Err(Error::IndexOutOfRange {
                index: true_target,
                n: task.n(),
            });
        }
        let mut state = Self {
            task,
            seed,
            true_target,
            fixations: Vec::with_capacity(task.saccade_budget() + 1),
            responses: Vec::with_capacity(task.saccade_budget() + 1),
        };
        state.fixate(task.initial_fixation())?;
        Ok(state)
    }

    fn fixate(&mut self, fixation: usize) -> Result<()> {
        let t = self.fixations.len() as u64;
        let mut rng = self.seed.child2(tag::FIXATION, t).rng();
        let resp = sample_responses(self.task, self.true_target, fixation, &mut rng)?;
        self.fixations.push(fixation);
        self.responses.push(resp);
        Ok(())
    }

    /// Moves the eye to `next_fixation` (any location, refixation allowed)
    /// and records a fresh response vector.
    pub fn step(&mut self, next_fixation: usize) -> Result<&ResponseVector> {
        if self.is_finished() {
            return Err(Error::Episode(format!(
                "episode already used its {} saccades",
                self.task.saccade_budget()
            )));
        }
        self.fixate(next_fixation)?;
        Ok(self.responses.last().expect("just pushed"))
    }

    /// Reward for localizing the target at `chosen`; only valid once the
    /// saccade budget is spent.
    pub fn terminal_reward(&self, chosen: usize) -> Result<Reward> {
        if !self.is_finished() {
            return Err(Error::Episode(format!(
                "reward requested after {} of {} saccades",
                self.saccades_made(),
                self.task.saccade_budget()
            )));
        }
        if chosen >= self.task.n() {
            return Err(Error::IndexOutOfRange {
                index: chosen,
                n: self.task.n(),
            });
        }
        Ok(Reward::from_outcome(chosen == self.true_target))
    }

    pub fn task(&self) -> &'a TaskConfig {
        self.task
    }

    pub fn seed(&self) -> SeedPath {
        self.seed
    }

    /// Ground truth. Used by the environment-side Q estimator and by logs.
    pub fn true_target(&self) -> usize {
        self.true_target
    }

    /// Number of fixations so far, including the initial one.
    pub fn t(&self) -> usize {
        self.fixations.len()
    }

    pub fn saccades_made(&self) -> usize {
        self.fixations.len() - 1
    }

    pub fn is_finished(&self) -> bool {
        self.saccades_made() >= self.task.saccade_budget()
    }

    pub fn fixations(&self) -> &[usize] {
        &self.fixations
    }

    pub fn responses(&self) -> &[ResponseVector] {
        &self.responses
    }

    pub fn current_fixation(&self) -> usize {
        *self
            .fixations
            .last()
            .expect("episode always has an initial fixation")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{build_location_grid, Prior, TaskParams, VisibilityMap};

    fn delta_prior_task(at: usize) -> TaskConfig {
        let locs = build_location_grid(85, 8.0).unwrap();
        let mut prior = vec![0.0; 85];
        prior[at] = 1.0;
        let mut params = TaskParams::new(locs, VisibilityMap::default());
        params.prior = Prior::Explicit(prior);
        TaskConfig::new(params).unwrap()
    }

    #[test]
    fn degenerate_prior_fixes_target() {
        let task = delta_prior_task(7);
        for e in 0..200 {
            let ep = EpisodeState::start(&task, SeedPath::root(1).child(e)).unwrap();
            assert_eq!(ep.true_target(), 7);
        }
    }

    #[test]
    fn lifecycle() {
        let task = TaskConfig::reference();
        let mut ep = EpisodeState::start(&task, SeedPath::root(3)).unwrap();
        assert_eq!(ep.fixations(), &[0]);
        assert_eq!(ep.t(), 1);
        assert!(ep.terminal_reward(0).is_err());
        for s in 1..=3 {
            let before = ep.t();
            ep.step(ep.current_fixation()).unwrap();
            assert_eq!(ep.t(), before + 1);
            assert_eq!(ep.saccades_made(), s);
        }
        assert!(ep.step(4).is_err());
        let target = ep.true_target();
        assert_eq!(ep.terminal_reward(target).unwrap().value(), 1);
        assert_eq!(ep.terminal_reward((target + 1) % 85).unwrap().value(), 0);
    }

    #[test]
    fn refixation_draws_fresh_noise() {
        let task = TaskConfig::reference();
        let mut ep = EpisodeState::start(&task, SeedPath::root(9)).unwrap();
        ep.step(0).unwrap();
        assert_eq!(ep.fixations(), &[0, 0]);
        assert_ne!(ep.responses()[0].values, ep.responses()[1].values);
    }

    #[test]
    fn same_seed_same_episode() {
        let task = TaskConfig::reference();
        let run = || {
            let mut ep = EpisodeState::start(&task, SeedPath::root(11)).unwrap();
            ep.step(12).unwrap();
            ep.step(40).unwrap();
            (ep.true_target(), ep.responses().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn huge_dprime_removes_noise() {
        let locs = build_location_grid(7, 1.0).unwrap();
        let task = TaskConfig::new(TaskParams::new(locs, VisibilityMap::constant(1e6))).unwrap();
        let resp = sample_responses(&task, 2, 0, &mut SeedPath::root(0).rng()).unwrap();
        for (i, w) in resp.values.iter().enumerate() {
            let want = if i == 2 { 0.5 } else { -0.5 };
            assert!((w - want).abs() < 1e-4);
        }
    }

    #[test]
    fn bad_indices_are_rejected() {
        let task = TaskConfig::reference();
        let mut rng = SeedPath::root(0).rng();
        assert!(sample_responses(&task, 85, 0, &mut rng).is_err());
        assert!(sample_responses(&task, 0, 99, &mut rng).is_err());
    }
}

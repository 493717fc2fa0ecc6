//! Brute-force Monte-Carlo reference values.
//!
//! Everything here simulates whole response vectors and counts events. None
//! of it reuses the searchers' integrals, so it can catch mistakes there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::environment::{sample_responses, sample_target, EpisodeState};
use crate::error::{Error, Result};
use crate::searchers::Searcher;
use crate::seed::{tag, SeedPath};
use crate::task::TaskConfig;

pub const MIN_SAMPLES: usize = 1000;
pub const MIN_TRIALS: usize = 100;

/// Draws per independently seeded batch.
const BATCH: usize = 10_000;

/// A Bernoulli proportion and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl OracleEstimate {
    pub fn from_counts(hits: usize, samples: usize) -> Self {
        let mean = hits as f64 / samples as f64;
        Self {
            mean,
            std_error: (mean * (1.0 - mean) / samples as f64).sqrt(),
            samples,
        }
    }

    /// |mean − value| in standard errors; infinite if SE is zero and they differ.
    pub fn z_score(&self, value: f64) -> f64 {
        let gap = (self.mean - value).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.std_error
        }
    }
}

/// Counts hits over `m` draws split into seeded batches, summed in batch order.
fn count_hits<F>(m: usize, seed: SeedPath, draw: F) -> Result<usize>
where
    F: Fn(&mut crate::seed::StreamRng) -> Result<bool> + Sync,
{
    let batches = m.div_ceil(BATCH);
    let counts: Vec<usize> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let size = BATCH.min(m - b * BATCH);
            let mut rng = seed.child(b as u64).rng();
            let mut hits = 0;
            for _ in 0..size {
                hits += draw(&mut rng)? as usize;
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    Ok(counts.iter().sum())
}

fn check_samples(m: usize) -> Result<()> {
    if m < MIN_SAMPLES {
        return Err(Error::Invalid(format!(
            "oracle needs at least {MIN_SAMPLES} samples, got {m}"
        )));
    }
    Ok(())
}

/// Fraction of simulated fixations at `k_next`, with the target at `i`, after
/// which the updated belief's MAP choice is `i`.
pub fn oracle_p_correct(
    i: usize,
    k_next: usize,
    belief: &BeliefState,
    task: &TaskConfig,
    m: usize,
    seed: SeedPath,
) -> Result<OracleEstimate> {
    check_samples(m)?;
    for index in [i, k_next] {
        if index >= task.n() {
            return Err(Error::IndexOutOfRange { index, n: task.n() });
        }
    }
    let hits = count_hits(m, seed.child(tag::ORACLE), |rng| {
        let resp = sample_responses(task, i, k_next, rng)?;
        Ok(belief.update_statistic(&resp, task)?.map_choice() == i)
    })?;
    Ok(OracleEstimate::from_counts(hits, m))
}

/// Per-candidate estimate of the one-step probability of a correct MAP
/// choice, with the target drawn from the current posterior on every draw.
pub fn oracle_is_objective(
    belief: &BeliefState,
    task: &TaskConfig,
    m: usize,
    seed: SeedPath,
) -> Result<Vec<OracleEstimate>> {
    check_samples(m)?;
    let post = belief.posterior();
    let cdf: Vec<f64> = post
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let last = post
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(post.len() - 1);
    (0..task.n())
        .map(|k| {
            let hits = count_hits(m, seed.child2(tag::ORACLE, k as u64), |rng| {
                let u: f64 = rand::Rng::gen(rng);
                let i = cdf.iter().position(|&c| u < c).unwrap_or(last);
                let resp = sample_responses(task, i, k, rng)?;
                Ok(belief.update_statistic(&resp, task)?.map_choice() == i)
            })?;
            Ok(OracleEstimate::from_counts(hits, m))
        })
        .collect()
}

/// Proportion correct after 1, 2, ..., budget saccades of full episodes
/// played by `searcher`.
pub fn oracle_policy_pc(
    searcher: &Searcher,
    task: &TaskConfig,
    trials: usize,
    seed: SeedPath,
) -> Result<Vec<OracleEstimate>> {
    if trials < MIN_TRIALS {
        return Err(Error::Invalid(format!(
            "policy PC needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let budget = task.saccade_budget();
    let outcomes: Vec<Vec<bool>> = (0..trials as u64)
        .into_par_iter()
        .map(|e| {
            let ep_seed = seed.child2(tag::ORACLE, e);
            let mut env = EpisodeState::start(task, ep_seed)?;
            let mut belief = BeliefState::new(task);
            belief.absorb(&env.responses()[0], task)?;
            let mut correct = Vec::with_capacity(budget);
            for s in 1..=budget {
                let d = searcher.decide(
                    task,
                    &belief,
                    s,
                    ep_seed.child2(tag::POLICY, s as u64),
                    false,
                )?;
                let resp = env.step(d.fixation)?;
                belief.absorb(resp, task)?;
                correct.push(belief.map_choice() == env.true_target());
            }
            Ok(correct)
        })
        .collect::<Result<_>>()?;
    Ok((0..budget)
        .map(|s| OracleEstimate::from_counts(outcomes.iter().filter(|o| o[s]).count(), trials))
        .collect())
}

/// Targets drawn from the prior, for checking [`sample_target`] frequencies.
pub fn target_frequencies(task: &TaskConfig, m: usize, seed: SeedPath) -> Vec<f64> {
    let mut counts = vec![0usize; task.n()];
    let mut rng = seed.rng();
    for _ in 0..m {
        counts[sample_target(task, &mut rng)] += 1;
    }
    counts.iter().map(|&c| c as f64 / m as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use crate::quadrature::QuadratureSpec;
    use crate::searchers::SearcherKind;
    use crate::task::{build_location_grid, LocationSet, Point, Prior, TaskParams, VisibilityMap};

    fn pair(d: f64) -> TaskConfig {
        let locs = LocationSet::from_coords(vec![Point::new(-1.0, 0.0), Point::new(1.0, 0.0)], 1.0)
            .unwrap();
        TaskConfig::new(TaskParams::new(locs, VisibilityMap::constant(d))).unwrap()
    }

    #[test]
    fn two_location_anchor() {
        let task = pair(2.0);
        let est = oracle_p_correct(
            0,
            1,
            &BeliefState::new(&task),
            &task,
            200_000,
            SeedPath::root(1),
        )
        .unwrap();
        let want = normal::cdf(std::f64::consts::SQRT_2);
        assert!(est.z_score(want) < 3.0, "{est:?} vs {want}");
        assert!((est.std_error - (est.mean * (1.0 - est.mean) / 2e5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn point_mass_belief_is_certain() {
        let locs = build_location_grid(7, 1.0).unwrap();
        let mut params = TaskParams::new(locs, VisibilityMap::default());
        let mut prior = vec![0.0; 7];
        prior[2] = 1.0;
        params.prior = Prior::Explicit(prior);
        let task = TaskConfig::new(params).unwrap();
        let est = oracle_p_correct(
            2,
            5,
            &BeliefState::new(&task),
            &task,
            1000,
            SeedPath::root(2),
        )
        .unwrap();
        assert_eq!((est.mean, est.std_error), (1.0, 0.0));
        let objective =
            oracle_is_objective(&BeliefState::new(&task), &task, 1000, SeedPath::root(3)).unwrap();
        assert!(objective.iter().all(|e| e.mean == 1.0));
    }

    #[test]
    fn too_few_samples_rejected() {
        let task = pair(1.0);
        assert!(oracle_p_correct(
            0,
            0,
            &BeliefState::new(&task),
            &task,
            999,
            SeedPath::root(0)
        )
        .is_err());
    }

    #[test]
    fn batching_does_not_depend_on_threads() {
        let task = pair(1.0);
        let b = BeliefState::new(&task);
        let a = oracle_p_correct(1, 0, &b, &task, 25_000, SeedPath::root(4)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c =
            pool.install(|| oracle_p_correct(1, 0, &b, &task, 25_000, SeedPath::root(4)).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn random_policy_is_at_chance_with_flat_tiny_dprime() {
        let locs = build_location_grid(85, 8.0).unwrap();
        let task = TaskConfig::new(TaskParams::new(locs, VisibilityMap::constant(1e-3))).unwrap();
        let searcher = Searcher::new(SearcherKind::Random, QuadratureSpec::default()).unwrap();
        let pc = oracle_policy_pc(&searcher, &task, 3400, SeedPath::root(5)).unwrap();
        for e in pc {
            assert!(e.z_score(1.0 / 85.0) < 4.0, "{e:?}");
        }
    }
}

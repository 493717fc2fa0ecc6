//! Monte-Carlo Q targets and the per-saccade regression loop.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::QNetwork;
use super::{network_input, QStack};
use crate::belief::{argmax, BeliefState};
use crate::environment::EpisodeState;
use crate::error::{Error, Result};
use crate::seed::{tag, SeedPath};
use crate::task::TaskConfig;

/// Competitors whose response would need to exceed this many standard
/// deviations to catch the target are not simulated (odds below 1e-17).
const REACH_SD: f64 = 8.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// J: simulated next fixations per Q target.
    pub mc_samples: usize,
    pub episodes_per_saccade: usize,
    /// Extra episodes per saccade kept out of training to track held-out loss.
    pub holdout_episodes: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden: usize,
    /// Discount factor; only 0 is supported.
    pub gamma: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            mc_samples: 256,
            episodes_per_saccade: 20_000,
            holdout_episodes: 1_000,
            batch_size: 64,
            learning_rate: 1.0,
            epochs: 20,
            hidden: 512,
            gamma: 0.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invalid(format!("training config: {m}")));
        if self.gamma != 0.0 {
            return fail(format!(
                "gamma must be 0 (targets are one-step rewards), got {}",
                self.gamma
            ));
        }
        if self.mc_samples == 0 {
            return fail("mc_samples (J) must be at least 1".into());
        }
        if self.episodes_per_saccade == 0
            || self.batch_size == 0
            || self.epochs == 0
            || self.hidden == 0
        {
            return fail(
                "episodes_per_saccade, batch_size, epochs and hidden must be positive".into(),
            );
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }
}

/// One regression example: a belief statistic and a Q estimate per action.
#[derive(Debug, Clone, PartialEq)]
pub struct QTargetSample {
    /// The statistic `s`.
    pub state: Vec<f64>,
    /// `network_input` of the same belief.
    pub input: Vec<f64>,
    pub targets: Vec<f64>,
    pub true_target: usize,
}

/// Fraction of `j` simulated fixations at `action` after which the MAP
/// choice is the episode's true target.
pub fn mc_q_target<R: Rng + ?Sized>(
    env: &EpisodeState,
    action: usize,
    j: usize,
    rng: &mut R,
) -> Result<f64> {
    if env.is_finished() {
        return Err(Error::Episode("no saccades left to simulate".into()));
    }
    let task = env.task();
    if action >= task.n() {
        return Err(Error::IndexOutOfRange {
            index: action,
            n: task.n(),
        });
    }
    if j == 0 {
        return Err(Error::Invalid("J must be at least 1".into()));
    }
    let belief = BeliefState::from_history(task, env.responses())?;
    Ok(McTargets::new(task, &belief, env.true_target()).estimate(action, j, rng))
}

/// Shared per-state setup for simulating every action.
struct McTargets<'a> {
    task: &'a TaskConfig,
    /// `s + ln P`, the quantity the MAP rule maximizes.
    score: Vec<f64>,
    target: usize,
    offset: f64,
}

#[derive(Clone, Copy)]
struct Rival {
    index: usize,
    mean: f64,
    sd: f64,
    reach: f64,
}

impl<'a> McTargets<'a> {
    fn new(task: &'a TaskConfig, belief: &BeliefState, target: usize) -> Self {
        let ln_prior = task.ln_prior();
        let score = belief
            .statistic()
            .iter()
            .zip(ln_prior.iter())
            .map(|(s, lp)| s + lp)
            .collect();
        let offset = 0.5 * (task.mean_present().powi(2) - task.mean_absent().powi(2));
        Self {
            task,
            score,
            target,
            offset,
        }
    }

    fn estimate<R: Rng + ?Sized>(&self, action: usize, j: usize, rng: &mut R) -> f64 {
        let task = self.task;
        let sep = task.separation();
        let row = task.dprime_row(action);
        // evidence added at location i is d²(Δ·w − offset) with w ~ N(μ, 1/d)
        let shift = |i: usize, mean: f64| row[i] * row[i] * (sep * mean - self.offset);
        let t = self.target;
        let t_mean = self.score[t] + shift(t, task.mean_present());
        let t_sd = sep * row[t];
        let mut rivals: Vec<Rival> = (0..task.n())
            .filter(|&i| i != t && self.score[i].is_finite())
            .map(|i| {
                let mean = self.score[i] + shift(i, task.mean_absent());
                let sd = sep * row[i];
                Rival {
                    index: i,
                    mean,
                    sd,
                    reach: mean + REACH_SD * sd,
                }
            })
            .collect();
        rivals.sort_by(|a, b| b.reach.total_cmp(&a.reach).then(a.index.cmp(&b.index)));
        let mut wins = 0usize;
        for _ in 0..j {
            let z: f64 = rng.sample(StandardNormal);
            let x = t_mean + t_sd * z;
            let mut correct = true;
            for r in &rivals {
                if r.reach < x {
                    break;
                }
                let u: f64 = rng.sample(StandardNormal);
                let y = r.mean + r.sd * u;
                if y > x || (y == x && r.index < t) {
                    correct = false;
                    break;
                }
            }
            wins += correct as usize;
        }
        wins as f64 / j as f64
    }
}

/// Rolls an episode forward with the greedy choices of `prior_models`.
fn roll_forward<'a>(
    task: &'a TaskConfig,
    prior_models: &[QNetwork],
    seed: SeedPath,
) -> Result<(EpisodeState<'a>, BeliefState)> {
    let mut env = EpisodeState::start(task, seed)?;
    let mut belief = BeliefState::from_history(task, env.responses())?;
    for model in prior_models {
        let action = argmax(&model.forward(&network_input(&belief))?);
        let resp = env.step(action)?;
        belief.absorb(resp, task)?;
    }
    Ok((env, belief))
}

/// Training states for saccade `saccade` (1-based): fresh episodes driven
/// to that saccade by the earlier networks, each labelled with a Monte-Carlo
/// Q estimate for every action.
///
/// Episode `e` draws everything from `seed.child(e)`, so the set does not
/// depend on thread count.
pub fn generate_training_set(
    task: &TaskConfig,
    saccade: usize,
    prior_models: &[QNetwork],
    episodes: usize,
    mc_samples: usize,
    seed: SeedPath,
) -> Result<Vec<QTargetSample>> {
    if saccade == 0 || saccade > task.saccade_budget() {
        return Err(Error::Invalid(format!(
            "saccade {saccade} outside the budget of {}",
            task.saccade_budget()
        )));
    }
    if prior_models.len() != saccade - 1 {
        return Err(Error::Invalid(format!(
            "saccade {saccade} needs {} earlier networks, got {}",
            saccade - 1,
            prior_models.len()
        )));
    }
    if mc_samples == 0 {
        return Err(Error::Invalid("J must be at least 1".into()));
    }
    (0..episodes as u64)
        .into_par_iter()
        .map(|e| {
            let episode_seed = seed.child(e);
            let (env, belief) = roll_forward(task, prior_models, episode_seed)?;
            let mut rng = episode_seed.child(tag::MC_TARGET).rng();
            let sim = McTargets::new(task, &belief, env.true_target());
            let targets = (0..task.n())
                .map(|a| sim.estimate(a, mc_samples, &mut rng))
                .collect();
            Ok(QTargetSample {
                state: belief.statistic().to_vec(),
                input: network_input(&belief),
                targets,
                true_target: env.true_target(),
            })
        })
        .collect()
}

/// Losses after each epoch; epoch 0 is the untrained network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub saccade: usize,
    pub curve: Vec<CurvePoint>,
}

impl TrainingReport {
    /// Whether the final held-out loss is below the untrained one.
    pub fn improved(&self) -> bool {
        match (self.curve.first(), self.curve.last()) {
            (Some(a), Some(b)) => b.holdout_loss < a.holdout_loss,
            _ => false,
        }
    }
}

/// Stacks samples into (network inputs, targets) matrices.
pub fn to_matrices(samples: &[QTargetSample], n: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut x = Array2::zeros((samples.len(), n));
    let mut y = Array2::zeros((samples.len(), n));
    for (r, s) in samples.iter().enumerate() {
        if s.input.len() != n || s.targets.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: if s.input.len() != n {
                    s.input.len()
                } else {
                    s.targets.len()
                },
            });
        }
        x.row_mut(r)
            .assign(&ndarray::ArrayView1::from(&s.input[..]));
        y.row_mut(r)
            .assign(&ndarray::ArrayView1::from(&s.targets[..]));
    }
    Ok((x, y))
}

/// Mini-batch gradient descent on the mean squared error.
///
/// `saccade` only labels diagnostics. The train loss reported per epoch is
/// the mean of that epoch's batch losses.
pub fn fit(
    net: &mut QNetwork,
    train: (&Array2<f64>, &Array2<f64>),
    holdout: Option<(&Array2<f64>, &Array2<f64>)>,
    cfg: &TrainingConfig,
    saccade: usize,
    seed: SeedPath,
) -> Result<Vec<CurvePoint>> {
    let (x, y) = train;
    if x.nrows() == 0 {
        return Err(Error::Invalid("no training samples".into()));
    }
    let holdout_loss =
        |net: &QNetwork| holdout.map_or(f64::NAN, |(hx, hy)| net.loss(hx.view(), hy.view()));
    let mut curve = vec![CurvePoint {
        epoch: 0,
        train_loss: net.loss(x.view(), y.view()),
        holdout_loss: holdout_loss(net),
    }];
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut seed.child(epoch as u64).rng());
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), chunk);
            let by = y.select(Axis(0), chunk);
            let (loss, grad) = net.loss_and_gradient(bx.view(), by.view())?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    saccade,
                    epoch,
                    detail: format!("batch {batches} loss is {loss}"),
                });
            }
            net.add_scaled(&grad, -cfg.learning_rate);
            total += loss;
            batches += 1;
        }
        if !net.is_finite() {
            return Err(Error::Diverged {
                saccade,
                epoch,
                detail: "non-finite weights".into(),
            });
        }
        let point = CurvePoint {
            epoch,
            train_loss: total / batches as f64,
            holdout_loss: holdout_loss(net),
        };
        log::debug!(
            "saccade {saccade} epoch {epoch}: train {:.6e} holdout {:.6e}",
            point.train_loss,
            point.holdout_loss
        );
        curve.push(point);
    }
    Ok(curve)
}

/// Trains the network for one saccade given the already trained earlier ones.
pub fn train_saccade_network(
    task: &TaskConfig,
    saccade: usize,
    prior_models: &[QNetwork],
    cfg: &TrainingConfig,
    seed: SeedPath,
) -> Result<(QNetwork, TrainingReport)> {
    cfg.validate()?;
    let s = saccade as u64;
    let train = generate_training_set(
        task,
        saccade,
        prior_models,
        cfg.episodes_per_saccade,
        cfg.mc_samples,
        seed.child2(tag::TRAIN_EPISODE, s),
    )?;
    let holdout = generate_training_set(
        task,
        saccade,
        prior_models,
        cfg.holdout_episodes,
        cfg.mc_samples,
        seed.child2(tag::HOLDOUT_EPISODE, s),
    )?;
    let (x, y) = to_matrices(&train, task.n())?;
    let (hx, hy) = to_matrices(&holdout, task.n())?;
    let mut net = QNetwork::init(task.n(), cfg.hidden, &mut seed.child2(tag::INIT, s).rng())?;
    let holdout = (!holdout.is_empty()).then_some((&hx, &hy));
    let curve = fit(
        &mut net,
        (&x, &y),
        holdout,
        cfg,
        saccade,
        seed.child2(tag::SHUFFLE, s),
    )?;
    Ok((net, TrainingReport { saccade, curve }))
}

/// Trains networks for saccades 1, 2, ... in turn; each later network sees
/// states produced by the greedy policy of the earlier ones.
pub fn train_stack(
    task: &TaskConfig,
    cfg: &TrainingConfig,
    seed: SeedPath,
) -> Result<(QStack, Vec<TrainingReport>)> {
    train_stack_with(task, cfg, seed, |_, _| {})
}

/// [`train_stack`] with a callback after each finished saccade.
pub fn train_stack_with<F: FnMut(&QNetwork, &TrainingReport)>(
    task: &TaskConfig,
    cfg: &TrainingConfig,
    seed: SeedPath,
    mut on_saccade: F,
) -> Result<(QStack, Vec<TrainingReport>)> {
    let mut nets = Vec::with_capacity(task.saccade_budget());
    let mut reports = Vec::with_capacity(task.saccade_budget());
    for saccade in 1..=task.saccade_budget() {
        let (net, report) = train_saccade_network(task, saccade, &nets, cfg, seed)?;
        on_saccade(&net, &report);
        nets.push(net);
        reports.push(report);
    }
    Ok((QStack::new(nets), reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use crate::task::{LocationSet, Point, TaskParams, VisibilityMap};

    fn pair(d: f64) -> TaskConfig {
        let locs = LocationSet::from_coords(vec![Point::new(-1.0, 0.0), Point::new(1.0, 0.0)], 1.0)
            .unwrap();
        TaskConfig::new(TaskParams::new(locs, VisibilityMap::constant(d))).unwrap()
    }

    #[test]
    fn single_sample_is_binary() {
        let task = TaskConfig::reference();
        let env = EpisodeState::start(&task, SeedPath::root(1)).unwrap();
        let mut rng = SeedPath::root(2).rng();
        for a in [0, 10, 84] {
            let v = mc_q_target(&env, a, 1, &mut rng).unwrap();
            assert!(v == 0.0 || v == 1.0);
        }
    }

    #[test]
    fn perfect_visibility_at_target_is_certain() {
        let locs = crate::task::build_location_grid(7, 4.0).unwrap();
        let task = TaskConfig::new(TaskParams::new(locs, VisibilityMap::constant(60.0))).unwrap();
        let env = EpisodeState::start(&task, SeedPath::root(3)).unwrap();
        let v = mc_q_target(&env, env.true_target(), 500, &mut SeedPath::root(4).rng()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn matches_closed_form_for_two_locations() {
        // From a flat belief, one look at d' = 2 is correct with Φ(√2); the
        // initial fixation already moved the belief, so start from a fresh one.
        let task = pair(2.0);
        let belief = BeliefState::new(&task);
        let sim = McTargets::new(&task, &belief, 1);
        let j = 100_000;
        let p = sim.estimate(0, j, &mut SeedPath::root(5).rng());
        let want = normal::cdf(std::f64::consts::SQRT_2);
        let se = (want * (1.0 - want) / j as f64).sqrt();
        assert!((p - want).abs() < 3.0 * se, "{p} vs {want} ± {se}");
    }

    #[test]
    fn finished_episode_has_no_target() {
        let task = pair(1.0).with_saccade_budget(1).unwrap();
        let mut env = EpisodeState::start(&task, SeedPath::root(6)).unwrap();
        env.step(0).unwrap();
        assert!(mc_q_target(&env, 0, 4, &mut SeedPath::root(7).rng()).is_err());
    }

    #[test]
    fn training_set_shapes_and_bounds() {
        let task = crate::task::TaskConfig::new(TaskParams::new(
            crate::task::build_location_grid(7, 2.0).unwrap(),
            VisibilityMap::default(),
        ))
        .unwrap();
        let first = generate_training_set(&task, 1, &[], 20, 16, SeedPath::root(8)).unwrap();
        assert_eq!(first.len(), 20);
        for s in &first {
            assert_eq!(s.state.len(), 7);
            assert!(s.targets.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let again = generate_training_set(&task, 1, &[], 20, 16, SeedPath::root(8)).unwrap();
        assert_eq!(first, again);
        let prior = QNetwork::init(7, 4, &mut SeedPath::root(9).rng()).unwrap();
        assert!(generate_training_set(&task, 2, &[], 5, 4, SeedPath::root(8)).is_err());
        let second = generate_training_set(&task, 2, &[prior], 5, 4, SeedPath::root(8)).unwrap();
        assert_eq!(second.len(), 5);
    }

    #[test]
    fn learns_a_linear_map() {
        let n = 3;
        let map = [[0.2, -0.1, 0.05], [0.0, 0.3, -0.2], [0.1, 0.1, 0.1]];
        let mut rng = SeedPath::root(10).rng();
        let mut make = |count: usize| {
            let mut x = Array2::zeros((count, n));
            let mut y = Array2::zeros((count, n));
            for r in 0..count {
                for c in 0..n {
                    x[[r, c]] = rng.gen_range(-1.0..1.0);
                }
                for c in 0..n {
                    y[[r, c]] = 0.5 + (0..n).map(|k| map[k][c] * x[[r, k]]).sum::<f64>();
                }
            }
            (x, y)
        };
        let (x, y) = make(2000);
        let (hx, hy) = make(500);
        let cfg = TrainingConfig {
            learning_rate: 0.05,
            epochs: 60,
            batch_size: 32,
            hidden: 32,
            ..TrainingConfig::default()
        };
        let mut net = QNetwork::init(n, cfg.hidden, &mut SeedPath::root(11).rng()).unwrap();
        let curve = fit(
            &mut net,
            (&x, &y),
            Some((&hx, &hy)),
            &cfg,
            1,
            SeedPath::root(12),
        )
        .unwrap();
        let last = curve.last().unwrap();
        assert!(last.holdout_loss < 1e-3, "{curve:?}");
        assert!(last.holdout_loss < curve[0].holdout_loss);
    }

    #[test]
    fn divergence_is_reported() {
        let x = Array2::from_elem((8, 2), 1e3);
        let y = Array2::from_elem((8, 2), 1.0);
        let cfg = TrainingConfig {
            learning_rate: 1e3,
            epochs: 50,
            batch_size: 4,
            hidden: 4,
            ..TrainingConfig::default()
        };
        let mut net = QNetwork::init(2, 4, &mut SeedPath::root(13).rng()).unwrap();
        let err = fit(&mut net, (&x, &y), None, &cfg, 2, SeedPath::root(14)).unwrap_err();
        assert!(matches!(err, Error::Diverged { saccade: 2, .. }), "{err}");
    }

    #[test]
    fn gamma_must_be_zero() {
        let cfg = TrainingConfig {
            gamma: 0.9,
            ..TrainingConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(TrainingConfig::default().validate().is_ok());
    }
}

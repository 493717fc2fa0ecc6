//! Fixation-selection policies.
//!
//! The ideal searcher scores every candidate fixation `k` by the probability
//! of localizing the target correctly after one more look from `k`:
//!
//! ```text
//! objective(k) = Σ_i p_i · P(correct | i, k)
//! ```
//!
//! With target at `i`, the next look changes location `j`'s log posterior by
//! `±d_j²/2 + d_j·u_j` (plus for the target, minus otherwise; `u_j` standard
//! normal, `d_j = Δμ·d′(ε(j, k))`). Conditioning on the target's noise `z`
//! leaves independent events, so
//!
//! ```text
//! P(correct | i, k) = ∫ φ(z) Π_{j≠i} Φ((ℓ_i − ℓ_j + (d_i² + d_j²)/2 + d_i·z) / d_j) dz
//! ```
//!
//! where `ℓ` is the current log posterior.
//!
//! For the full objective it pays to integrate over the target's new log
//! posterior `x = ℓ_i + d_i²/2 + d_i·z` instead. Every competitor factor then
//! reads `Φ((x − B_j)/d_j)` with `B_j = ℓ_j − d_j²/2`, independent of `i`, so
//! with `G(x) = Π_j Φ((x − B_j)/d_j)` (over all `j`, target included)
//!
//! ```text
//! objective(k) = ∫ G(x) · Σ_i p_i · φ(w_i) / (d_i · Φ(w_i + d_i)) dx,   w_i = (x − A_i)/d_i
//! ```
//!
//! with `A_i = ℓ_i + d_i²/2`. One integral per candidate instead of one per
//! (target, candidate) pair.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::belief::{argmax, BeliefState};
use crate::error::{Error, Result};
use crate::normal::{self, CDF_SATURATION};
use crate::qlearn::{network_input, QNetwork, QStack};
use crate::quadrature::{Quadrature, QuadratureSpec, Scheme, Unconverged};
use crate::seed::SeedPath;
use crate::task::TaskConfig;

/// Posterior mass treated as exactly zero: such locations can never win.
pub const ZERO_POSTERIOR: f64 = 1e-300;

/// Targets with less posterior mass than this are dropped from the ideal
/// searcher's objective; the omitted terms total below `n · 1e-13`.
pub const OBJECTIVE_PRUNE: f64 = 1e-13;

/// Below this z one factor is under Φ(−9) ≈ 1e-19 and the integrand vanishes.
const LOWER_CUT: f64 = 9.0;

/// Doubling the node count may move a checked value by at most this much.
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
struct Factor {
    /// Factor is exactly 1 for z above this.
    z_sat: f64,
    a: f64,
    b: f64,
}

#[derive(Debug, Clone, Copy)]
struct Target {
    a: f64,
    d: f64,
    inv_d: f64,
    /// `p_i / d_i`
    weight: f64,
}

/// One-step lookahead over a fixed belief.
pub struct Lookahead<'a> {
    task: &'a TaskConfig,
    log_post: Vec<f64>,
    post: Vec<f64>,
}

impl<'a> Lookahead<'a> {
    pub fn new(task: &'a TaskConfig, belief: &BeliefState) -> Result<Self> {
        if belief.n() != task.n() {
            return Err(Error::Dimension {
                expected: task.n(),
                got: belief.n(),
            });
        }
        Ok(Self {
            task,
            log_post: belief.log_posterior(),
            post: belief.posterior(),
        })
    }

    pub fn posterior(&self) -> &[f64] {
        &self.post
    }

    fn p_correct_with(
        &self,
        i: usize,
        k: usize,
        quad: &Quadrature,
        factors: &mut Vec<Factor>,
    ) -> std::result::Result<f64, Unconverged> {
        if self.post[i] < ZERO_POSTERIOR {
            return Ok(0.0);
        }
        let sep = self.task.separation();
        let row = self.task.dprime_row(k);
        let di = sep * row[i];
        let lead = self.log_post[i] + 0.5 * di * di;
        let tail = quad.tail();
        let mut lo = -tail;
        let mut competitors = 0usize;
        factors.clear();
        for (j, (&dj, &lj)) in row.iter().zip(&self.log_post).enumerate() {
            if j == i || self.post[j] < ZERO_POSTERIOR {
                continue;
            }
            competitors += 1;
            let dj = sep * dj;
            let a = (lead - lj + 0.5 * dj * dj) / dj;
            let b = di / dj;
            let z_sat = (CDF_SATURATION - a) / b;
            if z_sat <= -tail {
                continue;
            }
            lo = lo.max((-LOWER_CUT - a) / b);
            factors.push(Factor { z_sat, a, b });
        }
        if competitors == 0 {
            return Ok(1.0);
        }
        factors.sort_by(|x, y| y.z_sat.total_cmp(&x.z_sat));
        let fs: &[Factor] = factors;
        quad.integrate(lo, tail, |z| {
            let mut prod = 1.0;
            for f in fs {
                if f.z_sat <= z {
                    break;
                }
                prod *= normal::cdf(f.a + f.b * z);
                if prod == 0.0 {
                    break;
                }
            }
            prod
        })
    }

    /// `P(correct | i, k)` under one quadrature rule, without a convergence check.
    pub fn p_correct(&self, i: usize, k: usize, quad: &Quadrature) -> Result<f64> {
        self.check(i)?;
        self.check(k)?;
        self.p_correct_with(i, k, quad, &mut Vec::new())
            .map(|p| p.clamp(0.0, 1.0))
            .map_err(|u| quad_error(i, k, u))
    }

    /// `Σ_i p_i · P(correct | i, k)` as a single integral over the target's
    /// updated log posterior. Gauss–Hermite specs use the per-target sum.
    pub fn objective(&self, k: usize, quad: &Quadrature) -> Result<f64> {
        self.check(k)?;
        if quad.spec().scheme == Scheme::GaussHermite {
            return self.objective_by_target(k, quad);
        }
        let sep = self.task.separation();
        let row = self.task.dprime_row(k);
        let tail = quad.tail();
        let mut targets = Vec::new();
        let mut comps = Vec::new();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut cut = f64::NEG_INFINITY;
        for (j, (&dj, &lj)) in row.iter().zip(&self.log_post).enumerate() {
            if self.post[j] < ZERO_POSTERIOR {
                continue;
            }
            let d = sep * dj;
            let b = lj - 0.5 * d * d;
            cut = cut.max(b - LOWER_CUT * d);
            comps.push((b + CDF_SATURATION * d, b, 1.0 / d));
            if self.post[j] >= OBJECTIVE_PRUNE {
                let a = lj + 0.5 * d * d;
                lo = lo.min(a - tail * d);
                hi = hi.max(a + tail * d);
                targets.push(Target {
                    a,
                    d,
                    inv_d: 1.0 / d,
                    weight: self.post[j] / d,
                });
            }
        }
        if comps.len() == 1 {
            return Ok(1.0);
        }
        comps.sort_by(|x, y| y.0.total_cmp(&x.0));
        let lo = lo.max(cut);
        let value = quad
            .integrate_dx(lo, hi, |x| {
                let mut g = 1.0;
                for &(x_sat, b, inv_d) in &comps {
                    if x_sat <= x {
                        break;
                    }
                    g *= normal::cdf_fast((x - b) * inv_d);
                    if g == 0.0 {
                        return 0.0;
                    }
                }
                let mut h = 0.0;
                for t in &targets {
                    let w = (x - t.a) * t.inv_d;
                    if w.abs() <= tail {
                        h += t.weight * normal::pdf(w) / normal::cdf_fast(w + t.d);
                    }
                }
                g * h
            })
            .map_err(|u| Error::Quadrature {
                detail: format!(
                    "fixation {k}: error estimate {:.3e} on [{:.4}, {:.4}]",
                    u.error_estimate, u.lo, u.hi
                ),
            })?;
        Ok(value.clamp(0.0, 1.0))
    }

    /// `Σ_i p_i · P(correct | i, k)` summed target by target.
    pub fn objective_by_target(&self, k: usize, quad: &Quadrature) -> Result<f64> {
        self.check(k)?;
        let mut factors = Vec::with_capacity(self.task.n());
        let mut total = 0.0;
        for (i, &p) in self.post.iter().enumerate() {
            if p < OBJECTIVE_PRUNE {
                continue;
            }
            let pc = self
                .p_correct_with(i, k, quad, &mut factors)
                .map_err(|u| quad_error(i, k, u))?;
            total += p * pc.clamp(0.0, 1.0);
        }
        Ok(total.clamp(0.0, 1.0))
    }

    /// Objective for every candidate fixation, in index order.
    pub fn objectives(&self, quad: &Quadrature) -> Result<Vec<f64>> {
        (0..self.task.n())
            .into_par_iter()
            .map(|k| self.objective(k, quad))
            .collect()
    }

    fn check(&self, index: usize) -> Result<()> {
        if index >= self.task.n() {
            return Err(Error::IndexOutOfRange {
                index,
                n: self.task.n(),
            });
        }
        Ok(())
    }
}

fn quad_error(i: usize, k: usize, u: Unconverged) -> Error {
    Error::Quadrature {
        detail: format!(
            "target {i}, fixation {k}: error estimate {:.3e} on [{:.4}, {:.4}]",
            u.error_estimate, u.lo, u.hi
        ),
    }
}

/// Probability that the post-fixation MAP choice is `i` when the target is at
/// `i` and the next fixation is `k_next`, checked against a doubled rule.
pub fn p_correct_given(
    i: usize,
    k_next: usize,
    belief: &BeliefState,
    task: &TaskConfig,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let look = Lookahead::new(task, belief)?;
    let base = Quadrature::new(*quad).map_err(Error::Invalid)?;
    let fine = Quadrature::new(quad.doubled()).map_err(Error::Invalid)?;
    let coarse_value = look.p_correct(i, k_next, &base)?;
    let fine_value = look.p_correct(i, k_next, &fine)?;
    if (coarse_value - fine_value).abs() > CONVERGENCE_TOL {
        return Err(Error::Quadrature {
            detail: format!(
                "target {i}, fixation {k_next}: {} nodes give {coarse_value:.9}, {} give {fine_value:.9}",
                quad.nodes,
                quad.doubled().nodes
            ),
        });
    }
    Ok(coarse_value)
}

/// Result of an ideal-searcher decision.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealChoice {
    pub fixation: usize,
    pub objective: Vec<f64>,
}

/// Fixation maximizing the one-step probability of a correct localization.
pub fn next_fixation_ideal(
    belief: &BeliefState,
    task: &TaskConfig,
    quad: &Quadrature,
) -> Result<IdealChoice> {
    let objective = Lookahead::new(task, belief)?.objectives(quad)?;
    Ok(IdealChoice {
        fixation: argmax(&objective),
        objective,
    })
}

/// Fixation at the current posterior maximum.
pub fn next_fixation_map(belief: &BeliefState) -> usize {
    belief.map_choice()
}

/// Uniformly random fixation.
pub fn next_fixation_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    rng.gen_range(0..n)
}

/// Greedy action of one Q network.
pub fn next_fixation_qnet(model: &QNetwork, belief: &BeliefState) -> Result<usize> {
    Ok(argmax(&model.forward(&network_input(belief))?))
}

/// A fixation policy.
#[derive(Debug, Clone)]
pub enum SearcherKind {
    Map,
    Ideal,
    Random,
    QNet(Arc<QStack>),
}

impl SearcherKind {
    pub fn name(&self) -> &'static str {
        match self {
            SearcherKind::Map => "map",
            SearcherKind::Ideal => "ideal",
            SearcherKind::Random => "random",
            SearcherKind::QNet(_) => "qnet",
        }
    }
}

/// One policy decision with optional per-candidate diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub fixation: usize,
    pub scores: Option<Vec<f64>>,
}

/// A policy bundled with what it needs to decide.
#[derive(Debug, Clone)]
pub struct Searcher {
    kind: SearcherKind,
    quad: Quadrature,
}

impl Searcher {
    pub fn new(kind: SearcherKind, quad: QuadratureSpec) -> Result<Self> {
        Ok(Self {
            kind,
            quad: Quadrature::new(quad).map_err(Error::Invalid)?,
        })
    }

    pub fn kind(&self) -> &SearcherKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Chooses the fixation for saccade number `saccade` (1-based).
    ///
    /// `policy_seed` is only consumed by the random searcher.
    pub fn decide(
        &self,
        task: &TaskConfig,
        belief: &BeliefState,
        saccade: usize,
        policy_seed: SeedPath,
        verbose: bool,
    ) -> Result<Decision> {
        match &self.kind {
            SearcherKind::Map => Ok(Decision {
                fixation: next_fixation_map(belief),
                scores: verbose.then(|| belief.posterior()),
            }),
            SearcherKind::Ideal => {
                let choice = next_fixation_ideal(belief, task, &self.quad)?;
                Ok(Decision {
                    fixation: choice.fixation,
                    scores: verbose.then_some(choice.objective),
                })
            }
            SearcherKind::Random => Ok(Decision {
                fixation: next_fixation_random(task.n(), &mut policy_seed.rng()),
                scores: None,
            }),
            SearcherKind::QNet(stack) => {
                let net = stack.for_saccade(saccade)?;
                let q = net.forward(&network_input(belief))?;
                Ok(Decision {
                    fixation: argmax(&q),
                    scores: verbose.then_some(q),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{build_location_grid, LocationSet, Point, Prior, TaskParams, VisibilityMap};
    use approx::assert_relative_eq;

    fn two_location_task(d: f64) -> TaskConfig {
        let locs = LocationSet::from_coords(vec![Point::new(-1.0, 0.0), Point::new(1.0, 0.0)], 1.0)
            .unwrap();
        TaskConfig::new(TaskParams::new(locs, VisibilityMap::constant(d))).unwrap()
    }

    #[test]
    fn two_locations_equal_dprime_closed_form() {
        let task = two_location_task(2.0);
        let belief = BeliefState::new(&task);
        let want = normal::cdf(std::f64::consts::SQRT_2);
        for spec in [QuadratureSpec::default(), QuadratureSpec::gauss_hermite(61)] {
            let got = p_correct_given(0, 1, &belief, &task, &spec).unwrap();
            assert_relative_eq!(got, want, epsilon = 1e-9);
        }
        assert_relative_eq!(want, 0.921_35, epsilon = 1e-5);
    }

    #[test]
    fn lone_candidate_is_always_correct() {
        let locs = build_location_grid(7, 1.0).unwrap();
        let mut params = TaskParams::new(locs, VisibilityMap::default());
        let mut prior = vec![0.0; 7];
        prior[3] = 1.0;
        params.prior = Prior::Explicit(prior);
        let task = TaskConfig::new(params).unwrap();
        let belief = BeliefState::new(&task);
        assert_eq!(
            p_correct_given(3, 0, &belief, &task, &QuadratureSpec::default()).unwrap(),
            1.0
        );
        assert_eq!(
            p_correct_given(2, 0, &belief, &task, &QuadratureSpec::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn p_correct_increases_with_visibility() {
        let mut prev = 0.0;
        for step in 1..=20 {
            let task = two_location_task(0.25 * step as f64);
            let p = p_correct_given(
                0,
                0,
                &BeliefState::new(&task),
                &task,
                &QuadratureSpec::default(),
            )
            .unwrap();
            assert!(p > prev, "d'={} gave {p} after {prev}", 0.25 * step as f64);
            prev = p;
        }
    }

    #[test]
    fn symmetric_pair_ties_to_lower_index() {
        let task = two_location_task(1.5);
        let q = Quadrature::new(QuadratureSpec::default()).unwrap();
        let choice = next_fixation_ideal(&BeliefState::new(&task), &task, &q).unwrap();
        assert_eq!(choice.objective[0], choice.objective[1]);
        assert_eq!(choice.fixation, 0);
    }

    #[test]
    fn certain_belief_fixates_the_believed_target() {
        let task = TaskConfig::reference();
        let q = Quadrature::new(QuadratureSpec::default()).unwrap();
        // strong but not saturated evidence: the lookahead still has something to gain
        for (target, lead) in [(0, 4.0), (5, 6.0), (30, 8.0), (84, 10.0)] {
            let mut s = vec![0.0; 85];
            s[target] = lead;
            let belief = BeliefState::from_statistic(&task, s, 1).unwrap();
            let choice = next_fixation_ideal(&belief, &task, &q).unwrap();
            assert_eq!(choice.fixation, target);
            for (k, &v) in choice.objective.iter().enumerate() {
                assert!((0.0..=1.0).contains(&v));
                if k != target {
                    assert!(v <= choice.objective[target]);
                }
            }
        }
    }

    #[test]
    fn fused_objective_matches_per_target_sum() {
        let task = TaskConfig::reference();
        let q = Quadrature::new(QuadratureSpec::default()).unwrap();
        let mut rng = SeedPath::root(3).rng();
        for scale in [0.0, 1.0, 4.0] {
            let s: Vec<f64> = (0..85).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            let belief = BeliefState::from_statistic(&task, s, 1).unwrap();
            let look = Lookahead::new(&task, &belief).unwrap();
            for k in [0, 3, 20, 60, 84] {
                let fused = look.objective(k, &q).unwrap();
                let summed = look.objective_by_target(k, &q).unwrap();
                assert!(
                    (fused - summed).abs() < 1e-8,
                    "k={k} scale={scale}: {fused} vs {summed}"
                );
            }
        }
    }

    #[test]
    fn map_and_qnet_rules() {
        let task = TaskConfig::reference();
        let mut s = vec![0.0; 85];
        s[12] = 5.0;
        let belief = BeliefState::from_statistic(&task, s, 1).unwrap();
        assert_eq!(next_fixation_map(&belief), 12);
        assert_eq!(next_fixation_map(&BeliefState::new(&task)), 0);
        assert_eq!(
            next_fixation_qnet(&QNetwork::zeros(85, 8), &belief).unwrap(),
            0
        );
        let mut net = QNetwork::zeros(85, 8);
        net.b2[7] = 1.0;
        assert_eq!(next_fixation_qnet(&net, &belief).unwrap(), 7);
        assert!(next_fixation_qnet(&QNetwork::zeros(84, 8), &belief).is_err());
    }

    #[test]
    fn random_searcher_is_seeded() {
        let seq = |seed| {
            let mut rng = SeedPath::root(seed).rng();
            (0..20)
                .map(|_| next_fixation_random(85, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(5), seq(5));
        assert_ne!(seq(5), seq(6));
        assert_eq!(next_fixation_random(1, &mut SeedPath::root(0).rng()), 0);
    }
}

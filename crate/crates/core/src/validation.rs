//! Self-checks comparing the fast numerics against independent references.

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::belief::BeliefState;
use crate::environment::sample_responses;
use crate::error::Result;
use crate::normal;
use crate::oracle::oracle_p_correct;
use crate::qlearn::QNetwork;
use crate::quadrature::{Quadrature, QuadratureSpec};
use crate::searchers::{p_correct_given, Lookahead, CONVERGENCE_TOL};
use crate::seed::SeedPath;
use crate::task::{LocationSet, Point, TaskConfig, TaskParams, VisibilityMap};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// A random small task, belief and (target, fixation) pair.
#[derive(Debug, Clone)]
pub struct Case {
    pub task: TaskConfig,
    pub belief: BeliefState,
    pub target: usize,
    pub fixation: usize,
}

/// `count` cases with 2 to 6 locations scattered in a 4° field, default
/// visibility and statistics uniform in ±2.
pub fn random_cases(count: usize, seed: SeedPath) -> Vec<Case> {
    let mut rng = seed.rng();
    let mut cases = Vec::with_capacity(count);
    while cases.len() < count {
        let n = rng.gen_range(2..=6);
        let coords: Vec<Point> = (0..n)
            .map(|_| {
                let r = 4.0 * rng.gen::<f64>().sqrt();
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let Ok(locs) = LocationSet::from_coords(coords, 4.0) else {
            continue;
        };
        let task = TaskConfig::new(TaskParams::new(locs, VisibilityMap::default()))
            .expect("valid random task");
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let belief = BeliefState::from_statistic(&task, s, 1).expect("finite statistic");
        cases.push(Case {
            target: rng.gen_range(0..n),
            fixation: rng.gen_range(0..n),
            task,
            belief,
        });
    }
    cases
}

/// Two locations at equal d′ = 2 from a flat belief: one look is correct
/// with probability Φ(2/√2) = Φ(√2).
pub fn analytic_anchor(quad: &QuadratureSpec, m: usize, seed: SeedPath) -> Result<Check> {
    let locs = LocationSet::from_coords(vec![Point::new(-1.0, 0.0), Point::new(1.0, 0.0)], 1.0)?;
    let task = TaskConfig::new(TaskParams::new(locs, VisibilityMap::constant(2.0)))?;
    let belief = BeliefState::new(&task);
    let want = normal::cdf(std::f64::consts::SQRT_2);
    let q = p_correct_given(0, 1, &belief, &task, quad)?;
    let o = oracle_p_correct(0, 1, &belief, &task, m, seed)?;
    let z = o.z_score(want);
    Ok(Check::new(
        "analytic anchor",
        (q - want).abs() < 1e-4 && z < 3.0,
        format!(
            "Phi(sqrt 2) = {want:.10}; quadrature {q:.10} (|diff| {:.2e}); oracle {:.6} +- {:.1e} ({z:.2} SE)",
            (q - want).abs(),
            o.mean,
            o.std_error
        ),
    ))
}

/// Quadrature against the simulation oracle on random cases; passes when at
/// least `required` of them agree within 3 standard errors.
pub fn oracle_equivalence(
    cases: &[Case],
    quad: &QuadratureSpec,
    m: usize,
    required: usize,
    seed: SeedPath,
) -> Result<Check> {
    let mut agree = 0;
    let mut worst = 0.0f64;
    for (c, case) in cases.iter().enumerate() {
        let q = p_correct_given(case.target, case.fixation, &case.belief, &case.task, quad)?;
        let o = oracle_p_correct(
            case.target,
            case.fixation,
            &case.belief,
            &case.task,
            m,
            seed.child(c as u64),
        )?;
        // a degenerate estimate has no spread of its own; use the one implied by q
        let se = if o.std_error > 0.0 {
            o.std_error
        } else {
            (q * (1.0 - q) / m as f64).sqrt()
        };
        let z = if (o.mean - q).abs() == 0.0 {
            0.0
        } else {
            (o.mean - q).abs() / se
        };
        worst = worst.max(z);
        if z <= 3.0 {
            agree += 1;
        }
    }
    Ok(Check::new(
        "oracle equivalence",
        agree >= required,
        format!(
            "{agree}/{} cases within 3 SE at M = {m} (need {required}); largest gap {worst:.2} SE",
            cases.len()
        ),
    ))
}

/// Largest change in any value when the node count is doubled: the
/// `p_correct_given` battery plus full objective vectors at `beliefs`.
pub fn quadrature_doubling(
    cases: &[Case],
    beliefs: &[(TaskConfig, BeliefState)],
    quad: &QuadratureSpec,
) -> Result<Check> {
    let coarse = Quadrature::new(*quad).map_err(crate::Error::Invalid)?;
    let fine = Quadrature::new(quad.doubled()).map_err(crate::Error::Invalid)?;
    let mut worst = 0.0f64;
    let mut values = 0usize;
    for case in cases {
        let look = Lookahead::new(&case.task, &case.belief)?;
        let a = look.p_correct(case.target, case.fixation, &coarse)?;
        let b = look.p_correct(case.target, case.fixation, &fine)?;
        worst = worst.max((a - b).abs());
        values += 1;
    }
    for (task, belief) in beliefs {
        let look = Lookahead::new(task, belief)?;
        let a = look.objectives(&coarse)?;
        let b = look.objectives(&fine)?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
        values += a.len();
    }
    Ok(Check::new(
        "quadrature node doubling",
        worst < CONVERGENCE_TOL,
        format!(
            "{} -> {} nodes moves {values} values by at most {worst:.2e} (limit {CONVERGENCE_TOL:.0e})",
            quad.nodes,
            quad.doubled().nodes
        ),
    ))
}

/// Relative error of analytic against central-difference gradients, worst
/// over every parameter of `nets` random small networks.
pub fn gradient_check(nets: usize, seed: SeedPath) -> Result<Check> {
    const STEP: f64 = 1e-5;
    let mut worst = 0.0f64;
    for r in 0..nets {
        let mut rng = seed.child(r as u64).rng();
        let n = rng.gen_range(2..=5);
        let h = rng.gen_range(2..=6);
        let batch = rng.gen_range(1..=4);
        let mut net = QNetwork::init(n, h, &mut rng)?;
        for b in net.b1.iter_mut().chain(net.b2.iter_mut()) {
            *b = rng.gen_range(-0.5..0.5);
        }
        let x = Array2::from_shape_simple_fn((batch, n), || rng.gen_range(-2.0..2.0));
        let y = Array2::from_shape_simple_fn((batch, n), || rng.gen::<f64>());
        let (_, grad) = net.loss_and_gradient(x.view(), y.view())?;
        for p in 0..net.param_count() {
            let orig = net.param(p);
            *net.param_mut(p) = orig + STEP;
            let up = net.loss(x.view(), y.view());
            *net.param_mut(p) = orig - STEP;
            let down = net.loss(x.view(), y.view());
            *net.param_mut(p) = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grad.param(p);
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    Ok(Check::new(
        "gradient check",
        worst < 1e-4,
        format!("{nets} random networks, worst relative error {worst:.2e} (limit 1e-4)"),
    ))
}

/// Long run of random updates: the posterior stays normalized and the
/// incremental statistic equals a batch replay of the same history.
pub fn belief_fuzz(task: &TaskConfig, updates: usize, seed: SeedPath) -> Result<Check> {
    let mut rng = seed.rng();
    let mut belief = BeliefState::new(task);
    let mut history = Vec::with_capacity(updates);
    let mut worst = 0.0f64;
    let target = rng.gen_range(0..task.n());
    for _ in 0..updates {
        let k = rng.gen_range(0..task.n());
        let resp = sample_responses(task, target, k, &mut rng)?;
        belief.absorb(&resp, task)?;
        history.push(resp);
        worst = worst.max((belief.posterior().iter().sum::<f64>() - 1.0).abs());
    }
    let batch = BeliefState::from_history(task, &history)?;
    let exact = batch.statistic() == belief.statistic();
    Ok(Check::new(
        "belief fuzz",
        worst <= 1e-12 && exact,
        format!(
            "{updates} updates: max |sum p - 1| = {worst:.2e}; incremental {} batch",
            if exact { "==" } else { "!=" }
        ),
    ))
}

//! End-to-end acceptance run on the reference task.
//!
//! Trains the default Q-network stack and runs two full `compare` batteries
//! through the binary, then checks each criterion against those artifacts or
//! against the validation routines. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails. Takes tens of minutes on one core.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use fovsearch::belief::{argmax, BeliefState};
use fovsearch::config::load_config;
use fovsearch::environment::EpisodeState;
use fovsearch::eval::{
    fixation_histogram, paired_difference, proportion_correct, total_variation, trial_seed,
    EpisodeLog,
};
use fovsearch::qlearn::{network_input, train_saccade_network, TrainingConfig};
use fovsearch::quadrature::Quadrature;
use fovsearch::searchers::Lookahead;
use fovsearch::seed::SeedPath;
use fovsearch::task::{LocationSet, Point, TaskConfig, TaskParams, VisibilityMap};
use fovsearch::validation::{
    analytic_anchor, belief_fuzz, gradient_check, oracle_equivalence, quadrature_doubling,
    random_cases,
};

const ORACLE_SAMPLES: usize = 1_000_000;
const PC_TOLERANCE: f64 = 0.05;

type Outcome = Result<(bool, String), String>;

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

fn fovsearch(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_fovsearch"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!(
            "fovsearch {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&o.stderr)
        ))
    }
}

fn read_logs(dir: &Path, name: &str) -> Result<Vec<EpisodeLog>, String> {
    let text = fs::read_to_string(dir.join(format!("episodes_{name}.jsonl")))
        .map_err(|e| e.to_string())?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

/// Trained checkpoints and two compare reports from identical invocations.
struct Runs {
    _dir: tempfile::TempDir,
    first: PathBuf,
    second: PathBuf,
    map: Vec<EpisodeLog>,
    ideal: Vec<EpisodeLog>,
    qnet: Vec<EpisodeLog>,
}

fn full_runs() -> Result<Runs, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = config_path();
    let cfg = cfg.to_str().ok_or("config path is not UTF-8")?;
    let ckpt = dir.path().join("checkpoints");
    let first = dir.path().join("report_a");
    let second = dir.path().join("report_b");
    let t = Instant::now();
    fovsearch(&["--config", cfg, "--out", ckpt.to_str().unwrap(), "train"])?;
    eprintln!("# trained in {:.0} s", t.elapsed().as_secs_f64());
    for out in [&first, &second] {
        let t = Instant::now();
        fovsearch(&[
            "--config",
            cfg,
            "--out",
            out.to_str().unwrap(),
            "compare",
            "--checkpoints",
            ckpt.to_str().unwrap(),
        ])?;
        eprintln!("# compare in {:.0} s", t.elapsed().as_secs_f64());
    }
    Ok(Runs {
        map: read_logs(&first, "map")?,
        ideal: read_logs(&first, "ideal")?,
        qnet: read_logs(&first, "qnet")?,
        _dir: dir,
        first,
        second,
    })
}

fn ordering(runs: &Runs, budget: usize) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in 1..=budget {
        let d = paired_difference(("ideal", &runs.ideal), ("map", &runs.map), s)
            .map_err(|e| e.to_string())?;
        ok &= d.mean > 0.0 && d.ci_low > 0.0;
        parts.push(format!(
            "s{s} {:+.4} [{:+.4}, {:+.4}]",
            d.mean, d.ci_low, d.ci_high
        ));
    }
    Ok((
        ok,
        format!(
            "IS - MAP over {} paired trials: {}",
            runs.ideal.len(),
            parts.join("; ")
        ),
    ))
}

fn closeness(runs: &Runs) -> Outcome {
    let is = proportion_correct("ideal", &runs.ideal, true).map_err(|e| e.to_string())?;
    let q = proportion_correct("qnet", &runs.qnet, true).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, b) in is.rows.iter().zip(&q.rows) {
        let gap = (b.pc - a.pc).abs();
        ok &= gap < PC_TOLERANCE;
        parts.push(format!(
            "s{} IS {:.4} QNET {:.4} |gap| {gap:.4}",
            a.saccades, a.pc, b.pc
        ));
    }
    Ok((ok, format!("{} (limit {PC_TOLERANCE})", parts.join("; "))))
}

fn fixation_consistency(runs: &Runs, n: usize, budget: usize) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in 1..=budget {
        let h = |logs: &[EpisodeLog]| fixation_histogram(logs, s, n).map_err(|e| e.to_string());
        let (m, i, q) = (h(&runs.map)?, h(&runs.ideal)?, h(&runs.qnet)?);
        let (qi, qm, mi) = (
            total_variation(&q, &i),
            total_variation(&q, &m),
            total_variation(&m, &i),
        );
        ok &= qi < qm && qi < mi;
        parts.push(format!(
            "s{s} TV(Q,IS) {qi:.3} TV(Q,MAP) {qm:.3} TV(MAP,IS) {mi:.3}"
        ));
    }
    Ok((ok, parts.join("; ")))
}

/// Beliefs before each decision of the first `episodes` ideal-searcher
/// trials, rebuilt from the logged fixations and the battery seeds.
fn battery_beliefs(
    task: &TaskConfig,
    logs: &[EpisodeLog],
    seed: u64,
    episodes: usize,
) -> Result<Vec<(TaskConfig, BeliefState)>, String> {
    let battery = SeedPath::root(seed);
    let mut out = Vec::new();
    for log in logs.iter().take(episodes) {
        let mut env =
            EpisodeState::start(task, trial_seed(battery, log.trial)).map_err(|e| e.to_string())?;
        if env.true_target() != log.true_target {
            return Err(format!("trial {} does not replay", log.trial));
        }
        let mut belief =
            BeliefState::from_history(task, env.responses()).map_err(|e| e.to_string())?;
        for &k in &log.fixations[1..] {
            out.push((task.clone(), belief.clone()));
            let resp = env.step(k).map_err(|e| e.to_string())?;
            belief.absorb(resp, task).map_err(|e| e.to_string())?;
        }
    }
    Ok(out)
}

fn determinism(runs: &Runs, budget: usize) -> Outcome {
    let mut files = vec!["pc_table.csv".to_string()];
    for name in ["map", "ideal", "qnet"] {
        files.extend((1..=budget).map(|s| format!("fixmap_{name}_{s}.csv")));
    }
    let mut differing = Vec::new();
    for f in &files {
        let a = fs::read(runs.first.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = fs::read(runs.second.join(f)).map_err(|e| format!("{f}: {e}"))?;
        if a != b {
            differing.push(f.clone());
        }
    }
    Ok(if differing.is_empty() {
        (
            true,
            format!(
                "{} files byte-identical across two compare runs",
                files.len()
            ),
        )
    } else {
        (false, format!("differ: {}", differing.join(", ")))
    })
}

/// Three locations at unequal eccentricities; trains the saccade-1 network
/// with default settings and scores its greedy choice against the
/// quadrature objective on fresh states.
fn small_argmax_fidelity(quad: &Quadrature, seed: SeedPath) -> Outcome {
    const STATES: u64 = 1000;
    let locs = LocationSet::from_coords(
        vec![
            Point::new(0.0, 0.0),
            Point::new(2.5, 0.0),
            Point::new(-1.0, 3.0),
        ],
        4.0,
    )
    .map_err(|e| e.to_string())?;
    let task = TaskConfig::new(TaskParams::new(locs, VisibilityMap::default()))
        .map_err(|e| e.to_string())?;
    let (net, _) = train_saccade_network(&task, 1, &[], &TrainingConfig::default(), seed.child(0))
        .map_err(|e| e.to_string())?;
    let mut agree = 0;
    for e in 0..STATES {
        let env = EpisodeState::start(&task, seed.child2(1, e)).map_err(|e| e.to_string())?;
        let belief =
            BeliefState::from_history(&task, env.responses()).map_err(|e| e.to_string())?;
        let exact = Lookahead::new(&task, &belief)
            .and_then(|l| l.objectives(quad))
            .map_err(|e| e.to_string())?;
        let q = net
            .forward(&network_input(&belief))
            .map_err(|e| e.to_string())?;
        agree += (argmax(&q) == argmax(&exact)) as usize;
    }
    let need = (STATES as usize * 95).div_ceil(100);
    Ok((
        agree >= need,
        format!("{agree}/{STATES} states agree (need {need})"),
    ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let config = match load_config(&config_path()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("cannot load reference config: {e}");
            return ExitCode::FAILURE;
        }
    };
    let task = config.task.clone();
    let seed = config.seed.expect("reference config sets a seed");
    let root = SeedPath::root(seed).child(0xACCE);
    let quad = Quadrature::new(config.quadrature).expect("valid quadrature");
    let runs = full_runs();
    let cases = random_cases(50, root.child(4));

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        (
            "IS beats MAP",
            Box::new(|| ordering(runs.as_ref()?, task.saccade_budget())),
        ),
        ("QNET close to IS", Box::new(|| closeness(runs.as_ref()?))),
        (
            "fixation distributions",
            Box::new(|| fixation_consistency(runs.as_ref()?, task.n(), task.saccade_budget())),
        ),
        (
            "oracle equivalence",
            Box::new(|| {
                let c = oracle_equivalence(
                    &cases,
                    &config.quadrature,
                    ORACLE_SAMPLES,
                    48,
                    root.child(5),
                )
                .map_err(|e| e.to_string())?;
                Ok((c.passed, c.detail))
            }),
        ),
        (
            "analytic anchor",
            Box::new(|| {
                let c = analytic_anchor(&config.quadrature, ORACLE_SAMPLES, root.child(6))
                    .map_err(|e| e.to_string())?;
                Ok((c.passed, c.detail))
            }),
        ),
        (
            "gradient fidelity",
            Box::new(|| {
                let c = gradient_check(20, root.child(7)).map_err(|e| e.to_string())?;
                Ok((c.passed, c.detail))
            }),
        ),
        (
            "quadrature stability",
            Box::new(|| {
                let beliefs = battery_beliefs(&task, &runs.as_ref()?.ideal, seed, 10)?;
                let c = quadrature_doubling(&cases, &beliefs, &config.quadrature)
                    .map_err(|e| e.to_string())?;
                Ok((c.passed, c.detail))
            }),
        ),
        (
            "determinism",
            Box::new(|| determinism(runs.as_ref()?, task.saccade_budget())),
        ),
        (
            "belief correctness",
            Box::new(|| {
                let c = belief_fuzz(&task, 10_000, root.child(9)).map_err(|e| e.to_string())?;
                Ok((c.passed, c.detail))
            }),
        ),
        (
            "small-task argmax fidelity",
            Box::new(|| small_argmax_fidelity(&quad, root.child(10))),
        ),
    ];

    let mut failed = 0;
    for (number, (name, check)) in criteria.iter().enumerate() {
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !passed as usize;
        println!(
            "{} criterion {} {name}: {detail}",
            if passed { "PASS" } else { "FAIL" },
            number + 1
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use fovsearch::belief::BeliefState;
use fovsearch::config::{load_config, Config};
use fovsearch::environment::EpisodeState;
use fovsearch::eval::{compare_report, run_episode, trial_seed, Comparison};
use fovsearch::qlearn::{curve_csv, curve_path, load_stack, save_stack, train_stack_with};
use fovsearch::searchers::{Searcher, SearcherKind};
use fovsearch::seed::{SeedPath, DEFAULT_SEED};
use fovsearch::task::TaskConfig;
use fovsearch::validation::{
    analytic_anchor, belief_fuzz, gradient_check, oracle_equivalence, quadrature_doubling,
    random_cases, Check,
};
use fovsearch::{Error, Result};

use crate::{Cli, Command, SearcherArg, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION};

const SIMULATE_EPISODES: usize = 10;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => EXIT_USAGE,
        Error::Invariant(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Settings after merging the config file with command-line overrides.
struct Run {
    config: Config,
    seed: u64,
}

impl Run {
    fn new(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(path) => load_config(path)?,
            None => Config::reference(),
        };
        let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
        Ok(Self { config, seed })
    }

    fn task(&self) -> &TaskConfig {
        &self.config.task
    }

    /// The config as run, with the effective seed written in.
    fn canonical(&self) -> String {
        Config {
            seed: Some(self.seed),
            ..self.config.clone()
        }
        .to_toml_string()
    }

    fn searcher(&self, arg: SearcherArg, checkpoints: &Path) -> Result<Searcher> {
        let kind = match arg {
            SearcherArg::Map => SearcherKind::Map,
            SearcherArg::Ideal => SearcherKind::Ideal,
            SearcherArg::Random => SearcherKind::Random,
            SearcherArg::Qnet => {
                let task = self.task();
                SearcherKind::QNet(Arc::new(load_stack(
                    checkpoints,
                    task.saccade_budget(),
                    task.n(),
                )?))
            }
        };
        Searcher::new(kind, self.config.quadrature)
    }
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let run = Run::new(cli)?;
    let trials = cli.trials.unwrap_or(run.config.evaluation.trials);
    if trials == 0 {
        return Err(Error::Config {
            path: PathBuf::from("--trials"),
            message: "must be at least 1".into(),
        });
    }
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match &cli.command {
        Command::Simulate {
            searcher,
            checkpoints,
        } => {
            let searcher = run.searcher(*searcher, checkpoints)?;
            simulate(
                &run,
                &searcher,
                cli.trials.unwrap_or(SIMULATE_EPISODES),
                cli.out.as_deref(),
                cli.verbose,
            )
        }
        Command::Train => train(&run, &out("checkpoints")),
        Command::Evaluate {
            searcher,
            checkpoints,
        } => {
            let searcher = run.searcher(*searcher, checkpoints)?;
            report(&run, &[searcher], trials, &out("results"), cli.verbose)
        }
        Command::Compare { checkpoints } => {
            let searchers = [
                run.searcher(SearcherArg::Map, checkpoints)?,
                run.searcher(SearcherArg::Ideal, checkpoints)?,
                run.searcher(SearcherArg::Qnet, checkpoints)?,
            ];
            report(&run, &searchers, trials, &out("report"), cli.verbose)
        }
        Command::Validate { samples, cases } => validate(&run, *samples, *cases),
        Command::GridInfo => grid_info(&run),
    }
}

fn io_err(context: String) -> impl FnOnce(std::io::Error) -> Error {
    move |source| Error::Io { context, source }
}

fn simulate(
    run: &Run,
    searcher: &Searcher,
    episodes: usize,
    out: Option<&Path>,
    verbose: bool,
) -> Result<ExitCode> {
    let battery = SeedPath::root(run.seed);
    let mut text = String::new();
    for e in 0..episodes as u64 {
        let log = run_episode(run.task(), searcher, trial_seed(battery, e), e, verbose)?;
        text.push_str(&serde_json::to_string(&log).map_err(|e| Error::Invalid(e.to_string()))?);
        text.push('\n');
    }
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
            let path = dir.join(format!("episodes_{}.jsonl", searcher.name()));
            fs::write(&path, text).map_err(io_err(format!("writing {}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(io_err("writing to stdout".into()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn train(run: &Run, out: &Path) -> Result<ExitCode> {
    fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
    let task = run.task();
    let (stack, reports) = train_stack_with(
        task,
        &run.config.training,
        SeedPath::root(run.seed),
        |_, report| {
            let last = report.curve.last().expect("curve has epoch 0");
            eprintln!(
                "saccade {}: train loss {:.6e}, held-out loss {:.6e} -> {:.6e}",
                report.saccade, last.train_loss, report.curve[0].holdout_loss, last.holdout_loss
            );
        },
    )?;
    save_stack(out, &stack, run.seed)?;
    for report in &reports {
        let path = curve_path(out, report.saccade);
        fs::write(&path, curve_csv(&report.curve))
            .map_err(io_err(format!("writing {}", path.display())))?;
        if !report.improved() {
            eprintln!(
                "warning: held-out loss for saccade {} did not decrease",
                report.saccade
            );
        }
    }
    let path = out.join("config.toml");
    fs::write(&path, run.canonical()).map_err(io_err(format!("writing {}", path.display())))?;
    eprintln!("wrote {} checkpoints to {}", stack.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn report(
    run: &Run,
    searchers: &[Searcher],
    trials: usize,
    out: &Path,
    verbose: bool,
) -> Result<ExitCode> {
    let (comparison, manifest) = compare_report(
        run.task(),
        searchers,
        trials,
        run.seed,
        &run.canonical(),
        out,
        verbose,
    )?;
    print_summary(&comparison);
    eprintln!("wrote report to {} ({})", out.display(), manifest.display());
    Ok(ExitCode::SUCCESS)
}

fn print_summary(c: &Comparison) {
    println!("searcher,saccades,pc,se");
    for r in &c.pc.rows {
        println!("{},{},{:.4},{:.4}", r.searcher, r.saccades, r.pc, r.se);
    }
    for d in &c.differences {
        println!(
            "# {} - {} after {} saccades: {:+.4} (95% CI {:+.4} .. {:+.4})",
            d.a, d.b, d.saccades, d.mean, d.ci_low, d.ci_high
        );
    }
}

fn validate(run: &Run, samples: usize, cases: usize) -> Result<ExitCode> {
    let root = SeedPath::root(run.seed);
    let quad = &run.config.quadrature;
    let battery = random_cases(cases, root.child(1));
    let required = (cases * 48).div_ceil(50);
    // objective vectors along a few MAP-driven episodes of the configured task
    let task = run.task();
    let mut beliefs = Vec::new();
    for e in 0..3 {
        let mut env = EpisodeState::start(task, trial_seed(root.child(2), e))?;
        let mut belief = BeliefState::from_history(task, env.responses())?;
        beliefs.push((task.clone(), belief.clone()));
        for _ in 0..task.saccade_budget() - 1 {
            let resp = env.step(belief.map_choice())?;
            belief.absorb(resp, task)?;
            beliefs.push((task.clone(), belief.clone()));
        }
    }
    let checks: Vec<Check> = vec![
        analytic_anchor(quad, samples, root.child(3))?,
        oracle_equivalence(&battery, quad, samples, required, root.child(4))?,
        quadrature_doubling(&battery, &beliefs, quad)?,
        gradient_check(20, root.child(5))?,
        belief_fuzz(task, 10_000, root.child(6))?,
    ];
    for c in &checks {
        println!("{}", c.line());
    }
    Ok(if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn grid_info(run: &Run) -> Result<ExitCode> {
    let task = run.task();
    let start = task.initial_fixation();
    let locs = task.locations();
    eprintln!(
        "{} locations in a {} deg field; initial fixation {}; {} saccades",
        task.n(),
        locs.field_radius(),
        start,
        task.saccade_budget()
    );
    println!("index,x,y,eccentricity,dprime");
    for (i, p) in locs.coords().iter().enumerate() {
        println!(
            "{i},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.x,
            p.y,
            locs.eccentricity(start, i)?,
            task.dprime(start, i)
        );
    }
    Ok(ExitCode::SUCCESS)
}

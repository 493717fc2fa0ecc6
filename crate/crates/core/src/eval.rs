//! Trial batteries, proportion correct, fixation maps and comparison reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief::BeliefState;
use crate::environment::EpisodeState;
use crate::error::{Error, Result};
use crate::searchers::Searcher;
use crate::seed::{tag, SeedPath};
use crate::task::TaskConfig;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// One evaluated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub trial: u64,
    pub seed: u64,
    pub true_target: usize,
    /// Initial fixation followed by one entry per saccade.
    pub fixations: Vec<usize>,
    /// MAP choice after `t` saccades, for `t = 0..=budget`.
    pub choices: Vec<usize>,
    /// Per-decision candidate scores, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Vec<Vec<f64>>>,
    pub final_choice: usize,
    pub reward: u8,
}

impl EpisodeLog {
    pub fn correct_after(&self, saccades: usize) -> bool {
        self.choices[saccades] == self.true_target
    }
}

/// Seed of trial `trial` in a battery. Shared by every searcher, which is
/// what makes comparisons paired.
pub fn trial_seed(battery: SeedPath, trial: u64) -> SeedPath {
    battery.child2(tag::BATTERY, trial)
}

/// Plays one full episode with `searcher`.
pub fn run_episode(
    task: &TaskConfig,
    searcher: &Searcher,
    seed: SeedPath,
    trial: u64,
    verbose: bool,
) -> Result<EpisodeLog> {
    let mut env = EpisodeState::start(task, seed)?;
    let mut belief = BeliefState::from_history(task, env.responses())?;
    let mut choices = vec![belief.map_choice()];
    let mut diagnostics = verbose.then(Vec::new);
    for saccade in 1..=task.saccade_budget() {
        let decision = searcher.decide(
            task,
            &belief,
            saccade,
            seed.child2(tag::POLICY, saccade as u64),
            verbose,
        )?;
        let resp = env.step(decision.fixation)?;
        belief.absorb(resp, task)?;
        choices.push(belief.map_choice());
        if let (Some(d), Some(scores)) = (diagnostics.as_mut(), decision.scores) {
            d.push(scores);
        }
    }
    let final_choice = *choices.last().expect("at least one choice");
    let reward = env.terminal_reward(final_choice)?;
    Ok(EpisodeLog {
        trial,
        seed: seed.value(),
        true_target: env.true_target(),
        fixations: env.fixations().to_vec(),
        choices,
        diagnostics,
        final_choice,
        reward: reward.value(),
    })
}

/// `trials` independent episodes. Trial `e` uses [`trial_seed`]`(seed, e)`.
pub fn run_battery(
    task: &TaskConfig,
    searcher: &Searcher,
    trials: usize,
    seed: SeedPath,
    verbose: bool,
) -> Result<Vec<EpisodeLog>> {
    if trials == 0 {
        return Err(Error::Invalid("a battery needs at least one trial".into()));
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|e| run_episode(task, searcher, trial_seed(seed, e), e, verbose))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcRow {
    pub searcher: String,
    pub saccades: usize,
    pub pc: f64,
    pub se: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PcTable {
    pub rows: Vec<PcRow>,
}

impl PcTable {
    pub fn extend(&mut self, other: PcTable) {
        self.rows.extend(other.rows);
    }

    pub fn get(&self, searcher: &str, saccades: usize) -> Option<&PcRow> {
        self.rows
            .iter()
            .find(|r| r.searcher == searcher && r.saccades == saccades)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("searcher,saccades,pc,se,trials\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{}\n",
                r.searcher, r.saccades, r.pc, r.se, r.trials
            ));
        }
        out
    }
}

fn binomial_row(searcher: &str, saccades: usize, hits: usize, trials: usize) -> PcRow {
    let pc = hits as f64 / trials as f64;
    PcRow {
        searcher: searcher.to_string(),
        saccades,
        pc,
        se: (pc * (1.0 - pc) / trials as f64).sqrt(),
        trials,
    }
}

/// Proportion correct with binomial standard errors. With `by_saccade`, each
/// episode is also scored as if it had stopped after 1, 2, ... saccades.
pub fn proportion_correct(
    searcher: &str,
    logs: &[EpisodeLog],
    by_saccade: bool,
) -> Result<PcTable> {
    let first = logs
        .first()
        .ok_or_else(|| Error::Invalid("no episodes to score".into()))?;
    let budget = first.choices.len() - 1;
    if logs.iter().any(|l| l.choices.len() != budget + 1) {
        return Err(Error::Invalid(
            "episodes have different saccade budgets".into(),
        ));
    }
    let counts: Vec<usize> = if by_saccade {
        (1..=budget).collect()
    } else {
        vec![budget]
    };
    let rows = counts
        .into_iter()
        .map(|s| {
            let hits = if s == budget {
                logs.iter().map(|l| l.reward as usize).sum()
            } else {
                logs.iter().filter(|l| l.correct_after(s)).count()
            };
            binomial_row(searcher, s, hits, logs.len())
        })
        .collect();
    Ok(PcTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationHistogram {
    pub saccade_index: usize,
    pub counts: Vec<usize>,
    pub freqs: Vec<f64>,
}

/// Where the eye landed on saccade `saccade_index` (1-based) across trials.
pub fn fixation_histogram(
    logs: &[EpisodeLog],
    saccade_index: usize,
    n: usize,
) -> Result<FixationHistogram> {
    if logs.is_empty() {
        return Err(Error::Invalid("no episodes to count".into()));
    }
    if saccade_index == 0 {
        return Err(Error::Invalid("saccade index is 1-based".into()));
    }
    let mut counts = vec![0usize; n];
    for log in logs {
        let k = *log.fixations.get(saccade_index).ok_or_else(|| {
            Error::Invalid(format!(
                "saccade {saccade_index} outside the budget of {}",
                log.fixations.len() - 1
            ))
        })?;
        *counts
            .get_mut(k)
            .ok_or(Error::IndexOutOfRange { index: k, n })? += 1;
    }
    let total = logs.len() as f64;
    let freqs = counts.iter().map(|&c| c as f64 / total).collect();
    Ok(FixationHistogram {
        saccade_index,
        counts,
        freqs,
    })
}

/// Half the L1 distance between two frequency vectors.
pub fn total_variation(a: &FixationHistogram, b: &FixationHistogram) -> f64 {
    0.5 * a
        .freqs
        .iter()
        .zip(&b.freqs)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

/// Paired difference of per-trial correctness, `a − b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub a: String,
    pub b: String,
    pub saccades: usize,
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
}

impl PairedDifference {
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

/// Normal-approximation 95% interval for the mean paired difference.
pub fn paired_difference(
    a: (&str, &[EpisodeLog]),
    b: (&str, &[EpisodeLog]),
    saccades: usize,
) -> Result<PairedDifference> {
    let (la, lb) = (a.1, b.1);
    if la.len() != lb.len() || la.is_empty() {
        return Err(Error::Invalid(
            "paired batteries must be nonempty and equally long".into(),
        ));
    }
    let mut diffs = Vec::with_capacity(la.len());
    for (x, y) in la.iter().zip(lb) {
        if x.trial != y.trial || x.true_target != y.true_target {
            return Err(Error::Invalid(format!("trial {} is not paired", x.trial)));
        }
        if saccades >= x.choices.len() || saccades >= y.choices.len() {
            return Err(Error::Invalid(format!(
                "saccade count {saccades} exceeds the budget"
            )));
        }
        diffs.push(
            x.correct_after(saccades) as i32 as f64 - y.correct_after(saccades) as i32 as f64,
        );
    }
    let m = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / m;
    let var = if diffs.len() > 1 {
        diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let se = (var / m).sqrt();
    Ok(PairedDifference {
        a: a.0.to_string(),
        b: b.0.to_string(),
        saccades,
        mean,
        se,
        ci_low: mean - Z95 * se,
        ci_high: mean + Z95 * se,
        trials: diffs.len(),
    })
}

/// Everything a comparison run produced, before it is written out.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub names: Vec<String>,
    pub logs: Vec<Vec<EpisodeLog>>,
    pub pc: PcTable,
    /// `histograms[s][t]`: searcher `s`, saccade `t + 1`.
    pub histograms: Vec<Vec<FixationHistogram>>,
    pub differences: Vec<PairedDifference>,
}

impl Comparison {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn histogram(&self, name: &str, saccade: usize) -> Option<&FixationHistogram> {
        self.histograms
            .get(self.index_of(name)?)?
            .get(saccade.checked_sub(1)?)
    }

    pub fn difference(&self, a: &str, b: &str, saccades: usize) -> Option<&PairedDifference> {
        self.differences
            .iter()
            .find(|d| d.a == a && d.b == b && d.saccades == saccades)
    }
}

/// Runs every searcher on the same paired battery and summarizes.
pub fn compare(
    task: &TaskConfig,
    searchers: &[Searcher],
    trials: usize,
    seed: SeedPath,
    verbose: bool,
) -> Result<Comparison> {
    let mut names = Vec::new();
    let mut logs = Vec::new();
    for s in searchers {
        let name = s.name().to_string();
        if names.contains(&name) {
            return Err(Error::Invalid(format!("searcher {name} listed twice")));
        }
        log::info!("running {trials} trials with the {name} searcher");
        logs.push(run_battery(task, s, trials, seed, verbose)?);
        names.push(name);
    }
    let mut pc = PcTable::default();
    let mut histograms = Vec::new();
    for (name, l) in names.iter().zip(&logs) {
        pc.extend(proportion_correct(name, l, true)?);
        histograms.push(
            (1..=task.saccade_budget())
                .map(|t| fixation_histogram(l, t, task.n()))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mut differences = Vec::new();
    for a in 0..names.len() {
        for b in a + 1..names.len() {
            for s in 1..=task.saccade_budget() {
                differences.push(paired_difference(
                    (&names[a], &logs[a]),
                    (&names[b], &logs[b]),
                    s,
                )?);
            }
        }
    }
    let comparison = Comparison {
        names,
        logs,
        pc,
        histograms,
        differences,
    };
    check_invariants(task, &comparison, trials)?;
    Ok(comparison)
}

/// Structural checks on a finished comparison; any failure is an error.
pub fn check_invariants(task: &TaskConfig, c: &Comparison, trials: usize) -> Result<()> {
    let fail = |m: String| Err(Error::Invariant(m));
    let budget = task.saccade_budget();
    for (name, logs) in c.names.iter().zip(&c.logs) {
        if logs.len() != trials {
            return fail(format!("{name}: {} logs for {trials} trials", logs.len()));
        }
        for l in logs {
            if l.fixations.len() != budget + 1 || l.choices.len() != budget + 1 || l.reward > 1 {
                return fail(format!("{name}: malformed log for trial {}", l.trial));
            }
        }
    }
    if let Some(first) = c.logs.first() {
        for (name, logs) in c.names.iter().zip(&c.logs) {
            if logs
                .iter()
                .zip(first)
                .any(|(a, b)| a.true_target != b.true_target)
            {
                return fail(format!(
                    "{name}: true targets differ from the paired battery"
                ));
            }
        }
    }
    for r in &c.pc.rows {
        if !(0.0..=1.0).contains(&r.pc) || r.trials == 0 {
            return fail(format!("{} PC {} out of range", r.searcher, r.pc));
        }
    }
    for (name, hs) in c.names.iter().zip(&c.histograms) {
        for h in hs {
            let count: usize = h.counts.iter().sum();
            let freq: f64 = h.freqs.iter().sum();
            if count != trials || (freq - 1.0).abs() > 1e-12 {
                return fail(format!(
                    "{name}: histogram for saccade {} does not conserve trials",
                    h.saccade_index
                ));
            }
        }
    }
    Ok(())
}

/// Provenance written next to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub trials: usize,
    pub searchers: Vec<String>,
    pub files: Vec<String>,
    pub created_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write(dir: &Path, name: &str, text: &str, files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    files.push(name.to_string());
    Ok(())
}

pub fn fixmap_csv(task: &TaskConfig, h: &FixationHistogram) -> String {
    let mut out = String::from("index,x,y,count,freq\n");
    for (i, p) in task.locations().coords().iter().enumerate() {
        out.push_str(&format!(
            "{i},{:.16e},{:.16e},{},{:.16e}\n",
            p.x, p.y, h.counts[i], h.freqs[i]
        ));
    }
    out
}

pub fn differences_csv(diffs: &[PairedDifference]) -> String {
    let mut out = String::from("a,b,saccades,mean,se,ci_low,ci_high,trials\n");
    for d in diffs {
        out.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            d.a, d.b, d.saccades, d.mean, d.se, d.ci_low, d.ci_high, d.trials
        ));
    }
    out
}

pub fn episodes_jsonl(logs: &[EpisodeLog]) -> Result<String> {
    let mut out = String::new();
    for l in logs {
        out.push_str(&serde_json::to_string(l).map_err(|e| Error::Invalid(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes the per-searcher artifacts (episode logs, fixation maps) and the
/// shared tables; returns the file names written.
pub fn write_tables(task: &TaskConfig, c: &Comparison, out_dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let mut files = Vec::new();
    write(out_dir, "pc_table.csv", &c.pc.to_csv(), &mut files)?;
    let mut json: BTreeMap<String, &Vec<FixationHistogram>> = BTreeMap::new();
    for ((name, hs), logs) in c.names.iter().zip(&c.histograms).zip(&c.logs) {
        for h in hs {
            write(
                out_dir,
                &format!("fixmap_{name}_{}.csv", h.saccade_index),
                &fixmap_csv(task, h),
                &mut files,
            )?;
        }
        write(
            out_dir,
            &format!("episodes_{name}.jsonl"),
            &episodes_jsonl(logs)?,
            &mut files,
        )?;
        json.insert(name.clone(), hs);
    }
    let hist_json =
        serde_json::to_string_pretty(&json).map_err(|e| Error::Invalid(e.to_string()))?;
    write(out_dir, "fixation_histograms.json", &hist_json, &mut files)?;
    if !c.differences.is_empty() {
        write(
            out_dir,
            "paired_differences.csv",
            &differences_csv(&c.differences),
            &mut files,
        )?;
    }
    Ok(files)
}

/// Runs [`compare`] and writes the report bundle into `out_dir`.
///
/// `config_text` is the canonical config the run used; its hash goes into
/// `manifest.json`, the only file that carries a timestamp.
pub fn compare_report(
    task: &TaskConfig,
    searchers: &[Searcher],
    trials: usize,
    seed: u64,
    config_text: &str,
    out_dir: &Path,
    verbose: bool,
) -> Result<(Comparison, PathBuf)> {
    let c = compare(task, searchers, trials, SeedPath::root(seed), verbose)?;
    let mut files = write_tables(task, &c, out_dir)?;
    write(out_dir, "config.toml", config_text, &mut files)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        trials,
        searchers: c.names.clone(),
        files,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = out_dir.join("manifest.json");
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok((c, path))
}

//! End-to-end workflow: demonstrations, pretraining, fine-tuning, evaluation and run directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{ArchConfig, Network, Role};
use crate::config::{parse_row, Config, RowKind};
use crate::demo::{generate_demos, subsample, Dataset};
use crate::error::{Error, Result};
use crate::imitation::{pretrain, EpochStats, PretrainConfig};
use crate::nn::{checkpoint, ParameterSet};
use crate::report::{self, Curve, SeedResult};
use crate::trainer::{build_learner, evaluate_network, train, AblationConfig, EvalReport, MetricsRow, RunOutput};

/// Everything needed to reproduce and locate the outputs of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub command: String,
    pub row: Option<String>,
    pub seed: u64,
    pub config_sha256: String,
    pub config: Config,
    pub start_frame: u64,
    pub end_frame: u64,
    pub dataset: Option<String>,
    pub init_checkpoint: Option<String>,
    pub checkpoints: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVAL_FILE: &str = "eval.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PRETRAIN_LOG_FILE: &str = "pretrain.csv";

impl RunManifest {
    pub fn new(command: &str, row: Option<&str>, seed: u64, config: &Config) -> Result<Self> {
        let digest = Sha256::digest(config.to_toml()?.as_bytes());
        Ok(Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            row: row.map(str::to_string),
            seed,
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            config: config.clone(),
            start_frame: 0,
            end_frame: 0,
            dataset: None,
            init_checkpoint: None,
            checkpoints: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(format!("json: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Scripted demonstrations, subsampled.
pub fn build_dataset(config: &Config) -> Result<Dataset> {
    let d = &config.demos;
    let raw = generate_demos(d.count, d.seed, d.noise, &config.env)?;
    let episodes = raw
        .iter()
        .map(|ep| {
            let ep = if d.rotation_granularity < 30 {
                ep.with_fine_rotation(d.rotation_granularity)?
            } else {
                ep.clone()
            };
            Ok(subsample(&ep.frames, ep.seed, &config.subsample))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(episodes))
}

/// Architecture for a supervised row: `+CP` adds the inventory subnet to the craft heads.
pub fn row_architecture(config: &Config, craft_subnet: bool) -> ArchConfig {
    ArchConfig {
        craft_subnet,
        ..config.architecture.clone()
    }
}

pub fn pretrain_policy(
    dataset: &Dataset,
    config: &Config,
    craft_subnet: bool,
    seed: u64,
    on_epoch: impl FnMut(&EpochStats, &Network) -> Result<()>,
) -> Result<(Network, Vec<EpochStats>)> {
    let arch = row_architecture(config, craft_subnet);
    let pc = PretrainConfig {
        seed,
        ..config.pretrain.clone()
    };
    pretrain(dataset, &arch, config.env.view_radius, &pc, on_epoch)
}

/// Fine-tunes a pretrained actor under `ablation`, seeding the learner and actors with `seed`.
pub fn finetune(pretrained: &ParameterSet, config: &Config, ablation: &AblationConfig, seed: u64) -> Result<RunOutput> {
    let mut tc = config.train.clone();
    tc.seed = seed;
    let learner = build_learner(
        pretrained,
        &config.architecture,
        config.env.view_radius,
        ablation,
        &tc,
        &config.loss,
    )?;
    train(learner, &config.env)
}

pub fn evaluate_policy(net: &Network, config: &Config) -> Result<EvalReport> {
    let e = &config.eval;
    evaluate_network(net, &config.env, e.episodes, e.seed_base, e.sampled)
}

/// Role encoded in a checkpoint's parameter names.
pub fn checkpoint_role(params: &ParameterSet) -> Result<Role> {
    let first = params.names().next().ok_or_else(|| Error::format("empty checkpoint"))?;
    [Role::Actor, Role::Critic, Role::Shared]
        .into_iter()
        .find(|r| first.starts_with(&format!("{}/", r.name())))
        .ok_or_else(|| Error::format(format!("cannot infer the network role from parameter {first:?}")))
}

/// Loads a checkpoint as a network, inferring the role and trying both craft-head layouts.
pub fn load_network(path: &Path, config: &Config) -> Result<Network> {
    let params = checkpoint::load(path)?;
    let role = checkpoint_role(&params)?;
    let vr = config.env.view_radius;
    match Network::from_params(role, &config.architecture, vr, params.clone()) {
        Ok(n) => Ok(n),
        Err(first) => {
            let alt = row_architecture(config, !config.architecture.craft_subnet);
            Network::from_params(role, &alt, vr, params).map_err(|_| first)
        }
    }
}

/// Saves the learner's networks into `dir`; returns the file paths.
pub fn save_learner(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let actor = dir.join(format!("{}.ckpt", out.learner.actor.role().name()));
    checkpoint::save(out.learner.actor.params(), &actor)?;
    paths.push(actor);
    if let Some(critic) = &out.learner.critic {
        let p = dir.join("critic.ckpt");
        checkpoint::save(critic.params(), &p)?;
        paths.push(p);
    }
    Ok(paths)
}

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut s = String::from(MetricsRow::HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads the (frame, return_ema) curve from a metrics file.
pub fn read_curve(path: &Path) -> Result<Curve> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::format(format!("{}: missing column {name}", path.display())))
    };
    let (fc, rc) = (col("frame")?, col("return_ema")?);
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            let parse = |i: usize| cells.get(i).and_then(|c| c.parse::<f64>().ok());
            match (parse(fc), parse(rc)) {
                (Some(f), Some(r)) => Ok((f as u64, r)),
                _ => Err(Error::format(format!("{}: bad row {l:?}", path.display()))),
            }
        })
        .collect()
}

/// Directory name for a suite row label.
pub fn row_slug(label: &str) -> String {
    let s: String = label
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    let s = s.trim_matches('-').to_string();
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if !(c == '-' && out.ends_with('-')) {
            out.push(c);
        }
    }
    out
}

pub fn ratio_row(ratio: usize) -> String {
    format!("ratio-{ratio}")
}

/// Per-(row, seed) outcome of a suite.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub row: String,
    pub seed: u64,
    pub report: EvalReport,
    pub curve: Option<Curve>,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutcome {
    pub runs: Vec<SuiteRun>,
}

impl SuiteOutcome {
    pub fn results(&self) -> Vec<SeedResult> {
        self.runs
            .iter()
            .map(|r| SeedResult {
                row: r.row.clone(),
                seed: r.seed,
                report: r.report.clone(),
            })
            .collect()
    }

    pub fn reports(&self, row: &str) -> Vec<&EvalReport> {
        self.runs.iter().filter(|r| r.row == row).map(|r| &r.report).collect()
    }
}

fn ablation_for(config: &Config, kind: RowKind, ratio: Option<usize>) -> Option<AblationConfig> {
    match kind {
        RowKind::Supervised { .. } => None,
        RowKind::FineTune { er, sac, ac, cl } => Some(AblationConfig {
            replay_ratio: ratio.unwrap_or(config.ablation.replay_ratio),
            ..config.ablation.clone().with(er, sac, ac, cl)
        }),
    }
}

/// Runs every suite row and the replay-ratio sweep for every seed.
/// With `out`, each run gets its own directory holding a manifest, evaluation and checkpoints.
pub fn run_suite(config: &Config, out: Option<&Path>) -> Result<SuiteOutcome> {
    let dataset = build_dataset(config)?;
    let dataset_path = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.toml"), config.to_toml()?)?;
            let p = dir.join("dataset.bin");
            crate::demo::write_dataset(&dataset, &p)?;
            Some(p)
        }
        None => None,
    };
    log::info!(
        "dataset: {} episodes, {} records",
        dataset.episodes.len(),
        dataset.total_records()
    );

    let full = RowKind::FineTune {
        er: true,
        sac: true,
        ac: true,
        cl: true,
    };
    let mut jobs: Vec<(String, RowKind, Option<usize>)> = Vec::new();
    for label in &config.suite.rows {
        jobs.push((label.clone(), parse_row(label)?, None));
    }
    for r in &config.suite.replay_ratios {
        jobs.push((ratio_row(*r), full, Some(*r)));
    }

    let mut outcome = SuiteOutcome::default();
    for &seed in &config.suite.seeds {
        let needs_cp = jobs
            .iter()
            .any(|(_, k, _)| matches!(k, RowKind::FineTune { .. } | RowKind::Supervised { craft_subnet: true }));
        let mut cp: Option<Network> = None;
        if needs_cp {
            let (net, log) = pretrain_policy(&dataset, config, true, seed, |s, _| {
                log::info!("seed {seed} +cp epoch {} loss {:.4}", s.epoch, s.loss);
                Ok(())
            })?;
            cp = Some(net);
            if let Some(dir) = out {
                let d = dir.join("pretrained").join(format!("seed{seed}"));
                fs::create_dir_all(&d)?;
                checkpoint::save(cp.as_ref().expect("just set").params(), &d.join("actor.ckpt"))?;
                write_epoch_log(&log, &d.join(PRETRAIN_LOG_FILE))?;
            }
        }
        // full config at the default ratio is shared between its row and the sweep
        let mut full_default: Option<SuiteRun> = None;
        for (label, kind, ratio) in &jobs {
            let effective_ratio = ratio.unwrap_or(config.ablation.replay_ratio);
            if *kind == full && effective_ratio == config.ablation.replay_ratio {
                if let Some(prev) = &full_default {
                    outcome.runs.push(SuiteRun {
                        row: label.clone(),
                        ..prev.clone()
                    });
                    if let Some(dir) = out {
                        copy_run(dir, &prev.row, label, seed)?;
                    }
                    continue;
                }
            }
            let run_dir = out.map(|d| d.join("runs").join(row_slug(label)).join(format!("seed{seed}")));
            if let Some(d) = &run_dir {
                fs::create_dir_all(d)?;
            }
            let mut manifest = RunManifest::new("ablate", Some(label), seed, config)?;
            manifest.dataset = dataset_path.as_ref().map(|p| p.display().to_string());
            let run = match *kind {
                RowKind::Supervised { craft_subnet } => {
                    let net = if craft_subnet {
                        cp.clone().expect("pretrained above")
                    } else {
                        let (net, log) = pretrain_policy(&dataset, config, false, seed, |s, _| {
                            log::info!("seed {seed} supervised epoch {} loss {:.4}", s.epoch, s.loss);
                            Ok(())
                        })?;
                        if let Some(d) = &run_dir {
                            write_epoch_log(&log, &d.join(PRETRAIN_LOG_FILE))?;
                        }
                        net
                    };
                    if let Some(d) = &run_dir {
                        let p = d.join("actor.ckpt");
                        checkpoint::save(net.params(), &p)?;
                        manifest.checkpoints.push(p.display().to_string());
                    }
                    SuiteRun {
                        row: label.clone(),
                        seed,
                        report: evaluate_policy(&net, config)?,
                        curve: None,
                    }
                }
                RowKind::FineTune { .. } => {
                    let ablation = ablation_for(config, *kind, *ratio).expect("fine-tune row");
                    let init = cp.as_ref().expect("pretrained above");
                    let res = finetune(init.params(), config, &ablation, seed)?;
                    manifest.end_frame = res.frames;
                    if let (Some(d), Some(root)) = (&run_dir, out) {
                        let init_path = root.join("pretrained").join(format!("seed{seed}")).join("actor.ckpt");
                        manifest.init_checkpoint = Some(init_path.display().to_string());
                        manifest.checkpoints = save_learner(&res, d)?.iter().map(|p| p.display().to_string()).collect();
                        write_metrics(&res.metrics, &d.join(METRICS_FILE))?;
                    }
                    let curve: Curve = res.metrics.iter().map(|m| (m.frame, m.return_ema)).collect();
                    SuiteRun {
                        row: label.clone(),
                        seed,
                        report: evaluate_policy(&res.learner.actor, config)?,
                        curve: Some(curve),
                    }
                }
            };
            log::info!(
                "seed {seed} {label}: mean {:.2} freq {:?}",
                run.report.mean,
                run.report.reward_frequency
            );
            if let Some(d) = &run_dir {
                write_json(&d.join(EVAL_FILE), &run.report)?;
                manifest.write(&d.join(MANIFEST_FILE))?;
            }
            if *kind == full && effective_ratio == config.ablation.replay_ratio {
                full_default = Some(run.clone());
            }
            outcome.runs.push(run);
        }
    }
    if let Some(dir) = out {
        for w in write_report(dir)? {
            log::warn!("{w}");
        }
    }
    Ok(outcome)
}

fn write_epoch_log(log: &[EpochStats], path: &Path) -> Result<()> {
    let mut s = EpochStats::csv_header();
    s.push('\n');
    for e in log {
        s.push_str(&e.csv_row());
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn copy_run(dir: &Path, from: &str, to: &str, seed: u64) -> Result<()> {
    let src = dir.join("runs").join(row_slug(from)).join(format!("seed{seed}"));
    let dst = dir.join("runs").join(row_slug(to)).join(format!("seed{seed}"));
    fs::create_dir_all(&dst)?;
    for entry in fs::read_dir(&src)? {
        let entry = entry?;
        fs::copy(entry.path(), dst.join(entry.file_name()))?;
    }
    let mut m = RunManifest::read(&dst.join(MANIFEST_FILE))?;
    m.row = Some(to.to_string());
    m.write(&dst.join(MANIFEST_FILE))
}

/// Rebuilds the report tables of a suite directory. Returns warnings for incomplete runs.
pub fn write_report(dir: &Path) -> Result<Vec<String>> {
    let runs = dir.join("runs");
    if !runs.is_dir() {
        return Err(Error::usage(format!("{} has no runs/ directory", dir.display())));
    }
    let mut warnings = Vec::new();
    let mut results = Vec::new();
    let mut curves: Vec<(String, Vec<Curve>)> = Vec::new();
    let mut budget = 0;
    let mut row_dirs: Vec<PathBuf> = fs::read_dir(&runs)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    row_dirs.sort();
    let mut seed_dirs = Vec::new();
    for rd in row_dirs.iter().filter(|p| p.is_dir()) {
        let mut s: Vec<PathBuf> = fs::read_dir(rd)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        s.sort();
        seed_dirs.extend(s.into_iter().filter(|p| p.is_dir()));
    }
    // keep rows in the order of the suite file when it is present
    let order: Vec<String> = read_suite_order(dir);
    let mut found: Vec<(usize, SeedResult, Option<Curve>)> = Vec::new();
    for sd in seed_dirs {
        let manifest = match RunManifest::read(&sd.join(MANIFEST_FILE)) {
            Ok(m) => m,
            Err(_) => {
                warnings.push(format!("{}: missing or unreadable manifest, skipped", sd.display()));
                continue;
            }
        };
        let row = manifest.row.clone().unwrap_or_else(|| manifest.command.clone());
        let report: EvalReport = match read_json(&sd.join(EVAL_FILE)) {
            Ok(r) => r,
            Err(_) => {
                warnings.push(format!("{}: incomplete run (no {EVAL_FILE})", sd.display()));
                continue;
            }
        };
        budget = budget.max(manifest.config.ablation.budget_frames);
        let curve = read_curve(&sd.join(METRICS_FILE)).ok();
        let rank = order.iter().position(|r| *r == row).unwrap_or(usize::MAX);
        found.push((
            rank,
            SeedResult {
                row,
                seed: manifest.seed,
                report,
            },
            curve,
        ));
    }
    found.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.row.cmp(&b.1.row)).then(a.1.seed.cmp(&b.1.seed)));
    for (_, r, curve) in found {
        if let Some(c) = curve {
            match curves.iter_mut().find(|(row, _)| *row == r.row) {
                Some((_, cs)) => cs.push(c),
                None => curves.push((r.row.clone(), vec![c])),
            }
        }
        results.push(r);
    }
    let rows = report::summarize(&results);
    let out = dir.join("report");
    fs::create_dir_all(&out)?;
    fs::write(out.join("ablation.csv"), report::ablation_csv(&rows))?;
    fs::write(out.join("reward_frequency.csv"), report::frequency_csv(&rows))?;
    let (lc, w) = report::learning_curve_csv(&curves, budget, 50);
    fs::write(out.join("learning_curve.csv"), lc)?;
    warnings.extend(w);
    Ok(warnings)
}

fn read_suite_order(dir: &Path) -> Vec<String> {
    let Ok(text) = fs::read_to_string(dir.join("config.toml")) else {
        return Vec::new();
    };
    let Ok(cfg) = Config::parse(&text) else {
        return Vec::new();
    };
    let mut order = cfg.suite.rows.clone();
    order.extend(cfg.suite.replay_ratios.iter().map(|r| ratio_row(*r)));
    order
}

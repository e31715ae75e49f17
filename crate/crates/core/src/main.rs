use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use craftrl::config::Config;
use craftrl::demo::{read_dataset, write_dataset};
use craftrl::nn::checkpoint;
use craftrl::pipeline::{
    self, build_dataset, evaluate_policy, finetune, load_network, pretrain_policy, save_learner, write_json,
    write_metrics, RunManifest, EVAL_FILE, MANIFEST_FILE, METRICS_FILE,
};
use craftrl::{Error, Result};

#[derive(Parser)]
#[command(name = "craftrl", version, about = "Imitation pretraining and off-policy fine-tuning on ChainCraft")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML config file; defaults apply to everything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.learning_rate=3e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let config = match &self.config {
            Some(p) => Config::load(p, &self.overrides)?,
            None => Config::parse_with_overrides("", &self.overrides)?,
        };
        for w in config.warnings() {
            log::warn!("{w}");
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted demonstrations and write the subsampled dataset.
    GenDemos {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Supervised training of the actor on a dataset.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fine-tune a pretrained actor with the configured ablation flags.
    Train {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint and print the report as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed_base: Option<u64>,
        /// Sample actions instead of taking the argmax of every head.
        #[arg(long)]
        sampled: bool,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run every suite row and the replay-ratio sweep over all seeds.
    Ablate {
        /// Config file whose `[suite]` section lists rows, seeds and ratios.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Rebuild the report tables of an ablation directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(2),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

/// When `--config` is absent, a manifest next to the checkpoint supplies the training config.
fn config_near(ckpt: &Path, cfg: &ConfigArgs) -> Result<Config> {
    if cfg.config.is_none() {
        let manifest = ckpt.with_file_name(MANIFEST_FILE);
        if let Ok(m) = RunManifest::read(&manifest) {
            log::info!("using the config recorded in {}", manifest.display());
            let text = m.config.to_toml()?;
            return Config::parse_with_overrides(&text, &cfg.overrides);
        }
    }
    cfg.load()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenDemos {
            count,
            seed,
            noise,
            out,
            cfg,
        } => {
            let mut config = cfg.load()?;
            if let Some(c) = count {
                config.demos.count = c;
            }
            if let Some(s) = seed {
                config.demos.seed = s;
            }
            if let Some(n) = noise {
                config.demos.noise = n;
            }
            config.validate()?;
            let ds = build_dataset(&config)?;
            create_parent(&out)?;
            write_dataset(&ds, &out)?;
            log::info!(
                "wrote {} episodes ({} records) to {}",
                ds.episodes.len(),
                ds.total_records(),
                out.display()
            );
            Ok(())
        }
        Command::Pretrain { data, out, seed, cfg } => {
            let config = cfg.load()?;
            let seed = seed.unwrap_or(config.pretrain.seed);
            let ds = read_dataset(&data)?;
            create_parent(&out)?;
            let log_path = out.with_extension("csv");
            let mut rows = vec![craftrl::imitation::EpochStats::csv_header()];
            let (net, _) = pretrain_policy(&ds, &config, config.architecture.craft_subnet, seed, |s, net| {
                log::info!("epoch {} loss {:.4}", s.epoch, s.loss);
                rows.push(s.csv_row());
                checkpoint::save(net.params(), &out)?;
                fs::write(&log_path, rows.join("\n") + "\n")?;
                Ok(())
            })?;
            checkpoint::save(net.params(), &out)?;
            let mut m = RunManifest::new("pretrain", None, seed, &config)?;
            m.dataset = Some(data.display().to_string());
            m.checkpoints.push(out.display().to_string());
            m.write(&out.with_extension("manifest.json"))
        }
        Command::Train { init, out, seed, cfg } => {
            let config = cfg.load()?;
            let seed = seed.unwrap_or(config.train.seed);
            let params = checkpoint::load(&init)?;
            fs::create_dir_all(&out)?;
            let res = finetune(&params, &config, &config.ablation, seed)?;
            write_metrics(&res.metrics, &out.join(METRICS_FILE))?;
            let mut m = RunManifest::new("train", Some(&config.ablation.label()), seed, &config)?;
            m.init_checkpoint = Some(init.display().to_string());
            m.end_frame = res.frames;
            m.checkpoints = save_learner(&res, &out)?.iter().map(|p| p.display().to_string()).collect();
            let report = evaluate_policy(&res.learner.actor, &config)?;
            write_json(&out.join(EVAL_FILE), &report)?;
            m.write(&out.join(MANIFEST_FILE))?;
            log::info!(
                "{} frames, {} updates, eval mean {:.2}",
                res.frames,
                res.learner.updates,
                report.mean
            );
            Ok(())
        }
        Command::Eval {
            ckpt,
            episodes,
            seed_base,
            sampled,
            out,
            cfg,
        } => {
            let mut config = config_near(&ckpt, &cfg)?;
            if let Some(n) = episodes {
                config.eval.episodes = n;
            }
            if let Some(s) = seed_base {
                config.eval.seed_base = s;
            }
            config.eval.sampled |= sampled;
            config.validate()?;
            let net = load_network(&ckpt, &config)?;
            if !net.role().has_policy() {
                return Err(Error::Usage(format!("{} holds a critic, not a policy", ckpt.display())));
            }
            let report = evaluate_policy(&net, &config)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
            println!("{json}");
            if let Some(p) = out {
                create_parent(&p)?;
                fs::write(p, json + "\n")?;
            }
            Ok(())
        }
        Command::Ablate { suite, out, overrides } => {
            let config = Config::load(&suite, &overrides)?;
            for w in config.warnings() {
                log::warn!("{w}");
            }
            let outcome = pipeline::run_suite(&config, Some(&out))?;
            log::info!("{} runs finished; report in {}", outcome.runs.len(), out.join("report").display());
            Ok(())
        }
        Command::Report { run_dir } => {
            for w in pipeline::write_report(&run_dir)? {
                log::warn!("{w}");
            }
            log::info!("report written to {}", run_dir.join("report").display());
            Ok(())
        }
    }
}

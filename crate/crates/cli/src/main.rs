use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msma_core::datastore::{load_dataset, load_manifest, prepare, synth_dataset, write_atomic, Dataset, Split};
use msma_core::frontend::FrontendConfig;
use msma_core::mas::Scenario;
use msma_core::metrics::{average_of, evaluate, robustness_report, Comparison};
use msma_core::trainer::{train_on, Checkpoint, EpochRecord, TrainConfig};
use msma_core::{Error, Result};

#[derive(Parser)]
#[command(name = "msma", version, about = "Audio-visual Big Five regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted synthetic corpus and its manifest.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract and cache features for every manifest entry.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        frontend: FrontendArgs,
    },
    /// Train a model and save the checkpoint directory.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        no_msfem: bool,
        #[arg(long)]
        no_mas: bool,
        #[arg(long)]
        out: PathBuf,
        /// Feature cache directory, reused when it matches the frontend.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Score a checkpoint on one manifest split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Score a checkpoint under the clean and corrupted scenarios.
    Robustness {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Print only this scenario's row.
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Also write the full report as JSON to this file.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Compare against this checkpoint over the non-ideal scenarios.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FrontendArgs {
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    sample_rate: Option<u32>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long)]
    n_mels: Option<usize>,
}

impl FrontendArgs {
    fn resolve(&self) -> FrontendConfig {
        let mut c = FrontendConfig::default();
        c.frames = self.frames.unwrap_or(c.frames);
        c.image_size = self.image_size.unwrap_or(c.image_size);
        let m = &mut c.mfcc;
        m.sample_rate = self.sample_rate.unwrap_or(m.sample_rate);
        m.window = self.window.unwrap_or(m.window);
        m.hop = self.hop.unwrap_or(m.hop);
        m.n_fft = self.n_fft.unwrap_or(m.n_fft);
        m.n_mels = self.n_mels.unwrap_or(m.n_mels);
        c
    }
}

const SCORE_HEADER: &str = "split,E,N,A,C,O,average,mae";

fn split_counts(splits: impl Iterator<Item = Split>) -> String {
    let mut counts = [0usize; 3];
    let order = [Split::Train, Split::Val, Split::Test];
    for s in splits {
        counts[order.iter().position(|o| *o == s).unwrap()] += 1;
    }
    let mut out = String::from("split,count\n");
    for (split, c) in order.iter().zip(counts) {
        out += &format!("{split},{c}\n");
    }
    out
}

fn history_row(r: &EpochRecord) -> String {
    let val = r.val_accuracy.map_or_else(|| "-".to_string(), |v| format!("{v:.5}"));
    format!("{},{},{:.6},{val},{}", r.epoch, r.lr, r.train_loss, r.samples_seen)
}

fn load_split(ckpt: &Checkpoint, manifest: &Path, split: Split, cache: Option<&Path>) -> Result<Dataset> {
    let dataset = load_dataset(manifest, &ckpt.config.frontend(), cache)?;
    if dataset.samples(split).is_empty() {
        return Err(Error::Input(format!("{} has no {split} samples", manifest.display())));
    }
    Ok(dataset)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { n, seed, out } => {
            let manifest = synth_dataset(&out, n, seed)?;
            let entries = load_manifest(&manifest)?;
            println!("manifest,{}", manifest.display());
            print!("{}", split_counts(entries.iter().map(|e| e.split)));
        }
        Command::Prepare { manifest, out, frontend } => {
            let n = prepare(&manifest, &out, &frontend.resolve())?;
            println!("entries,{n}");
            println!("cache,{}", out.display());
        }
        Command::Train {
            manifest,
            config,
            no_msfem,
            no_mas,
            out,
            cache,
        } => {
            let mut cfg = TrainConfig::load(&config)?;
            cfg.use_msfem &= !no_msfem;
            cfg.use_mas &= !no_mas;
            cfg.validate()?;
            let dataset = load_dataset(&manifest, &cfg.frontend(), cache.as_deref())?;
            eprint!("{}", split_counts(dataset.items.iter().map(|i| i.split)));
            println!("epoch,lr,train_loss,val_accuracy,samples");
            let ckpt = train_on(
                &dataset.samples(Split::Train),
                &dataset.samples(Split::Val),
                &cfg,
                &mut |r| println!("{}", history_row(r)),
            )?;
            ckpt.save(&out)?;
            println!("retained_epoch,{}", ckpt.epoch);
            println!("checkpoint,{}", out.display());
        }
        Command::Eval {
            ckpt,
            manifest,
            split,
            cache,
        } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let dataset = load_split(&ckpt, &manifest, split, cache.as_deref())?;
            let traits = evaluate(&ckpt, &dataset.samples(split))?;
            let avg = average_of(&traits);
            let cols: Vec<String> = traits.iter().map(|v| format!("{v:.5}")).collect();
            println!("{SCORE_HEADER}");
            println!("{split},{},{avg:.5},{:.5}", cols.join(","), 1.0 - avg);
        }
        Command::Robustness {
            ckpt,
            manifest,
            seed,
            split,
            scenario,
            json,
            baseline,
            cache,
        } => {
            let model = Checkpoint::load(&ckpt)?;
            let dataset = load_split(&model, &manifest, split, cache.as_deref())?;
            let samples = dataset.samples(split);
            let name = ckpt.display().to_string();
            let report = robustness_report(&model, &name, &samples, seed)?;
            print!("{}", report.to_table(scenario));
            if let Some(path) = &json {
                write_atomic(path, format!("{}\n", report.to_json()).as_bytes())?;
            }
            if let Some(base_path) = baseline {
                let base = Checkpoint::load(&base_path)?;
                let base_data = load_split(&base, &manifest, split, cache.as_deref())?;
                let base_report =
                    robustness_report(&base, &base_path.display().to_string(), &base_data.samples(split), seed)?;
                let cmp = Comparison::new(&base_report, &report);
                println!();
                print!("{}", cmp.to_table());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msma: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use selfonn::config::PipelineConfig;
use selfonn::data::{stratified_split, write_dataset, Record, Segment, SynthCorpusPlan};
use selfonn::detect::{evaluate, train_detector};
use selfonn::gan::{select_checkpoint, synthesize_faults, train_opgan, write_metrics_csv};
use selfonn::nn::{load_model, save_model, Network};
use selfonn::pipeline::{param_digest, probe_checkpoints, run_pipeline, source_pairs, DataSource};
use selfonn::Error;

#[derive(Parser)]
#[command(name = "selfonn", version, about = "Zero-shot bearing fault detection with operational GANs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sequential, bitwise-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus directory.
    GenData {
        /// Synthetic machine: M1 or M2.
        #[arg(long)]
        machine: String,
        #[arg(long)]
        healthy_seconds: Option<u32>,
        #[arg(long)]
        faulty_seconds: Option<u32>,
    },
    /// Train the Op-GAN on a source corpus.
    TrainGan {
        #[arg(long)]
        source: String,
    },
    /// Translate a corpus's healthy segments into synthetic faulty ones.
    Synthesize {
        #[arg(long)]
        generator: PathBuf,
        #[arg(long)]
        data: String,
    },
    /// Train the detector on a target's healthy split and synthesized faults.
    TrainDetector {
        #[arg(long)]
        generator: PathBuf,
        #[arg(long)]
        target: String,
    },
    /// Evaluate a detector on a target's held-out healthy split and faults.
    Evaluate {
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        target: String,
    },
    /// Run all four stages.
    Pipeline {
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
    },
    /// Print a model file's spec and parameter count.
    Inspect { model: PathBuf },
}

fn config(g: &Global) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg = cfg.with_seed(seed);
    }
    if g.deterministic {
        cfg.deterministic = true;
    }
    Ok(cfg)
}

fn load(src: &str) -> anyhow::Result<Vec<Record>> {
    let source: DataSource = src.parse()?;
    source.load().with_context(|| format!("loading {source}"))
}

fn out_dir(g: &Global) -> anyhow::Result<&Path> {
    fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    Ok(&g.out)
}

fn segments(records: &[Record], faulty: bool) -> anyhow::Result<Vec<Segment>> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.condition.fault.is_faulty() == faulty) {
        out.extend(r.segments()?);
    }
    Ok(out)
}

fn healthy_split(records: &[Record], cfg: &PipelineConfig) -> anyhow::Result<(Vec<Segment>, Vec<Segment>)> {
    let healthy = segments(records, false)?;
    if healthy.is_empty() {
        bail!(Error::Dataset("no healthy records".into()));
    }
    Ok(stratified_split(healthy, cfg.split_fraction, cfg.split_seed)?)
}

fn write_segments_csv(path: &Path, segs: &[Segment]) -> anyhow::Result<()> {
    let mut s = String::from("source_record,index,sensor,speed,load,samples\n");
    for seg in segs {
        let c = &seg.condition;
        let samples: Vec<String> = seg.samples.iter().map(|v| v.to_string()).collect();
        s += &format!(
            "{},{},{},{},{},{}\n",
            seg.source_record,
            seg.index,
            c.sensor,
            c.speed_rpm,
            c.load_kn(),
            samples.join(" ")
        );
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::GenData {
            machine,
            healthy_seconds,
            faulty_seconds,
        } => {
            let mut plan = match format!("synth:{machine}").parse::<DataSource>()? {
                DataSource::Synthetic(p) => *p,
                DataSource::Directory(_) => unreachable!("synth: prefix"),
            };
            if let Some(s) = healthy_seconds {
                plan.machine.healthy_seconds = *s;
            }
            if let Some(s) = faulty_seconds {
                plan.machine.faulty_seconds = *s;
            }
            if let Some(seed) = g.seed {
                plan.machine.seed = seed;
            }
            let records = SynthCorpusPlan::generate(&plan)?;
            write_dataset(out_dir(g)?, &records)?;
            println!("wrote {} records to {}", records.len(), g.out.display());
        }
        Command::TrainGan { source } => {
            let cfg = config(g)?;
            let records = load(source)?;
            let (pool, val, val_speed) = source_pairs(&records, &cfg)?;
            let mut run = train_opgan(&pool, &val, &cfg.gan)?;
            if cfg.selection == selfonn::gan::SelectionMode::Detection {
                probe_checkpoints(&mut run, &val, &cfg)?;
            }
            let chosen = select_checkpoint(&run.checkpoints, cfg.selection)?;
            let mut gen = run.generator.clone();
            gen.set_params(chosen.gen_params.clone())?;
            let dir = out_dir(g)?;
            save_model(&gen, dir.join("generator.sonn"))?;
            save_model(&run.discriminator, dir.join("discriminator.sonn"))?;
            write_metrics_csv(dir.join("metrics.csv"), &run.metrics)?;
            println!(
                "validation speed {val_speed} rpm; checkpoint {} chosen, val loss {:.4} (initial {:.4})",
                chosen.step, chosen.val.total, run.initial.total
            );
        }
        Command::Synthesize { generator, data } => {
            let cfg = config(g)?;
            let gen: Network<f32> = load_model(generator)?;
            let healthy = segments(&load(data)?, false)?;
            let synth = synthesize_faults(&gen, &healthy, cfg.synth_seed)?;
            let path = out_dir(g)?.join("synthetic.csv");
            write_segments_csv(&path, &synth)?;
            println!("wrote {} synthetic segments to {}", synth.len(), path.display());
        }
        Command::TrainDetector { generator, target } => {
            let cfg = config(g)?;
            let gen: Network<f32> = load_model(generator)?;
            let (train, _) = healthy_split(&load(target)?, &cfg)?;
            let mut synth = synthesize_faults(&gen, &train, cfg.synth_seed)?;
            for s in &mut synth {
                let n = selfonn::signal::normalize_segment(&s.samples)?;
                if !n.degenerate {
                    s.samples = n.values;
                }
            }
            let run = train_detector(&train, &synth, &cfg.detector)?;
            let path = out_dir(g)?.join("detector.sonn");
            save_model(&run.network, &path)?;
            println!("detector {} saved to {}", param_digest(run.network.params()), path.display());
        }
        Command::Evaluate { detector, target } => {
            let cfg = config(g)?;
            let det: Network<f32> = load_model(detector)?;
            let records = load(target)?;
            let (_, test) = healthy_split(&records, &cfg)?;
            let report = evaluate(&det, &test, &segments(&records, true)?)?;
            report.write_csv(out_dir(g)?.join("report.csv"))?;
            println!("{report}");
        }
        Command::Pipeline { source, target } => {
            let cfg = config(g)?;
            let out = run_pipeline(&load(source)?, &load(target)?, &cfg)?;
            let dir = out_dir(g)?;
            let mut ledger = out.ledger.clone();
            ledger.entries.insert(0, ("target".into(), target.clone()));
            ledger.entries.insert(0, ("source".into(), source.clone()));
            out.report.write_csv(dir.join("report.csv"))?;
            fs::write(dir.join("ledger.txt"), ledger.to_text()).context("writing ledger")?;
            save_model(&out.generator, dir.join("generator.sonn"))?;
            save_model(&out.detector, dir.join("detector.sonn"))?;
            write_metrics_csv(dir.join("metrics.csv"), &out.gan.metrics)?;
            println!("{}", out.report);
        }
        Command::Inspect { model } => {
            let net: Network<f32> = load_model(model)?;
            print!("{}", net.spec());
            println!("params={}", net.num_params());
        }
    }
    Ok(())
}

fn error_line(e: &anyhow::Error) -> String {
    let (kind, stage) = match e.downcast_ref::<Error>() {
        Some(Error::Stage { stage, source }) => (source.kind(), *stage),
        Some(err) => (err.kind(), "-"),
        None => ("other", "-"),
    };
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg += ": ";
            }
            msg += &text;
        }
    }
    let msg = msg.replace('"', "'");
    format!("error kind={kind} stage={stage} message=\"{msg}\"")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

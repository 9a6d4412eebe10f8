use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vega::dispatch::evaluator::serve_worker;
use vega::netdesc::dnet::{enumerate_dnet_blocks, DEFAULT_MAX_STEM, DEFAULT_OPS, DEFAULT_RATIOS};
use vega::pipeline::{load_pipeline, rerender_report, run_pipeline, EvaluatorConfig, StepKind};
use vega::sampler;
use vega::search::mix_seed;
use vega::space::validate_space;

#[derive(Parser)]
#[command(
    name = "vega",
    version,
    about = "Configuration-driven AutoML pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every step of a pipeline.
    Run { config: PathBuf },
    /// Parse a pipeline and report diagnostics.
    Validate { config: PathBuf },
    /// Print decoded samples of a step's search space as JSON lines.
    Sample {
        config: PathBuf,
        #[arg(long)]
        step: String,
        #[arg(short = 'n', default_value_t = 5)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Count DNet block codes and optionally list the first few.
    EnumerateDnet {
        #[arg(long, default_value_t = DEFAULT_OPS.len())]
        vocab: usize,
        #[arg(long, default_value_t = DEFAULT_RATIOS.len())]
        ratios: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_STEM)]
        max_stem: usize,
        /// Number of codes to list.
        #[arg(long, default_value_t = 0)]
        list: usize,
    },
    /// Re-render the report of an output directory.
    Report { output_dir: PathBuf },
    /// Serve evaluation tasks over stdin/stdout.
    #[command(hide = true)]
    Worker {
        /// Evaluator block as JSON.
        #[arg(long)]
        evaluator: String,
        #[arg(long, default_value = "worker")]
        id: String,
    },
}

fn validate(path: &Path) -> Result<(), String> {
    let cfg = load_pipeline(path).map_err(|e| e.to_string())?;
    for name in &cfg.pipeline {
        let step = &cfg.steps[name];
        let diags = validate_space(&step.space);
        if !diags.is_empty() {
            let msgs: Vec<String> = diags.iter().map(|d| format!("{name}: {d}")).collect();
            return Err(msgs.join("\n"));
        }
        let kind = match step.kind {
            StepKind::Search => format!("{:?}", step.search_algorithm.kind),
            StepKind::FullyTrain => "fully train".into(),
        };
        println!(
            "{name}: {} ({kind}, {} parameters)",
            step.pipe_step.type_name,
            step.space.params.len()
        );
    }
    println!("ok: {} step(s)", cfg.pipeline.len());
    Ok(())
}

fn sample(path: &Path, step: &str, n: u64, seed: u64) -> Result<(), String> {
    let cfg = load_pipeline(path).map_err(|e| e.to_string())?;
    let space = &cfg.step(step).map_err(|e| e.to_string())?.space;
    let mut out = io::stdout().lock();
    for i in 0..n {
        let (_, s) = sampler::sample(space, mix_seed(seed, i)).map_err(|e| e.to_string())?;
        writeln!(
            out,
            "{}",
            serde_json::to_string(&s).expect("samples serialize")
        )
        .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn enumerate(vocab: usize, ratios: usize, max_stem: usize, list: usize) -> Result<(), String> {
    if vocab == 0 || vocab > DEFAULT_OPS.len() || ratios == 0 || ratios > DEFAULT_RATIOS.len() {
        return Err(format!(
            "vocab must be in 1..={} and ratios in 1..={}",
            DEFAULT_OPS.len(),
            DEFAULT_RATIOS.len()
        ));
    }
    let (iter, count) = enumerate_dnet_blocks(vocab, ratios, max_stem);
    println!("count: {count}");
    for spec in iter.take(list) {
        println!("{}", spec.code());
    }
    Ok(())
}

fn worker(evaluator: &str, id: &str) -> Result<(), String> {
    let cfg: EvaluatorConfig = serde_json::from_str(evaluator).map_err(|e| e.to_string())?;
    let ev = cfg.build(Path::new("."))?;
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = io::stdout().lock();
    serve_worker(&ev, id, &mut input, &mut output).map_err(|e| e.to_string())?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => load_pipeline(&config)
            .and_then(|cfg| run_pipeline(&cfg))
            .map(|run| print!("{}", run.report.to_text()))
            .map_err(|e| e.to_string()),
        Command::Validate { config } => validate(&config),
        Command::Sample {
            config,
            step,
            n,
            seed,
        } => sample(&config, &step, n, seed),
        Command::EnumerateDnet {
            vocab,
            ratios,
            max_stem,
            list,
        } => enumerate(vocab, ratios, max_stem, list),
        Command::Report { output_dir } => rerender_report(&output_dir)
            .map(|r| print!("{}", r.to_text()))
            .map_err(|e| e.to_string()),
        Command::Worker { evaluator, id } => worker(&evaluator, &id),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sumboost_core::cost::{estimate_cost, estimate_passes, CostInputs, PassMode};
use sumboost_core::dataset::{load_rows, ColumnMeta, DatasetMeta};
use sumboost_core::discretize::ColumnEncoders;
use sumboost_core::mock_oracle::{synthetic_task, SYNTHETIC_TEMPLATE};
use sumboost_core::pipeline::{evaluate, prepare, train_model, Method};
use sumboost_core::sampling::ClusterModel;
use sumboost_core::textualize::{describe_rows, save_descriptions, PromptTemplate};
use sumboost_core::{
    boosting, load_dataset, split, DescriptionMethod, EnsembleModel, Encoding, Error, ErrorClass, PromptConfig, Result,
};

use crate::config::{build_client, BackendChoice, FileConfig};

#[derive(Parser)]
#[command(name = "sumboost", version, about = "Boosted language-model summaries for tabular classification")]
struct Cli {
    /// Seed for splits, sampling and prompt ordering.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// `http` or `mock:<oracle.json>`.
    #[arg(long, global = true, default_value = "http")]
    backend: String,
    /// JSONL response cache; replayed before any backend call.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// TOML config with `[run]`, `[http]` and `[client]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Serve only from the cache; a miss is an error.
    #[arg(long, global = true)]
    offline: bool,
    /// Overrides `http.base_url`.
    #[arg(long, global = true)]
    base_url: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON metadata: target, classes, description, column notes.
    #[arg(long)]
    meta: PathBuf,
    /// Encoding of continuous columns, e.g. `bins5`, `plain10`, `percentile`, `std-dev`, `quartiles`.
    #[arg(long)]
    encoding: Option<String>,
    /// Describe rows with this template instead of the language model.
    #[arg(long, conflicts_with = "template_file")]
    template: Option<String>,
    #[arg(long)]
    template_file: Option<PathBuf>,
    /// JSON prompt parameters (metadata, directive, inference prefix, order).
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum PassKind {
    Finetune,
    Boost,
}

#[derive(Subcommand)]
enum Command {
    /// Write natural-language descriptions of every row as JSONL.
    Convert {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a boosted ensemble and save it as JSON.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model_out: PathBuf,
        /// Per-round trace as CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Classify rows with a saved ensemble.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        /// CSV of predictions; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare every method over several seeds.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Number of seeds, counting up from `--seed`.
        #[arg(long)]
        seeds: Option<u64>,
        /// Comma-separated subset of zero-shot, few-shot, knn, summary, summary-boosting.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        rounds: Option<usize>,
        /// Report CSV; the table always goes to stdout.
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Boosting round traces as CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Dataset name in the report; defaults to the CSV file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Token and dollar estimate for a boosting run.
    EstimateCost {
        /// Number of examples.
        #[arg(long)]
        n: u64,
        /// Boosting rounds.
        #[arg(long)]
        t: u64,
        /// Resamples per round.
        #[arg(long)]
        r: u64,
        #[arg(long, default_value_t = 2048)]
        summary_tokens: u64,
        #[arg(long, default_value_t = 210)]
        prediction_tokens: u64,
        #[arg(long, default_value_t = 0.002)]
        price_per_1k: f64,
    },
    /// Model passes needed by fine-tuning or by boosting.
    EstimatePasses {
        #[arg(long, value_enum)]
        mode: PassKind,
        /// Epochs (finetune) or rounds (boost).
        #[arg(long)]
        count: u64,
        /// Examples (finetune) or resamples per round (boost).
        #[arg(long)]
        per: u64,
    },
    /// Cluster the training descriptions of one split and write them as JSON.
    DumpClusters {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset, its metadata, a matching noisy oracle and a template.
    Synth {
        #[arg(long, default_value_t = 100)]
        rows: usize,
        /// Probability that the oracle answers wrongly.
        #[arg(long, default_value_t = 0.3)]
        flip: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Provider => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Applies the data-related flags on top of the file config.
fn apply_data_args(cfg: &mut FileConfig, args: &DataArgs) -> Result<()> {
    if let Some(name) = &args.encoding {
        cfg.run.encoding = Encoding::from_name(name)?;
    }
    let template = match (&args.template, &args.template_file) {
        (Some(t), _) => Some(t.clone()),
        (None, Some(p)) => Some(std::fs::read_to_string(p)?.trim().to_string()),
        (None, None) => None,
    };
    if let Some(text) = template {
        cfg.run.describer = DescriptionMethod::Template { template: PromptTemplate::new(text) };
    }
    if let Some(p) = &args.prompts {
        cfg.run.prompts = PromptConfig::load(p)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = FileConfig::load(cli.config.as_deref())?;
    let choice = BackendChoice {
        spec: &cli.backend,
        cache: cli.cache.as_deref(),
        offline: cli.offline,
        base_url: cli.base_url.as_deref(),
    };
    match cli.command {
        Command::Convert { data, out } => {
            apply_data_args(&mut cfg, &data)?;
            let ds = load_dataset(&data.data, &data.meta)?;
            let client = build_client(&choice, &cfg)?;
            let parts = split(&ds, cli.seed)?;
            let encoders = ColumnEncoders::fit(&ds, &parts.train_idx, &cfg.run.encoding)?;
            let rows: Vec<usize> = (0..ds.len()).collect();
            let descriptions = describe_rows(&ds, &encoders, &rows, &cfg.run.describer, &client)?;
            save_descriptions(&out, &descriptions)?;
            eprintln!("wrote {} descriptions to {}", descriptions.len(), out.display());
        }
        Command::Train { data, model_out, trace_out, rounds, mu } => {
            apply_data_args(&mut cfg, &data)?;
            if let Some(r) = rounds {
                cfg.run.boost.rounds = r;
            }
            if mu.is_some() {
                cfg.run.boost.mu = mu;
            }
            cfg.run.validate()?;
            let ds = load_dataset(&data.data, &data.meta)?;
            let client = build_client(&choice, &cfg)?;
            let prepared = prepare(&ds, &cfg.run, &client, cli.seed)?;
            let (model, trace) = train_model(&ds, &prepared, &cfg.run, &client, cli.seed)?;
            model.save(&model_out)?;
            if let Some(p) = trace_out {
                std::fs::write(p, boosting::trace_csv(&trace))?;
            }
            eprintln!(
                "trained {} rounds, using {}; model written to {}",
                model.rounds.len(),
                model.chosen_t,
                model_out.display()
            );
        }
        Command::Predict { model, data, meta, out } => {
            let model = EnsembleModel::load(&model)?;
            let (ds, labeled) = load_rows(&data, &meta)?;
            model.check_schema(&ds)?;
            let client = build_client(&choice, &cfg)?;
            let rows: Vec<usize> = (0..ds.len()).collect();
            let queries = describe_rows(&ds, &model.encodings, &rows, &model.describer, &client)?;
            let preds = model.predict_many(&queries, &client)?;
            let mut text = String::from(if labeled { "row,prediction,label\n" } else { "row,prediction\n" });
            for (i, p) in preds.iter().enumerate() {
                let name = p.map_or("", |k| model.classes[k].as_str());
                if labeled {
                    writeln!(text, "{i},{name},{}", ds.classes[ds.labels[i]]).unwrap();
                } else {
                    writeln!(text, "{i},{name}").unwrap();
                }
            }
            write_or_print(out.as_deref(), &text)?;
        }
        Command::Evaluate { data, seeds, methods, rounds, report_out, trace_out, name } => {
            apply_data_args(&mut cfg, &data)?;
            if let Some(n) = seeds {
                cfg.run.seeds = (cli.seed..cli.seed + n).collect();
            }
            if let Some(list) = methods {
                cfg.run.methods = list.iter().map(|m| Method::from_name(m.trim())).collect::<Result<_>>()?;
            }
            if let Some(r) = rounds {
                cfg.run.boost.rounds = r;
            }
            let ds = load_dataset(&data.data, &data.meta)?;
            let client = build_client(&choice, &cfg)?;
            let name = name.unwrap_or_else(|| {
                data.data.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
            });
            let report = evaluate(&ds, &name, &cfg.run, &client)?;
            print!("{}", report.to_table());
            if let Some(p) = report_out {
                std::fs::write(p, report.to_csv())?;
            }
            if let Some(p) = trace_out {
                std::fs::write(p, report.trace_csv())?;
            }
        }
        Command::EstimateCost { n, t, r, summary_tokens, prediction_tokens, price_per_1k } => {
            let e = estimate_cost(CostInputs {
                examples: n,
                rounds: t,
                resamples: r,
                summary_tokens,
                prediction_tokens,
                price_per_1k,
            })?;
            println!("total_tokens,dollar_cost");
            println!("{},{:.4}", e.total_tokens, e.dollar_cost);
        }
        Command::EstimatePasses { mode, count, per } => {
            let mode = match mode {
                PassKind::Finetune => PassMode::Finetune { epochs: count, examples: per },
                PassKind::Boost => PassMode::Boost { rounds: count, resamples: per },
            };
            println!("{}", estimate_passes(mode)?);
        }
        Command::DumpClusters { data, out } => {
            apply_data_args(&mut cfg, &data)?;
            let ds = load_dataset(&data.data, &data.meta)?;
            let client = build_client(&choice, &cfg)?;
            let prepared = prepare(&ds, &cfg.run, &client, cli.seed)?;
            let clusters = ClusterModel::from_descriptions(
                &prepared.train,
                &prepared.train_labels,
                ds.num_classes(),
                &client,
                cfg.run.cluster_threshold,
            )?;
            let rows: Vec<Vec<Vec<usize>>> = clusters
                .classes
                .iter()
                .map(|cl| cl.iter().map(|c| c.iter().map(|&i| prepared.train[i].row_index).collect()).collect())
                .collect();
            let doc = serde_json::json!({
                "classes": ds.classes,
                "threshold": clusters.threshold,
                "clusters": rows,
            });
            std::fs::write(&out, serde_json::to_string_pretty(&doc)? + "\n")?;
        }
        Command::Synth { rows, flip, out_dir } => {
            let (ds, spec) = synthetic_task(rows, flip, cli.seed)?;
            std::fs::create_dir_all(&out_dir)?;
            let mut csv = ds.schema.iter().map(|c| c.name.clone()).collect::<Vec<_>>().join(",");
            csv.push_str(&format!(",{}\n", ds.target));
            for (cells, &label) in ds.rows.iter().zip(&ds.labels) {
                writeln!(csv, "{},{}", cells.join(","), ds.classes[label]).unwrap();
            }
            std::fs::write(out_dir.join("data.csv"), csv)?;
            let meta = DatasetMeta {
                target: ds.target.clone(),
                classes: ds.classes.clone(),
                metadata_text: ds.metadata.clone(),
                columns: ds
                    .schema
                    .iter()
                    .map(|c| ColumnMeta { name: c.name.clone(), kind: Some(c.kind), description: c.description.clone() })
                    .collect(),
            };
            std::fs::write(out_dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
            std::fs::write(out_dir.join("oracle.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
            std::fs::write(out_dir.join("template.txt"), format!("{SYNTHETIC_TEMPLATE}\n"))?;
            eprintln!("wrote data.csv, meta.json, oracle.json and template.txt to {}", out_dir.display());
        }
    }
    Ok(())
}

use std::fs::File;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use riskscope_core::data::load_dataset;
use riskscope_core::evidence::{refresh_checksum, KnowledgeBase};
use riskscope_core::explain::{Explainer, PerturbationConfig, SelectionConfig};
use riskscope_core::model::{train, SplitConfig, TrainConfig};
use riskscope_core::ranges::build_range_report;
use riskscope_core::recommend::{recommend, SearchSpace, StepRules};
use riskscope_core::router::{
    calibrate_threshold, routing_accuracy, LabeledItem, MatcherConfig, PromptCorpus, Router, TfidfMatcher,
};
use riskscope_core::{synthetic, Dataset, FeatureSchema, ProbabilityModel, RiskModel};
use riskscope_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "riskscope", version, about = "Explainable diabetes risk engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the gradient-boosted model on a labeled CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        holdout: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
    },
    /// Select the most faithful explainer for one patient.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        patient: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare model-observed ranges with the knowledge base, either for the
    /// top features of one patient or for every feature of a class.
    #[command(group(clap::ArgGroup::new("target").required(true).args(["patient", "class"])))]
    Ranges {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = DEFAULT_DATA)]
        data: PathBuf,
        #[arg(long, default_value = DEFAULT_KB)]
        kb: PathBuf,
        #[arg(long)]
        patient: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        class: Option<u8>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build a step-by-step recommendation plan.
    Recommend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = DEFAULT_DATA)]
        data: PathBuf,
        /// Step limits and badge thresholds; built-in defaults when omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        patient: u64,
    },
    /// Validate the evidence knowledge base.
    KbLint {
        kb: PathBuf,
        /// Rewrite the stored checksum after validation.
        #[arg(long)]
        write_checksum: bool,
    },
    /// Calibrate the routing threshold on a labeled query set.
    Calibrate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labeled: PathBuf,
        /// Where to write the matcher config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Session patient used when checking full routing accuracy.
        #[arg(long, default_value_t = 39)]
        session_patient: u64,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write a synthetic cohort with the diabetes-screening schema.
    Synth {
        #[arg(long, default_value_t = 768)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

const DEFAULT_DATA: &str = "data/cohort_synthetic.csv";
const DEFAULT_KB: &str = "data/evidence_kb.json";

fn load(model: &PathBuf, data: &PathBuf) -> Result<(RiskModel, Dataset)> {
    let dataset = load_dataset(data, FeatureSchema::pima()).with_context(|| format!("loading {}", data.display()))?;
    let model = RiskModel::load(model).with_context(|| format!("loading {}", model.display()))?;
    if !model.matches_schema(dataset.schema()) {
        bail!("model features do not match the dataset columns");
    }
    Ok((model, dataset))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Train {
            data,
            out,
            holdout,
            seed,
            trees,
            depth,
            learning_rate,
        } => {
            let dataset = load_dataset(&data, FeatureSchema::pima())?;
            let config = TrainConfig {
                n_trees: trees,
                max_depth: depth,
                learning_rate,
                seed,
                ..TrainConfig::default()
            };
            let start = Instant::now();
            let model = train(&dataset, &config, SplitConfig { holdout, seed })?;
            model.save(&out)?;
            let acc = model.metadata.test_accuracy.unwrap_or(f64::NAN);
            eprintln!(
                "trained {} trees on {} records in {:.2}s; held-out accuracy {:.4} on {} records",
                model.trees.len(),
                model.metadata.n_train,
                start.elapsed().as_secs_f64(),
                acc,
                model.metadata.n_test
            );
        }
        Command::Explain {
            model,
            data,
            patient,
            seed,
        } => {
            let (model, dataset) = load(&model, &data)?;
            let record = dataset.record(patient).with_context(|| format!("patient {patient} not found"))?;
            let sel = SelectionConfig::for_features(dataset.schema().d());
            let cfg = PerturbationConfig {
                seed,
                ..PerturbationConfig::default()
            };
            let report = Explainer::from_dataset(&dataset).select(&model, &record.values, patient, &sel, &cfg)?;
            print_json(&report)?;
        }
        Command::Ranges {
            model,
            data,
            kb,
            patient,
            class,
            seed,
        } => {
            let (model, dataset) = load(&model, &data)?;
            let kb = KnowledgeBase::load(&kb)?;
            let Some(patient) = patient else {
                let all: Vec<usize> = (0..dataset.schema().d()).collect();
                let class = class.expect("clap enforces one target");
                print_json(&build_range_report(&model, &dataset, class, &all, &kb)?)?;
                return Ok(());
            };
            let record = dataset.record(patient).with_context(|| format!("patient {patient} not found"))?;
            let sel = SelectionConfig::for_features(dataset.schema().d());
            let cfg = PerturbationConfig {
                seed,
                ..PerturbationConfig::default()
            };
            let report = Explainer::from_dataset(&dataset).select(&model, &record.values, patient, &sel, &cfg)?;
            let top: Vec<usize> = riskscope_core::explain::magnitude_order(&report.selected_attribution().phi)
                .into_iter()
                .take(sel.k)
                .collect();
            let class = model.predict_class(&record.values);
            print_json(&build_range_report(&model, &dataset, class, &top, &kb)?)?;
        }
        Command::Recommend {
            model,
            data,
            rules,
            patient,
        } => {
            let (model, dataset) = load(&model, &data)?;
            let rules = match rules {
                Some(path) => StepRules::load(&path, dataset.schema())?,
                None => StepRules::pima_defaults(),
            };
            let record = dataset.record(patient).with_context(|| format!("patient {patient} not found"))?;
            let space = SearchSpace::from_dataset(&dataset);
            print_json(&recommend(&model, patient, &record.values, dataset.schema(), &space, &rules)?)?;
        }
        Command::KbLint { kb, write_checksum } => {
            if write_checksum {
                let sum = refresh_checksum(&kb)?;
                eprintln!("checksum written: {sum}");
            }
            let loaded = KnowledgeBase::load(&kb)?;
            eprintln!(
                "{}: {} entries, version {}, checksum {} verified",
                kb.display(),
                loaded.len(),
                loaded.version(),
                loaded.checksum()
            );
        }
        Command::Calibrate {
            corpus,
            labeled,
            out,
            session_patient,
        } => {
            let corpus = PromptCorpus::load(&corpus)?;
            let items: Vec<LabeledItem> = serde_json::from_reader(File::open(&labeled)?)?;
            let calibration = calibrate_threshold(&TfidfMatcher::fit(&corpus), &items)?;
            let mut cfg = MatcherConfig::new(calibration.threshold)?;
            cfg.calibration = Some(calibration.clone());
            let router = Router::tfidf(&corpus, FeatureSchema::pima(), cfg.clone())?;
            let routed = routing_accuracy(&router, &items, Some(session_patient));
            eprintln!(
                "threshold {:.2}: matcher accuracy {:.4}, full routing accuracy {:.4} on {} items",
                calibration.threshold, calibration.accuracy, routed, calibration.n_items
            );
            match out {
                Some(path) => cfg.save(&path)?,
                None => print_json(&cfg)?,
            }
        }
        Command::Serve { config, port, host } => {
            let cfg = ServiceConfig::load(&config)?;
            let state = riskscope_service::load_state(&cfg)?;
            let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid host")?;
            tokio::runtime::Runtime::new()?.block_on(riskscope_service::serve(state, addr))?;
        }
        Command::Synth { n, seed, out } => {
            let dataset = synthetic::pima_like(n, seed);
            dataset.write_csv(File::create(&out)?)?;
            eprintln!("wrote {} records to {}", dataset.len(), out.display());
        }
    }
    Ok(())
}

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use dbtag_core::aligner::DEFAULT_MAX_SPAN_TOKENS;
use dbtag_core::calibrate::{augment, calibrate, SkipEntry};
use dbtag_core::metrics::{score_corpus, ClassGrouping};
use dbtag_core::pipeline::{
    label_stats, load, load_gold, read_annotations, write_records, AnnotatedRecord, DatasetFormat, PipelineError,
};
use dbtag_core::{entities_from_sql, tokenize, SimilarityConfig, SimilarityMeasure};

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "dbtag", version, about = "Annotate questions with the database entities of their SQL queries")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize the questions of a dataset.
    Tokenize {
        file: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DatasetFormat,
    },
    /// List the entities of each query.
    Extract {
        file: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DatasetFormat,
    },
    /// Annotate a dataset with a fixed measure and threshold.
    Annotate {
        file: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DatasetFormat,
        #[arg(long)]
        measure: SimilarityMeasure,
        #[arg(long)]
        threshold: f64,
        #[arg(long = "max-span", default_value_t = DEFAULT_MAX_SPAN_TOKENS)]
        max_span: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-search measure and threshold against gold labels.
    Calibrate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long = "max-span", default_value_t = DEFAULT_MAX_SPAN_TOKENS)]
        max_span: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotate a dataset with the setting chosen by `calibrate`.
    Augment {
        file: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: DatasetFormat,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long = "max-span", default_value_t = DEFAULT_MAX_SPAN_TOKENS)]
        max_span: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted labels against gold labels.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "4")]
        grouping: ClassGrouping,
    },
    /// Per-label token counts of an annotated file.
    Stats {
        file: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Failure { code: EXIT_INPUT, message: message.to_string() }
    }

    fn usage(message: impl ToString) -> Self {
        Failure { code: EXIT_USAGE, message: message.to_string() }
    }

    fn internal(message: impl ToString) -> Self {
        Failure { code: EXIT_INTERNAL, message: message.to_string() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::input(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DBTAG_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(p) => File::create(p)
            .map(|f| Box::new(f) as Box<dyn Write>)
            .map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_jsonl<T: Serialize>(items: &[T], out: &mut dyn Write) -> Result<(), Failure> {
    let mut w = io::BufWriter::new(out);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(Failure::internal)?;
        w.write_all(b"\n").map_err(Failure::input)?;
    }
    w.flush().map_err(Failure::input)
}

fn config(measure: SimilarityMeasure, threshold: f64) -> Result<SimilarityConfig, Failure> {
    SimilarityConfig::new(measure, threshold).map_err(Failure::usage)
}

fn check_max_span(max_span: usize) -> Result<(), Failure> {
    if max_span == 0 {
        return Err(Failure::usage("--max-span must be at least 1"));
    }
    Ok(())
}

fn emit_annotations(records: Vec<AnnotatedRecord>, out: Option<&Path>) -> Result<(), Failure> {
    for r in &records {
        r.validate().map_err(|e| Failure::internal(format!("record {}: {e}", r.id)))?;
    }
    let w = output(out)?;
    write_records(&records, w).map_err(Failure::input)
}

fn report_skips(skipped: &[SkipEntry]) {
    let stderr = io::stderr();
    let mut err = stderr.lock();
    for s in skipped {
        let _ = writeln!(err, "{}", serde_json::json!({ "skipped": s.id, "reason": s.reason }));
    }
}

/// Reads `best` from a calibration report.
fn read_calibration(path: &Path) -> Result<SimilarityConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let best = &v["best"];
    let measure = best["measure"]
        .as_str()
        .ok_or_else(|| Failure::input(format!("{}: missing best.measure", path.display())))?
        .parse::<SimilarityMeasure>()
        .map_err(Failure::input)?;
    let threshold = best["threshold"]
        .as_f64()
        .ok_or_else(|| Failure::input(format!("{}: missing best.threshold", path.display())))?;
    SimilarityConfig::new(measure, threshold).map_err(Failure::input)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Tokenize { file, format } => {
            #[derive(Serialize)]
            struct Row {
                id: String,
                tokens: Vec<String>,
            }
            let pairs = load(&file, format)?;
            let rows: Vec<Row> = pairs
                .par_iter()
                .map(|p| Row { id: p.id.clone(), tokens: tokenize(&p.question).token_texts() })
                .collect();
            write_jsonl(&rows, &mut *output(None)?)
        }
        Command::Extract { file, format } => {
            #[derive(Serialize)]
            struct Ent {
                text: String,
                #[serde(rename = "type")]
                entity_type: &'static str,
            }
            #[derive(Serialize)]
            struct Row {
                id: String,
                entities: Vec<Ent>,
            }
            let pairs = load(&file, format)?;
            let rows: Vec<Option<Row>> = pairs
                .par_iter()
                .map(|p| match entities_from_sql(&p.sql) {
                    Ok(set) => Some(Row {
                        id: p.id.clone(),
                        entities: set
                            .iter()
                            .map(|e| Ent { text: e.text().to_string(), entity_type: e.entity_type().as_str() })
                            .collect(),
                    }),
                    Err(e) => {
                        log::warn!("extract: skipping {}: {e}", p.id);
                        None
                    }
                })
                .collect();
            let rows: Vec<Row> = rows.into_iter().flatten().collect();
            write_jsonl(&rows, &mut *output(None)?)
        }
        Command::Annotate { file, format, measure, threshold, max_span, out } => {
            let cfg = config(measure, threshold)?;
            check_max_span(max_span)?;
            let pairs = load(&file, format)?;
            let (anns, skipped) = augment(&pairs, cfg, max_span);
            for s in &skipped {
                log::warn!("annotate: skipping {}: {}", s.id, s.reason);
            }
            let records: Vec<AnnotatedRecord> = anns.iter().map(AnnotatedRecord::from).collect();
            emit_annotations(records, out.as_deref())
        }
        Command::Calibrate { gold, max_span, out } => {
            check_max_span(max_span)?;
            let records = load_gold(&gold)?;
            let examples: Vec<_> = records.into_iter().map(|r| r.example).collect();
            let report = calibrate(&examples, max_span).map_err(Failure::input)?;
            log::info!(
                "calibrate: best {} at {:.1} (f1 {:.4})",
                report.best.measure,
                report.best.threshold,
                report.best_f1
            );
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report).map_err(Failure::internal)?;
            w.write_all(b"\n").map_err(Failure::input)
        }
        Command::Augment { file, format, calibration, max_span, out } => {
            check_max_span(max_span)?;
            let cfg = read_calibration(&calibration)?;
            let pairs = load(&file, format)?;
            let (anns, skipped) = augment(&pairs, cfg, max_span);
            report_skips(&skipped);
            log::info!("augment: {} annotated, {} skipped", anns.len(), skipped.len());
            let records: Vec<AnnotatedRecord> = anns.iter().map(AnnotatedRecord::from).collect();
            emit_annotations(records, out.as_deref())
        }
        Command::Eval { gold, pred, grouping } => {
            let gold = load_gold(&gold)?;
            let pred = load_gold(&pred)?;
            let by_id: std::collections::HashMap<&str, &[dbtag_core::Label]> =
                pred.iter().map(|r| (r.example.id.as_str(), r.example.labels.as_slice())).collect();
            let mut triples = Vec::with_capacity(gold.len());
            for g in &gold {
                let p = by_id
                    .get(g.example.id.as_str())
                    .ok_or_else(|| Failure::input(format!("no prediction for gold record {}", g.example.id)))?;
                triples.push((g.example.id.as_str(), g.example.labels.as_slice(), *p));
            }
            let report = score_corpus(triples, grouping).map_err(Failure::input)?;
            let mut w = output(None)?;
            serde_json::to_writer_pretty(&mut w, &report).map_err(Failure::internal)?;
            w.write_all(b"\n").map_err(Failure::input)
        }
        Command::Stats { file, json } => {
            let records = read_annotations(&file)?;
            let stats = label_stats(records.iter().map(|r| r.labels.as_slice()));
            let mut w = output(None)?;
            if json {
                let rows: Vec<Value> = stats
                    .rows()
                    .iter()
                    .map(|(name, n, p)| serde_json::json!({ "entity": name, "tokens": n, "percent": (p * 10.0).round() / 10.0 }))
                    .collect();
                let v = serde_json::json!({ "rows": rows, "total": stats.total() });
                writeln!(w, "{v}").map_err(Failure::input)
            } else {
                write!(w, "{stats}").map_err(Failure::input)
            }
        }
    }
}

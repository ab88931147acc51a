//! Command-line front end.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use abscreen_core::eval::{
    compare_rankings, project_metrics, read_dataset_csv, read_ranking_csv, read_truth_csv, run_fold_experiment,
    NbRanker, DEFAULT_FOLDS, DEFAULT_SEED, OVERLAP_K,
};
use abscreen_core::ingest::{export_records, import_batch, parse_records, ExportFormat, ExportScope, InputFormat};
use abscreen_core::llm::{
    confirm_threshold, execute_batch, execution_cost, threshold_preview, BatchOptions, Keystore, Pricing, SystemClock,
};
use abscreen_core::ranker::{corpus_text, import_order, rank_unlabeled, RankerConfig};
use abscreen_core::stopping::{project_signal, simulate_until_stop, ActiveLearningPolicy, StopRule, StoppingConfig};
use abscreen_core::store::{ExecutionId, Project, ProjectData};
use abscreen_core::{Error, RefId};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{read_file, read_text, CliError, CliResult};
use crate::server::{self, AppState, ServiceConfig};
use crate::shared::{begin_batch, default_reviewer, human_decision, open_provider, BatchRequest, BatchScope};

#[derive(Debug, Parser)]
#[command(
    name = "abscreen",
    version,
    about = "Title/abstract screening for systematic reviews"
)]
pub struct Cli {
    /// Project directory.
    #[arg(long, global = true, env = "ABSCREEN_PROJECT")]
    pub project: Option<PathBuf>,

    /// Reviewer identity written on imports and decisions.
    #[arg(long, global = true, env = "ABSCREEN_REVIEWER")]
    pub reviewer: Option<String>,

    /// Print results as JSON.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty project.
    Init {
        /// Project directory (alternative to --project).
        dir: Option<PathBuf>,
    },
    /// Import RIS, MEDLINE/nbib, PubMed XML or CSV files.
    ///
    /// Without --project the first argument names the project directory.
    Import {
        #[arg(required = true, value_name = "[PROJECT] FILE")]
        paths: Vec<PathBuf>,
        /// Input format; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
    },
    /// Export records with their final decision.
    Export {
        #[arg(long, default_value = "csv")]
        format: String,
        /// `all` or one status (include, exclude, maybe, pending, conflict).
        #[arg(long, default_value = "all")]
        scope: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Rank unlabeled records with the active-learning model.
    Rank {
        /// Train on this reviewer's decisions only.
        #[arg(long)]
        only: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Record a screening decision.
    Decide {
        ref_id: String,
        /// include, exclude, maybe or pending.
        decision: String,
        #[arg(long, default_value = "")]
        reason: String,
    },
    /// Read or change project configuration.
    #[command(subcommand)]
    Config(ConfigCommand),
    /// Screen records with an LLM.
    ScreenLlm(ScreenArgs),
    /// Preview or confirm the inclusion threshold of an execution.
    Threshold {
        #[arg(long)]
        execution: String,
        #[arg(long = "t")]
        t: f64,
        /// Only print the counts; write nothing.
        #[arg(long)]
        preview: bool,
    },
    /// Evaluate the configured stopping rule.
    Stopping {
        /// Use one reviewer's screening order.
        #[arg(long)]
        only: Option<String>,
    },
    /// Metrics and ranking experiments.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Assign records to calibration and reviewer groups.
    Assign {
        #[arg(long)]
        calibration_size: Option<u64>,
        #[arg(long)]
        groups: Option<u64>,
    },
    /// Run the local HTTP service.
    Serve(ServeArgs),
    /// Manage API keys in the local keystore.
    #[command(subcommand)]
    Key(KeyCommand),
}

#[derive(Debug, Subcommand)]
pub enum ConfigCommand {
    Get { key: String },
    Set { key: String, value: String },
    List,
}

#[derive(Debug, Subcommand)]
pub enum KeyCommand {
    /// Store a key read from standard input.
    Set {
        name: String,
    },
    Remove {
        name: String,
    },
    List,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// Eligibility criteria; defaults to the llm.prompt config value.
    #[arg(long)]
    pub prompt_file: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// mock:FIXTURE.json, gemini[:URL] or openai:URL.
    #[arg(long)]
    pub provider: String,
    #[arg(long, default_value_t = 10)]
    pub rpm: u32,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    /// all, pending, or a comma-separated ref_id list.
    #[arg(long, default_value = "all")]
    pub scope: String,
    /// Continue an interrupted execution.
    #[arg(long)]
    pub resume: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// Listen on all interfaces instead of loopback.
    #[arg(long)]
    pub lan: bool,
    /// Hide other reviewers' decisions from queue and record responses.
    #[arg(long)]
    pub blind: bool,
    #[arg(long, default_value_t = 10)]
    pub rpm: u32,
    #[arg(long)]
    pub provider: Option<String>,
    /// Directory with the web UI's built assets.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Stratified folds and per-fold rankings for a labeled dataset.
    Folds {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = abscreen_core::ranker::DEFAULT_ALPHA)]
        alpha: f64,
        /// Output directory for folds.csv and fold_NN.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Confusion metrics of the project's decisions against a truth file.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 7.0)]
        beta: f64,
        /// Print CSV instead of text.
        #[arg(long)]
        csv: bool,
    },
    /// Top-k overlap between two directories of fold rankings.
    Overlap {
        #[arg(long)]
        ours: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = OVERLAP_K)]
        k: usize,
    },
    /// Simulated screening with hidden labels until the stopping rule fires.
    Simulate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "statistical")]
        rule: String,
        #[arg(long, default_value_t = 50)]
        n_consecutive: usize,
        #[arg(long, default_value_t = 0.95)]
        target_recall: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = abscreen_core::ranker::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        retrain_every: usize,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

struct Context {
    project: Option<PathBuf>,
    reviewer: String,
    json: bool,
}

impl Context {
    fn project_dir(&self) -> CliResult<&Path> {
        self.project
            .as_deref()
            .ok_or_else(|| CliError::Usage("no project: pass --project DIR or set ABSCREEN_PROJECT".into()))
    }

    fn open(&self) -> CliResult<Project> {
        Ok(Project::open(self.project_dir()?)?)
    }

    fn load(&self) -> CliResult<ProjectData> {
        Ok(ProjectData::load(self.project_dir()?)?)
    }

    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> CliResult<()> {
        let out = if self.json {
            serde_json::to_string_pretty(value)? + "\n"
        } else {
            text()
        };
        std::io::stdout().write_all(out.as_bytes())?;
        Ok(())
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut ctx = Context {
        project: cli.project,
        reviewer: cli.reviewer.unwrap_or_else(default_reviewer),
        json: cli.json,
    };
    match cli.command {
        Command::Init { dir } => {
            let dir = dir
                .or(ctx.project.take())
                .ok_or_else(|| CliError::Usage("init needs a directory".into()))?;
            Project::create(&dir)?;
            println!("created project {}", dir.display());
            Ok(())
        }
        Command::Import { mut paths, format } => {
            if ctx.project.is_none() && paths.len() >= 2 {
                ctx.project = Some(paths.remove(0));
            }
            import(&ctx, &paths, format.as_deref())
        }
        Command::Export { format, scope, out } => {
            let data = ctx.load()?;
            let text = export_records(&data, format.parse::<ExportFormat>()?, scope.parse::<ExportScope>()?)?;
            write_output(out.as_deref(), &text)
        }
        Command::Rank { only, out } => rank(&ctx, only, out.as_deref()),
        Command::Decide {
            ref_id,
            decision,
            reason,
        } => {
            let mut project = ctx.open()?;
            let ref_id: RefId = ref_id.parse()?;
            let new = human_decision(&ctx.reviewer, ref_id, &decision, &reason)?;
            let value = new.decision;
            let id = project.append_decision(new)?;
            let row = project.decisions().iter().rev().find(|d| d.decision_id == id).cloned();
            ctx.emit(&row, || format!("decision {id}: {ref_id} {value}\n"))
        }
        Command::Config(cmd) => config(&ctx, cmd),
        Command::ScreenLlm(args) => screen(&ctx, args),
        Command::Threshold { execution, t, preview } => {
            let id: ExecutionId = execution.parse()?;
            if preview {
                let p = threshold_preview(&ctx.load()?, &id, t)?;
                ctx.emit(&p, || {
                    format!(
                        "execution {} at t={}: include {}, exclude {} ({} judged of {} targeted)\n",
                        p.execution_id, p.threshold, p.include_count, p.exclude_count, p.judged, p.targeted
                    )
                })
            } else {
                let mut project = ctx.open()?;
                let log = confirm_threshold(&mut project, &id, t)?;
                ctx.emit(&log, || {
                    format!(
                        "execution {} confirmed at t={}: include {}, exclude {}\n",
                        log.execution_id, log.threshold, log.included_count, log.excluded_count
                    )
                })
            }
        }
        Command::Stopping { only } => {
            let s = project_signal(&ctx.load()?, only.as_deref())?;
            ctx.emit(&s, || {
                let p = s.p_value.map_or(String::new(), |p| format!(", p = {p:.6}"));
                format!(
                    "{}: {} (rule {}, run {} of {} screened, {} relevant found{p})\n",
                    s.recommendation,
                    if s.stop { "stop screening" } else { "keep screening" },
                    s.rule,
                    s.run_length,
                    s.screened,
                    s.relevant_found
                )
            })
        }
        Command::Eval(cmd) => eval(&ctx, cmd),
        Command::Assign {
            calibration_size,
            groups,
        } => {
            let mut project = ctx.open()?;
            if let Some(n) = calibration_size {
                project.config_set("assign.calibration_size", &n.to_string())?;
            }
            if let Some(n) = groups {
                project.config_set("assign.group_count", &n.to_string())?;
            }
            let assignment = project.assign_screening_sets()?;
            let mut counts = std::collections::BTreeMap::<String, usize>::new();
            for (_, set) in &assignment {
                *counts.entry(set.clone()).or_default() += 1;
            }
            ctx.emit(&counts, || counts.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect())
        }
        Command::Serve(args) => serve(&ctx, args),
        Command::Key(cmd) => key(&ctx, cmd),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        }),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn import(ctx: &Context, paths: &[PathBuf], format: Option<&str>) -> CliResult<()> {
    let mut project = ctx.open()?;
    let forced = format.map(str::parse::<InputFormat>).transpose()?;
    let mut reports = Vec::new();
    for path in paths {
        let format = forced
            .or_else(|| InputFormat::from_extension(path))
            .ok_or_else(|| CliError::Usage(format!("{}: unknown format; pass --format", path.display())))?;
        let drafts = parse_records(&read_file(path)?, format)?;
        let source = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        let report = import_batch(&drafts, &mut project, &ctx.reviewer, &source)?;
        for (index, reason) in &report.rejected {
            eprintln!("{}: record {} rejected: {reason}", path.display(), index + 1);
        }
        reports.push((path.display().to_string(), report));
    }
    ctx.emit(&reports, || {
        reports
            .iter()
            .map(|(p, r)| {
                format!(
                    "{p}: imported {}, duplicates {}, rejected {}\n",
                    r.imported_count, r.duplicate_count, r.rejected_count
                )
            })
            .collect()
    })
}

fn rank(ctx: &Context, only: Option<String>, out: Option<&Path>) -> CliResult<()> {
    let data = ctx.load()?;
    let config = RankerConfig {
        reviewer: only.clone(),
        ..RankerConfig::from_project(&data)?
    };
    let rows: Vec<(RefId, Option<f64>)> = match rank_unlabeled(&data, &config) {
        Ok(q) => q.entries.iter().map(|e| (e.ref_id, Some(e.probability))).collect(),
        Err(Error::ColdStart) => {
            eprintln!("cold start: no relevant and irrelevant labels yet; listing import order");
            import_order(&data, only.as_deref())
                .into_iter()
                .map(|id| (id, None))
                .collect()
        }
        Err(e) => return Err(e.into()),
    };
    let mut text = String::from("ref_id,score,rank\n");
    for (i, (id, p)) in rows.iter().enumerate() {
        let score = p.map_or(String::new(), |p| format!("{p:?}"));
        text.push_str(&format!("{id},{score},{}\n", i + 1));
    }
    write_output(out, &text)
}

fn config(ctx: &Context, cmd: ConfigCommand) -> CliResult<()> {
    match cmd {
        ConfigCommand::Get { key } => {
            let data = ctx.load()?;
            let value = data.config_get(&key).ok_or_else(|| Error::NotFound {
                kind: "config key",
                id: key.clone(),
            })?;
            ctx.emit(&value, || format!("{value}\n"))
        }
        ConfigCommand::Set { key, value } => {
            ctx.open()?.config_set(&key, &value)?;
            ctx.emit(&(key.as_str(), value.as_str()), || format!("{key} = {value}\n"))
        }
        ConfigCommand::List => {
            let entries = ctx.load()?.config().effective();
            let map: serde_json::Map<String, serde_json::Value> =
                entries.iter().map(|(k, v)| (k.clone(), v.clone().into())).collect();
            ctx.emit(&map, || entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect())
        }
    }
}

fn screen(ctx: &Context, args: ScreenArgs) -> CliResult<()> {
    if args.rpm == 0 {
        return Err(CliError::Usage("--rpm must be positive".into()));
    }
    let provider = open_provider(&args.provider)?;
    let mut project = ctx.open()?;
    let scope = args.scope.parse::<BatchScope>()?.resolve(&project);
    let execution_id = match &args.resume {
        Some(id) => id.parse::<ExecutionId>()?,
        None => {
            let criteria = args.prompt_file.as_deref().map(read_text).transpose()?;
            let request = BatchRequest {
                criteria,
                threshold: args.threshold,
            };
            let log = begin_batch(&mut project, &request, &scope)?;
            eprintln!("execution {} started for {} records", log.execution_id, scope.len());
            log.execution_id
        }
    };
    let options = BatchOptions {
        max_retries: args.max_retries,
        concurrency: args.concurrency.max(1),
        ..BatchOptions::new(args.rpm, Arc::new(SystemClock::default()))
    };
    let cancel = options.cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || cancel.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install the Ctrl-C handler: {e}");
    }
    let outcome = match execute_batch(&mut project, &execution_id, &scope, provider.as_ref(), &options) {
        Err(Error::Interrupted) => {
            return Err(CliError::Conflict(format!(
                "interrupted; finished judgments are saved. Resume with --resume {execution_id}"
            )))
        }
        other => other?,
    };
    let cost = execution_cost(&project, &execution_id, &Pricing::default())?;
    let e = &outcome.execution;
    ctx.emit(&(&outcome, &cost), || {
        format!(
            "execution {}: judged {}, failed {}, skipped {}, requests {}\ninclude {}, exclude {} at t={}\nestimated cost ${:.4}\n",
            e.execution_id, outcome.judged, outcome.failed, outcome.skipped, outcome.requests,
            e.included_count, e.excluded_count, e.threshold, cost.total_usd
        )
    })?;
    if outcome.failed > 0 {
        return Err(CliError::PartialBatch { failed: outcome.failed });
    }
    Ok(())
}

fn eval(ctx: &Context, cmd: EvalCommand) -> CliResult<()> {
    match cmd {
        EvalCommand::Folds {
            dataset,
            k,
            seed,
            alpha,
            out,
        } => {
            let records = read_dataset_csv(&read_text(&dataset)?)?;
            let experiment = run_fold_experiment(&records, k, seed, &NbRanker { alpha })?;
            std::fs::create_dir_all(&out)?;
            write_output(Some(&out.join("folds.csv")), &experiment.plan.to_csv())?;
            for fold in &experiment.folds {
                write_output(Some(&out.join(fold.file_name())), &fold.to_csv())?;
            }
            let summary: Vec<(usize, usize)> = experiment.folds.iter().map(|f| (f.fold, f.rows.len())).collect();
            ctx.emit(&summary, || {
                format!(
                    "{} folds (seed {seed}) written to {}\n",
                    experiment.folds.len(),
                    out.display()
                )
            })
        }
        EvalCommand::Metrics { truth, beta, csv } => {
            let truth = read_truth_csv(&read_text(&truth)?)?;
            let report = project_metrics(&ctx.load()?, &truth, beta)?;
            ctx.emit(&report, || if csv { report.to_csv() } else { report.to_text() })
        }
        EvalCommand::Overlap { ours, reference, k } => {
            let load = |dir: &Path| -> CliResult<Vec<abscreen_core::eval::FoldRanking>> {
                let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                    .map_err(|source| CliError::File {
                        path: dir.to_path_buf(),
                        source,
                    })?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("fold_") && n.ends_with(".csv"))
                    })
                    .collect();
                files.sort();
                files
                    .iter()
                    .enumerate()
                    .map(|(fold, path)| {
                        let ids = read_ranking_csv(&read_text(path)?)?;
                        Ok(abscreen_core::eval::FoldRanking {
                            fold,
                            rows: ids
                                .into_iter()
                                .enumerate()
                                .map(|(i, ref_id)| abscreen_core::eval::RankedRow {
                                    ref_id,
                                    score: 0.0,
                                    rank: i + 1,
                                })
                                .collect(),
                        })
                    })
                    .collect()
            };
            let ours = load(&ours)?;
            let reference: Vec<Vec<String>> = load(&reference)?
                .into_iter()
                .map(|f| f.rows.into_iter().map(|r| r.ref_id).collect())
                .collect();
            let overlaps = compare_rankings(&ours, &reference, k)?;
            ctx.emit(&overlaps, || {
                let mut text = String::from("fold,k,overlap\n");
                for o in &overlaps {
                    text.push_str(&format!("{},{},{:.4}\n", o.fold, o.k, o.overlap));
                }
                text
            })
        }
        EvalCommand::Simulate {
            dataset,
            rule,
            n_consecutive,
            target_recall,
            confidence,
            alpha,
            retrain_every,
        } => {
            let records = read_dataset_csv(&read_text(&dataset)?)?;
            let texts: Vec<String> = records
                .iter()
                .map(|r| corpus_text(&r.title, &r.abstract_text))
                .collect();
            let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
            let config = StoppingConfig {
                rule: rule.parse::<StopRule>()?,
                n_consecutive,
                target_recall,
                confidence,
            };
            let mut policy = ActiveLearningPolicy::new(&texts, alpha, retrain_every)?;
            let outcome = simulate_until_stop(&labels, &mut policy, &config)?;
            ctx.emit(&outcome, || {
                format!(
                    "{}: screened {} of {}, found {} of {} relevant (recall {:.3})\n",
                    if outcome.stopped { "stopped" } else { "exhausted" },
                    outcome.screened,
                    outcome.total_records,
                    outcome.relevant_found,
                    outcome.total_relevant,
                    outcome.recall
                )
            })
        }
    }
}

fn serve(ctx: &Context, args: ServeArgs) -> CliResult<()> {
    if args.rpm == 0 {
        return Err(CliError::Usage("--rpm must be positive".into()));
    }
    let project = ctx.open()?;
    let mut config = ServiceConfig::new(ctx.reviewer.clone());
    config.blind = args.blind;
    config.provider = args.provider.as_deref().map(open_provider).transpose()?;
    config.options = BatchOptions::new(args.rpm, Arc::new(SystemClock::default()));
    config.static_dir = args.static_dir;
    let host = if args.lan { "0.0.0.0" } else { "127.0.0.1" };
    let router = server::router(AppState::new(project, config));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, args.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        server::run(listener, router).await
    })?;
    Ok(())
}

fn key(ctx: &Context, cmd: KeyCommand) -> CliResult<()> {
    let store = Keystore::default_location()?;
    match cmd {
        KeyCommand::Set { name } => {
            let mut secret = String::new();
            std::io::stdin().read_to_string(&mut secret)?;
            let secret = secret.trim();
            if secret.is_empty() {
                return Err(CliError::Usage("no key on standard input".into()));
            }
            store.set(&name, secret)?;
            ctx.emit(&name, || format!("stored key {name}\n"))
        }
        KeyCommand::Remove { name } => {
            let removed = store.remove(&name)?;
            ctx.emit(&removed, || {
                if removed {
                    format!("removed key {name}\n")
                } else {
                    format!("no key {name}\n")
                }
            })
        }
        KeyCommand::List => {
            let names = store.names()?;
            ctx.emit(&names, || names.iter().map(|n| format!("{n}\n")).collect())
        }
    }
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbm::config::Experiment;
use cbm::corpus::{corpus_stats, ingest, read_records, write_records, write_ties, write_venues};
use cbm::eval::run_experiment;
use cbm::joint::{generate_corpus, read_model, write_model, IdTables};
use cbm::scoring::{score_records, write_scores};
use cbm::{Error, RunConfig};

#[derive(Parser)]
#[command(name = "cbm", version, about = "Identity-theft detection with the composite behavioral model")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Base seed (wins over CBM_SEED and the config file).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its ground-truth model.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for records.tsv, ties.tsv, venues.tsv and truth.cbm.
        #[arg(long, default_value = "synth")]
        out: PathBuf,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        venues: Option<usize>,
        #[arg(long)]
        words: Option<usize>,
        /// Behaviors per user: `N`, `A..B` or `geo:M`.
        #[arg(long)]
        behaviors_per_user: Option<String>,
    },
    /// Run an experiment and write a report directory.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Start from the config recorded in a report.json.
        #[arg(long, conflicts_with = "config")]
        from_report: Option<PathBuf>,
        /// main | grid | latency | robustness | windowed | baselines
        #[arg(long)]
        experiment: Option<String>,
        /// Community counts for the grid, comma separated.
        #[arg(long)]
        c: Option<String>,
        /// Topic counts for the grid, comma separated.
        #[arg(long)]
        z: Option<String>,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        ties: Option<PathBuf>,
        #[arg(long)]
        venues: Option<PathBuf>,
        /// Report directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a records file against a saved model.
    Score {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        records: PathBuf,
        /// Score blocks of K consecutive behaviors per user.
        #[arg(long, value_name = "K")]
        latency: Option<usize>,
        /// Scores file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize a corpus.
    Stats {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        ties: PathBuf,
        #[arg(long)]
        venues: Option<PathBuf>,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

/// Defaults, then the config file, then `CBM_SEED`, then flags.
fn resolve(base: Option<RunConfig>, args: &ConfigArgs) -> cbm::Result<RunConfig> {
    let mut config = match (base, &args.config) {
        (Some(c), _) => c,
        (None, Some(path)) => RunConfig::from_file(path)?,
        (None, None) => RunConfig::default(),
    };
    config.apply_env()?;
    for pair in &args.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{pair}`")))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn create(path: &Path) -> cbm::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn synth(config: &RunConfig, out: &Path) -> cbm::Result<()> {
    config.validate()?;
    let (corpus, truth) = generate_corpus(&config.synth_hyperparams(), &config.generator()?).map_err(|e| e.in_stage("synth"))?;
    std::fs::create_dir_all(out)?;
    let write = || -> cbm::Result<()> {
        let mut w = create(&out.join("records.tsv"))?;
        write_records(&corpus, &mut w, false)?;
        w.flush()?;
        let mut w = create(&out.join("ties.tsv"))?;
        write_ties(&corpus, &mut w)?;
        w.flush()?;
        let mut w = create(&out.join("venues.tsv"))?;
        write_venues(&corpus, &mut w)?;
        w.flush()?;
        let mut w = create(&out.join("truth.cbm"))?;
        write_model(&truth, &IdTables::of(&corpus), &mut w)?;
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| e.in_stage("write"))?;
    println!(
        "wrote {} behaviors, {} users, {} venues to {}",
        corpus.len(),
        corpus.num_users(),
        corpus.num_venues(),
        out.display()
    );
    Ok(())
}

fn run(config: &RunConfig) -> cbm::Result<()> {
    let artifacts = run_experiment(config)?;
    artifacts.write_to(&config.output).map_err(|e| e.in_stage("report"))?;
    println!("experiment {}  seed {}", config.experiment.name(), config.seed);
    for line in &artifacts.summary {
        println!("  {line}");
    }
    println!("report written to {}", config.output.display());
    Ok(())
}

fn score(config: &RunConfig, model: &Path, records: &Path, latency: Option<usize>, output: Option<&Path>) -> cbm::Result<()> {
    config.validate()?;
    let (model, tables) = read_model(BufReader::new(File::open(model)?)).map_err(|e| e.in_stage("load model"))?;
    let tok = config.tokenizer()?;
    let parsed = read_records(BufReader::new(File::open(records)?), records, &tok).map_err(|e| e.in_stage("read records"))?;
    let rows = score_records(
        &model,
        &tables,
        &parsed,
        config.prior,
        config.reference_count,
        latency,
        config.seeds().scoring,
    )
    .map_err(|e| e.in_stage("score"))?;
    let users = cbm::corpus::Interner::from_names(tables.users.iter().cloned());
    match output {
        Some(path) => {
            let mut w = create(path)?;
            write_scores(&mut w, &users, &rows, None)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            write_scores(&mut w, &users, &rows, None)?;
        }
    }
    Ok(())
}

fn stats(config: &RunConfig, records: &Path, ties: &Path, venues: Option<&Path>, json: bool) -> cbm::Result<()> {
    let tok = config.tokenizer()?;
    let corpus = ingest(records, ties, venues, &tok).map_err(|e| e.in_stage("ingest"))?;
    let s = corpus_stats(&corpus);
    if json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }
    println!("users                  {}", s.users);
    println!("venues                 {}", s.venues);
    println!("behaviors              {}", s.behaviors);
    println!("vocabulary             {}", s.vocabulary);
    println!("tokens                 {}", s.tokens);
    println!("empty word bags        {}", s.empty_word_behaviors);
    println!("friend pairs           {}", s.friend_pairs);
    println!("venues with coords     {}", s.venues_with_coordinates);
    println!("records per user:");
    for (bucket, n) in &s.records_per_user {
        println!("  {bucket:<8} {n}");
    }
    Ok(())
}

fn execute(cli: Cli) -> cbm::Result<()> {
    match cli.command {
        Command::Synth {
            cfg,
            out,
            users,
            venues,
            words,
            behaviors_per_user,
        } => {
            let mut config = resolve(None, &cfg)?;
            if let Some(n) = users {
                config.synth_users = n;
            }
            if let Some(n) = venues {
                config.synth_venues = n;
            }
            if let Some(n) = words {
                config.synth_words = n;
            }
            if let Some(d) = behaviors_per_user {
                config.synth_behaviors_per_user = d;
            }
            synth(&config, &out)
        }
        Command::Run {
            cfg,
            from_report,
            experiment,
            c,
            z,
            records,
            ties,
            venues,
            output,
        } => {
            let base = from_report.as_deref().map(RunConfig::from_report).transpose()?;
            let mut config = resolve(base, &cfg)?;
            if let Some(e) = experiment {
                config.experiment = e.parse::<Experiment>()?;
            }
            if let Some(list) = c {
                config.set("grid_c", &list)?;
            }
            if let Some(list) = z {
                config.set("grid_z", &list)?;
            }
            if records.is_some() {
                config.records = records;
            }
            if ties.is_some() {
                config.ties = ties;
            }
            if venues.is_some() {
                config.venues = venues;
            }
            if let Some(o) = output {
                config.output = o;
            }
            run(&config)
        }
        Command::Score {
            cfg,
            model,
            records,
            latency,
            output,
        } => {
            let config = resolve(None, &cfg)?;
            score(&config, &model, &records, latency, output.as_deref())
        }
        Command::Stats {
            cfg,
            records,
            ties,
            venues,
            json,
        } => {
            let config = resolve(None, &cfg)?;
            stats(&config, &records, &ties, venues.as_deref(), json)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

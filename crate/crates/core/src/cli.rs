//! The `polyscope` command line.
//!
//! Every command writes its report to the writer handed to [`run`]. TSV
//! output prints reals with 4 decimals; JSON keeps full precision. Word
//! commands return [`Status::Insufficient`] (exit code 2) when the word
//! cannot be analyzed.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::corpus_stats::{self, FrequencyTable};
use crate::evaluation::{self, ChiSquare, ConfusionMatrix2x2, Label};
use crate::model_io::{self, EmbeddingModel, ModelFormat};
use crate::neighborhood::{self, Insufficient, NeighborList, SearchConfig, StableNeighbors};
use crate::polysemy::{Analyzer, PolysemyTest, Su, Summary, UniformityRecord, Verdict};

#[derive(Debug, Parser)]
#[command(
    name = "polyscope",
    version,
    about = "Detect polysemous words from embedding neighborhoods"
)]
pub struct Cli {
    #[command(flatten)]
    pub run: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Text,
    Binary,
    Auto,
}

impl From<FileFormat> for ModelFormat {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Text => ModelFormat::Text,
            FileFormat::Binary => ModelFormat::Binary,
            FileFormat::Auto => ModelFormat::Auto,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// word2vec model file
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Model file layout
    #[arg(long, global = true, value_enum, default_value_t = FileFormat::Auto)]
    pub format: FileFormat,
    /// Number of most frequent words treated as stable
    #[arg(long, global = true, default_value_t = 1000)]
    pub limit: usize,
    /// Neighbors per word (N)
    #[arg(long, global = true, default_value_t = 4)]
    pub neighbors: usize,
    /// Nearest words inspected when collecting stable neighbors
    #[arg(long, global = true, default_value_t = 40)]
    pub scope: usize,
    /// k in the m - k*sigma threshold
    #[arg(long = "sigma-k", global = true, default_value_t = 3.0)]
    pub sigma_k: f64,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Tsv)]
    pub output: OutputFormat,
    /// token<TAB>count file overriding the model's frequency order
    #[arg(long, global = true)]
    pub counts: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

impl RunConfig {
    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            n_neighbors: self.neighbors,
            limit: self.limit,
            scope: self.scope,
            sigma_k: self.sigma_k,
        }
    }

    fn load_model(&self, positional: Option<&Path>) -> Result<EmbeddingModel> {
        let path = positional
            .or(self.model.as_deref())
            .context("no model given (use --model)")?;
        let model =
            model_io::load_model(path, self.format.into()).with_context(|| format!("loading {}", path.display()))?;
        match &self.counts {
            Some(counts) => {
                let counts =
                    model_io::load_count_file(counts).with_context(|| format!("loading {}", counts.display()))?;
                Ok(model.reranked(&counts))
            }
            None => Ok(model),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stable neighbors of a word
    Neighbors { word: String },
    /// Surrounding uniformity of a word
    Su { word: String },
    /// Run the outlier test for a word
    Test { word: String },
    /// Test every stable word
    Batch {
        /// Model file (alternative to --model)
        model: Option<PathBuf>,
        /// Only report rows whose SU is defined and greater than this
        #[arg(long = "min-su")]
        min_su: Option<f64>,
    },
    /// Count unigrams (to output) and bigrams in a corpus
    Count {
        /// Corpus file, or - for stdin
        corpus: PathBuf,
        #[arg(long)]
        lowercase: bool,
        /// Also write "first second<TAB>count" lines here
        #[arg(long)]
        bigrams: Option<PathBuf>,
    },
    /// How often names are directly followed by a word
    Pair {
        /// Corpus file, or - for stdin
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "river")]
        follower: String,
        #[arg(long)]
        lowercase: bool,
        #[arg(required = true)]
        names: Vec<String>,
    },
    /// Confusion matrix and Yates-corrected chi-square for labeled words
    Eval {
        /// word<TAB>human<TAB>computer file
        labels: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Rewrite the model in another layout
    Convert {
        #[arg(long, value_enum)]
        to: FileFormat,
        #[arg(value_name = "OUTPUT")]
        destination: PathBuf,
    },
}

/// Outcome of a successful command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The word has no neighbor list, SU or test result.
    Insufficient,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Insufficient => 2,
        }
    }
}

/// Runs a parsed command line, writing the report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Status> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.run.threads)
        .build()
        .context("starting worker threads")?;
    // Reports are rendered into a buffer because `out` need not be `Send`.
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(&cli, &mut buf));
    out.write_all(&buf)?;
    out.flush()?;
    result
}

fn needs_model(command: &Command) -> bool {
    matches!(
        command,
        Command::Neighbors { .. }
            | Command::Su { .. }
            | Command::Test { .. }
            | Command::Batch { .. }
            | Command::Convert { .. }
    )
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<Status> {
    let rc = &cli.run;
    let cfg = rc.search_config();
    if needs_model(&cli.command) {
        cfg.validate()?;
    }
    let status = match &cli.command {
        Command::Neighbors { word } => {
            let model = rc.load_model(None)?;
            cmd_neighbors(&model, &cfg, word, rc.output, out)?
        }
        Command::Su { word } => {
            let model = rc.load_model(None)?;
            cmd_su(&model, &cfg, word, rc.output, out)?
        }
        Command::Test { word } => {
            let model = rc.load_model(None)?;
            cmd_test(&model, &cfg, word, rc.output, out)?
        }
        Command::Batch { model, min_su } => {
            let model = rc.load_model(model.as_deref())?;
            cmd_batch(&model, &cfg, *min_su, rc.output, out)?
        }
        Command::Count {
            corpus,
            lowercase,
            bigrams,
        } => {
            let table = count_path(corpus, *lowercase)?;
            table.write_unigrams(&mut *out)?;
            if let Some(path) = bigrams {
                let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                table.write_bigrams(BufWriter::new(f))?;
            }
            Status::Ok
        }
        Command::Pair {
            corpus,
            follower,
            lowercase,
            names,
        } => {
            let table = count_path(corpus, *lowercase)?;
            cmd_pair(&table, names, follower, rc.output, out)?
        }
        Command::Eval { labels, alpha } => {
            let f = File::open(labels).with_context(|| format!("opening {}", labels.display()))?;
            let judgments = evaluation::read_labels(BufReader::new(f))?;
            let matrix = evaluation::confusion(&judgments);
            let chi = evaluation::chi_square_yates(&matrix, *alpha)?;
            write_eval(&matrix, &chi, rc.output, out)?;
            Status::Ok
        }
        Command::Convert { to, destination } => {
            let model = rc.load_model(None)?;
            if *to == FileFormat::Auto {
                bail!("--to must be text or binary");
            }
            model_io::save_model(&model, destination, (*to).into())
                .with_context(|| format!("writing {}", destination.display()))?;
            Status::Ok
        }
    };
    Ok(status)
}

fn count_path(path: &Path, lowercase: bool) -> Result<FrequencyTable> {
    if path == Path::new("-") {
        return Ok(corpus_stats::count_corpus(io::stdin().lock(), lowercase)?);
    }
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(corpus_stats::count_text(&text, lowercase))
}

fn f4(x: f64) -> String {
    format!("{:.4}", x)
}

fn opt4(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), f4)
}

fn insufficient_label(i: Insufficient) -> String {
    match i {
        Insufficient::QueryNotStable => "query-not-stable".to_owned(),
        Insufficient::TooFewInScope { found } => format!("insufficient-neighbors (found {})", found),
    }
}

fn write_json<T: Serialize>(value: &T, out: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn cmd_neighbors(
    model: &EmbeddingModel,
    cfg: &SearchConfig,
    word: &str,
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<Status> {
    #[derive(Serialize)]
    struct Missing<'a> {
        query: &'a str,
        insufficient: Insufficient,
    }

    match neighborhood::stable_neighbors(model, word, cfg)? {
        StableNeighbors::Found(list) => {
            match format {
                OutputFormat::Json => write_json(&list, out)?,
                OutputFormat::Tsv => write_neighbor_list(&list, out)?,
            }
            Ok(Status::Ok)
        }
        StableNeighbors::Insufficient(why) => {
            match format {
                OutputFormat::Json => write_json(
                    &Missing {
                        query: word,
                        insufficient: why,
                    },
                    out,
                )?,
                OutputFormat::Tsv => writeln!(out, "insufficient\t{}", insufficient_label(why))?,
            }
            Ok(Status::Insufficient)
        }
    }
}

fn write_neighbor_list(list: &NeighborList, out: &mut dyn Write) -> io::Result<()> {
    for n in &list.neighbors {
        writeln!(out, "{}\t{}", n.token, f4(n.cosine))?;
    }
    Ok(())
}

pub fn cmd_su(
    model: &EmbeddingModel,
    cfg: &SearchConfig,
    word: &str,
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<Status> {
    let record = Analyzer::new(model, *cfg)?.surrounding_uniformity(word)?;
    match format {
        OutputFormat::Json => write_json(&SuJson::from(&record), out)?,
        OutputFormat::Tsv => {
            writeln!(out, "word\t{}", record.word)?;
            writeln!(out, "su\t{}", opt4(record.su.value()))?;
            if let Su::Undefined(reason) = record.su {
                writeln!(out, "reason\t{}", reason)?;
            }
            for n in &record.neighbors {
                writeln!(out, "neighbor\t{}\t{}", n.token, f4(n.cosine))?;
            }
        }
    }
    Ok(match record.su {
        Su::Defined(_) => Status::Ok,
        Su::Undefined(_) => Status::Insufficient,
    })
}

#[derive(Serialize)]
struct SuJson<'a> {
    word: &'a str,
    su: Option<f64>,
    reason: Option<String>,
    neighbors: &'a [neighborhood::Neighbor],
}

impl<'a> From<&'a UniformityRecord> for SuJson<'a> {
    fn from(r: &'a UniformityRecord) -> Self {
        SuJson {
            word: &r.word,
            su: r.su.value(),
            reason: match r.su {
                Su::Undefined(reason) => Some(reason.to_string()),
                Su::Defined(_) => None,
            },
            neighbors: &r.neighbors,
        }
    }
}

/// One report row: the word, its neighbors with their SUs, its own SU, the
/// test statistics and the verdict.
#[derive(Debug, Serialize)]
pub struct ReportRow<'a> {
    pub word: &'a str,
    pub rank: usize,
    pub neighbors: Vec<RowNeighbor<'a>>,
    pub su: Option<f64>,
    pub m: Option<f64>,
    pub sigma: Option<f64>,
    pub threshold: Option<f64>,
    pub verdict: &'static str,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct RowNeighbor<'a> {
    pub token: &'a str,
    pub cosine: f64,
    pub su: Option<f64>,
}

impl<'a> From<&'a PolysemyTest> for ReportRow<'a> {
    fn from(t: &'a PolysemyTest) -> Self {
        let neighbors = t
            .record
            .neighbors
            .iter()
            .enumerate()
            .map(|(i, n)| RowNeighbor {
                token: &n.token,
                cosine: n.cosine,
                su: t.neighbor_sus.get(i).and_then(Su::value),
            })
            .collect();
        ReportRow {
            word: &t.record.word,
            rank: t.record.rank,
            neighbors,
            su: t.record.su.value(),
            m: t.stats.as_ref().map(|s| s.mean),
            sigma: t.stats.as_ref().map(|s| s.sigma),
            threshold: t.stats.as_ref().map(|s| s.threshold),
            verdict: t.verdict.label(),
            detail: t.verdict.to_string(),
        }
    }
}

pub fn cmd_test(
    model: &EmbeddingModel,
    cfg: &SearchConfig,
    word: &str,
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<Status> {
    let t = Analyzer::new(model, *cfg)?.test(word)?;
    let row = ReportRow::from(&t);
    match format {
        OutputFormat::Json => write_json(&row, out)?,
        OutputFormat::Tsv => {
            writeln!(out, "word\t{}", row.word)?;
            writeln!(out, "su\t{}", opt4(row.su))?;
            for n in &row.neighbors {
                writeln!(out, "neighbor\t{}\t{}", n.token, opt4(n.su))?;
            }
            writeln!(out, "m\t{}", opt4(row.m))?;
            writeln!(out, "sigma\t{}", opt4(row.sigma))?;
            writeln!(out, "threshold\t{}", opt4(row.threshold))?;
            writeln!(out, "verdict\t{}", row.detail)?;
        }
    }
    Ok(match t.verdict {
        Verdict::Untestable(_) => Status::Insufficient,
        _ => Status::Ok,
    })
}

pub fn cmd_batch(
    model: &EmbeddingModel,
    cfg: &SearchConfig,
    min_su: Option<f64>,
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<Status> {
    #[derive(Serialize)]
    struct BatchJson<'a> {
        config: &'a SearchConfig,
        rows: Vec<ReportRow<'a>>,
        summary: Summary,
    }

    let report = Analyzer::new(model, *cfg)?.batch();
    let rows: Vec<ReportRow> = report
        .rows
        .iter()
        .filter(|t| match min_su {
            Some(min) => t.record.su.value().is_some_and(|su| su > min),
            None => true,
        })
        .map(ReportRow::from)
        .collect();

    match format {
        OutputFormat::Json => write_json(
            &BatchJson {
                config: &report.config,
                rows,
                summary: report.summary,
            },
            out,
        )?,
        OutputFormat::Tsv => {
            write!(out, "word")?;
            for i in 1..=cfg.n_neighbors {
                write!(out, "\tneighbor_{i}\tsu_{i}")?;
            }
            writeln!(out, "\tsu\tm\tsigma\tthreshold\tverdict")?;
            for row in &rows {
                write!(out, "{}", row.word)?;
                for i in 0..cfg.n_neighbors {
                    match row.neighbors.get(i) {
                        Some(n) => write!(out, "\t{}\t{}", n.token, opt4(n.su))?,
                        None => write!(out, "\t-\t-")?,
                    }
                }
                writeln!(
                    out,
                    "\t{}\t{}\t{}\t{}\t{}",
                    opt4(row.su),
                    opt4(row.m),
                    opt4(row.sigma),
                    opt4(row.threshold),
                    row.verdict
                )?;
            }
            writeln!(out, "# {}", report.summary)?;
        }
    }
    Ok(Status::Ok)
}

pub fn cmd_pair(
    table: &FrequencyTable,
    names: &[String],
    follower: &str,
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<Status> {
    #[derive(Serialize)]
    struct PairJson<'a> {
        name: &'a str,
        follower: &'a str,
        #[serde(flatten)]
        counts: corpus_stats::PairCount,
    }

    let rows: Vec<PairJson> = names
        .iter()
        .map(|name| PairJson {
            name,
            follower,
            counts: corpus_stats::followed_by_ratio(table, name, follower),
        })
        .collect();
    match format {
        OutputFormat::Json => write_json(&rows, out)?,
        OutputFormat::Tsv => {
            for r in &rows {
                writeln!(
                    out,
                    "{}\t{}\t{} {}\t{}\t{:.6}",
                    r.name, r.counts.name_count, r.name, follower, r.counts.pair_count, r.counts.ratio
                )?;
            }
        }
    }
    Ok(Status::Ok)
}

fn write_eval(m: &ConfusionMatrix2x2, chi: &ChiSquare, format: OutputFormat, out: &mut dyn Write) -> Result<()> {
    #[derive(Serialize)]
    struct EvalJson<'a> {
        matrix: &'a ConfusionMatrix2x2,
        chi_square: &'a ChiSquare,
    }

    match format {
        OutputFormat::Json => write_json(
            &EvalJson {
                matrix: m,
                chi_square: chi,
            },
            out,
        )?,
        OutputFormat::Tsv => {
            let rows = m.row_totals();
            let cols = m.column_totals();
            writeln!(out, "human\\computer\tmono\tpoly\ttotal")?;
            for (label, total) in [(Label::Mono, rows[0]), (Label::Poly, rows[1])] {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    label,
                    m.get(label, Label::Mono),
                    m.get(label, Label::Poly),
                    total
                )?;
            }
            writeln!(out, "total\t{}\t{}\t{}", cols[0], cols[1], m.total())?;
            writeln!(out, "chi2_yates\t{}", f4(chi.statistic))?;
            writeln!(out, "critical\t{}", f4(chi.critical))?;
            writeln!(out, "alpha\t{}", chi.alpha)?;
            writeln!(out, "significant\t{}", chi.significant)?;
        }
    }
    Ok(())
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 input or parse error, 3 backend error,
//! 4 exhaustive cap exceeded.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backends::http::{fetch_info, HttpClassifier, HttpConfig};
use crate::backends::{BackendConfig, BackendError, Classifier, ScoreMode};
use crate::candidates::{
    count_candidates, generate_candidates, CandidateError, CandidateFilter, CandidateMode,
    GenerateOptions, DEFAULT_EXHAUSTIVE_CAP,
};
use crate::corpus::{parse_conllu, Document};
use crate::render::{export_json, render_ansi, render_html};
use crate::scoring::{explain, ExplainError, ExplainOptions, TargetClass};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_CAP: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "lno", version, about = "Leave-n-out influence heatmaps for black-box text classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a document against a classifier and write heatmaps.
    Explain(ExplainArgs),
    /// List the candidate groups for a document without calling a backend.
    Candidates(CandidateArgs),
    /// Check that an HTTP endpoint speaks the classification protocol.
    ServeCheck(ServeCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Loo,
    Lno,
    Adjacent,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Lexicon,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreModeArg {
    Logit,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum FormatArg {
    Html,
    Ansi,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// CoNLL-U input file.
    #[arg(long, value_name = "PATH")]
    pub conllu: PathBuf,
    #[arg(long, value_enum, default_value = "lno")]
    pub mode: ModeArg,
    /// Group size; forced to 1 for `loo`.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Allow punctuation tokens in candidates.
    #[arg(long)]
    pub include_punct: bool,
    /// Upper bound on exhaustive candidates.
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_CAP)]
    pub cap: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long, value_enum, default_value = "lexicon")]
    pub backend: BackendArg,
    /// Lexicon TSV for the lexicon backend.
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    /// Base URL of the classification server.
    #[arg(long, env = "LNO_ENDPOINT", value_name = "URL")]
    pub endpoint: Option<String>,
    /// Class to explain (default: the predicted class).
    #[arg(long, value_name = "NAME")]
    pub target_class: Option<String>,
    #[arg(long, value_enum, default_value = "probability")]
    pub score_mode: ScoreModeArg,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
    #[arg(long)]
    pub no_cache: bool,
    /// Output format; repeatable. Defaults to json with --out, ansi without.
    #[arg(long = "format", value_enum)]
    pub formats: Vec<FormatArg>,
    /// Output path prefix; files are written as PREFIX.html and PREFIX.json.
    #[arg(long, value_name = "PATH-PREFIX")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CandidateArgs {
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Print candidate counts per mode instead of the candidates.
    #[arg(long)]
    pub stats: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ServeCheckArgs {
    #[arg(long, env = "LNO_ENDPOINT", value_name = "URL")]
    pub endpoint: String,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
    fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }
}

impl From<CandidateError> for CliError {
    fn from(e: CandidateError) -> Self {
        match e {
            CandidateError::CapExceeded { .. } => CliError::new(EXIT_CAP, e.to_string()),
            CandidateError::IncompatibleMode { .. } => CliError::usage(e.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Candidates(c) => c.into(),
            ExplainError::UnknownTarget(_) => CliError::usage(e.to_string()),
            ExplainError::Backend { .. } | ExplainError::CandidateBackend { .. } => {
                CliError::new(EXIT_BACKEND, e.to_string())
            }
            ExplainError::EmptyDocument | ExplainError::NoCandidates | ExplainError::Occlusion(_) => {
                CliError::input(e.to_string())
            }
        }
    }
}

fn backend_error(e: BackendError) -> CliError {
    match e {
        BackendError::Lexicon(_) => CliError::input(e.to_string()),
        BackendError::Config(_) => CliError::usage(e.to_string()),
        _ => CliError::new(EXIT_BACKEND, e.to_string()),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let rendered = e.to_string();
                    let line = rendered.lines().next().unwrap_or("invalid arguments");
                    let _ = writeln!(stderr, "{line}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Explain(args) => cmd_explain(&args, stdout, stderr),
        Command::Candidates(args) => cmd_candidates(&args, stdout),
        Command::ServeCheck(args) => cmd_serve_check(&args, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message.replace('\n', " "));
            e.code
        }
    }
}

fn load_document(path: &Path) -> Result<Document, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
    parse_conllu(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn filter_for(sel: &SelectionArgs) -> CandidateFilter {
    if sel.include_punct {
        CandidateFilter::none()
    } else {
        CandidateFilter::default()
    }
}

/// Maps the user-facing mode to a candidate mode and group size.
pub fn resolve_mode(mode: ModeArg, n: usize) -> Result<(CandidateMode, usize), CliError> {
    match mode {
        ModeArg::Loo => Ok((CandidateMode::Singleton, 1)),
        ModeArg::Lno if n == 2 => Ok((CandidateMode::DependencyPair, 2)),
        ModeArg::Lno if n > 2 => Ok((CandidateMode::DependencySubtree, n)),
        ModeArg::Lno => Err(CliError::usage(format!(
            "--mode lno needs --n of at least 2 (got {n}); use --mode loo for single tokens"
        ))),
        ModeArg::Adjacent | ModeArg::Exhaustive if n == 0 => {
            Err(CliError::usage("--n must be at least 1"))
        }
        ModeArg::Adjacent => Ok((CandidateMode::Adjacent, n)),
        ModeArg::Exhaustive => Ok((CandidateMode::Exhaustive, n)),
    }
}

fn backend_config(args: &ExplainArgs) -> Result<BackendConfig, CliError> {
    if args.parallelism == 0 {
        return Err(CliError::usage("--parallelism must be positive"));
    }
    if args.batch_size == 0 {
        return Err(CliError::usage("--batch-size must be positive"));
    }
    let mut cfg = match args.backend {
        BackendArg::Lexicon => {
            let path = args
                .lexicon
                .clone()
                .ok_or_else(|| CliError::usage("--backend lexicon requires --lexicon PATH"))?;
            BackendConfig::lexicon(path)
        }
        BackendArg::Http => {
            let endpoint = args
                .endpoint
                .clone()
                .ok_or_else(|| CliError::usage("--backend http requires --endpoint URL (or LNO_ENDPOINT)"))?;
            BackendConfig::http(endpoint)
        }
    };
    cfg.score_mode = match args.score_mode {
        ScoreModeArg::Logit => ScoreMode::Logit,
        ScoreModeArg::Probability => ScoreMode::Probability,
    };
    cfg.parallelism = args.parallelism;
    cfg.batch_size = args.batch_size;
    cfg.cache_enabled = !args.no_cache;
    cfg.timeout = Duration::from_secs(args.timeout.max(1));
    Ok(cfg)
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn cmd_explain(
    args: &ExplainArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let sel = &args.selection;
    let (mode, n) = resolve_mode(sel.mode, sel.n)?;
    let config = backend_config(args)?;
    let mut formats = args.formats.clone();
    formats.sort_unstable();
    formats.dedup();
    if formats.is_empty() {
        formats.push(if args.out.is_some() {
            FormatArg::Json
        } else {
            FormatArg::Ansi
        });
    }

    let doc = load_document(&sel.conllu)?;
    let backend = config.build().map_err(backend_error)?;
    let mut options = ExplainOptions::new(mode, n)
        .with_filter(filter_for(sel))
        .with_cap(sel.cap);
    if let Some(name) = &args.target_class {
        options = options.with_target(TargetClass::Name(name.clone()));
    }
    let report = explain(&doc, &backend, &options)?;
    let _ = writeln!(
        stderr,
        "explained {} candidates ({} mode, n = {}) against {}",
        report.candidate_scores.len(),
        mode,
        n,
        report.target_label()
    );

    let render_err = |e: crate::render::RenderError| CliError::input(e.to_string());
    for format in formats {
        let (body, ext) = match format {
            FormatArg::Html => (render_html(&doc, &report).map_err(render_err)?, "html"),
            FormatArg::Json => (export_json(&report), "json"),
            FormatArg::Ansi => {
                let text = render_ansi(&doc, &report).map_err(render_err)?;
                stdout
                    .write_all(text.as_bytes())
                    .map_err(|e| CliError::input(format!("writing output: {e}")))?;
                continue;
            }
        };
        match &args.out {
            Some(prefix) => {
                let path = with_extension(prefix, ext);
                std::fs::write(&path, body)
                    .map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))?;
                let _ = writeln!(stdout, "wrote {}", path.display());
            }
            None => stdout
                .write_all(body.as_bytes())
                .map_err(|e| CliError::input(format!("writing output: {e}")))?,
        }
    }
    Ok(())
}

pub fn cmd_candidates(args: &CandidateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let sel = &args.selection;
    let doc = load_document(&sel.conllu)?;
    let filter = filter_for(sel);
    let mut out = String::new();
    if args.stats {
        let eligible = doc
            .iter_tokens()
            .filter(|(s, t)| filter.accepts(*s, t))
            .count();
        let _ = writeln!(out, "tokens\t{}", doc.token_count());
        let _ = writeln!(out, "eligible\t{eligible}");
        let rows = [
            ("singleton", CandidateMode::Singleton, 1),
            ("dependency_pair", CandidateMode::DependencyPair, 2),
            ("dependency_subtree", CandidateMode::DependencySubtree, sel.n),
            ("adjacent", CandidateMode::Adjacent, sel.n),
            ("exhaustive", CandidateMode::Exhaustive, sel.n),
        ];
        for (name, mode, n) in rows {
            let opts = GenerateOptions::new(mode, n).with_filter(filter.clone());
            match count_candidates(&doc, &opts) {
                Ok(count) => {
                    let _ = writeln!(out, "{name}\tn={n}\t{count}");
                }
                Err(_) => {
                    let _ = writeln!(out, "{name}\tn={n}\t-");
                }
            }
        }
    } else {
        let (mode, n) = resolve_mode(sel.mode, sel.n)?;
        let opts = GenerateOptions::new(mode, n)
            .with_filter(filter)
            .with_cap(sel.cap);
        let candidates = generate_candidates(&doc, &opts)?;
        for c in &candidates {
            let members: Vec<String> = c
                .members()
                .iter()
                .map(|r| {
                    let surface = doc
                        .token(r.sentence, r.token)
                        .map(|t| t.surface.as_str())
                        .unwrap_or("?");
                    format!("{r} {surface}")
                })
                .collect();
            let _ = writeln!(out, "{}", members.join("\t"));
        }
        let _ = writeln!(out, "# {} candidates ({mode}, n = {n})", candidates.len());
    }
    stdout
        .write_all(out.as_bytes())
        .map_err(|e| CliError::input(format!("writing output: {e}")))
}

pub fn cmd_serve_check(args: &ServeCheckArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = HttpConfig {
        timeout: Duration::from_secs(args.timeout.max(1)),
        ..HttpConfig::new(args.endpoint.clone())
    };
    let fail = |e: BackendError| CliError::new(EXIT_BACKEND, format!("protocol check failed: {e}"));
    let info = fetch_info(&config).map_err(fail)?;
    let client = HttpClassifier::connect(config, info.score_mode).map_err(fail)?;
    let probe = vec!["this is a protocol probe".to_string()];
    let reply = client.classify_batch(&probe).map_err(fail)?;
    let Some(first) = reply.first() else {
        return Err(CliError::new(EXIT_BACKEND, "protocol check failed: empty reply to probe"));
    };
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", info.model);
    let _ = writeln!(out, "labels: {}", info.labels.join(", "));
    let _ = writeln!(out, "score_mode: {}", info.score_mode);
    let _ = writeln!(out, "probe: predicted {} {:?}", first.predicted_label(), first.scores);
    stdout
        .write_all(out.as_bytes())
        .map_err(|e| CliError::input(format!("writing output: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_resolution() {
        assert_eq!(resolve_mode(ModeArg::Loo, 5).unwrap(), (CandidateMode::Singleton, 1));
        assert_eq!(resolve_mode(ModeArg::Lno, 2).unwrap(), (CandidateMode::DependencyPair, 2));
        assert_eq!(resolve_mode(ModeArg::Lno, 3).unwrap(), (CandidateMode::DependencySubtree, 3));
        assert_eq!(resolve_mode(ModeArg::Lno, 1).unwrap_err().code, EXIT_USAGE);
        assert_eq!(resolve_mode(ModeArg::Exhaustive, 0).unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn output_paths_append_extensions() {
        assert_eq!(
            with_extension(Path::new("out/report.v1"), "json"),
            PathBuf::from("out/report.v1.json")
        );
    }

    #[test]
    fn usage_errors_exit_one() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["lno", "explain"], &mut out, &mut err), EXIT_USAGE);
        assert_eq!(run(["lno", "bogus"], &mut out, &mut err), EXIT_USAGE);
        assert_eq!(run(["lno", "--help"], &mut out, &mut err), EXIT_OK);
    }
}

//! Command-line front end: type-check, normalize, evaluate, erase, and
//! compile query files, plus seeded property suites over the whole engine.
//!
//! Query files are plain text: optional `table NAME : TYPE` header lines
//! declaring the free table variables (TYPE is a set or bag type), followed
//! by one term. Diagnostics print as `ERR <code> at <line:col-line:col>:
//! <message>` on stderr; `--json` switches every event to one JSON record
//! per line. Exit codes: 0 success, 1 diagnostics, 2 usage.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use nrc::ast::{Term, TypeExpr};
use nrc::erase::erase_term;
use nrc::eval::{eval, Database};
use nrc::parse::{line_col, parse_term, parse_type, Parsed};
use nrc::pretty::{pretty, pretty_type};
use nrc::rewrite::{normalize, render_path, Strategy};
use nrc::sqlgen::{recognize, to_sql};
use nrc::suites::{run_suite, SuiteName};
use nrc::typing::{infer, Calculus, TypeEnv};

#[derive(Parser)]
#[command(name = "nrc", about = "Nested relational calculus compiler front end", version)]
struct Cli {
    /// Emit line-delimited JSON records instead of plain text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and type-check a query file, printing its type.
    Check { file: PathBuf },
    /// Rewrite a query to normal form.
    Normalize {
        file: PathBuf,
        /// Redex selection: `lo`, `random:SEED`, or `exhaustive`.
        #[arg(long, default_value = "lo", value_parser = parse_strategy)]
        strategy: Strategy,
        /// Maximum number of rewrite steps.
        #[arg(long, default_value_t = 1_000_000)]
        fuel: u64,
        /// Print every rewrite step before the result.
        #[arg(long)]
        trace: bool,
    },
    /// Evaluate a query against a JSON database.
    Eval {
        file: PathBuf,
        /// Database file: {"tables": {name: {"kind", "type", "rows"}}}.
        #[arg(long)]
        db: PathBuf,
    },
    /// Normalize a query and compile the result to SQL.
    Sql { file: PathBuf },
    /// Translate bag constructs onto the set calculus and print the result.
    Erase { file: PathBuf },
    /// Run a seeded property suite over generated inputs.
    Meta {
        /// One of: termination, erasure, classify, measures, semantics,
        /// flatness.
        #[arg(long, value_parser = parse_suite)]
        suite: SuiteName,
        /// Number of generated instances.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Base seed; instance i uses seed + i.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Size budget for generated terms.
        #[arg(long, default_value_t = 24)]
        size: usize,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s {
        "lo" => Ok(Strategy::LeftmostOutermost),
        "exhaustive" => Ok(Strategy::Exhaustive),
        _ => match s.strip_prefix("random:") {
            Some(seed) => seed
                .parse()
                .map(Strategy::Random)
                .map_err(|_| format!("invalid seed in `{s}`")),
            None => Err(format!("unknown strategy `{s}` (use lo, random:SEED, or exhaustive)")),
        },
    }
}

fn parse_suite(s: &str) -> Result<SuiteName, String> {
    SuiteName::parse(s).ok_or_else(|| {
        format!(
            "unknown suite `{s}` (use one of: {})",
            SuiteName::ALL.map(|n| n.as_str()).join(", ")
        )
    })
}

/// A one-line diagnostic: code, a source span when one exists, the pipeline
/// stage that failed, and the message.
struct Diagnostic {
    code: String,
    stage: Option<&'static str>,
    /// `(start-line, start-col, end-line, end-col)`, 1-based.
    span: Option<(usize, usize, usize, usize)>,
    message: String,
}

impl Diagnostic {
    fn new(code: impl Into<String>, message: impl Into<String>) -> Diagnostic {
        Diagnostic { code: code.into(), stage: None, span: None, message: message.into() }
    }

    fn staged(mut self, stage: &'static str) -> Diagnostic {
        self.stage = Some(stage);
        self
    }

    fn spanned(mut self, src: &str, start: usize, end: usize) -> Diagnostic {
        let (sl, sc) = line_col(src, start);
        let (el, ec) = line_col(src, end);
        self.span = Some((sl, sc, el, ec));
        self
    }

    fn emit(&self, json: bool) {
        if json {
            let span = self
                .span
                .map(|(sl, sc, el, ec)| json!({ "start": [sl, sc], "end": [el, ec] }));
            eprintln!(
                "{}",
                json!({
                    "event": "error",
                    "code": self.code,
                    "stage": self.stage,
                    "span": span,
                    "message": self.message,
                })
            );
        } else {
            let at = match self.span {
                Some((sl, sc, el, ec)) => format!("{sl}:{sc}-{el}:{ec}"),
                None => "?".to_string(),
            };
            let msg = match self.stage {
                Some(stage) => format!("{stage}: {}", self.message),
                None => self.message.clone(),
            };
            eprintln!("ERR {} at {at}: {msg}", self.code);
        }
    }
}

/// A loaded query file: the tables it declares, the parsed term, and enough
/// source bookkeeping to turn term paths back into file positions.
struct QueryFile {
    env: TypeEnv,
    parsed: Parsed,
    /// Byte offset of the term within the file.
    offset: usize,
    src: String,
}

impl QueryFile {
    fn term(&self) -> &Term {
        &self.parsed.term
    }

    /// Diagnostic span for the subterm at `path`.
    fn span_of(&self, d: Diagnostic, path: &[usize]) -> Diagnostic {
        let (s, e) = self.parsed.spans.at(path);
        d.spanned(&self.src, self.offset + s, self.offset + e)
    }

    fn check(&self) -> Result<TypeExpr, Diagnostic> {
        infer(&self.env, self.term()).map_err(|e| {
            self.span_of(Diagnostic::new(e.kind.code(), e.to_string()), &e.path)
        })
    }
}

fn load_query(path: &Path) -> Result<QueryFile, Diagnostic> {
    let src = fs::read_to_string(path)
        .map_err(|e| Diagnostic::new("Io", format!("cannot read {}: {e}", path.display())))?;
    let mut env = TypeEnv::new(Calculus::SetBag);
    let mut pos = 0usize;
    let mut term_start = None;
    for line in src.split_inclusive('\n') {
        let trimmed = line.trim();
        let line_span =
            |d: Diagnostic| d.spanned(&src, pos, pos + line.trim_end().len().max(1));
        if trimmed.is_empty() {
            pos += line.len();
            continue;
        }
        let Some(rest) = trimmed.strip_prefix("table ") else {
            term_start = Some(pos + (line.len() - line.trim_start().len()));
            break;
        };
        let Some((name, ty_src)) = rest.split_once(':') else {
            return Err(line_span(Diagnostic::new(
                "TableDecl",
                "table declarations look like `table NAME : TYPE`",
            )));
        };
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(line_span(Diagnostic::new(
                "TableDecl",
                format!("invalid table name `{name}`"),
            )));
        }
        let ty = parse_type(ty_src.trim()).map_err(|e| {
            line_span(Diagnostic::new("Parse", format!("in the type of table {name}: {e}")))
        })?;
        if !matches!(ty, TypeExpr::Coll(..)) {
            return Err(line_span(Diagnostic::new(
                "TableDecl",
                format!("table {name} must have a set or bag type, found `{ty}`"),
            )));
        }
        env = env.with_var(name, ty);
        pos += line.len();
    }
    let Some(offset) = term_start else {
        return Err(Diagnostic::new("Parse", "the file declares tables but contains no query")
            .spanned(&src, src.len(), src.len()));
    };
    let parsed = parse_term(&src[offset..]).map_err(|e| {
        Diagnostic::new("Parse", e.msg.clone()).spanned(&src, offset + e.at, offset + e.at + 1)
    })?;
    Ok(QueryFile { env, parsed, offset, src })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    let run = match &cli.cmd {
        Cmd::Check { file } => cmd_check(file, json),
        Cmd::Normalize { file, strategy, fuel, trace } => {
            cmd_normalize(file, *strategy, *fuel, *trace, json)
        }
        Cmd::Eval { file, db } => cmd_eval(file, db, json),
        Cmd::Sql { file } => cmd_sql(file, json),
        Cmd::Erase { file } => cmd_erase(file, json),
        Cmd::Meta { suite, n, seed, size } => return cmd_meta(*suite, *n, *seed, *size, json),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(d) => {
            d.emit(json);
            ExitCode::FAILURE
        }
    }
}

fn cmd_check(file: &Path, json: bool) -> Result<(), Diagnostic> {
    let q = load_query(file)?;
    let ty = q.check()?;
    if json {
        println!("{}", json!({ "event": "type", "type": pretty_type(&ty) }));
    } else {
        println!("{}", pretty_type(&ty));
    }
    Ok(())
}

fn cmd_normalize(
    file: &Path,
    strategy: Strategy,
    fuel: u64,
    trace: bool,
    json: bool,
) -> Result<(), Diagnostic> {
    let q = load_query(file)?;
    q.check()?;
    let run = normalize(&q.env, q.term(), strategy, fuel)
        .map_err(|e| q.span_of(Diagnostic::new("FuelExhausted", e.to_string()), &[]))?;
    if trace {
        for (i, s) in run.trace.iter().enumerate() {
            if json {
                println!(
                    "{}",
                    json!({
                        "event": "step",
                        "index": i + 1,
                        "rule": s.rule.as_str(),
                        "path": render_path(&s.position),
                        "term": pretty(&s.after),
                    })
                );
            } else {
                println!("{} {} @ {} :: {}", i + 1, s.rule, render_path(&s.position), s.after);
            }
        }
    }
    let results: Vec<&Term> = match strategy {
        Strategy::Exhaustive => run.normal_forms.iter().collect(),
        _ => vec![&run.term],
    };
    for t in results {
        if json {
            println!("{}", json!({ "event": "result", "term": pretty(t) }));
        } else {
            println!("{}", pretty(t));
        }
    }
    Ok(())
}

fn cmd_eval(file: &Path, db_path: &Path, json: bool) -> Result<(), Diagnostic> {
    let q = load_query(file)?;
    let db_src = fs::read_to_string(db_path).map_err(|e| {
        Diagnostic::new("Io", format!("cannot read {}: {e}", db_path.display()))
    })?;
    let db = Database::from_json(&db_src)
        .map_err(|e| Diagnostic::new("Database", e.to_string()))?;
    // The database is the world the query runs against: its schema, not the
    // file's table header, provides the typing environment here.
    let mut env = TypeEnv::new(Calculus::SetBag);
    for (name, ty) in db.type_entries() {
        env = env.with_var(name, ty);
    }
    infer(&env, q.term())
        .map_err(|e| q.span_of(Diagnostic::new(e.kind.code(), e.to_string()), &e.path))?;
    let value = eval(Calculus::SetBag, &db.value_env(), q.term())
        .map_err(|e| Diagnostic::new("Eval", e.to_string()))?;
    if json {
        println!("{}", json!({ "event": "value", "value": value.to_json() }));
    } else {
        println!("{}", value.to_json());
    }
    Ok(())
}

fn cmd_sql(file: &Path, json: bool) -> Result<(), Diagnostic> {
    let q = load_query(file).map_err(|d| d.staged("parse"))?;
    q.check().map_err(|d| d.staged("check"))?;
    let run = normalize(&q.env, q.term(), Strategy::LeftmostOutermost, 1_000_000)
        .map_err(|e| {
            q.span_of(Diagnostic::new("FuelExhausted", e.to_string()), &[]).staged("normalize")
        })?;
    let query = recognize(&q.env, &run.term).map_err(|e| {
        q.span_of(Diagnostic::new("NotTranslatable", e.to_string()), &[]).staged("recognize")
    })?;
    let sql = to_sql(&query);
    if json {
        println!("{}", json!({ "event": "sql", "query": sql }));
    } else {
        println!("{sql}");
    }
    Ok(())
}

fn cmd_erase(file: &Path, json: bool) -> Result<(), Diagnostic> {
    let q = load_query(file)?;
    q.check()?;
    let erased = erase_term(q.term());
    if json {
        println!("{}", json!({ "event": "result", "term": pretty(&erased) }));
    } else {
        println!("{}", pretty(&erased));
    }
    Ok(())
}

fn cmd_meta(suite: SuiteName, n: usize, seed: u64, size: usize, json: bool) -> ExitCode {
    let report = run_suite(suite, n, seed, size);
    if json {
        for (i, c) in report.cases.iter().enumerate() {
            println!(
                "{}",
                json!({
                    "event": "case",
                    "suite": suite.as_str(),
                    "index": i + 1,
                    "label": c.label,
                    "ok": c.pass,
                    "detail": c.detail,
                })
            );
        }
        println!(
            "{}",
            json!({
                "event": "summary",
                "suite": suite.as_str(),
                "passed": report.cases.len() - report.failures(),
                "failed": report.failures(),
                "counters": report.counters,
            })
        );
    } else {
        println!("1..{}", report.cases.len());
        for (i, c) in report.cases.iter().enumerate() {
            if c.pass {
                println!("ok {} - {}", i + 1, c.label);
            } else {
                println!(
                    "not ok {} - {}: {}",
                    i + 1,
                    c.label,
                    c.detail.as_deref().unwrap_or("failed")
                );
            }
        }
        let counters: Vec<String> =
            report.counters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("# counters: {}", counters.join(" "));
    }
    if report.failures() == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

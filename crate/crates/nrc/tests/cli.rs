//! End-to-end tests of the `nrc` binary: every subcommand, both output
//! modes, and the exit-code contract (0 success, 1 diagnostics, 2 usage).

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nrc"))
}

/// Repo-relative path to a sample query file.
fn sample(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../queries").join(name)
}

fn run(args: &[&str]) -> Output {
    let mut cmd = bin();
    for a in args {
        if let Some(name) = a.strip_prefix('@') {
            cmd.arg(sample(name));
        } else {
            cmd.arg(a);
        }
    }
    cmd.output().expect("spawn nrc")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

#[test]
fn check_prints_the_inferred_type() {
    let out = run(&["check", "@flatten.nrc"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), "{Int}\n");
}

#[test]
fn check_rejects_an_ill_typed_query_with_a_located_diagnostic() {
    let out = run(&["check", "@illtyped.nrc"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout(&out), "");
    let err = stderr(&out);
    assert!(
        err.starts_with("ERR NotACollection at 3:"),
        "unexpected diagnostic: {err}"
    );
    // The span is line:col-line:col within the query file, pointing at the
    // comprehension source on the line after the table header.
    assert!(err.contains("3:11-3:12"), "span missing: {err}");
}

#[test]
fn normalize_flattens_the_nested_comprehension() {
    let out = run(&["normalize", "@flatten.nrc"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), "for (x <- t) {x.id}\n");
}

#[test]
fn normalize_trace_lists_numbered_steps_before_the_result() {
    let out = run(&["normalize", "@flatten.nrc", "--trace"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "expected two steps plus the result: {text}");
    assert_eq!(lines[0], "1 comp-assoc @ ε :: for (x <- t) for (y <- {{x.id}}) y");
    assert_eq!(lines[1], "2 comp-singleton @ 0 :: for (x <- t) {x.id}");
    assert_eq!(lines[2], "for (x <- t) {x.id}");
}

#[test]
fn all_strategies_reach_the_same_normal_form_here() {
    for strategy in ["lo", "random:7", "random:8", "exhaustive"] {
        let out = run(&["normalize", "@flatten.nrc", "--strategy", strategy]);
        assert!(out.status.success(), "strategy {strategy}");
        assert_eq!(stdout(&out), "for (x <- t) {x.id}\n", "strategy {strategy}");
    }
}

#[test]
fn normalize_reports_fuel_exhaustion_as_a_diagnostic() {
    let out = run(&["normalize", "@flatten.nrc", "--fuel", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ERR FuelExhausted at "), "got: {}", stderr(&out));
}

#[test]
fn sql_emits_one_select_line_for_the_record_headed_query() {
    let out = run(&["sql", "@flatten_record.nrc"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1, "expected a single line: {text}");
    assert_eq!(text, "SELECT x.id AS id FROM t AS x\n");
}

#[test]
fn sql_compiles_the_mixed_query_with_distinct_for_dedup() {
    let out = run(&["sql", "@mixed.nrc"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("SELECT "), "got: {text}");
    assert!(text.contains("DISTINCT"), "dedup should surface as DISTINCT: {text}");
}

#[test]
fn sql_failures_name_the_stage_that_failed() {
    let dir = std::env::temp_dir().join("nrc-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let lam = dir.join("lam.nrc");
    std::fs::write(&lam, "\\x : Int. x\n").unwrap();
    let out = bin().args(["sql"]).arg(&lam).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("ERR NotTranslatable"), "got: {err}");
    assert!(err.contains("recognize:"), "stage name missing: {err}");

    let bad = dir.join("bad.nrc");
    std::fs::write(&bad, "for (x <- ) {x}\n").unwrap();
    let out = bin().args(["sql"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("parse:"), "got: {}", stderr(&out));

    let out = bin().args(["sql"]).arg(sample("illtyped.nrc")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("check:"), "got: {}", stderr(&out));
}

#[test]
fn eval_runs_the_query_against_the_json_database() {
    let out = run(&["eval", "@flatten.nrc", "--db", "@db.json"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), "[1,2,3]\n");

    let out = run(&["eval", "@mixed.nrc", "--db", "@db.json"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), "[{\"id\":1},{\"id\":3}]\n");
}

#[test]
fn eval_preserves_bag_multiplicities() {
    let dir = std::env::temp_dir().join("nrc-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let q = dir.join("bagq.nrc");
    std::fs::write(&q, "bagfor (o <- orders) {|o.qty|}\n").unwrap();
    let out = bin().args(["eval"]).arg(&q).arg("--db").arg(sample("db.json")).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), "[1,2,2,5]\n");
}

#[test]
fn eval_types_the_query_against_the_database_schema() {
    // The database, not the file's table header, is the world the query
    // runs against; a table it does not define is an unbound variable.
    let dir = std::env::temp_dir().join("nrc-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let db = dir.join("empty-db.json");
    std::fs::write(&db, "{\"tables\": {}}\n").unwrap();
    let out =
        bin().args(["eval"]).arg(sample("flatten.nrc")).arg("--db").arg(&db).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).starts_with("ERR UnboundVariable"),
        "got: {}",
        stderr(&out)
    );
}

#[test]
fn erase_maps_bag_constructs_onto_the_set_calculus() {
    let out = run(&["erase", "@mixed.nrc"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(
        stdout(&out),
        "dedup (for (o <- orders) where o.qty <= 2 do {<id = o.id>})\n"
    );
}

#[test]
fn meta_prints_tap_style_lines_and_counters() {
    let out = run(&["meta", "--suite", "measures", "--n", "3", "--seed", "5", "--size", "10"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "1..3");
    assert_eq!(lines[1], "ok 1 - measures seed=5");
    assert_eq!(lines[2], "ok 2 - measures seed=6");
    assert_eq!(lines[3], "ok 3 - measures seed=7");
    assert!(lines[4].starts_with("# counters: "), "got: {}", lines[4]);
}

#[test]
fn meta_runs_every_suite_at_smoke_scale() {
    for suite in ["termination", "erasure", "classify", "measures", "semantics", "flatness"] {
        let out = run(&["meta", "--suite", suite, "--n", "2", "--seed", "11", "--size", "12"]);
        assert!(
            out.status.success(),
            "suite {suite} failed:\n{}\n{}",
            stdout(&out),
            stderr(&out)
        );
        assert!(stdout(&out).starts_with("1..2"), "suite {suite}");
    }
}

#[test]
fn json_mode_emits_one_parseable_record_per_event() {
    let out = run(&["--json", "normalize", "@flatten.nrc", "--trace"]);
    assert!(out.status.success());
    let events: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).expect("each line parses as JSON"))
        .collect();
    assert_eq!(events.len(), 3);
    assert_eq!(events[0]["event"], "step");
    assert_eq!(events[0]["rule"], "comp-assoc");
    assert_eq!(events[1]["path"], "0");
    assert_eq!(events[2]["event"], "result");
    assert_eq!(events[2]["term"], "for (x <- t) {x.id}");

    let out = run(&["--json", "check", "@illtyped.nrc"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(err["event"], "error");
    assert_eq!(err["code"], "NotACollection");
    assert_eq!(err["span"]["start"], serde_json::json!([3, 11]));

    let out = run(&["--json", "meta", "--suite", "flatness", "--n", "2", "--seed", "3"]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> =
        stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["event"], "case");
    assert_eq!(lines[2]["event"], "summary");
    assert_eq!(lines[2]["failed"], 0);
}

#[test]
fn usage_errors_exit_with_code_two() {
    let out = run(&["normalize", "@flatten.nrc", "--strategy", "bogus"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["meta", "--suite", "nonsense", "--n", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_are_io_diagnostics_not_panics() {
    let out = run(&["check", "@does-not-exist.nrc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ERR Io"), "got: {}", stderr(&out));
}

#[test]
fn a_file_with_only_table_declarations_is_rejected() {
    let dir = std::env::temp_dir().join("nrc-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("tables-only.nrc");
    std::fs::write(&f, "table t : {<id : Int>}\n").unwrap();
    let out = bin().args(["check"]).arg(&f).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("contains no query"), "got: {}", stderr(&out));
}

#[test]
fn table_declarations_must_be_collection_typed() {
    let dir = std::env::temp_dir().join("nrc-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("scalar-table.nrc");
    std::fs::write(&f, "table t : Int\n\nt\n").unwrap();
    let out = bin().args(["check"]).arg(&f).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ERR TableDecl"), "got: {}", stderr(&out));
}

#[test]
fn exhaustive_normalization_lists_every_distinct_normal_form() {
    let out = run(&["normalize", "@mixed.nrc", "--strategy", "exhaustive"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(!text.is_empty());
    // All printed forms are distinct.
    let lines: Vec<&str> = text.lines().collect();
    let mut dedup = lines.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), lines.len(), "duplicate normal forms: {text}");
}

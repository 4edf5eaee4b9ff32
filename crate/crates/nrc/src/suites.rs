//! Seeded property suites over the generators. Each suite draws random
//! instances and checks one family of engine guarantees — termination,
//! type preservation, erasure simulation, step classification, measure
//! monotonicity, evaluation agreement, SQL-translatable normal forms —
//! producing one pass/fail outcome per instance. Everything is
//! deterministic in `(seed, n)`, so any failure replays from its label.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::ast::{CollKind, Term, TypeExpr};
use crate::erase::{erase_env, erase_term, erase_type, erased_tag};
use crate::eval::eval;
use crate::gen::{
    gen_classify_config, gen_continuation, gen_db, gen_frame, gen_query, gen_schema,
    gen_well_typed, schema_env, Fragment, GenConfig,
};
use crate::meta::{
    classify, compose, instantiate, is_continuation, maxred_map, maxred_renaming_map,
    measure_len, measure_sz, renaming_steps, Classification, Frame,
};
use crate::pretty::pretty;
use crate::rewrite::{is_normal, normalize, render_path, step_all, Step, Strategy};
use crate::sqlgen::recognize;
use crate::typing::{infer, Calculus, TypeEnv};

/// Step budget used by every suite normalization.
pub const SUITE_FUEL: u64 = 1_000_000;
/// Largest reduction graph a longest-path check will walk.
pub const MAXRED_GRAPH_BOUND: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteName {
    Termination,
    Erasure,
    Classify,
    Measures,
    Semantics,
    Flatness,
}

impl SuiteName {
    pub const ALL: [SuiteName; 6] = [
        SuiteName::Termination,
        SuiteName::Erasure,
        SuiteName::Classify,
        SuiteName::Measures,
        SuiteName::Semantics,
        SuiteName::Flatness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Termination => "termination",
            SuiteName::Erasure => "erasure",
            SuiteName::Classify => "classify",
            SuiteName::Measures => "measures",
            SuiteName::Semantics => "semantics",
            SuiteName::Flatness => "flatness",
        }
    }

    pub fn parse(s: &str) -> Option<SuiteName> {
        SuiteName::ALL.iter().copied().find(|n| n.as_str() == s)
    }
}

/// One generated instance's verdict, with counters for coverage reporting.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub label: String,
    pub pass: bool,
    pub detail: Option<String>,
    pub counters: BTreeMap<String, u64>,
}

impl CaseOutcome {
    fn pass(label: impl Into<String>) -> CaseOutcome {
        CaseOutcome { label: label.into(), pass: true, detail: None, counters: BTreeMap::new() }
    }

    fn fail(label: impl Into<String>, detail: impl Into<String>) -> CaseOutcome {
        CaseOutcome {
            label: label.into(),
            pass: false,
            detail: Some(detail.into()),
            counters: BTreeMap::new(),
        }
    }

    fn count(&mut self, key: &str, by: u64) {
        *self.counters.entry(key.to_string()).or_insert(0) += by;
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: SuiteName,
    pub cases: Vec<CaseOutcome>,
    /// Sum of each case's counters.
    pub counters: BTreeMap<String, u64>,
}

impl SuiteReport {
    pub fn failures(&self) -> usize {
        self.cases.iter().filter(|c| !c.pass).count()
    }

    pub fn counter(&self, key: &str) -> u64 {
        self.counters.get(key).copied().unwrap_or(0)
    }
}

/// Runs `n` instances of a suite, fanning out over `seed, seed+1, …`.
pub fn run_suite(suite: SuiteName, n: usize, seed: u64, max_size: usize) -> SuiteReport {
    let mut cases = Vec::with_capacity(n);
    for i in 0..n {
        let s = seed.wrapping_add(i as u64);
        let case = match suite {
            SuiteName::Termination => termination_case(s, max_size),
            SuiteName::Erasure => erasure_case(s, max_size),
            SuiteName::Classify => classify_case(s),
            SuiteName::Measures => {
                let mut a = frame_growth_case(s, max_size);
                let b = maxred_case(s, max_size.min(12));
                a.pass = a.pass && b.pass;
                if let Some(d) = b.detail {
                    a.detail = Some(match a.detail {
                        Some(prev) => format!("{prev}; {d}"),
                        None => d,
                    });
                }
                for (k, v) in b.counters {
                    *a.counters.entry(k).or_insert(0) += v;
                }
                a
            }
            SuiteName::Semantics => semantics_case(s, max_size),
            SuiteName::Flatness => flatness_case(s, max_size),
        };
        cases.push(case);
    }
    let mut counters = BTreeMap::new();
    for c in &cases {
        for (k, v) in &c.counters {
            *counters.entry(k.clone()).or_insert(0) += v;
        }
    }
    SuiteReport { suite, cases, counters }
}

fn type_preserved(env: &TypeEnv, step: &Step) -> Result<(), String> {
    let before = infer(env, &step.before)
        .map_err(|e| format!("pre-step term stopped type-checking: {e}"))?;
    let after = infer(env, &step.after)
        .map_err(|e| format!("step {} broke typing: {e}", step.rule.as_str()))?;
    if before == after {
        Ok(())
    } else {
        Err(format!(
            "step {} at {} changed the type",
            step.rule.as_str(),
            render_path(&step.position)
        ))
    }
}

/// One strong-normalization + subject-reduction instance: a heterogeneous
/// term normalizes under leftmost-outermost and one random strategy without
/// exhausting fuel, and every step along both traces preserves the type.
pub fn termination_case(seed: u64, max_size: usize) -> CaseOutcome {
    let cfg = GenConfig { max_size, ..GenConfig::new(seed, Fragment::Heterogeneous) };
    let label = format!("termination seed={seed}");
    let t = match gen_well_typed(&cfg) {
        Ok(t) => t,
        Err(e) => return CaseOutcome::fail(label, e.to_string()),
    };
    let mut out = CaseOutcome::pass(label);
    for strategy in [Strategy::LeftmostOutermost, Strategy::Random(seed ^ 0x5eed_cafe)] {
        let run = match normalize(&cfg.table_env, &t.term, strategy, SUITE_FUEL) {
            Ok(run) => run,
            Err(e) => {
                return CaseOutcome::fail(out.label, format!("{strategy:?}: {e}"));
            }
        };
        for step in &run.trace {
            if let Err(d) = type_preserved(&cfg.table_env, step) {
                return CaseOutcome::fail(out.label, d);
            }
        }
        out.count("steps", run.trace.len() as u64);
    }
    out
}

/// One erasure-simulation instance: the erased term type-checks at the
/// erased type, and every enumerated step of the term (and of each term
/// along its normalization) maps to the corresponding set-calculus step at
/// the same position.
pub fn erasure_case(seed: u64, max_size: usize) -> CaseOutcome {
    let cfg = GenConfig { max_size, ..GenConfig::new(seed, Fragment::Heterogeneous) };
    let label = format!("erasure seed={seed}");
    let t = match gen_well_typed(&cfg) {
        Ok(t) => t,
        Err(e) => return CaseOutcome::fail(label, e.to_string()),
    };
    let env = &cfg.table_env;
    let eenv = erase_env(env);
    match infer(&eenv, &erase_term(&t.term)) {
        Ok(ty) if ty == erase_type(&t.ty) => {}
        Ok(ty) => {
            return CaseOutcome::fail(
                label,
                format!(
                    "erased term has type {} instead of {}",
                    crate::pretty::pretty_type(&ty),
                    crate::pretty::pretty_type(&erase_type(&t.ty))
                ),
            );
        }
        Err(e) => return CaseOutcome::fail(label, format!("erased term is ill-typed: {e}")),
    }
    let mut out = CaseOutcome::pass(label);
    // Every step enumerable from the generated term itself…
    let mut to_check: Vec<Step> = step_all(env, &t.term);
    // …plus each step the leftmost-outermost strategy actually takes, which
    // samples simulation deeper into the reduction.
    match normalize(env, &t.term, Strategy::LeftmostOutermost, SUITE_FUEL) {
        Ok(run) => to_check.extend(run.trace),
        Err(e) => return CaseOutcome::fail(out.label, e.to_string()),
    }
    for step in &to_check {
        if let Err(d) = simulates(&eenv, step) {
            return CaseOutcome::fail(out.label, d);
        }
    }
    out.count("steps", to_check.len() as u64);
    out
}

/// Checks that the erasure of `step` is itself a single step of the erased
/// calculus: same position, the erased rule, and the erased reduct.
fn simulates(eenv: &TypeEnv, step: &Step) -> Result<(), String> {
    let eb = erase_term(&step.before);
    let ea = erase_term(&step.after);
    let want = erased_tag(step.rule);
    let candidates = step_all(eenv, &eb);
    if candidates
        .iter()
        .any(|c| c.position == step.position && c.rule == want && c.after.alpha_eq(&ea))
    {
        Ok(())
    } else {
        Err(format!(
            "step {} at {} does not erase to a {} step there",
            step.rule.as_str(),
            render_path(&step.position),
            want.as_str()
        ))
    }
}

/// One classification instance: for a permutable instantiation of an
/// auxiliary continuation, every single-step reduct of the instantiated
/// term classifies into exactly one case whose witnesses reconstruct it
/// (the classifier verifies the witness equations before answering), and
/// the singleton-collapse case never fires on a regular continuation.
pub fn classify_case(seed: u64) -> CaseOutcome {
    let (env, q, eta) = gen_classify_config(seed);
    let label = format!("classify seed={seed}");
    let m = instantiate(&q, &eta);
    let regular = is_continuation(&q);
    let mut out = CaseOutcome::pass(label);
    for step in step_all(&env, &m) {
        match classify(&env, &q, &eta, &step) {
            Err(e) => {
                return CaseOutcome::fail(
                    out.label,
                    format!(
                        "{} at {}: {e}",
                        step.rule.as_str(),
                        render_path(&step.position)
                    ),
                );
            }
            Ok(c) => {
                let key = match &c {
                    Classification::ContinuationReduction { .. } => "continuation-steps",
                    Classification::SpecialReduction { .. } => "special-steps",
                    Classification::WithinEta { .. } => "payload-steps",
                    Classification::AtInterface { .. } => "interface-steps",
                };
                if regular && matches!(c, Classification::SpecialReduction { .. }) {
                    return CaseOutcome::fail(
                        out.label,
                        "singleton-collapse case on a regular continuation".to_string(),
                    );
                }
                out.count(key, 1);
                out.count("reducts", 1);
            }
        }
    }
    out
}

/// One measure-monotonicity instance: composing a frame onto a hole
/// strictly grows the subterm-counting measure, and strictly grows the
/// nesting measure except under a comprehension frame whose hole is the
/// head, where it stays equal.
pub fn frame_growth_case(seed: u64, max_size: usize) -> CaseOutcome {
    use rand::prelude::*;
    let label = format!("measures seed={seed}");
    let k = gen_continuation(seed, true, max_size.clamp(4, 14));
    let holes: Vec<_> = k.term.holes().into_iter().collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x00f0_00f0);
    let p = holes[rng.gen_range(0..holes.len())].clone();
    let frame = gen_frame(seed ^ 0x0f0f_0f0f);
    let composed = match compose(&k.term, &p, &frame) {
        Ok(c) => c,
        Err(e) => return CaseOutcome::fail(label, format!("compose: {e}")),
    };
    let measures = (|| -> Result<(u64, u64, u64, u64), crate::meta::MetaError> {
        Ok((
            measure_sz(&k.term, &p)?,
            measure_sz(&composed, &p)?,
            measure_len(&k.term, &p)?,
            measure_len(&composed, &p)?,
        ))
    })();
    let (sz0, sz1, len0, len1) = match measures {
        Ok(m) => m,
        Err(e) => return CaseOutcome::fail(label, e.to_string()),
    };
    if sz0 >= sz1 {
        return CaseOutcome::fail(label, format!("size measure did not grow: {sz0} → {sz1}"));
    }
    let mut out = CaseOutcome::pass(label);
    if matches!(frame, Frame::CompHeadHole { .. }) {
        if len0 != len1 {
            return CaseOutcome::fail(
                out.label,
                format!("nesting measure changed under a head frame: {len0} → {len1}"),
            );
        }
        out.count("head-frames", 1);
    } else {
        if len0 >= len1 {
            return CaseOutcome::fail(
                out.label,
                format!("nesting measure did not grow: {len0} → {len1}"),
            );
        }
        out.count("strict-frames", 1);
    }
    out
}

/// One longest-path monotonicity instance: over a term whose reduction
/// graph stays within [`MAXRED_GRAPH_BOUND`] nodes, the longest-reduction
/// measure strictly decreases along every edge — under plain reduction and
/// under renaming reduction alike.
pub fn maxred_case(seed: u64, max_size: usize) -> CaseOutcome {
    let label = format!("maxred seed={seed}");
    for attempt in 0u64..16 {
        let sub = seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        // Alternate closed terms (plain reduction is the interesting graph)
        // with holed continuations (renaming reduction differs from plain),
        // shrinking candidates until the graph fits the bound.
        let size = max_size.clamp(4, 12).saturating_sub(attempt as usize / 2).max(4);
        let (env, term) = if (seed + attempt) % 2 == 0 {
            let cfg = GenConfig { max_size: size, ..GenConfig::new(sub, Fragment::Heterogeneous) };
            match gen_well_typed(&cfg) {
                Ok(t) => (cfg.table_env, t.term),
                Err(_) => continue,
            }
        } else {
            let k = gen_continuation(sub, true, size.min(8));
            (k.env, k.term)
        };
        let plain = |env: &TypeEnv, t: &Term| -> Vec<Term> {
            step_all(env, t).into_iter().map(|s| s.after).collect()
        };
        let renaming = |env: &TypeEnv, t: &Term| -> Vec<Term> {
            renaming_steps(env, t, &BTreeSet::new()).into_iter().map(|(n, _, _)| n).collect()
        };
        let mut checked_edges = 0u64;
        let mut ok = true;
        for (mode, tag) in [(MaxredMode::Plain, "plain"), (MaxredMode::Renaming, "renaming")] {
            let ranks = match mode {
                MaxredMode::Plain => maxred_map(&env, &term, MAXRED_GRAPH_BOUND),
                MaxredMode::Renaming => maxred_renaming_map(&env, &term, MAXRED_GRAPH_BOUND),
            };
            let ranks = match ranks {
                Ok(r) => r,
                Err(crate::meta::MetaError::CapExceeded { .. }) => {
                    // Graph too large for this candidate: try the next one.
                    ok = false;
                    break;
                }
                Err(e) => return CaseOutcome::fail(label, format!("{tag} reduction: {e}")),
            };
            let succ: &dyn Fn(&TypeEnv, &Term) -> Vec<Term> = match mode {
                MaxredMode::Plain => &plain,
                MaxredMode::Renaming => &renaming,
            };
            match check_edges(&env, &term, succ, &ranks) {
                Ok(edges) => checked_edges += edges,
                Err(d) => return CaseOutcome::fail(label, format!("{tag} reduction: {d}")),
            }
        }
        if ok {
            let mut out = CaseOutcome::pass(label);
            out.count("edges", checked_edges);
            return out;
        }
    }
    CaseOutcome::fail(label, "no candidate term had a small enough reduction graph")
}

#[derive(Clone, Copy)]
enum MaxredMode {
    Plain,
    Renaming,
}

/// Walks the reduction graph under `succ` and verifies the longest-path
/// rank strictly decreases along every edge. `ranks` holds the rank of
/// every reachable node, keyed by canonical form.
fn check_edges(
    env: &TypeEnv,
    root: &Term,
    succ: &dyn Fn(&TypeEnv, &Term) -> Vec<Term>,
    ranks: &BTreeMap<Term, u64>,
) -> Result<u64, String> {
    let rank_of = |t: &Term| {
        ranks
            .get(&t.canon(true))
            .copied()
            .ok_or_else(|| format!("no recorded longest path for {}", pretty(t)))
    };
    let mut seen: BTreeSet<Term> = BTreeSet::new();
    let mut queue: VecDeque<Term> = VecDeque::new();
    let mut edges = 0u64;
    seen.insert(root.canon(true));
    queue.push_back(root.clone());
    while let Some(t) = queue.pop_front() {
        let here = rank_of(&t)?;
        for next in succ(env, &t) {
            let there = rank_of(&next)?;
            if here <= there {
                return Err(format!(
                    "edge does not decrease the longest path ({here} → {there}) from {}",
                    pretty(&t)
                ));
            }
            edges += 1;
            if seen.insert(next.canon(true)) {
                queue.push_back(next);
            }
        }
    }
    Ok(edges)
}

/// One evaluation-agreement instance: a generated relation query evaluates
/// to the same value before and after normalization, on three random
/// databases over its schema.
pub fn semantics_case(seed: u64, max_size: usize) -> CaseOutcome {
    let label = format!("semantics seed={seed}");
    let schema = gen_schema(seed);
    let env = schema_env(&schema);
    let q = gen_query(&env, seed ^ 0x0051_0051, max_size.clamp(8, 24));
    let mut out = CaseOutcome::pass(label);
    match &q.ty {
        TypeExpr::Coll(CollKind::Set, _) => out.count("set-queries", 1),
        TypeExpr::Coll(CollKind::Bag, _) => out.count("bag-queries", 1),
        _ => {}
    }
    let nf = match normalize(&env, &q.term, Strategy::LeftmostOutermost, SUITE_FUEL) {
        Ok(run) => run.term,
        Err(e) => return CaseOutcome::fail(out.label, e.to_string()),
    };
    for k in 0..3u64 {
        let db = gen_db(seed.wrapping_mul(3).wrapping_add(k), &schema);
        let venv = db.value_env();
        let before = eval(Calculus::SetBag, &venv, &q.term);
        let after = eval(Calculus::SetBag, &venv, &nf);
        match (before, after) {
            (Ok(a), Ok(b)) if a == b => out.count("db-checks", 1),
            (Ok(_), Ok(_)) => {
                return CaseOutcome::fail(
                    out.label,
                    format!("db {k}: values diverged for {}", pretty(&q.term)),
                );
            }
            (Err(e), _) | (_, Err(e)) => {
                return CaseOutcome::fail(out.label, format!("db {k}: {e}"));
            }
        }
    }
    out
}

/// One conservativity instance: a generated relation query (free to use
/// higher-order and nested subterms internally) normalizes to a form the
/// SQL recognizer accepts.
pub fn flatness_case(seed: u64, max_size: usize) -> CaseOutcome {
    let label = format!("flatness seed={seed}");
    let schema = gen_schema(seed);
    let env = schema_env(&schema);
    let q = gen_query(&env, seed ^ 0x0f1a_0f1a, max_size.clamp(8, 24));
    let nf = match normalize(&env, &q.term, Strategy::LeftmostOutermost, SUITE_FUEL) {
        Ok(run) => run.term,
        Err(e) => return CaseOutcome::fail(label, e.to_string()),
    };
    if !is_normal(&env, &nf) {
        return CaseOutcome::fail(label, format!("not a normal form: {}", pretty(&nf)));
    }
    match recognize(&env, &nf) {
        Ok(_) => {
            let mut out = CaseOutcome::pass(label);
            out.count("translated", 1);
            out
        }
        Err(e) => CaseOutcome::fail(label, format!("{e} (from {})", pretty(&q.term))),
    }
}

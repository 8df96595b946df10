#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use todcsp::constraints::{AblationConfig, Constraint, ConstraintSet, Family, Filter, Payload};
use todcsp::corpus::read_json;
use todcsp::domain::{Instance, KnowledgeBase, Ontology};
use todcsp::model::{CspModel, VariableInfo};
use todcsp::eval::evaluate_dialogue;
use todcsp::solver::DEFAULT_CAP;
use todcsp::{
    best_match, check_consistency, count_solutions, delexicalize, enumerate_solutions, Assignment, Bucket, DelexDialogue,
    Dialogue, Value, VarId, VarKind, ViolationKind,
};

pub const FIXTURE_IDS: [&str; 3] = ["european", "food_and_price", "italian"];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn ontology() -> Ontology {
    read_json(&fixtures().join("ontology.json")).unwrap()
}

pub fn dialogue(id: &str) -> Dialogue {
    read_json(&fixtures().join("dialogues").join(format!("{id}.json"))).unwrap()
}

pub fn delex(id: &str) -> DelexDialogue {
    delexicalize(&dialogue(id)).unwrap()
}

pub fn kb(id: &str) -> KnowledgeBase {
    read_json(&fixtures().join("kbs").join(format!("{id}.json"))).unwrap()
}

pub fn assignment(id: &str) -> Assignment {
    read_json(&fixtures().join("assignments").join(format!("{id}.json"))).unwrap()
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap()
}

// ---------------------------------------------------------------------------
// brute-force oracle, written against the constraint definitions only

fn kb_matches(kb: &KnowledgeBase, filters: &[Filter], total: &BTreeMap<VarId, Value>) -> usize {
    kb.instances()
        .iter()
        .filter(|inst| {
            filters.iter().all(|f| match &total[&f.var] {
                Value::Text(t) => inst.attributes.get(&f.slot) == Some(t),
                Value::Count(_) => false,
            })
        })
        .count()
}

pub fn oracle_holds(model: &CspModel, c: &Constraint, total: &BTreeMap<VarId, Value>) -> bool {
    let vals: Vec<&Value> = c.scope.iter().map(|v| &total[v]).collect();
    match &c.payload {
        Payload::Membership => model.domain(c.scope[0]).contains(vals[0]),
        Payload::Equality => vals.iter().all(|v| *v == vals[0]),
        Payload::AllDifferent => {
            for i in 0..vals.len() {
                for j in i + 1..vals.len() {
                    if vals[i] == vals[j] {
                        return false;
                    }
                }
            }
            true
        }
        Payload::NoMatch { filters } => kb_matches(model.kb(), filters, total) == 0,
        Payload::SomeMatch { filters } => kb_matches(model.kb(), filters, total) > 0,
        Payload::ExactCount { count, filters } => {
            total[count] == Value::Count(kb_matches(model.kb(), filters, total) as u32)
        }
    }
}

/// Every solution, in lexicographic order over (variable id, value), by
/// exhaustive search over the product of the domains.
pub fn brute_force(model: &CspModel) -> Vec<BTreeMap<VarId, Value>> {
    let ids: Vec<VarId> = model.variables().iter().map(|v| v.id).collect();
    let mut out = Vec::new();
    let mut current = BTreeMap::new();
    fn rec(
        model: &CspModel,
        ids: &[VarId],
        k: usize,
        current: &mut BTreeMap<VarId, Value>,
        out: &mut Vec<BTreeMap<VarId, Value>>,
    ) {
        if k == ids.len() {
            if model.constraints().iter().all(|c| oracle_holds(model, c, current)) {
                out.push(current.clone());
            }
            return;
        }
        let mut dom = model.domain(ids[k]).to_vec();
        dom.sort();
        for v in dom {
            current.insert(ids[k], v);
            if !dead_end(model, ids[k], current) {
                rec(model, ids, k + 1, current, out);
            }
        }
        current.remove(&ids[k]);
    }
    rec(model, &ids, 0, &mut current, &mut out);
    out
}

pub fn agreement(sol: &BTreeMap<VarId, Value>, a: &Assignment) -> usize {
    sol.iter().filter(|(k, v)| a.get(**k) == Some(*v)).count()
}

// Constraints only read their scope, so one violated on a complete scope cannot
// be repaired deeper down. Equality and all-different are also violated as
// soon as two assigned members disagree or collide.
fn dead_end(model: &CspModel, var: VarId, current: &BTreeMap<VarId, Value>) -> bool {
    model.constraints().iter().filter(|c| c.scope.contains(&var)).any(|c| {
        if c.scope.iter().all(|x| current.contains_key(x)) {
            return !oracle_holds(model, c, current);
        }
        let others = c.scope.iter().filter(|x| **x != var).filter_map(|x| current.get(x));
        match c.payload {
            Payload::Equality => others.into_iter().any(|v| *v != current[&var]),
            Payload::AllDifferent => others.into_iter().any(|v| *v == current[&var]),
            _ => false,
        }
    })
}

// An exhaustive search first finds the maximum agreement, trying each
// variable's target value first; a lexicographic search then returns the first
// solution reaching it. Both only skip subtrees that cannot reach the score
// they look for.
fn search_best(model: &CspModel, a: &Assignment, with_solution: bool) -> Option<(usize, BTreeMap<VarId, Value>)> {
    struct Search<'a> {
        model: &'a CspModel,
        a: &'a Assignment,
        ids: Vec<VarId>,
        current: BTreeMap<VarId, Value>,
    }
    impl Search<'_> {
        fn values(&self, k: usize, target_first: bool) -> Vec<Value> {
            let mut dom = self.model.domain(self.ids[k]).to_vec();
            dom.sort();
            if let Some(t) = self.a.get(self.ids[k]).filter(|_| target_first) {
                if let Some(p) = dom.iter().position(|v| v == t) {
                    let t = dom.remove(p);
                    dom.insert(0, t);
                }
            }
            dom
        }

        fn maximum(&mut self, k: usize, agree: usize, best: &mut Option<usize>) {
            if best.is_some_and(|b| agree + (self.ids.len() - k) <= b) {
                return;
            }
            if k == self.ids.len() {
                *best = Some(agree);
                return;
            }
            let id = self.ids[k];
            for v in self.values(k, true) {
                let hit = usize::from(self.a.get(id) == Some(&v));
                self.current.insert(id, v);
                if !dead_end(self.model, id, &self.current) {
                    self.maximum(k + 1, agree + hit, best);
                }
            }
            self.current.remove(&id);
        }

        fn first_reaching(&mut self, k: usize, agree: usize, goal: usize) -> bool {
            if agree + (self.ids.len() - k) < goal {
                return false;
            }
            if k == self.ids.len() {
                return true;
            }
            let id = self.ids[k];
            for v in self.values(k, false) {
                let hit = usize::from(self.a.get(id) == Some(&v));
                self.current.insert(id, v);
                if !dead_end(self.model, id, &self.current) && self.first_reaching(k + 1, agree + hit, goal) {
                    return true;
                }
            }
            self.current.remove(&id);
            false
        }
    }

    let ids = model.variables().iter().map(|v| v.id).collect();
    let mut search = Search { model, a, ids, current: BTreeMap::new() };
    let mut best = None;
    search.maximum(0, 0, &mut best);
    let goal = best?;
    if !with_solution {
        return Some((goal, BTreeMap::new()));
    }
    search.current.clear();
    assert!(search.first_reaching(0, 0, goal));
    Some((goal, search.current))
}

/// Highest agreement with `a` over all solutions, `None` when there is none.
pub fn oracle_max(model: &CspModel, a: &Assignment) -> Option<usize> {
    search_best(model, a, false).map(|(score, _)| score)
}

/// [`oracle_max`] together with the first solution in lexicographic order
/// reaching it.
pub fn oracle_best(model: &CspModel, a: &Assignment) -> Option<(usize, BTreeMap<VarId, Value>)> {
    search_best(model, a, true)
}

/// Expected verdict: (consistent, indices of violated constraints, variables
/// flagged for holding a kb value when the model has no solution).
pub fn oracle_verdict(model: &CspModel, a: &Assignment, satisfiable: bool) -> (bool, Vec<usize>, Vec<VarId>) {
    let filled: BTreeMap<VarId, Value> = a.values.iter().filter_map(|(k, v)| Some((*k, v.clone()?))).collect();
    if !satisfiable {
        let in_kb: Vec<VarId> = model
            .variables()
            .iter()
            .filter(|v| v.kind == VarKind::Value)
            .filter(|v| match filled.get(&v.id) {
                Some(Value::Text(t)) => {
                    let slot = v.slot.as_deref().unwrap();
                    model.kb().instances().iter().any(|i| i.attributes.get(slot) == Some(t))
                }
                _ => false,
            })
            .map(|v| v.id)
            .collect();
        return (in_kb.is_empty(), vec![], in_kb);
    }
    let with_c1: Vec<VarId> = model
        .constraints()
        .iter()
        .filter(|c| matches!(c.payload, Payload::Membership))
        .map(|c| c.scope[0])
        .collect();
    let all_filled = model.variables().iter().all(|v| filled.contains_key(&v.id));
    let in_domain = model
        .variables()
        .iter()
        .filter(|v| !with_c1.contains(&v.id))
        .all(|v| filled.get(&v.id).is_none_or(|x| model.domain(v.id).contains(x)));
    let broken: Vec<usize> = model
        .constraints()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.scope.iter().all(|v| filled.contains_key(v)) && !oracle_holds(model, c, &filled))
        .map(|(k, _)| k)
        .collect();
    (all_filled && in_domain && broken.is_empty(), broken, vec![])
}

/// Expected (consistent, correct variables) for `a`.
pub fn oracle_score(model: &CspModel, a: &Assignment) -> (bool, usize) {
    let best = oracle_max(model, a);
    let (consistent, _, in_kb) = oracle_verdict(model, a, best.is_some());
    let correct = match best {
        Some(score) => score,
        None => model.variables().len() - in_kb.len(),
    };
    (consistent, correct)
}

// ---------------------------------------------------------------------------
// random small models

const SLOTS: [&str; 3] = ["food", "area", "price"];

fn pool(slot: &str) -> Vec<String> {
    (0..8).map(|i| format!("{slot}{i}")).collect()
}

pub struct RandomModel {
    pub model: CspModel,
    pub probe: Assignment,
}

/// A model with at most 6 variables, domains of at most 8 values, a kb of at
/// most 9 instances and a random mix of all six families.
pub fn random_model(seed: u64) -> RandomModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // small value pools per slot keep kb hits frequent
    let width = rng.gen_range(2..=8);
    let kb_size = rng.gen_range(0..=9);
    let instances: Vec<Instance> = (0..kb_size)
        .map(|i| {
            let mut attrs: Vec<(&str, String)> = Vec::new();
            for s in SLOTS {
                if rng.gen_bool(0.9) {
                    attrs.push((s, pool(s)[rng.gen_range(0..width)].clone()));
                }
            }
            Instance::new(format!("I{i}"), attrs)
        })
        .collect();
    let kb = KnowledgeBase::new(instances).unwrap();

    let n = rng.gen_range(1..=6);
    let mut vars = Vec::new();
    let mut set = ConstraintSet::default();
    for k in 1..=n {
        let id = VarId(k);
        if rng.gen_bool(0.2) {
            vars.push(VariableInfo { id, kind: VarKind::Count, slot: None });
            let top = kb_size.min(7) as u32;
            set.domains.insert(id, (0..=top).map(Value::Count).collect());
        } else {
            let slot = SLOTS[rng.gen_range(0..SLOTS.len())];
            vars.push(VariableInfo { id, kind: VarKind::Value, slot: Some(slot.into()) });
            let mut values = pool(slot)[..width].to_vec();
            values.shuffle(&mut rng);
            values.truncate(rng.gen_range(1..=width));
            set.domains.insert(id, values.into_iter().map(Value::Text).collect());
        }
    }
    let value_vars: Vec<&VariableInfo> = vars.iter().filter(|v| v.kind == VarKind::Value).collect();
    let count_vars: Vec<&VariableInfo> = vars.iter().filter(|v| v.kind == VarKind::Count).collect();
    let filters_from = |rng: &mut ChaCha8Rng| -> Vec<Filter> {
        let mut chosen: Vec<&&VariableInfo> = value_vars.iter().collect();
        chosen.shuffle(rng);
        chosen.truncate(rng.gen_range(1..=value_vars.len().clamp(1, 3)));
        chosen.sort_by_key(|v| v.id);
        chosen
            .iter()
            .map(|v| Filter { var: v.id, slot: v.slot.clone().unwrap() })
            .collect()
    };
    for _ in 0..rng.gen_range(0..=5) {
        let c = match rng.gen_range(0..6) {
            0 => Constraint::membership(vars[rng.gen_range(0..vars.len())].id),
            1 | 2 if value_vars.len() >= 2 => {
                let mut pick: Vec<VarId> = value_vars.iter().map(|v| v.id).collect();
                pick.shuffle(&mut rng);
                pick.truncate(rng.gen_range(2..=value_vars.len()));
                pick.sort();
                if rng.gen_bool(0.5) {
                    Constraint::equality(pick)
                } else {
                    Constraint::all_different(pick)
                }
            }
            3 if !value_vars.is_empty() => Constraint::no_match(filters_from(&mut rng)),
            4 if !value_vars.is_empty() => Constraint::some_match(filters_from(&mut rng)),
            5 if !value_vars.is_empty() && !count_vars.is_empty() => {
                let cv = count_vars[rng.gen_range(0..count_vars.len())].id;
                Constraint::exact_count(cv, filters_from(&mut rng))
            }
            _ => continue,
        };
        set.constraints.push(c);
    }

    let mut probe = Assignment::default();
    for v in &vars {
        let r: f64 = rng.gen();
        let value = if r < 0.15 {
            None
        } else if r < 0.25 {
            Some(Value::text("stray"))
        } else {
            let dom = &set.domains[&v.id];
            Some(dom[rng.gen_range(0..dom.len())].clone())
        };
        probe.set(v.id, value);
    }
    RandomModel {
        model: CspModel::new(Some(format!("r{seed}")), vars, set, kb).unwrap(),
        probe,
    }
}

/// A model with one free text variable whose domain has `n` values.
pub fn free_variable_model(n: usize) -> CspModel {
    let mut set = ConstraintSet::default();
    set.domains.insert(VarId(1), (0..n).map(|i| Value::text(format!("v{i:04}"))).collect());
    let vars = vec![VariableInfo { id: VarId(1), kind: VarKind::Value, slot: Some("food".into()) }];
    CspModel::new(None, vars, set, KnowledgeBase::empty()).unwrap()
}

// ---------------------------------------------------------------------------
// checks shared by the oracle tests and the acceptance target

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Compares the solver, verdict and scoring against the oracle on one random
/// model, including every single-family removal.
pub fn check_random_model(seed: u64) -> Result<(), String> {
    let RandomModel { model, probe } = random_model(seed);
    let brute = brute_force(&model);
    let n = brute.len() as u64;

    let full = enumerate_solutions(&model, u64::MAX);
    let ours: Vec<_> = full.solutions.iter().map(|s| s.0.clone()).collect();
    ensure!(ours == brute, "seed {seed}: enumeration differs from brute force ({} vs {n})", ours.len());
    ensure!(full.summary.count == n && full.summary.exact, "seed {seed}: summary {:?}", full.summary);
    ensure!(enumerate_solutions(&model, u64::MAX) == full, "seed {seed}: enumeration is not deterministic");

    for cap in [1, 2, 3, n.saturating_sub(1), n, n + 1].into_iter().filter(|c| *c > 0) {
        let capped = enumerate_solutions(&model, cap);
        let expected = n.min(cap);
        ensure!(capped.summary.count == expected, "seed {seed} cap {cap}: count {}", capped.summary.count);
        ensure!(capped.summary.exact == (n <= cap), "seed {seed} cap {cap}: exact flag");
        ensure!(
            capped.solutions.iter().map(|s| &s.0).eq(brute.iter().take(expected as usize)),
            "seed {seed} cap {cap}: not a prefix of the full list"
        );
        ensure!(count_solutions(&model, cap) == capped.summary, "seed {seed} cap {cap}: count disagrees with enumerate");
    }

    match best_match(&model, &probe) {
        None => ensure!(brute.is_empty(), "seed {seed}: no best match on a satisfiable model"),
        Some(b) => {
            let top = brute.iter().map(|s| agreement(s, &probe)).max();
            ensure!(Some(b.agreement) == top, "seed {seed}: agreement {} vs {top:?}", b.agreement);
            let first = brute.iter().find(|s| Some(agreement(s, &probe)) == top).unwrap();
            ensure!(&b.solution.0 == first, "seed {seed}: tie not broken towards the first solution");
            let searched = oracle_best(&model, &probe).map(|(score, sol)| (score, sol == *first));
            ensure!(searched == Some((b.agreement, true)), "seed {seed}: the two oracles disagree");
        }
    }

    let verdict = check_consistency(&model, &probe).map_err(|e| e.to_string())?;
    let (consistent, broken, in_kb) = oracle_verdict(&model, &probe, !brute.is_empty());
    ensure!(verdict.consistent == consistent, "seed {seed}: consistent {} vs {consistent}", verdict.consistent);
    let ours_broken: Vec<usize> = verdict.violations.iter().filter_map(|v| v.constraint).collect();
    ensure!(ours_broken == broken, "seed {seed}: violated {ours_broken:?} vs {broken:?}");
    let ours_in_kb: Vec<VarId> = verdict
        .violations
        .iter()
        .filter(|v| v.kind == ViolationKind::ValueInKb)
        .flat_map(|v| v.variables.clone())
        .collect();
    ensure!(ours_in_kb == in_kb, "seed {seed}: kb values {ours_in_kb:?} vs {in_kb:?}");
    ensure!(verdict.zero_solution_rule_applied == brute.is_empty(), "seed {seed}: zero-solution flag");

    let scored = evaluate_dialogue(&model, &probe, u64::MAX).map_err(|e| e.to_string())?;
    let correct = oracle_score(&model, &probe).1;
    ensure!(scored.correct_variables == correct, "seed {seed}: correct {} vs {correct}", scored.correct_variables);

    for s in full.solutions.iter().take(50) {
        let v = check_consistency(&model, &s.to_assignment()).map_err(|e| e.to_string())?;
        ensure!(v.consistent && v.violations.is_empty(), "seed {seed}: a solution is judged inconsistent");
    }

    for family in Family::ALL {
        let reduced = model.without(&AblationConfig::without([family]));
        ensure!(count_solutions(&reduced, u64::MAX).count >= n, "seed {seed}: removing {family} lost solutions");
        for s in full.solutions.iter().take(50) {
            let v = check_consistency(&reduced, &s.to_assignment()).map_err(|e| e.to_string())?;
            ensure!(v.consistent, "seed {seed}: removing {family} rejected a solution");
        }
        let rescored = evaluate_dialogue(&reduced, &probe, u64::MAX).map_err(|e| e.to_string())?;
        if !brute.is_empty() {
            ensure!(
                rescored.correct_variables >= scored.correct_variables,
                "seed {seed}: removing {family} lowered the score"
            );
            ensure!(!consistent || rescored.verdict.consistent, "seed {seed}: removing {family} broke consistency");
        }
    }
    Ok(())
}

/// Solution counts 0, 1, 2, 10, 11, 100 and 101 land in their groups, and a
/// cap below 101 that is reached leaves the group undecided.
pub fn check_bucket_boundaries() -> Result<(), String> {
    let mut empty = ConstraintSet::default();
    empty.domains.insert(VarId(1), vec![Value::text("a")]);
    empty.domains.insert(VarId(2), vec![Value::text("a")]);
    empty.constraints.push(Constraint::all_different(vec![VarId(1), VarId(2)]));
    let vars = (1..=2)
        .map(|k| VariableInfo { id: VarId(k), kind: VarKind::Value, slot: Some("food".into()) })
        .collect();
    let zero = CspModel::new(None, vars, empty, KnowledgeBase::empty()).unwrap();
    let s = count_solutions(&zero, DEFAULT_CAP);
    ensure!((s.count, s.bucket) == (0, Some(Bucket::Zero)), "0 solutions: {s:?}");

    let cases = [
        (1, Bucket::One),
        (2, Bucket::TwoToTen),
        (10, Bucket::TwoToTen),
        (11, Bucket::ElevenToHundred),
        (100, Bucket::ElevenToHundred),
        (101, Bucket::OverHundred),
    ];
    for (n, bucket) in cases {
        let m = free_variable_model(n);
        let s = count_solutions(&m, DEFAULT_CAP);
        ensure!(s.count == n as u64 && s.exact && s.bucket == Some(bucket), "{n} solutions: {s:?}");
        ensure!(brute_force(&m).len() == n, "{n} solutions: oracle disagrees");
    }
    let capped = count_solutions(&free_variable_model(101), 100);
    ensure!(capped.count == 100 && !capped.exact && capped.bucket.is_none(), "cap 100 on 101: {capped:?}");
    let reached = count_solutions(&free_variable_model(500), 101);
    ensure!(reached.bucket == Some(Bucket::OverHundred) && !reached.exact, "cap 101 on 500: {reached:?}");
    Ok(())
}

// ---------------------------------------------------------------------------
// single-threaded HTTP stub replaying a fixed body

pub struct Stub {
    pub base: String,
    pub hits: Arc<AtomicUsize>,
}

pub fn serve(status: u16, body: String) -> Stub {
    serve_with(move |_| (status, body.clone()))
}

/// Serves `handler(request body)` for every request.
pub fn serve_with(handler: impl Fn(&str) -> (u16, String) + Send + 'static) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            let mut line = String::new();
            while reader.read_line(&mut line).unwrap_or(0) > 0 {
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                line.clear();
            }
            let mut request = vec![0; length];
            let _ = reader.read_exact(&mut request);
            let (status, body) = handler(&String::from_utf8_lossy(&request));
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    Stub { base, hits }
}

pub fn chat_body(content: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

/// Canned replies for the fixtures: the european fixture response, and the other
/// fixtures' assignments written out as dialogues. Requests are routed by a
/// phrase only that fixture's prompt contains.
pub fn fixture_replies() -> Stub {
    let routes: Vec<(&str, String)> = vec![
        ("phone number", fixture_text("european_response.txt")),
        ("location information", todcsp::relexicalize(&delex("food_and_price"), &assignment("food_and_price")).to_text()),
        ("your preferences", todcsp::relexicalize(&delex("italian"), &assignment("italian")).to_text()),
    ];
    serve_with(move |request| match routes.iter().find(|(phrase, _)| request.contains(phrase)) {
        Some((_, reply)) => (200, chat_body(reply)),
        None => (404, "{}".to_string()),
    })
}

/// A client without retries and a short timeout.
pub fn client(base: &str, audit_dir: Option<PathBuf>) -> todcsp::llm::LlmClient {
    let mut config = todcsp::llm::LlmConfig::new(base, "stub-model");
    config.retries = 0;
    config.timeout = std::time::Duration::from_secs(5);
    config.audit_dir = audit_dir;
    todcsp::llm::LlmClient::new(config).unwrap()
}

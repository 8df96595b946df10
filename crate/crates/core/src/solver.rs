//! Finite-domain search: solution enumeration with a cap, solution counting and
//! exact best-match search.
//!
//! Search is depth-first in variable-id order with values in ascending order and
//! forward checking after every assignment. Variables that share no constraint
//! are split into independent components first: each component is searched on
//! its own and the global solution list is rebuilt in the same lexicographic
//! order a single search over all variables would produce.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constraints::Payload;
use crate::dialogue::Assignment;
use crate::error::{Error, Result};
use crate::model::CspModel;
use crate::value::{Value, VarId};
use crate::verdict::satisfies;

/// Default enumeration cap.
pub const DEFAULT_CAP: u64 = 100_000;

/// Solution-count groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Zero,
    One,
    TwoToTen,
    ElevenToHundred,
    OverHundred,
}

impl Bucket {
    pub const ALL: [Bucket; 5] = [
        Bucket::Zero,
        Bucket::One,
        Bucket::TwoToTen,
        Bucket::ElevenToHundred,
        Bucket::OverHundred,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Bucket::Zero => "0 sol.",
            Bucket::One => "1 sol.",
            Bucket::TwoToTen => "2-10 sol.",
            Bucket::ElevenToHundred => "11-100 sol.",
            Bucket::OverHundred => "101+ sol.",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Buckets a solution count. An inexact (capped) count can only be bucketed
/// when it already reaches 101.
pub fn count_bucket(count: u64, exact: bool) -> Result<Bucket> {
    if !exact && count < 101 {
        return Err(Error::CapTooSmall { cap: count });
    }
    Ok(match count {
        0 => Bucket::Zero,
        1 => Bucket::One,
        2..=10 => Bucket::TwoToTen,
        11..=100 => Bucket::ElevenToHundred,
        _ => Bucket::OverHundred,
    })
}

/// A total assignment satisfying every constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Solution(pub BTreeMap<VarId, Value>);

impl Solution {
    pub fn get(&self, id: VarId) -> Option<&Value> {
        self.0.get(&id)
    }

    pub fn to_assignment(&self) -> Assignment {
        Assignment {
            values: self.0.iter().map(|(k, v)| (*k, Some(v.clone()))).collect(),
        }
    }

    /// Number of variables on which `assignment` holds the same value.
    pub fn agreement(&self, assignment: &Assignment) -> usize {
        self.0
            .iter()
            .filter(|(id, v)| assignment.get(**id) == Some(*v))
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub count: u64,
    /// False when counting stopped at the cap.
    pub exact: bool,
    /// `None` only when the cap is below 101 and was reached.
    pub bucket: Option<Bucket>,
}

impl SolveSummary {
    fn new(count: u64, exact: bool) -> Self {
        SolveSummary {
            count,
            exact,
            bucket: count_bucket(count, exact).ok(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solutions: Vec<Solution>,
    #[serde(flatten)]
    pub summary: SolveSummary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestMatch {
    pub solution: Solution,
    pub agreement: usize,
}

/// Enumerates up to `cap` solutions in deterministic order. Every returned
/// solution is re-checked against the model's constraints.
pub fn enumerate_solutions(model: &CspModel, cap: u64) -> SolveResult {
    let result = Solver::new(model).enumerate(cap);
    for s in &result.solutions {
        for c in model.constraints() {
            assert!(
                satisfies(s, c, model).unwrap_or(false),
                "solver produced a solution violating {:?}",
                c
            );
        }
    }
    result
}

/// Counts solutions up to `cap` without materializing them.
pub fn count_solutions(model: &CspModel, cap: u64) -> SolveSummary {
    Solver::new(model).count(cap)
}

/// The solution agreeing with `assignment` on the most variables; ties go to
/// the solution enumerated first. `None` iff the model has no solution.
pub fn best_match(model: &CspModel, assignment: &Assignment) -> Option<BestMatch> {
    Solver::new(model).best_match(assignment)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Equal,
    Distinct,
    NoMatch,
    SomeMatch,
    Count(usize),
}

#[derive(Clone, Debug)]
struct Compiled {
    kind: Kind,
    vars: Vec<usize>,
    /// (variable index, slot column)
    filters: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
struct State {
    assigned: Vec<Option<u32>>,
    domains: Vec<Vec<u32>>,
}

/// A model compiled to dense indices: variables by id order, values interned so
/// that id order equals value order.
pub struct Solver {
    ids: Vec<VarId>,
    values: Vec<Value>,
    value_ids: HashMap<Value, u32>,
    domains: Vec<Vec<u32>>,
    /// kb rows by slot column
    rows: Vec<Vec<Option<u32>>>,
    cons: Vec<Compiled>,
    watch: Vec<Vec<usize>>,
    components: Vec<Vec<usize>>,
}

impl Solver {
    pub fn new(model: &CspModel) -> Self {
        let ids: Vec<VarId> = model.variables().iter().map(|v| v.id).collect();
        let var_index: HashMap<VarId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

        let mut all: BTreeSet<Value> = BTreeSet::new();
        for id in &ids {
            all.extend(model.domain(*id).iter().cloned());
        }
        for inst in model.kb().instances() {
            all.extend(inst.attributes.values().cloned().map(Value::Text));
        }
        let values: Vec<Value> = all.into_iter().collect();
        let value_ids: HashMap<Value, u32> =
            values.iter().enumerate().map(|(i, v)| (v.clone(), i as u32)).collect();
        let domains = ids
            .iter()
            .map(|id| model.domain(*id).iter().map(|v| value_ids[v]).collect())
            .collect();

        let mut slot_cols: BTreeMap<String, usize> = BTreeMap::new();
        for c in model.constraints() {
            for f in c.filters() {
                let next = slot_cols.len();
                slot_cols.entry(f.slot.clone()).or_insert(next);
            }
        }
        let rows = model
            .kb()
            .instances()
            .iter()
            .map(|inst| {
                let mut row = vec![None; slot_cols.len()];
                for (slot, col) in &slot_cols {
                    row[*col] = inst.get(slot).map(|v| value_ids[&Value::text(v)]);
                }
                row
            })
            .collect();

        let mut cons = Vec::new();
        for c in model.constraints() {
            let vars: Vec<usize> = c.scope.iter().map(|v| var_index[v]).collect();
            let filters: Vec<(usize, usize)> = c
                .filters()
                .iter()
                .map(|f| (var_index[&f.var], slot_cols[&f.slot]))
                .collect();
            let kind = match &c.payload {
                // domains already enforce membership
                Payload::Membership => continue,
                Payload::Equality => Kind::Equal,
                Payload::AllDifferent => Kind::Distinct,
                Payload::NoMatch { .. } => Kind::NoMatch,
                Payload::SomeMatch { .. } => Kind::SomeMatch,
                Payload::ExactCount { count, .. } => Kind::Count(var_index[count]),
            };
            cons.push(Compiled { kind, vars, filters });
        }

        let n = ids.len();
        let mut watch = vec![Vec::new(); n];
        for (k, c) in cons.iter().enumerate() {
            for &v in &c.vars {
                watch[v].push(k);
            }
        }

        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        for c in &cons {
            for w in c.vars.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..n {
            let root = find(&mut parent, v);
            groups.entry(root).or_default().push(v);
        }
        let components = groups.into_values().collect();

        Solver {
            ids,
            values,
            value_ids,
            domains,
            rows,
            cons,
            watch,
            components,
        }
    }

    fn count_value(&self, id: u32) -> Option<usize> {
        self.values[id as usize].as_count().map(|n| n as usize)
    }

    fn row_matches(&self, row: &[Option<u32>], filters: &[(usize, usize)], st: &State) -> bool {
        filters.iter().all(|&(v, col)| match (row[col], st.assigned[v]) {
            (None, _) => false,
            (Some(x), Some(a)) => x == a,
            (Some(x), None) => st.domains[v].binary_search(&x).is_ok(),
        })
    }

    fn row_matches_assigned(&self, row: &[Option<u32>], filters: &[(usize, usize)], st: &State) -> bool {
        filters.iter().all(|&(v, col)| match st.assigned[v] {
            Some(a) => row[col] == Some(a),
            None => true,
        })
    }

    /// Prunes unassigned domains of `c`'s scope; false on a wipe-out or a
    /// violated fully-assigned constraint.
    fn propagate(&self, c: &Compiled, st: &mut State) -> bool {
        match c.kind {
            Kind::Equal => {
                let mut val = None;
                for &v in &c.vars {
                    if let Some(x) = st.assigned[v] {
                        if val.is_some_and(|y| y != x) {
                            return false;
                        }
                        val = Some(x);
                    }
                }
                if let Some(x) = val {
                    for &v in &c.vars {
                        if st.assigned[v].is_none() {
                            st.domains[v].retain(|&y| y == x);
                            if st.domains[v].is_empty() {
                                return false;
                            }
                        }
                    }
                }
                true
            }
            Kind::Distinct => {
                let mut seen = Vec::new();
                for &v in &c.vars {
                    if let Some(x) = st.assigned[v] {
                        if seen.contains(&x) {
                            return false;
                        }
                        seen.push(x);
                    }
                }
                for &v in &c.vars {
                    if st.assigned[v].is_none() {
                        st.domains[v].retain(|y| !seen.contains(y));
                        if st.domains[v].is_empty() {
                            return false;
                        }
                    }
                }
                true
            }
            Kind::SomeMatch => {
                let mut support: Vec<Vec<u32>> = vec![Vec::new(); c.filters.len()];
                let mut any = false;
                for row in &self.rows {
                    if self.row_matches(row, &c.filters, st) {
                        any = true;
                        for (k, &(v, col)) in c.filters.iter().enumerate() {
                            if st.assigned[v].is_none() {
                                support[k].extend(row[col]);
                            }
                        }
                    }
                }
                if !any {
                    return false;
                }
                for (k, &(v, _)) in c.filters.iter().enumerate() {
                    if st.assigned[v].is_none() {
                        let s = &mut support[k];
                        s.sort_unstable();
                        s.dedup();
                        st.domains[v].retain(|x| s.binary_search(x).is_ok());
                        if st.domains[v].is_empty() {
                            return false;
                        }
                    }
                }
                true
            }
            Kind::NoMatch => {
                let open: Vec<(usize, usize)> = c
                    .filters
                    .iter()
                    .copied()
                    .filter(|(v, _)| st.assigned[*v].is_none())
                    .collect();
                match open.as_slice() {
                    [] => !self.rows.iter().any(|r| self.row_matches_assigned(r, &c.filters, st)),
                    [(v, col)] => {
                        let forbidden: Vec<u32> = self
                            .rows
                            .iter()
                            .filter(|r| self.row_matches_assigned(r, &c.filters, st))
                            .filter_map(|r| r[*col])
                            .collect();
                        st.domains[*v].retain(|x| !forbidden.contains(x));
                        !st.domains[*v].is_empty()
                    }
                    _ => true,
                }
            }
            Kind::Count(cv) => {
                let open: Vec<(usize, usize)> = c
                    .filters
                    .iter()
                    .copied()
                    .filter(|(v, _)| st.assigned[*v].is_none())
                    .collect();
                match (open.as_slice(), st.assigned[cv]) {
                    ([], Some(a)) => {
                        let k = self.rows.iter().filter(|r| self.row_matches_assigned(r, &c.filters, st)).count();
                        self.count_value(a) == Some(k)
                    }
                    ([], None) => {
                        let k = self.rows.iter().filter(|r| self.row_matches_assigned(r, &c.filters, st)).count();
                        st.domains[cv].retain(|&x| self.count_value(x) == Some(k));
                        !st.domains[cv].is_empty()
                    }
                    ([(v, col)], Some(a)) => {
                        let Some(want) = self.count_value(a) else {
                            return false;
                        };
                        let mut tally: HashMap<u32, usize> = HashMap::new();
                        for r in self.rows.iter().filter(|r| self.row_matches_assigned(r, &c.filters, st)) {
                            if let Some(x) = r[*col] {
                                *tally.entry(x).or_default() += 1;
                            }
                        }
                        st.domains[*v].retain(|x| tally.get(x).copied().unwrap_or(0) == want);
                        !st.domains[*v].is_empty()
                    }
                    (_, None) => {
                        // upper bound from rows still compatible with the domains
                        let most = self.rows.iter().filter(|r| self.row_matches(r, &c.filters, st)).count();
                        st.domains[cv].retain(|&x| self.count_value(x).is_some_and(|n| n <= most));
                        !st.domains[cv].is_empty()
                    }
                    _ => true,
                }
            }
        }
    }

    fn root_state(&self, comp: &[usize]) -> Option<State> {
        let mut st = State {
            assigned: vec![None; self.ids.len()],
            domains: self.domains.clone(),
        };
        if comp.iter().any(|&v| st.domains[v].is_empty()) {
            return None;
        }
        let cons: BTreeSet<usize> = comp.iter().flat_map(|v| self.watch[*v].iter().copied()).collect();
        // two passes let early prunes feed later constraints
        for _ in 0..2 {
            for &k in &cons {
                if !self.propagate(&self.cons[k], &mut st) {
                    return None;
                }
            }
        }
        Some(st)
    }

    fn assign(&self, st: &State, var: usize, val: u32) -> Option<State> {
        let mut next = st.clone();
        next.assigned[var] = Some(val);
        next.domains[var] = vec![val];
        for &k in &self.watch[var] {
            if !self.propagate(&self.cons[k], &mut next) {
                return None;
            }
        }
        Some(next)
    }

    fn leaf_ok(&self, comp: &[usize], st: &mut State) -> bool {
        let cons: BTreeSet<usize> = comp.iter().flat_map(|v| self.watch[*v].iter().copied()).collect();
        cons.into_iter().all(|k| self.propagate(&self.cons[k], st))
    }

    /// Depth-first enumeration of one component, stopping after `limit` solutions.
    fn enumerate_component(&self, comp: &[usize], limit: u64, keep: bool) -> (u64, Vec<Vec<u32>>) {
        let mut found = 0;
        let mut out = Vec::new();
        if let Some(root) = self.root_state(comp) {
            self.enumerate_rec(comp, 0, root, limit, keep, &mut found, &mut out);
        }
        (found, out)
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_rec(
        &self,
        comp: &[usize],
        pos: usize,
        mut st: State,
        limit: u64,
        keep: bool,
        found: &mut u64,
        out: &mut Vec<Vec<u32>>,
    ) {
        if pos == comp.len() {
            if self.leaf_ok(comp, &mut st) {
                *found += 1;
                if keep {
                    out.push(comp.iter().map(|&v| st.assigned[v].expect("leaf is total")).collect());
                }
            }
            return;
        }
        let var = comp[pos];
        for &val in &st.domains[var] {
            if *found >= limit {
                return;
            }
            if let Some(next) = self.assign(&st, var, val) {
                self.enumerate_rec(comp, pos + 1, next, limit, keep, found, out);
            }
        }
    }

    fn summarize(&self, counts: &[u64], cap: u64) -> SolveSummary {
        if counts.contains(&0) {
            return SolveSummary::new(0, true);
        }
        let mut product: u64 = 1;
        for &c in counts {
            if c > cap {
                return SolveSummary::new(cap, false);
            }
            product = product.saturating_mul(c);
            if product > cap {
                return SolveSummary::new(cap, false);
            }
        }
        SolveSummary::new(product, true)
    }

    pub fn count(&self, cap: u64) -> SolveSummary {
        let cap = cap.max(1);
        let counts: Vec<u64> = self
            .components
            .iter()
            .map(|comp| self.enumerate_component(comp, cap.saturating_add(1), false).0)
            .collect();
        self.summarize(&counts, cap)
    }

    pub fn enumerate(&self, cap: u64) -> SolveResult {
        let cap = cap.max(1);
        let mut counts = Vec::new();
        let mut lists = Vec::new();
        for comp in &self.components {
            let (count, mut list) = self.enumerate_component(comp, cap.saturating_add(1), true);
            list.truncate(cap as usize);
            counts.push(count);
            lists.push(list);
        }
        let summary = self.summarize(&counts, cap);
        let solutions = if summary.count == 0 {
            Vec::new()
        } else {
            self.merge(&lists, summary.count.min(cap) as usize)
        };
        SolveResult { solutions, summary }
    }

    /// Interleaves per-component solution lists into global lexicographic order.
    fn merge(&self, lists: &[Vec<Vec<u32>>], limit: usize) -> Vec<Solution> {
        let mut loc = vec![(0, 0); self.ids.len()];
        for (k, comp) in self.components.iter().enumerate() {
            for (p, &v) in comp.iter().enumerate() {
                loc[v] = (k, p);
            }
        }
        let mut ranges: Vec<(usize, usize)> = lists.iter().map(|l| (0, l.len())).collect();
        let mut current = vec![0u32; self.ids.len()];
        let mut out = Vec::new();
        self.merge_rec(0, lists, &loc, &mut ranges, &mut current, limit, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn merge_rec(
        &self,
        var: usize,
        lists: &[Vec<Vec<u32>>],
        loc: &[(usize, usize)],
        ranges: &mut [(usize, usize)],
        current: &mut [u32],
        limit: usize,
        out: &mut Vec<Solution>,
    ) {
        if var == self.ids.len() {
            out.push(self.solution(current));
            return;
        }
        let (k, p) = loc[var];
        let (lo, hi) = ranges[k];
        let list = &lists[k];
        let mut j = lo;
        while j < hi && out.len() < limit {
            let x = list[j][p];
            let mut e = j + 1;
            while e < hi && list[e][p] == x {
                e += 1;
            }
            ranges[k] = (j, e);
            current[var] = x;
            self.merge_rec(var + 1, lists, loc, ranges, current, limit, out);
            j = e;
        }
        ranges[k] = (lo, hi);
    }

    fn solution(&self, vals: &[u32]) -> Solution {
        Solution(
            self.ids
                .iter()
                .zip(vals)
                .map(|(id, x)| (*id, self.values[*x as usize].clone()))
                .collect(),
        )
    }

    pub fn best_match(&self, assignment: &Assignment) -> Option<BestMatch> {
        let targets: Vec<Option<u32>> = self
            .ids
            .iter()
            .map(|id| assignment.get(*id).and_then(|v| self.value_ids.get(v).copied()))
            .collect();
        let mut vals = vec![0u32; self.ids.len()];
        let mut agreement = 0;
        for comp in &self.components {
            let root = self.root_state(comp)?;
            let mut best: Option<(usize, Vec<u32>)> = None;
            self.best_rec(comp, 0, root, 0, &targets, &mut best);
            let (score, found) = best?;
            agreement += score;
            for (v, x) in comp.iter().zip(found) {
                vals[*v] = x;
            }
        }
        Some(BestMatch {
            solution: self.solution(&vals),
            agreement,
        })
    }

    fn best_rec(
        &self,
        comp: &[usize],
        pos: usize,
        mut st: State,
        agree: usize,
        targets: &[Option<u32>],
        best: &mut Option<(usize, Vec<u32>)>,
    ) {
        if pos == comp.len() {
            if self.leaf_ok(comp, &mut st) && best.as_ref().is_none_or(|(b, _)| agree > *b) {
                *best = Some((agree, comp.iter().map(|&v| st.assigned[v].expect("leaf is total")).collect()));
            }
            return;
        }
        // optimistic completion: every remaining target still in its domain is hit
        let reachable = comp[pos..]
            .iter()
            .filter(|&&v| targets[v].is_some_and(|t| st.domains[v].binary_search(&t).is_ok()))
            .count();
        if best.as_ref().is_some_and(|(b, _)| agree + reachable <= *b) {
            return;
        }
        let var = comp[pos];
        for &val in &st.domains[var] {
            if let Some(next) = self.assign(&st, var, val) {
                let hit = usize::from(targets[var] == Some(val));
                self.best_rec(comp, pos + 1, next, agree + hit, targets, best);
            }
        }
    }
}

//! Grounding, A* search, simulator replay and the planning evaluation harness.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::induce::{LiftedOperator, Literal, Substitution};
use crate::pddl::goal_atoms;
use crate::sim::{contact_graph, init_scene, random_action, simulate, ActionSpec, ObjectId, WorldState};
use crate::symbols::{symbolize_state, GroundAtom, SymbolicState, Symbolizer};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
/// Replay tolerance in cm.
pub const DEFAULT_TOLERANCE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundAction {
    /// Index of the source operator in the list passed to [`ground`].
    pub operator: usize,
    pub name: String,
    pub theta: Substitution,
    pub pre: Vec<GroundAtom>,
    pub add: Vec<GroundAtom>,
    pub del: Vec<GroundAtom>,
    pub action: ActionSpec,
}

impl GroundAction {
    pub fn applicable(&self, state: &SymbolicState) -> bool {
        self.pre.iter().all(|a| state.holds(a))
    }

    /// Successor state; deletes are applied before adds.
    pub fn apply(&self, state: &SymbolicState) -> SymbolicState {
        let mut atoms = state.atoms();
        for a in &self.del {
            atoms.remove(a);
        }
        atoms.extend(self.add.iter().copied());
        SymbolicState::from_atoms(&state.ids, state.unary_bits(), state.heads(), &atoms)
            .expect("grounded effects keep one polarity per unary bit")
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for o in &self.theta.objects {
            write!(f, " {o}")?;
        }
        write!(f, ")")
    }
}

fn ground_literal(l: &Literal, theta: &Substitution) -> GroundAtom {
    match *l {
        Literal::Unary { bit, var, value } => GroundAtom::Unary { bit, value, object: theta.get(var) },
        Literal::Relation { head, from, to } => GroundAtom::Relation { head, from: theta.get(from), to: theta.get(to) },
    }
}

fn injective_maps(objects: &[ObjectId], k: usize, prefix: &mut Vec<ObjectId>, out: &mut Vec<Vec<ObjectId>>) {
    if prefix.len() == k {
        out.push(prefix.clone());
        return;
    }
    for &o in objects {
        if !prefix.contains(&o) {
            prefix.push(o);
            injective_maps(objects, k, prefix, out);
            prefix.pop();
        }
    }
}

/// Every injective grounding of every operator, in operator order.
pub fn ground(ops: &[LiftedOperator], objects: &[ObjectId]) -> Vec<GroundAction> {
    let mut out = Vec::new();
    for (index, op) in ops.iter().enumerate() {
        let mut maps = Vec::new();
        injective_maps(objects, op.arity(), &mut Vec::new(), &mut maps);
        let pre = op.preconditions();
        let name = op.name();
        for objs in maps {
            let theta = Substitution::new(objs).expect("injective by construction");
            out.push(GroundAction {
                operator: index,
                name: name.clone(),
                pre: pre.iter().map(|l| ground_literal(l, &theta)).collect(),
                add: op.effect.add.iter().map(|l| ground_literal(l, &theta)).collect(),
                del: op.effect.del.iter().map(|l| ground_literal(l, &theta)).collect(),
                action: op.action(&theta),
                theta,
            });
        }
    }
    out
}

/// Predicate family of an atom; `p{i}` and `not_p{i}` share one family.
fn family(a: &GroundAtom) -> (bool, usize) {
    match *a {
        GroundAtom::Unary { bit, .. } => (true, bit),
        GroundAtom::Relation { head, .. } => (false, head),
    }
}

/// [`ground`] minus actions with a precondition on a predicate no operator
/// changes that is false in `init`.
pub fn ground_pruned(ops: &[LiftedOperator], init: &SymbolicState) -> Vec<GroundAction> {
    let all = ground(ops, &init.ids);
    let dynamic: BTreeSet<(bool, usize)> = all.iter().flat_map(|a| a.add.iter().chain(&a.del)).map(family).collect();
    all.into_iter()
        .filter(|a| a.pre.iter().all(|p| dynamic.contains(&family(p)) || init.holds(p)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanStatus {
    Found,
    Timeout,
    Unsolvable,
}

impl PlanStatus {
    pub fn name(self) -> &'static str {
        match self {
            PlanStatus::Found => "found",
            PlanStatus::Timeout => "timeout",
            PlanStatus::Unsolvable => "unsolvable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub steps: Vec<GroundAction>,
    /// Symbolic states from the initial state to the final one; empty unless found.
    pub trace: Vec<SymbolicState>,
    pub status: PlanStatus,
    pub expanded: usize,
}

impl Plan {
    pub fn actions(&self) -> Vec<ActionSpec> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Each step applicable in its predecessor and the goal holding at the end.
    pub fn is_valid(&self, init: &SymbolicState, goal: &BTreeSet<GroundAtom>) -> bool {
        let mut state = init.clone();
        for step in &self.steps {
            if !step.applicable(&state) {
                return false;
            }
            state = step.apply(&state);
        }
        goal.iter().all(|g| state.holds(g))
    }
}

struct AtomIndex {
    index: HashMap<GroundAtom, usize>,
    words: usize,
}

impl AtomIndex {
    fn new<'a>(atoms: impl Iterator<Item = &'a GroundAtom>) -> Self {
        let mut index = HashMap::new();
        for a in atoms {
            let n = index.len();
            index.entry(*a).or_insert(n);
        }
        let words = index.len().div_ceil(64).max(1);
        AtomIndex { index, words }
    }

    fn mask<'a>(&self, atoms: impl Iterator<Item = &'a GroundAtom>) -> Vec<u64> {
        let mut m = vec![0u64; self.words];
        for a in atoms {
            let i = self.index[a];
            m[i / 64] |= 1 << (i % 64);
        }
        m
    }
}

struct Compiled {
    pre: Vec<u64>,
    add: Vec<u64>,
    del: Vec<u64>,
}

fn subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

fn missing(goal: &[u64], s: &[u64]) -> u32 {
    goal.iter().zip(s).map(|(g, x)| (g & !x).count_ones()).sum()
}

/// A* with the goal-count heuristic; open-list ties go to the earlier node.
pub fn search(init: &SymbolicState, goal: &BTreeSet<GroundAtom>, actions: &[GroundAction], timeout: Duration) -> Plan {
    let start = Instant::now();
    let init_atoms = init.atoms();
    let vocab = AtomIndex::new(
        init_atoms
            .iter()
            .chain(goal)
            .chain(actions.iter().flat_map(|a| a.pre.iter().chain(&a.add).chain(&a.del))),
    );
    let compiled: Vec<Compiled> = actions
        .iter()
        .map(|a| Compiled { pre: vocab.mask(a.pre.iter()), add: vocab.mask(a.add.iter()), del: vocab.mask(a.del.iter()) })
        .collect();
    let goal_mask = vocab.mask(goal.iter());
    let w = vocab.words;

    // node arena: state words, parent, action, g
    let mut states: Vec<u64> = vocab.mask(init_atoms.iter());
    let mut parent: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX)];
    let mut g: Vec<u32> = vec![0];
    let mut best: HashMap<Vec<u64>, u32> = HashMap::from([(states.clone(), 0)]);
    let mut open = BinaryHeap::from([Reverse((missing(&goal_mask, &states), 0u32))]);
    let mut expanded = 0;
    let mut next = vec![0u64; w];

    let finish = |status, steps: Vec<GroundAction>, expanded| {
        let mut trace = Vec::new();
        if status == PlanStatus::Found {
            trace.push(init.clone());
            for s in &steps {
                let last = trace.last().expect("non-empty");
                trace.push(s.apply(last));
            }
        }
        Plan { steps, trace, status, expanded }
    };

    while let Some(Reverse((_, node))) = open.pop() {
        let n = node as usize;
        let state = &states[n * w..(n + 1) * w];
        if best.get(state).is_some_and(|&b| b < g[n]) {
            continue;
        }
        if subset(&goal_mask, state) {
            let mut steps = Vec::new();
            let mut cur = n;
            while parent[cur].0 != u32::MAX {
                steps.push(actions[parent[cur].1 as usize].clone());
                cur = parent[cur].0 as usize;
            }
            steps.reverse();
            return finish(PlanStatus::Found, steps, expanded);
        }
        if expanded % 64 == 0 && start.elapsed() >= timeout {
            return finish(PlanStatus::Timeout, Vec::new(), expanded);
        }
        expanded += 1;
        let g_next = g[n] + 1;
        for (ai, c) in compiled.iter().enumerate() {
            let state = &states[n * w..(n + 1) * w];
            if !subset(&c.pre, state) {
                continue;
            }
            for k in 0..w {
                next[k] = (state[k] & !c.del[k]) | c.add[k];
            }
            if best.get(next.as_slice()).is_some_and(|&b| b <= g_next) {
                continue;
            }
            best.insert(next.clone(), g_next);
            let id = parent.len() as u32;
            states.extend_from_slice(&next);
            parent.push((node, ai as u32));
            g.push(g_next);
            open.push(Reverse((g_next + missing(&goal_mask, &next), id)));
        }
    }
    finish(PlanStatus::Unsolvable, Vec::new(), expanded)
}

/// One line per step, then a status comment.
pub fn write_plan<W: Write>(plan: &Plan, mut w: W) -> io::Result<()> {
    for s in &plan.steps {
        writeln!(w, "{s}")?;
    }
    writeln!(w, "; status {} length {} expanded {}", plan.status.name(), plan.steps.len(), plan.expanded)
}

// ---- replay ----

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("step {step} references object {object} not in the scene")]
    UnknownObject { step: usize, object: ObjectId },
    #[error("initial and goal scenes contain different objects")]
    ObjectMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub success: bool,
    /// Largest per-object position error after replay, in cm.
    pub max_error: f64,
    pub final_world: WorldState,
}

/// Replays `actions` from `world0` and compares positions with `goal_world`.
pub fn validate_plan(world0: &WorldState, actions: &[ActionSpec], goal_world: &WorldState, tol: f64) -> Result<Verdict, ReplayError> {
    if world0.objects.keys().ne(goal_world.objects.keys()) {
        return Err(ReplayError::ObjectMismatch);
    }
    let mut world = world0.clone();
    for (step, a) in actions.iter().enumerate() {
        for object in [a.pick, a.place] {
            if !world.objects.contains_key(&object) {
                return Err(ReplayError::UnknownObject { step, object });
            }
        }
        if let Some(outcome) = simulate(&world, a) {
            world = outcome.next;
        }
    }
    let max_error = world
        .objects
        .iter()
        .map(|(id, f)| {
            let g = goal_world.objects[id].position;
            (0..3).map(|k| (f.position[k] - g[k]).powi(2)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);
    Ok(Verdict { success: max_error < tol, max_error, final_world: world })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemPair {
    pub init: WorldState,
    pub goal: WorldState,
    /// The effective actions that produced `goal`.
    pub actions: Vec<ActionSpec>,
}

const MAX_SCRAMBLE_ATTEMPTS: usize = 200;

/// Problem pairs whose goal is the initial scene after `n_actions` random
/// effective actions. Deterministic in `seed`.
pub fn make_problem_pairs(n_pairs: usize, n_objects: usize, n_actions: usize, seed: u64) -> Vec<ProblemPair> {
    assert!(n_objects >= 2, "problem pairs need at least two objects");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pairs);
    while out.len() < n_pairs {
        let Ok(init) = init_scene(n_objects, rng.random()) else { continue };
        let mut world = init.clone();
        let mut actions = Vec::new();
        for _ in 0..MAX_SCRAMBLE_ATTEMPTS * n_actions.max(1) {
            if actions.len() == n_actions {
                break;
            }
            let a = random_action(&world, &mut rng);
            if let Some(o) = simulate(&world, &a) {
                world = o.next;
                actions.push(a);
            }
        }
        if actions.len() == n_actions {
            out.push(ProblemPair { init, goal: world, actions });
        }
    }
    out
}

// ---- evaluation ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub n_objects: usize,
    pub n_actions: usize,
    pub status: PlanStatus,
    pub plan_length: usize,
    pub success: bool,
    /// Replay error in cm; `None` when no plan was found.
    pub max_error: Option<f64>,
    pub seconds: f64,
}

/// Symbolizes both scenes, plans towards the contact-filtered goal and
/// replays the plan.
pub fn solve_pair<S: Symbolizer + ?Sized>(
    symbolizer: &S,
    ops: &[LiftedOperator],
    pair: &ProblemPair,
    timeout: Duration,
    tol: f64,
) -> (Plan, PairResult) {
    let t0 = Instant::now();
    let ids = pair.init.ids();
    let feats = |w: &WorldState| ids.iter().map(|i| w.objects[i]).collect::<Vec<_>>();
    let init = symbolize_state(symbolizer, &ids, &feats(&pair.init));
    let goal_state = symbolize_state(symbolizer, &ids, &feats(&pair.goal));
    let goal = goal_atoms(&goal_state, &contact_graph(&pair.goal));
    let actions = ground_pruned(ops, &init);
    let plan = search(&init, &goal, &actions, timeout.saturating_sub(t0.elapsed()));
    let (success, max_error) = match plan.status {
        PlanStatus::Found => {
            let v = validate_plan(&pair.init, &plan.actions(), &pair.goal, tol).expect("plans only use scene objects");
            (v.success, Some(v.max_error))
        }
        _ => (false, None),
    };
    let result = PairResult {
        n_objects: ids.len(),
        n_actions: pair.actions.len(),
        status: plan.status,
        plan_length: plan.steps.len(),
        success,
        max_error,
        seconds: t0.elapsed().as_secs_f64(),
    };
    (plan, result)
}

/// Tab-separated success table per (object count, scramble length).
pub fn report_table(results: &[PairResult]) -> String {
    let mut cells: BTreeMap<(usize, usize), [usize; 5]> = BTreeMap::new();
    for r in results {
        let c = cells.entry((r.n_objects, r.n_actions)).or_default();
        c[0] += 1;
        c[1] += r.success as usize;
        match r.status {
            PlanStatus::Found => c[2] += 1,
            PlanStatus::Timeout => c[3] += 1,
            PlanStatus::Unsolvable => c[4] += 1,
        }
    }
    let mut out = String::from("objects\tactions\tpairs\tsuccess\tfound\ttimeout\tunsolvable\tsuccess_rate\n");
    for ((n, k), [pairs, ok, found, timeout, unsolvable]) in cells {
        out.push_str(&format!(
            "{n}\t{k}\t{pairs}\t{ok}\t{found}\t{timeout}\t{unsolvable}\t{:.3}\n",
            ok as f64 / pairs as f64
        ));
    }
    out
}

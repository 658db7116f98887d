//! Lifted operator induction.
//!
//! Each symbolic transition is canonicalized into a [`LiftedKey`]: `?a` is
//! the picked object, `?b` the place target, and the remaining objects are
//! ordered by isomorphism-invariant signatures with an exhaustive
//! tie-break inside each signature class. Transitions sharing a key form a
//! group; the most frequent lifted effect of a group becomes an operator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sim::{ActionSpec, ObjectId, SidePos};
use crate::symbols::{SymbolicState, SymbolicTransition};

/// Records with more objects than this are skipped during induction.
pub const MAX_VARIABLES: usize = 6;

/// Name of variable `i`: `?a`, `?b`, ...
pub fn var_name(i: usize) -> String {
    assert!(i < 26, "at most 26 variables");
    format!("?{}", (b'a' + i as u8) as char)
}

/// Injective map from variables (by index) to objects.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    pub objects: Vec<ObjectId>,
}

impl Substitution {
    pub fn new(objects: Vec<ObjectId>) -> Option<Self> {
        let distinct: BTreeSet<_> = objects.iter().collect();
        (distinct.len() == objects.len()).then_some(Substitution { objects })
    }

    pub fn get(&self, var: usize) -> ObjectId {
        self.objects[var]
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.objects.iter().enumerate().map(|(i, o)| format!("{}/{o}", var_name(i))).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// A literal over variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    /// `(p{bit} ?var)` when `value`, else `(not_p{bit} ?var)`.
    Unary { bit: usize, var: usize, value: bool },
    /// `(r{head} ?from ?to)`.
    Relation { head: usize, from: usize, to: usize },
}

impl Literal {
    pub fn predicate(&self) -> String {
        match *self {
            Literal::Unary { bit, value: true, .. } => format!("p{bit}"),
            Literal::Unary { bit, value: false, .. } => format!("not_p{bit}"),
            Literal::Relation { head, .. } => format!("r{head}"),
        }
    }

    pub fn vars(&self) -> Vec<usize> {
        match *self {
            Literal::Unary { var, .. } => vec![var],
            Literal::Relation { from, to, .. } => vec![from, to],
        }
    }

    pub fn is_unary(&self) -> bool {
        matches!(self, Literal::Unary { .. })
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.vars().into_iter().map(var_name).collect();
        write!(f, "({} {})", self.predicate(), args.join(" "))
    }
}

/// Canonical lifted precondition plus lifted action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LiftedKey {
    pub grasp: SidePos,
    pub release: SidePos,
    pub n_vars: usize,
    /// Signatures of `?c`, `?d`, ... in variable order; compared first, so
    /// the minimal key orders free variables by signature.
    signatures: Vec<Vec<u8>>,
    /// Unary bits per variable.
    pub unary: Vec<Vec<bool>>,
    /// Per head, row-major `n_vars x n_vars`.
    pub relations: Vec<Vec<bool>>,
}

impl LiftedKey {
    /// Builds a key from an already canonical labeling; returns `None` when
    /// shapes are inconsistent or the labeling is not the canonical one.
    pub fn from_parts(grasp: SidePos, release: SidePos, unary: Vec<Vec<bool>>, relations: Vec<Vec<bool>>) -> Option<Self> {
        let n = unary.len();
        if n < 2 || relations.iter().any(|r| r.len() != n * n) {
            return None;
        }
        let width = unary[0].len();
        if unary.iter().any(|u| u.len() != width) {
            return None;
        }
        let view = View { unary: &unary, relations: &relations, n };
        let order: Vec<usize> = (0..n).collect();
        let key = view.key(grasp, release, &order);
        let (canonical, _) = canonical_labelings(&view, 0, 1, grasp, release);
        (canonical == key).then_some(key)
    }

    pub fn heads(&self) -> usize {
        self.relations.len()
    }

    pub fn unary_bits(&self) -> usize {
        self.unary.first().map_or(0, Vec::len)
    }

    pub fn relation(&self, head: usize, i: usize, j: usize) -> bool {
        self.relations[head][i * self.n_vars + j]
    }

    /// STRIPS preconditions: every unary literal and the true relations.
    pub fn preconditions(&self) -> Vec<Literal> {
        let mut out = Vec::new();
        for (var, bits) in self.unary.iter().enumerate() {
            for (bit, &value) in bits.iter().enumerate() {
                out.push(Literal::Unary { bit, var, value });
            }
        }
        for head in 0..self.heads() {
            for from in 0..self.n_vars {
                for to in 0..self.n_vars {
                    if self.relation(head, from, to) {
                        out.push(Literal::Relation { head, from, to });
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Stable text form used for hashing and tie-breaks.
    pub fn canonical_string(&self) -> String {
        let unary: Vec<String> = self.unary.iter().map(|b| bits(b)).collect();
        let rel: Vec<String> = self.relations.iter().map(|b| bits(b)).collect();
        format!(
            "{} {} {} u={} r={}",
            self.grasp.name(),
            self.release.name(),
            self.n_vars,
            unary.join(","),
            rel.join(",")
        )
    }

    /// First eight hex digits of the SHA-256 of [`Self::canonical_string`].
    pub fn hash8(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().take(4).map(|b| format!("{b:02x}")).collect()
    }
}

fn bits(b: &[bool]) -> String {
    b.iter().map(|v| if *v { '1' } else { '0' }).collect()
}

struct View<'a> {
    unary: &'a [Vec<bool>],
    relations: &'a [Vec<bool>],
    n: usize,
}

impl View<'_> {
    fn rel(&self, k: usize, i: usize, j: usize) -> bool {
        self.relations[k][i * self.n + j]
    }

    /// Isomorphism-invariant signature of object `x` relative to the action
    /// objects `a`, `b` and the multiset of other free objects.
    fn signature(&self, x: usize, a: usize, b: usize, free: &[usize]) -> Vec<u8> {
        let mut s: Vec<u8> = self.unary[x].iter().map(|v| u8::from(*v)).collect();
        for k in 0..self.relations.len() {
            for v in [self.rel(k, x, a), self.rel(k, a, x), self.rel(k, x, b), self.rel(k, b, x), self.rel(k, x, x)] {
                s.push(u8::from(v));
            }
        }
        let mut neighbors: Vec<Vec<u8>> = free
            .iter()
            .filter(|&&y| y != x)
            .map(|&y| {
                let mut t: Vec<u8> = self.unary[y].iter().map(|v| u8::from(*v)).collect();
                for k in 0..self.relations.len() {
                    t.push(u8::from(self.rel(k, x, y)));
                    t.push(u8::from(self.rel(k, y, x)));
                }
                t
            })
            .collect();
        neighbors.sort();
        for t in neighbors {
            s.extend(t);
        }
        s
    }

    /// Key for the labeling where variable `v` is object `order[v]`.
    fn key(&self, grasp: SidePos, release: SidePos, order: &[usize]) -> LiftedKey {
        let m = order.len();
        let free = &order[2..];
        let signatures: Vec<Vec<u8>> = free.iter().map(|&x| self.signature(x, order[0], order[1], free)).collect();
        let relations = (0..self.relations.len())
            .map(|k| {
                let mut r = vec![false; m * m];
                for (vi, &i) in order.iter().enumerate() {
                    for (vj, &j) in order.iter().enumerate() {
                        r[vi * m + vj] = self.rel(k, i, j);
                    }
                }
                r
            })
            .collect();
        LiftedKey {
            grasp,
            release,
            n_vars: m,
            signatures,
            unary: order.iter().map(|&i| self.unary[i].clone()).collect(),
            relations,
        }
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let first = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, first);
            out.push(p);
        }
    }
    out
}

/// Minimal key and every labeling (record index per variable) attaining it.
fn canonical_labelings(view: &View<'_>, a: usize, b: usize, grasp: SidePos, release: SidePos) -> (LiftedKey, Vec<Vec<usize>>) {
    let free: Vec<usize> = (0..view.n).filter(|&i| i != a && i != b).collect();
    let mut sig: Vec<(Vec<u8>, usize)> = free.iter().map(|&x| (view.signature(x, a, b, &free), x)).collect();
    sig.sort();
    // classes of equal signature, in signature order
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, (s, x)) in sig.iter().enumerate() {
        if i > 0 && sig[i - 1].0 == *s {
            classes.last_mut().expect("non-empty").push(*x);
        } else {
            classes.push(vec![*x]);
        }
    }
    let mut orders: Vec<Vec<usize>> = vec![vec![a, b]];
    for class in &classes {
        let perms = permutations(class);
        orders = orders
            .into_iter()
            .flat_map(|o| {
                perms.iter().map(move |p| {
                    let mut o = o.clone();
                    o.extend(p);
                    o
                })
            })
            .collect();
    }
    let mut best: Option<LiftedKey> = None;
    let mut best_orders = Vec::new();
    for order in orders {
        let k = view.key(grasp, release, &order);
        match &best {
            Some(b) if k > *b => {}
            Some(b) if k == *b => best_orders.push(order),
            _ => {
                best = Some(k);
                best_orders = vec![order];
            }
        }
    }
    (best.expect("at least one labeling"), best_orders)
}

fn state_view(s: &SymbolicState) -> View<'_> {
    View { unary: &s.unary, relations: &s.relations, n: s.len() }
}

fn labelings(t: &SymbolicTransition) -> (LiftedKey, Vec<Substitution>) {
    let a = t.pre.index_of(t.action.pick).expect("pick object in record");
    let b = t.pre.index_of(t.action.place).expect("place object in record");
    let (key, orders) = canonical_labelings(&state_view(&t.pre), a, b, t.action.grasp, t.action.release);
    let subs = orders
        .into_iter()
        .map(|o| Substitution { objects: o.into_iter().map(|i| t.pre.ids[i]).collect() })
        .collect();
    (key, subs)
}

/// Canonical key of a transition's precondition and action, with the first
/// substitution that attains it.
pub fn canonicalize(t: &SymbolicTransition) -> (LiftedKey, Substitution) {
    let (key, mut subs) = labelings(t);
    (key, subs.swap_remove(0))
}

/// Add and delete lists of an operator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LiftedEffect {
    pub add: BTreeSet<Literal>,
    pub del: BTreeSet<Literal>,
}

impl LiftedEffect {
    pub fn is_empty(&self) -> bool {
        self.add.is_empty() && self.del.is_empty()
    }

    pub fn unary_add(&self) -> impl Iterator<Item = &Literal> {
        self.add.iter().filter(|l| l.is_unary())
    }

    pub fn unary_del(&self) -> impl Iterator<Item = &Literal> {
        self.del.iter().filter(|l| l.is_unary())
    }

    pub fn relation_add(&self) -> impl Iterator<Item = &Literal> {
        self.add.iter().filter(|l| !l.is_unary())
    }

    pub fn relation_del(&self) -> impl Iterator<Item = &Literal> {
        self.del.iter().filter(|l| !l.is_unary())
    }
}

impl fmt::Display for LiftedEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let add: Vec<String> = self.add.iter().map(Literal::to_string).collect();
        let del: Vec<String> = self.del.iter().map(Literal::to_string).collect();
        write!(f, "+[{}] -[{}]", add.join(" "), del.join(" "))
    }
}

/// Lifted effect of `t` under the substitution `theta`.
pub fn lifted_effect_of(t: &SymbolicTransition, theta: &Substitution) -> LiftedEffect {
    let idx: Vec<usize> = theta.objects.iter().map(|o| t.pre.index_of(*o).expect("object in record")).collect();
    let mut e = LiftedEffect::default();
    for (var, &i) in idx.iter().enumerate() {
        for bit in 0..t.pre.unary[i].len() {
            let (before, after) = (t.pre.unary[i][bit], t.post.unary[i][bit]);
            if before != after {
                e.add.insert(Literal::Unary { bit, var, value: after });
                e.del.insert(Literal::Unary { bit, var, value: before });
            }
        }
    }
    for head in 0..t.pre.heads() {
        for (from, &i) in idx.iter().enumerate() {
            for (to, &j) in idx.iter().enumerate() {
                match (t.pre.relation(head, i, j), t.post.relation(head, i, j)) {
                    (false, true) => {
                        e.add.insert(Literal::Relation { head, from, to });
                    }
                    (true, false) => {
                        e.del.insert(Literal::Relation { head, from, to });
                    }
                    _ => {}
                }
            }
        }
    }
    e
}

/// Effect of `t` under its canonical labelings; among symmetric labelings the
/// smallest effect is used so isomorphic samples agree.
fn canonical_effect(t: &SymbolicTransition, subs: &[Substitution]) -> (LiftedEffect, Substitution) {
    subs.iter()
        .map(|s| (lifted_effect_of(t, s), s.clone()))
        .min_by(|x, y| x.0.to_string().cmp(&y.0.to_string()).then_with(|| x.1.cmp(&y.1)))
        .expect("at least one substitution")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub key: LiftedKey,
    /// `(record index, substitution)` per member.
    pub members: Vec<(usize, Substitution)>,
}

/// Partitions transitions by lifted key. Groups come in key order; records
/// with more than [`MAX_VARIABLES`] objects are skipped.
pub fn group_samples(transitions: &[SymbolicTransition]) -> Vec<Group> {
    let mut groups: BTreeMap<LiftedKey, Vec<(usize, Substitution)>> = BTreeMap::new();
    let mut skipped = 0;
    for (i, t) in transitions.iter().enumerate() {
        if t.pre.len() > MAX_VARIABLES {
            skipped += 1;
            continue;
        }
        let (key, sub) = canonicalize(t);
        groups.entry(key).or_default().push((i, sub));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} records with more than {MAX_VARIABLES} objects");
    }
    groups.into_iter().map(|(key, members)| Group { key, members }).collect()
}

/// Modal effect of a group and the fraction of members that agree with it.
/// Ties go to the lexicographically smallest serialized effect.
pub fn lifted_effects(transitions: &[SymbolicTransition], group: &Group) -> (LiftedEffect, f64) {
    let mut counts: HashMap<LiftedEffect, usize> = HashMap::new();
    for (i, _) in &group.members {
        let t = &transitions[*i];
        let (_, subs) = labelings(t);
        *counts.entry(canonical_effect(t, &subs).0).or_default() += 1;
    }
    let (effect, count) = counts
        .into_iter()
        .min_by(|(ea, ca), (eb, cb)| cb.cmp(ca).then_with(|| ea.to_string().cmp(&eb.to_string())))
        .expect("non-empty group");
    (effect, count as f64 / group.members.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedOperator {
    pub key: LiftedKey,
    pub effect: LiftedEffect,
    pub support: usize,
    pub conflict_ratio: f64,
}

impl LiftedOperator {
    /// `pick-place_<grasp>_<release>__k<hash>`
    pub fn name(&self) -> String {
        format!("pick-place_{}_{}__k{}", self.key.grasp.name(), self.key.release.name(), self.key.hash8())
    }

    pub fn arity(&self) -> usize {
        self.key.n_vars
    }

    pub fn preconditions(&self) -> Vec<Literal> {
        self.key.preconditions()
    }

    /// Concrete action for a grounding.
    pub fn action(&self, theta: &Substitution) -> ActionSpec {
        ActionSpec { pick: theta.get(0), grasp: self.key.grasp, place: theta.get(1), release: self.key.release }
    }
}

/// Operators for every group with at least `min_support` members, by
/// descending support (ties in key order).
pub fn induce_operators(transitions: &[SymbolicTransition], min_support: usize) -> Vec<LiftedOperator> {
    let mut ops: Vec<LiftedOperator> = group_samples(transitions)
        .into_iter()
        .filter(|g| g.members.len() >= min_support)
        .map(|g| {
            let (effect, conflict_ratio) = lifted_effects(transitions, &g);
            LiftedOperator { support: g.members.len(), key: g.key, effect, conflict_ratio }
        })
        .collect();
    ops.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.key.cmp(&b.key)));
    ops
}

#[derive(Debug, Error, PartialEq)]
pub enum ApplyError {
    #[error("substitution binds {got} objects, operator has {expected} variables")]
    Arity { expected: usize, got: usize },
    #[error("object {0} not in state")]
    UnknownObject(ObjectId),
    #[error("precondition {0} does not hold")]
    Precondition(String),
}

fn literal_holds(state: &SymbolicState, idx: &[usize], lit: &Literal) -> bool {
    match *lit {
        Literal::Unary { bit, var, value } => state.unary[idx[var]][bit] == value,
        Literal::Relation { head, from, to } => state.relation(head, idx[from], idx[to]),
    }
}

/// Applies `op` grounded by `theta` to `state`.
pub fn apply_operator(state: &SymbolicState, op: &LiftedOperator, theta: &Substitution) -> Result<SymbolicState, ApplyError> {
    if theta.len() != op.arity() {
        return Err(ApplyError::Arity { expected: op.arity(), got: theta.len() });
    }
    let idx: Vec<usize> = theta
        .objects
        .iter()
        .map(|o| state.index_of(*o).ok_or(ApplyError::UnknownObject(*o)))
        .collect::<Result<_, _>>()?;
    for lit in op.preconditions() {
        if !literal_holds(state, &idx, &lit) {
            return Err(ApplyError::Precondition(lit.to_string()));
        }
    }
    let mut next = state.clone();
    for (lits, value) in [(&op.effect.del, false), (&op.effect.add, true)] {
        for lit in lits.iter() {
            match *lit {
                Literal::Unary { bit, var, value: polarity } => {
                    // dual predicates: adding p means bit = 1, adding not_p means bit = 0
                    if value {
                        next.unary[idx[var]][bit] = polarity;
                    }
                }
                Literal::Relation { head, from, to } => next.set_relation(head, idx[from], idx[to], value),
            }
        }
    }
    Ok(next)
}

// ---- operator listing ----

const HEADER: &str = "relsym-operators 1";

#[derive(Debug, Error)]
pub enum OperatorIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Human-readable listing, one block per operator.
pub fn write_operators<W: Write>(ops: &[LiftedOperator], mut w: W) -> io::Result<()> {
    writeln!(w, "{HEADER}")?;
    writeln!(w, "count {}", ops.len())?;
    for op in ops {
        let vars: Vec<String> = (0..op.arity()).map(var_name).collect();
        let pre: Vec<String> = op.preconditions().iter().map(Literal::to_string).collect();
        let add: Vec<String> = op.effect.add.iter().map(Literal::to_string).collect();
        let del: Vec<String> = op.effect.del.iter().map(Literal::to_string).collect();
        writeln!(w)?;
        writeln!(w, "operator {}", op.name())?;
        writeln!(w, "  action pick {} {} place {} {}", var_name(0), op.key.grasp.name(), var_name(1), op.key.release.name())?;
        writeln!(w, "  parameters {}", vars.join(" "))?;
        writeln!(w, "  support {}", op.support)?;
        writeln!(w, "  conflict_ratio {}", op.conflict_ratio)?;
        writeln!(w, "  pre {}", pre.join(" "))?;
        writeln!(w, "  add {}", add.join(" "))?;
        writeln!(w, "  del {}", del.join(" "))?;
        writeln!(w, "  key {}", op.key.canonical_string())?;
    }
    w.flush()
}

fn parse_literal(tok: &str) -> Option<Literal> {
    let inner = tok.strip_prefix('(')?.strip_suffix(')')?;
    let parts: Vec<&str> = inner.split_whitespace().collect();
    let var = |s: &str| -> Option<usize> {
        let c = s.strip_prefix('?')?;
        let ch = c.chars().next()?;
        (c.len() == 1 && ch.is_ascii_lowercase()).then(|| (ch as u8 - b'a') as usize)
    };
    let (pred, args) = parts.split_first()?;
    if let Some(bit) = pred.strip_prefix("not_p") {
        return (args.len() == 1).then_some(()).and(Some(Literal::Unary { bit: bit.parse().ok()?, var: var(args[0])?, value: false }));
    }
    if let Some(bit) = pred.strip_prefix('p') {
        return (args.len() == 1).then_some(()).and(Some(Literal::Unary { bit: bit.parse().ok()?, var: var(args[0])?, value: true }));
    }
    if let Some(head) = pred.strip_prefix('r') {
        if args.len() == 2 {
            return Some(Literal::Relation { head: head.parse().ok()?, from: var(args[0])?, to: var(args[1])? });
        }
    }
    None
}

fn parse_literals(s: &str) -> Option<BTreeSet<Literal>> {
    let mut out = BTreeSet::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let end = rest.find(')')? + 1;
        out.insert(parse_literal(&rest[..end])?);
        rest = rest[end..].trim_start();
    }
    Some(out)
}

fn parse_key(s: &str) -> Option<LiftedKey> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 5 {
        return None;
    }
    let grasp = SidePos::from_name(parts[0])?;
    let release = SidePos::from_name(parts[1])?;
    let n: usize = parts[2].parse().ok()?;
    let parse_bits = |t: &str| -> Option<Vec<bool>> {
        t.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect()
    };
    let unary: Vec<Vec<bool>> = parts[3].strip_prefix("u=")?.split(',').map(parse_bits).collect::<Option<_>>()?;
    let rel_text = parts[4].strip_prefix("r=")?;
    let relations: Vec<Vec<bool>> = if rel_text.is_empty() {
        Vec::new()
    } else {
        rel_text.split(',').map(parse_bits).collect::<Option<_>>()?
    };
    if unary.len() != n {
        return None;
    }
    LiftedKey::from_parts(grasp, release, unary, relations)
}

/// Parses a listing written by [`write_operators`].
pub fn read_operators<R: BufRead>(r: R) -> Result<Vec<LiftedOperator>, OperatorIoError> {
    let err = |line: usize, message: &str| OperatorIoError::Parse { line, message: message.into() };
    let mut ops = Vec::new();
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = lines.next().map(|(_, l)| l).transpose()?;
    if header.as_deref().map(str::trim) != Some(HEADER) {
        return Err(err(1, "missing operator listing header"));
    }
    let mut current: Option<(usize, BTreeMap<String, String>)> = None;
    let finish = |block: Option<(usize, BTreeMap<String, String>)>, ops: &mut Vec<LiftedOperator>| -> Result<(), OperatorIoError> {
        let Some((line, fields)) = block else { return Ok(()) };
        let get = |k: &str| fields.get(k).map(String::as_str).ok_or_else(|| err(line, &format!("missing field {k}")));
        let key = parse_key(get("key")?).ok_or_else(|| err(line, "malformed or non-canonical key"))?;
        let support = get("support")?.parse().map_err(|_| err(line, "bad support"))?;
        let conflict_ratio = get("conflict_ratio")?.parse().map_err(|_| err(line, "bad conflict_ratio"))?;
        let add = parse_literals(get("add")?).ok_or_else(|| err(line, "bad add list"))?;
        let del = parse_literals(get("del")?).ok_or_else(|| err(line, "bad del list"))?;
        let op = LiftedOperator { key, effect: LiftedEffect { add, del }, support, conflict_ratio };
        if let Some(name) = fields.get("operator") {
            if *name != op.name() {
                return Err(err(line, "operator name does not match its key"));
            }
        }
        ops.push(op);
        Ok(())
    };
    let mut expected = None;
    for (n, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let (k, v) = t.split_once(' ').map_or((t, ""), |(k, v)| (k, v.trim()));
        match k {
            "count" if current.is_none() => expected = Some(v.parse::<usize>().map_err(|_| err(n, "bad count"))?),
            "operator" => {
                finish(current.take(), &mut ops)?;
                current = Some((n, BTreeMap::from([("operator".to_string(), v.to_string())])));
            }
            _ => match current.as_mut() {
                Some((_, fields)) => {
                    fields.insert(k.to_string(), v.to_string());
                }
                None => return Err(err(n, "field outside an operator block")),
            },
        }
    }
    finish(current.take(), &mut ops)?;
    if let Some(c) = expected {
        if c != ops.len() {
            return Err(err(2, "operator count does not match"));
        }
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn id(n: u32) -> ObjectId {
        ObjectId(n)
    }

    fn state(ids: &[u32], unary: &[bool], rels: &[(usize, u32, u32)], heads: usize) -> SymbolicState {
        let ids: Vec<ObjectId> = ids.iter().map(|&i| id(i)).collect();
        let n = ids.len();
        let mut s = SymbolicState {
            ids: ids.clone(),
            unary: unary.iter().map(|b| vec![*b]).collect(),
            relations: vec![vec![false; n * n]; heads],
        };
        for &(k, a, b) in rels {
            let (i, j) = (s.index_of(id(a)).unwrap(), s.index_of(id(b)).unwrap());
            s.set_relation(k, i, j, true);
        }
        s
    }

    fn action(pick: u32, place: u32) -> ActionSpec {
        ActionSpec::new(id(pick), SidePos::Center, id(place), SidePos::Center).unwrap()
    }

    #[test]
    fn worked_example_groups_together() {
        // sample 1: pick x3 onto x1, x2 on x1; sample 2: pick x2 onto x3, x1 on x3
        let s1 = state(&[1, 2, 3], &[false, true, false], &[(0, 2, 1)], 1);
        let t1 = SymbolicTransition { pre: s1.clone(), action: action(3, 1), post: s1 };
        let s2 = state(&[1, 2, 3], &[true, false, false], &[(0, 1, 3)], 1);
        let t2 = SymbolicTransition { pre: s2.clone(), action: action(2, 3), post: s2 };
        let (k1, th1) = canonicalize(&t1);
        let (k2, th2) = canonicalize(&t2);
        assert_eq!(k1, k2);
        assert_eq!(th1.objects, vec![id(3), id(1), id(2)]);
        assert_eq!(th2.objects, vec![id(2), id(3), id(1)]);
        assert_eq!(group_samples(&[t1, t2]).len(), 1);
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize, heads: usize) -> SymbolicState {
        SymbolicState {
            ids: (0..n as u32).map(id).collect(),
            unary: (0..n).map(|_| vec![rng.random_bool(0.5)]).collect(),
            relations: (0..heads).map(|_| (0..n * n).map(|_| rng.random_bool(0.3)).collect()).collect(),
        }
    }

    fn relabel(s: &SymbolicState, perm: &[usize]) -> SymbolicState {
        // object i of s becomes object perm[i]; ids stay sorted
        let n = s.len();
        let mut inv = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        SymbolicState {
            ids: s.ids.clone(),
            unary: (0..n).map(|p| s.unary[inv[p]].clone()).collect(),
            relations: s
                .relations
                .iter()
                .map(|r| {
                    let mut out = vec![false; n * n];
                    for p in 0..n {
                        for q in 0..n {
                            out[p * n + q] = r[inv[p] * n + inv[q]];
                        }
                    }
                    out
                })
                .collect(),
        }
    }

    /// Every labeling with ?a, ?b fixed, by brute force.
    fn brute_force_min(t: &SymbolicTransition) -> LiftedKey {
        let a = t.pre.index_of(t.action.pick).unwrap();
        let b = t.pre.index_of(t.action.place).unwrap();
        let free: Vec<usize> = (0..t.pre.len()).filter(|&i| i != a && i != b).collect();
        let view = state_view(&t.pre);
        permutations(&free)
            .into_iter()
            .map(|p| {
                let mut o = vec![a, b];
                o.extend(p);
                view.key(t.action.grasp, t.action.release, &o)
            })
            .min()
            .unwrap()
    }

    #[test]
    fn canonical_key_is_relabeling_invariant_and_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let s = random_state(&mut rng, 4, 3);
            let t = SymbolicTransition { pre: s.clone(), action: action(0, 1), post: s.clone() };
            let (key, _) = canonicalize(&t);
            assert_eq!(key, brute_force_min(&t));
            let mut perm: Vec<usize> = (0..4).collect();
            perm.shuffle(&mut rng);
            let r = relabel(&s, &perm);
            let ra = ActionSpec::new(id(perm[0] as u32), SidePos::Center, id(perm[1] as u32), SidePos::Center).unwrap();
            let rt = SymbolicTransition { pre: r.clone(), action: ra, post: r };
            assert_eq!(canonicalize(&rt).0, key);
        }
    }

    #[test]
    fn two_object_record_has_two_variables() {
        let s = state(&[5, 9], &[true, false], &[], 3);
        let t = SymbolicTransition { pre: s.clone(), action: action(9, 5), post: s };
        let (k, th) = canonicalize(&t);
        assert_eq!(k.n_vars, 2);
        assert_eq!(th.objects, vec![id(9), id(5)]);
    }

    #[test]
    fn flip_effect_and_noop_group() {
        let pre = state(&[0, 1], &[false, false], &[], 1);
        let post = state(&[0, 1], &[true, false], &[(0, 0, 1)], 1);
        let flips: Vec<_> = (0..5).map(|_| SymbolicTransition { pre: pre.clone(), action: action(0, 1), post: post.clone() }).collect();
        let ops = induce_operators(&flips, 5);
        assert_eq!(ops.len(), 1);
        let e = &ops[0].effect;
        assert_eq!(e.unary_add().copied().collect::<Vec<_>>(), vec![Literal::Unary { bit: 0, var: 0, value: true }]);
        assert_eq!(e.unary_del().copied().collect::<Vec<_>>(), vec![Literal::Unary { bit: 0, var: 0, value: false }]);
        assert_eq!(e.relation_add().count(), 1);
        assert_eq!(ops[0].conflict_ratio, 1.0);
        assert_eq!(apply_operator(&pre, &ops[0], &Substitution::new(vec![id(0), id(1)]).unwrap()).unwrap(), post);

        let noops: Vec<_> = (0..5).map(|_| SymbolicTransition { pre: pre.clone(), action: action(1, 0), post: pre.clone() }).collect();
        let ops = induce_operators(&noops, 5);
        assert!(ops[0].effect.is_empty());
        assert!(induce_operators(&noops, 6).is_empty());
    }

    #[test]
    fn modal_effect_survives_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pre = state(&[0, 1, 2], &[false, false, true], &[(1, 2, 1)], 3);
        let clean = state(&[0, 1, 2], &[false, false, true], &[(1, 2, 1), (0, 0, 1)], 3);
        let data: Vec<_> = (0..200)
            .map(|_| {
                let mut post = clean.clone();
                if rng.random_bool(0.1) {
                    let k = rng.random_range(0..3);
                    let (i, j) = (rng.random_range(0..3), rng.random_range(0..3));
                    let v = post.relation(k, i, j);
                    post.set_relation(k, i, j, !v);
                }
                SymbolicTransition { pre: pre.clone(), action: action(0, 1), post }
            })
            .collect();
        let ops = induce_operators(&data, 50);
        assert_eq!(ops.len(), 1);
        let expected = LiftedEffect { add: BTreeSet::from([Literal::Relation { head: 0, from: 0, to: 1 }]), del: BTreeSet::new() };
        assert_eq!(ops[0].effect, expected);
        assert!(ops[0].conflict_ratio > 0.8 && ops[0].conflict_ratio < 1.0);
    }

    #[test]
    fn apply_respects_frame_and_preconditions() {
        let pre = state(&[0, 1, 2], &[false, false, true], &[], 1);
        let post = state(&[0, 1, 2], &[false, false, true], &[(0, 0, 1)], 1);
        let t = SymbolicTransition { pre: pre.clone(), action: action(0, 1), post: post.clone() };
        let op = &induce_operators(&[t.clone(), t], 1)[0];
        let wide = state(&[0, 1, 2, 7], &[false, false, true, true], &[(0, 7, 7)], 1);
        let theta = Substitution::new(vec![id(0), id(1), id(2)]).unwrap();
        let out = apply_operator(&wide, op, &theta).unwrap();
        assert!(out.relation(0, 3, 3));
        assert_eq!(out.unary[3], vec![true]);
        assert!(out.relation(0, 0, 1));
        let bad = state(&[0, 1, 2], &[true, false, true], &[], 1);
        assert!(matches!(apply_operator(&bad, op, &theta), Err(ApplyError::Precondition(_))));
        assert!(matches!(
            apply_operator(&pre, op, &Substitution::new(vec![id(0), id(1)]).unwrap()),
            Err(ApplyError::Arity { .. })
        ));
    }

    #[test]
    fn support_filter_is_monotone_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<_> = (0..400)
            .map(|_| {
                let n = rng.random_range(2..5);
                let pre = random_state(&mut rng, n, 2);
                let post = random_state(&mut rng, n, 2);
                SymbolicTransition { pre, action: action(0, 1), post }
            })
            .collect();
        let groups = group_samples(&data);
        assert_eq!(groups.iter().map(|g| g.members.len()).sum::<usize>(), data.len());
        let mut prev = usize::MAX;
        for m in [1, 2, 3, 5] {
            let ops = induce_operators(&data, m);
            assert!(ops.len() <= prev);
            prev = ops.len();
            assert!(ops.windows(2).all(|w| w[0].support >= w[1].support));
            assert!(ops.iter().all(|o| o.support >= m));
        }
    }

    #[test]
    fn listing_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<_> = (0..300)
            .map(|_| {
                let n = rng.random_range(2..4);
                let pre = random_state(&mut rng, n, 3);
                let mut post = pre.clone();
                post.unary[0][0] = !post.unary[0][0];
                post.set_relation(0, 0, n - 1, true);
                SymbolicTransition { pre, action: action(0, 1), post }
            })
            .collect();
        let ops = induce_operators(&data, 2);
        assert!(!ops.is_empty());
        let mut buf = Vec::new();
        write_operators(&ops, &mut buf).unwrap();
        assert_eq!(read_operators(&buf[..]).unwrap(), ops);
        let mut again = Vec::new();
        write_operators(&ops, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn substitution_is_injective() {
        assert!(Substitution::new(vec![id(1), id(1)]).is_none());
        assert_eq!(Substitution::new(vec![id(3), id(1)]).unwrap().to_string(), "{?a/o3, ?b/o1}");
    }
}

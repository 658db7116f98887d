//! STRIPS PDDL emission and parsing.
//!
//! Unary bits use dual predicates `p{i}` / `not_p{i}`; relations are
//! `r{k}`. Only the `:strips` fragment is produced or accepted: conjunctive
//! preconditions and goals, add and delete effects, untyped objects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::induce::{var_name, LiftedEffect, LiftedKey, LiftedOperator, Literal};
use crate::sim::{ObjectId, SidePos};
use crate::symbols::{GroundAtom, SymbolicState};

pub const DOMAIN_NAME: &str = "relsym";
pub const PROBLEM_NAME: &str = "relsym-problem";

#[derive(Debug, Error, PartialEq)]
pub enum PddlError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: unknown predicate {name}")]
    UnknownPredicate { line: usize, col: usize, name: String },
    #[error("{line}:{col}: predicate {name} takes {expected} arguments, got {got}")]
    Arity { line: usize, col: usize, name: String, expected: usize, got: usize },
    #[error("{line}:{col}: {message}")]
    Structure { line: usize, col: usize, message: String },
    #[error("cannot emit: {0}")]
    Emit(String),
}

// ---- s-expressions ----

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Symbol { text: String, line: usize, col: usize },
    List { items: Vec<Sexp>, line: usize, col: usize, end_line: usize },
}

impl Sexp {
    pub fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Symbol { line, col, .. } | Sexp::List { line, col, .. } => (*line, *col),
        }
    }

    fn symbol(&self) -> Option<&str> {
        match self {
            Sexp::Symbol { text, .. } => Some(text),
            Sexp::List { .. } => None,
        }
    }

    fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List { items, .. } => Some(items),
            Sexp::Symbol { .. } => None,
        }
    }

    fn head(&self) -> Option<&str> {
        self.list().and_then(|l| l.first()).and_then(Sexp::symbol)
    }
}

fn structure(at: &Sexp, message: impl Into<String>) -> PddlError {
    let (line, col) = at.pos();
    PddlError::Structure { line, col, message: message.into() }
}

/// Parsed s-expressions plus `(line, text)` of every `;` comment.
pub fn parse_sexps(text: &str) -> Result<(Vec<Sexp>, Vec<(usize, String)>), PddlError> {
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = Vec::new();
    let mut top = Vec::new();
    let mut comments = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = li + 1;
        let (code, comment) = match raw.find(';') {
            Some(i) => (&raw[..i], Some(raw[i + 1..].trim().to_string())),
            None => (raw, None),
        };
        if let Some(c) = comment {
            comments.push((line, c));
        }
        let mut chars = code.char_indices().peekable();
        while let Some((ci, c)) = chars.next() {
            let col = ci + 1;
            match c {
                '(' => stack.push((Vec::new(), line, col)),
                ')' => {
                    let (items, l, cl) = stack.pop().ok_or(PddlError::Syntax { line, col, message: "unmatched ')'".into() })?;
                    let node = Sexp::List { items, line: l, col: cl, end_line: line };
                    match stack.last_mut() {
                        Some((parent, _, _)) => parent.push(node),
                        None => top.push(node),
                    }
                }
                c if c.is_whitespace() => {}
                _ => {
                    let mut text = String::from(c);
                    while let Some(&(_, n)) = chars.peek() {
                        if n.is_whitespace() || n == '(' || n == ')' {
                            break;
                        }
                        text.push(n);
                        chars.next();
                    }
                    let node = Sexp::Symbol { text: text.to_ascii_lowercase(), line, col };
                    match stack.last_mut() {
                        Some((parent, _, _)) => parent.push(node),
                        None => return Err(PddlError::Syntax { line, col, message: format!("symbol {text:?} outside a list") }),
                    }
                }
            }
        }
    }
    if let Some((_, line, col)) = stack.pop() {
        return Err(PddlError::Syntax { line, col, message: "unclosed '('".into() });
    }
    Ok((top, comments))
}

// ---- generic domain ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PddlAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PddlAction {
    pub name: String,
    pub parameters: Vec<String>,
    pub precondition: Vec<PddlAtom>,
    pub add: Vec<PddlAtom>,
    pub del: Vec<PddlAtom>,
    /// Comments inside the action body.
    pub comments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PddlDomain {
    pub name: String,
    pub requirements: Vec<String>,
    /// Predicate name and arity.
    pub predicates: Vec<(String, usize)>,
    pub actions: Vec<PddlAction>,
}

fn define_body<'a>(top: &'a [Sexp], kind: &str) -> Result<(&'a [Sexp], String), PddlError> {
    let root = match top {
        [one] => one,
        [] => return Err(PddlError::Syntax { line: 1, col: 1, message: "empty input".into() }),
        [_, second, ..] => return Err(structure(second, "expected a single define form")),
    };
    let items = root.list().ok_or_else(|| structure(root, "expected (define ...)"))?;
    if root.head() != Some("define") || items.len() < 2 {
        return Err(structure(root, "expected (define ...)"));
    }
    let header = items[1].list().ok_or_else(|| structure(&items[1], format!("expected ({kind} name)")))?;
    match header {
        [k, name] if k.symbol() == Some(kind) => {
            let name = name.symbol().ok_or_else(|| structure(name, "expected a name"))?;
            Ok((&items[2..], name.to_string()))
        }
        _ => Err(structure(&items[1], format!("expected ({kind} name)"))),
    }
}

fn check_atom(atom: &Sexp, predicates: &BTreeMap<String, usize>) -> Result<PddlAtom, PddlError> {
    let items = atom.list().ok_or_else(|| structure(atom, "expected an atom"))?;
    let (first, args) = items.split_first().ok_or_else(|| structure(atom, "empty atom"))?;
    let name = first.symbol().ok_or_else(|| structure(first, "expected a predicate name"))?;
    let (line, col) = first.pos();
    let expected = *predicates
        .get(name)
        .ok_or_else(|| PddlError::UnknownPredicate { line, col, name: name.to_string() })?;
    if args.len() != expected {
        return Err(PddlError::Arity { line, col, name: name.to_string(), expected, got: args.len() });
    }
    let args = args
        .iter()
        .map(|a| a.symbol().map(str::to_string).ok_or_else(|| structure(a, "expected an argument name")))
        .collect::<Result<_, _>>()?;
    Ok(PddlAtom { predicate: name.to_string(), args })
}

/// Atoms of `(and a1 a2 ...)` or a single atom.
fn conjunction<'a>(e: &'a Sexp) -> Result<Vec<&'a Sexp>, PddlError> {
    match e.head() {
        Some("and") => Ok(e.list().expect("list")[1..].iter().collect()),
        Some(_) => Ok(vec![e]),
        None => Err(structure(e, "expected a conjunction")),
    }
}

fn check_args(atom: &PddlAtom, params: &[String], at: &Sexp) -> Result<(), PddlError> {
    match atom.args.iter().find(|a| !params.contains(a)) {
        Some(a) => Err(structure(at, format!("{a} is not a parameter"))),
        None => Ok(()),
    }
}

fn parse_action(e: &Sexp, predicates: &BTreeMap<String, usize>, comments: &[(usize, String)]) -> Result<PddlAction, PddlError> {
    let items = e.list().expect("list");
    let name = items
        .get(1)
        .and_then(Sexp::symbol)
        .ok_or_else(|| structure(e, "expected an action name"))?
        .to_string();
    let mut action = PddlAction { name, parameters: Vec::new(), precondition: Vec::new(), add: Vec::new(), del: Vec::new(), comments: Vec::new() };
    if let Sexp::List { line, end_line, .. } = e {
        action.comments = comments.iter().filter(|(l, _)| l >= line && l <= end_line).map(|(_, c)| c.clone()).collect();
    }
    let mut rest = items[2..].iter();
    while let Some(k) = rest.next() {
        let key = k.symbol().ok_or_else(|| structure(k, "expected a keyword"))?;
        let value = rest.next().ok_or_else(|| structure(k, format!("missing value for {key}")))?;
        match key {
            ":parameters" => {
                let params = value.list().ok_or_else(|| structure(value, "expected a parameter list"))?;
                action.parameters = params
                    .iter()
                    .map(|p| match p.symbol() {
                        Some(s) if s.starts_with('?') => Ok(s.to_string()),
                        _ => Err(structure(p, "parameters must be ?variables")),
                    })
                    .collect::<Result<_, _>>()?;
            }
            ":precondition" => {
                for a in conjunction(value)? {
                    let atom = check_atom(a, predicates)?;
                    check_args(&atom, &action.parameters, a)?;
                    action.precondition.push(atom);
                }
            }
            ":effect" => {
                for a in conjunction(value)? {
                    if a.head() == Some("not") {
                        let inner = match a.list().expect("list") {
                            [_, inner] => inner,
                            _ => return Err(structure(a, "expected (not atom)")),
                        };
                        let atom = check_atom(inner, predicates)?;
                        check_args(&atom, &action.parameters, inner)?;
                        action.del.push(atom);
                    } else {
                        let atom = check_atom(a, predicates)?;
                        check_args(&atom, &action.parameters, a)?;
                        action.add.push(atom);
                    }
                }
            }
            other => return Err(structure(k, format!("unsupported action field {other}"))),
        }
    }
    Ok(action)
}

/// Parses a domain in the supported STRIPS subset.
pub fn parse_domain_text(text: &str) -> Result<PddlDomain, PddlError> {
    let (top, comments) = parse_sexps(text)?;
    let (body, name) = define_body(&top, "domain")?;
    let mut domain = PddlDomain { name, requirements: Vec::new(), predicates: Vec::new(), actions: Vec::new() };
    let mut declared = BTreeMap::new();
    for section in body {
        match section.head() {
            Some(":requirements") => {
                for r in &section.list().expect("list")[1..] {
                    let r = r.symbol().ok_or_else(|| structure(r, "expected a requirement"))?;
                    if r != ":strips" {
                        return Err(structure(section, format!("unsupported requirement {r}")));
                    }
                    domain.requirements.push(r.to_string());
                }
            }
            Some(":predicates") => {
                for p in &section.list().expect("list")[1..] {
                    let items = p.list().ok_or_else(|| structure(p, "expected a predicate declaration"))?;
                    let (first, args) = items.split_first().ok_or_else(|| structure(p, "empty predicate"))?;
                    let name = first.symbol().ok_or_else(|| structure(first, "expected a predicate name"))?;
                    declared.insert(name.to_string(), args.len());
                    domain.predicates.push((name.to_string(), args.len()));
                }
            }
            Some(":action") => domain.actions.push(parse_action(section, &declared, &comments)?),
            _ => return Err(structure(section, "unsupported domain section")),
        }
    }
    Ok(domain)
}

// ---- operators <-> domain ----

fn literal_atom(l: &Literal) -> String {
    l.to_string()
}

/// Domain text for `ops`. Operators must share one symbol vocabulary.
pub fn emit_domain(ops: &[LiftedOperator]) -> Result<String, PddlError> {
    let first = ops.first().ok_or_else(|| PddlError::Emit("no operators".into()))?;
    let (bits, heads) = (first.key.unary_bits(), first.key.heads());
    let mut out = String::new();
    writeln!(out, "(define (domain {DOMAIN_NAME})").expect("string write");
    writeln!(out, "  (:requirements :strips)").expect("string write");
    let mut preds = Vec::new();
    for b in 0..bits {
        preds.push(format!("(p{b} ?x)"));
        preds.push(format!("(not_p{b} ?x)"));
    }
    for k in 0..heads {
        preds.push(format!("(r{k} ?x ?y)"));
    }
    writeln!(out, "  (:predicates {})", preds.join(" ")).expect("string write");
    for op in ops {
        if op.key.unary_bits() != bits || op.key.heads() != heads {
            return Err(PddlError::Emit(format!("{} uses a different symbol vocabulary", op.name())));
        }
        let lits = op.effect.add.iter().chain(&op.effect.del);
        if let Some(l) = lits.clone().find(|l| l.vars().iter().any(|&v| v >= op.arity())) {
            return Err(PddlError::Emit(format!("{} has unhoused variable in {l}", op.name())));
        }
        let params: Vec<String> = (0..op.arity()).map(var_name).collect();
        let pre: Vec<String> = op.preconditions().iter().map(literal_atom).collect();
        let mut eff: Vec<String> = op.effect.add.iter().map(literal_atom).collect();
        eff.extend(op.effect.del.iter().map(|l| format!("(not {l})")));
        writeln!(out, "  (:action {}", op.name()).expect("string write");
        writeln!(out, "    ; support {} conflict_ratio {}", op.support, op.conflict_ratio).expect("string write");
        writeln!(out, "    :parameters ({})", params.join(" ")).expect("string write");
        writeln!(out, "    :precondition (and {})", pre.join(" ")).expect("string write");
        if eff.is_empty() {
            writeln!(out, "    :effect (and))").expect("string write");
        } else {
            writeln!(out, "    :effect (and {}))", eff.join(" ")).expect("string write");
        }
    }
    writeln!(out, ")").expect("string write");
    Ok(out)
}

fn lifted_literal(atom: &PddlAtom, params: &[String], at: &str) -> Result<Literal, PddlError> {
    let var = |a: &String| params.iter().position(|p| p == a).expect("checked parameter");
    let emit = |m: String| PddlError::Structure { line: 0, col: 0, message: format!("{at}: {m}") };
    let p = atom.predicate.as_str();
    if let Some(bit) = p.strip_prefix("not_p") {
        let bit = bit.parse().map_err(|_| emit(format!("bad predicate {p}")))?;
        return Ok(Literal::Unary { bit, var: var(&atom.args[0]), value: false });
    }
    if let Some(bit) = p.strip_prefix('p') {
        let bit = bit.parse().map_err(|_| emit(format!("bad predicate {p}")))?;
        return Ok(Literal::Unary { bit, var: var(&atom.args[0]), value: true });
    }
    if let Some(head) = p.strip_prefix('r') {
        let head = head.parse().map_err(|_| emit(format!("bad predicate {p}")))?;
        return Ok(Literal::Relation { head, from: var(&atom.args[0]), to: var(&atom.args[1]) });
    }
    Err(emit(format!("predicate {p} is outside the p/not_p/r vocabulary")))
}

/// Reads operators back from a domain written by [`emit_domain`].
pub fn parse_domain(text: &str) -> Result<Vec<LiftedOperator>, PddlError> {
    let domain = parse_domain_text(text)?;
    let bits = domain.predicates.iter().filter(|(p, _)| p.starts_with("not_p")).count();
    let heads = domain.predicates.iter().filter(|(p, _)| p.starts_with('r')).count();
    let bad = |name: &str, m: &str| PddlError::Structure { line: 0, col: 0, message: format!("{name}: {m}") };
    let mut ops = Vec::new();
    for a in &domain.actions {
        let (params_part, hash) = a
            .name
            .strip_prefix("pick-place_")
            .and_then(|s| s.split_once("__k"))
            .ok_or_else(|| bad(&a.name, "name is not pick-place_<grasp>_<release>__k<hash>"))?;
        let (g, r) = params_part.split_once('_').ok_or_else(|| bad(&a.name, "missing grasp/release"))?;
        let grasp = SidePos::from_name(g).ok_or_else(|| bad(&a.name, "unknown grasp"))?;
        let release = SidePos::from_name(r).ok_or_else(|| bad(&a.name, "unknown release"))?;
        let n = a.parameters.len();
        let mut unary: Vec<Vec<Option<bool>>> = vec![vec![None; bits]; n];
        let mut relations = vec![vec![false; n * n]; heads];
        for atom in &a.precondition {
            match lifted_literal(atom, &a.parameters, &a.name)? {
                Literal::Unary { bit, var, value } if bit < bits => unary[var][bit] = Some(value),
                Literal::Relation { head, from, to } if head < heads => relations[head][from * n + to] = true,
                _ => return Err(bad(&a.name, "predicate index out of range")),
            }
        }
        let unary: Vec<Vec<bool>> = unary
            .into_iter()
            .map(|u| u.into_iter().collect::<Option<Vec<bool>>>())
            .collect::<Option<_>>()
            .ok_or_else(|| bad(&a.name, "every parameter needs one p/not_p precondition per bit"))?;
        let key = LiftedKey::from_parts(grasp, release, unary, relations).ok_or_else(|| bad(&a.name, "preconditions are not in canonical form"))?;
        if key.hash8() != hash {
            return Err(bad(&a.name, "key hash does not match the preconditions"));
        }
        let mut effect = LiftedEffect::default();
        for atom in &a.add {
            effect.add.insert(lifted_literal(atom, &a.parameters, &a.name)?);
        }
        for atom in &a.del {
            effect.del.insert(lifted_literal(atom, &a.parameters, &a.name)?);
        }
        let (mut support, mut conflict_ratio) = (0, 1.0);
        for c in &a.comments {
            let parts: Vec<&str> = c.split_whitespace().collect();
            if let ["support", s, "conflict_ratio", r] = parts[..] {
                support = s.parse().map_err(|_| bad(&a.name, "bad support comment"))?;
                conflict_ratio = r.parse().map_err(|_| bad(&a.name, "bad support comment"))?;
            }
        }
        ops.push(LiftedOperator { key, effect, support, conflict_ratio });
    }
    Ok(ops)
}

// ---- problems ----

/// Goal atoms of `goal`: every unary atom, and relation atoms only between
/// objects that are in contact in the goal (either orientation).
pub fn goal_atoms(goal: &SymbolicState, goal_contacts: &BTreeSet<(ObjectId, ObjectId)>) -> BTreeSet<GroundAtom> {
    goal.atoms()
        .into_iter()
        .filter(|a| match *a {
            GroundAtom::Unary { .. } => true,
            GroundAtom::Relation { from, to, .. } => goal_contacts.contains(&(from, to)) || goal_contacts.contains(&(to, from)),
        })
        .collect()
}

/// Problem text with the full initial state and the contact-filtered goal.
pub fn emit_problem(init: &SymbolicState, goal: &SymbolicState, goal_contacts: &BTreeSet<(ObjectId, ObjectId)>) -> Result<String, PddlError> {
    if let Some(o) = goal.ids.iter().find(|o| init.index_of(**o).is_none()) {
        return Err(PddlError::Emit(format!("goal references unknown object {o}")));
    }
    if let Some((a, b)) = goal_contacts.iter().find(|(a, b)| init.index_of(*a).is_none() || init.index_of(*b).is_none()) {
        return Err(PddlError::Emit(format!("goal contact ({a}, {b}) references an unknown object")));
    }
    let goal = goal_atoms(goal, goal_contacts);
    Ok(problem_text(&init.ids, &init.atoms(), &goal))
}

/// Problem text from explicit atom sets.
pub fn problem_text(objects: &[ObjectId], init: &BTreeSet<GroundAtom>, goal: &BTreeSet<GroundAtom>) -> String {
    let mut out = String::new();
    let objs: Vec<String> = objects.iter().map(ObjectId::to_string).collect();
    writeln!(out, "(define (problem {PROBLEM_NAME})").expect("string write");
    writeln!(out, "  (:domain {DOMAIN_NAME})").expect("string write");
    writeln!(out, "  (:objects {})", objs.join(" ")).expect("string write");
    writeln!(out, "  (:init").expect("string write");
    for a in init {
        writeln!(out, "    {a}").expect("string write");
    }
    writeln!(out, "  )").expect("string write");
    writeln!(out, "  (:goal (and").expect("string write");
    for a in goal {
        writeln!(out, "    {a}").expect("string write");
    }
    writeln!(out, "  ))").expect("string write");
    writeln!(out, ")").expect("string write");
    out
}

fn parse_object(e: &Sexp) -> Result<ObjectId, PddlError> {
    e.symbol()
        .and_then(|s| s.strip_prefix('o'))
        .and_then(|d| d.parse().ok())
        .map(ObjectId)
        .ok_or_else(|| structure(e, "objects must be named o<number>"))
}

fn ground_atom(e: &Sexp, bits: usize, heads: usize, objects: &BTreeSet<ObjectId>) -> Result<GroundAtom, PddlError> {
    let items = e.list().ok_or_else(|| structure(e, "expected an atom"))?;
    let (first, args) = items.split_first().ok_or_else(|| structure(e, "empty atom"))?;
    let name = first.symbol().ok_or_else(|| structure(first, "expected a predicate name"))?;
    let (line, col) = first.pos();
    let unknown = || PddlError::UnknownPredicate { line, col, name: name.to_string() };
    let (arity, make): (usize, Box<dyn Fn(&[ObjectId]) -> GroundAtom>) = if let Some(b) = name.strip_prefix("not_p") {
        let bit: usize = b.parse().map_err(|_| unknown())?;
        if bit >= bits {
            return Err(unknown());
        }
        (1, Box::new(move |o| GroundAtom::Unary { bit, value: false, object: o[0] }))
    } else if let Some(b) = name.strip_prefix('p') {
        let bit: usize = b.parse().map_err(|_| unknown())?;
        if bit >= bits {
            return Err(unknown());
        }
        (1, Box::new(move |o| GroundAtom::Unary { bit, value: true, object: o[0] }))
    } else if let Some(h) = name.strip_prefix('r') {
        let head: usize = h.parse().map_err(|_| unknown())?;
        if head >= heads {
            return Err(unknown());
        }
        (2, Box::new(move |o| GroundAtom::Relation { head, from: o[0], to: o[1] }))
    } else {
        return Err(unknown());
    };
    if args.len() != arity {
        return Err(PddlError::Arity { line, col, name: name.to_string(), expected: arity, got: args.len() });
    }
    let objs: Vec<ObjectId> = args.iter().map(parse_object).collect::<Result<_, _>>()?;
    if let Some((o, at)) = objs.iter().zip(args).find(|(o, _)| !objects.contains(o)) {
        return Err(structure(at, format!("undeclared object {o}")));
    }
    Ok(make(&objs))
}

/// Parses a problem written by [`emit_problem`] into the initial state and goal atoms.
pub fn parse_problem(text: &str, unary_bits: usize, heads: usize) -> Result<(SymbolicState, BTreeSet<GroundAtom>), PddlError> {
    let (top, _) = parse_sexps(text)?;
    let (body, _) = define_body(&top, "problem")?;
    let mut objects = BTreeSet::new();
    let mut init = BTreeSet::new();
    let mut goal = BTreeSet::new();
    let mut init_at = None;
    for section in body {
        let items = section.list().ok_or_else(|| structure(section, "expected a section"))?;
        match section.head() {
            Some(":domain") => {}
            Some(":objects") => {
                for o in &items[1..] {
                    objects.insert(parse_object(o)?);
                }
            }
            Some(":init") => {
                init_at = Some(section);
                for a in &items[1..] {
                    init.insert(ground_atom(a, unary_bits, heads, &objects)?);
                }
            }
            Some(":goal") => {
                let g = items.get(1).ok_or_else(|| structure(section, "empty goal"))?;
                for a in conjunction(g)? {
                    goal.insert(ground_atom(a, unary_bits, heads, &objects)?);
                }
            }
            _ => return Err(structure(section, "unsupported problem section")),
        }
    }
    let ids: Vec<ObjectId> = objects.into_iter().collect();
    let state = SymbolicState::from_atoms(&ids, unary_bits, heads, &init).map_err(|e| match init_at {
        Some(s) => structure(s, e.to_string()),
        None => PddlError::Structure { line: 0, col: 0, message: e.to_string() },
    })?;
    Ok((state, goal))
}

/// Plan steps from planner output lines `(action-name arg ...)`; other lines
/// (comments, cost summaries) are ignored.
pub fn parse_plan_output(text: &str) -> Vec<(String, Vec<String>)> {
    text.lines()
        .filter_map(|l| {
            let l = l.trim();
            let inner = l.strip_prefix('(')?.strip_suffix(')')?;
            let mut parts = inner.split_whitespace().map(str::to_ascii_lowercase);
            let name = parts.next()?;
            Some((name, parts.collect()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::induce::induce_operators;
    use crate::sim::ActionSpec;
    use crate::symbols::SymbolicTransition;

    fn st(unary: &[bool], rels: &[(usize, usize, usize)], heads: usize) -> SymbolicState {
        let n = unary.len();
        let mut s = SymbolicState {
            ids: (0..n as u32).map(ObjectId).collect(),
            unary: unary.iter().map(|b| vec![*b]).collect(),
            relations: vec![vec![false; n * n]; heads],
        };
        for &(k, i, j) in rels {
            s.set_relation(k, i, j, true);
        }
        s
    }

    fn sample_ops() -> Vec<LiftedOperator> {
        let a = ActionSpec::new(ObjectId(0), SidePos::Center, ObjectId(1), SidePos::Right).unwrap();
        let b = ActionSpec::new(ObjectId(2), SidePos::Left, ObjectId(0), SidePos::Center).unwrap();
        let mut data = Vec::new();
        for _ in 0..3 {
            data.push(SymbolicTransition { pre: st(&[false, true, false], &[(2, 2, 0)], 3), action: a, post: st(&[true, true, false], &[(0, 0, 1)], 3) });
            data.push(SymbolicTransition { pre: st(&[false, true, false], &[], 3), action: b, post: st(&[false, true, false], &[], 3) });
        }
        induce_operators(&data, 1)
    }

    #[test]
    fn domain_round_trip_and_stability() {
        let ops = sample_ops();
        let text = emit_domain(&ops).unwrap();
        assert_eq!(text, emit_domain(&ops).unwrap());
        assert_eq!(parse_domain(&text).unwrap(), ops);
        assert!(text.contains("(not (not_p0 ?a))"));
        assert!(text.contains(":effect (and))"));
        assert!(emit_domain(&[]).is_err());
    }

    #[test]
    fn unhoused_variable_is_rejected() {
        let mut ops = sample_ops();
        ops[0].effect.add.insert(Literal::Unary { bit: 0, var: 7, value: true });
        assert!(matches!(emit_domain(&ops), Err(PddlError::Emit(_))));
    }

    #[test]
    fn syntax_errors_report_position() {
        assert_eq!(
            parse_sexps("(a\n  (b c)").unwrap_err(),
            PddlError::Syntax { line: 1, col: 1, message: "unclosed '('".into() }
        );
        assert!(matches!(parse_sexps("(a))").unwrap_err(), PddlError::Syntax { line: 1, col: 4, .. }));
        let text = emit_domain(&sample_ops()).unwrap().replacen("(r2 ?x ?y)", "", 1);
        assert!(matches!(parse_domain_text(&text), Err(PddlError::UnknownPredicate { name, .. }) if name == "r2"));
        let text = emit_domain(&sample_ops()).unwrap().replacen("(p0 ?a)", "(p0 ?a ?b)", 1);
        assert!(matches!(parse_domain_text(&text), Err(PddlError::Arity { expected: 1, got: 2, .. })));
    }

    #[test]
    fn hand_written_domain_parses() {
        let text = "; tiny blocks domain\n(define (domain tiny)\n  (:requirements :strips)\n  (:predicates (clear ?x) (on ?x ?y) (ontable ?x))\n  (:action stack\n    :parameters (?x ?y)\n    :precondition (and (clear ?x) (clear ?y) (ontable ?x))\n    :effect (and (on ?x ?y) (not (clear ?y)) (not (ontable ?x)))))\n";
        let d = parse_domain_text(text).unwrap();
        assert_eq!(d.name, "tiny");
        assert_eq!(d.actions.len(), 1);
        assert_eq!(d.actions[0].add, vec![PddlAtom { predicate: "on".into(), args: vec!["?x".into(), "?y".into()] }]);
        assert_eq!(d.actions[0].del.len(), 2);
    }

    #[test]
    fn problem_round_trip_and_contact_filter() {
        let init = st(&[true, false, false], &[(0, 1, 0), (1, 2, 2)], 3);
        let goal = st(&[true, true, false], &[(0, 1, 0), (2, 2, 1)], 3);
        let none = BTreeSet::new();
        let text = emit_problem(&init, &goal, &none).unwrap();
        let (back, g) = parse_problem(&text, 1, 3).unwrap();
        assert_eq!(back, init);
        assert!(g.iter().all(|a| matches!(a, GroundAtom::Unary { .. })));
        assert_eq!(g.len(), 3);

        let contacts = BTreeSet::from([(ObjectId(0), ObjectId(1))]);
        let (_, g) = parse_problem(&emit_problem(&init, &goal, &contacts).unwrap(), 1, 3).unwrap();
        assert!(g.contains(&GroundAtom::Relation { head: 0, from: ObjectId(1), to: ObjectId(0) }));
        assert!(!g.iter().any(|a| matches!(a, GroundAtom::Relation { head: 2, .. })));
        assert_eq!(g, goal_atoms(&goal, &contacts));
    }

    #[test]
    fn eight_objects_are_declared() {
        let s = st(&[false; 8], &[], 3);
        let text = emit_problem(&s, &s, &BTreeSet::new()).unwrap();
        assert!(text.contains("(:objects o0 o1 o2 o3 o4 o5 o6 o7)"));
        let bigger = st(&[false; 9], &[], 3);
        assert!(emit_problem(&s, &bigger, &BTreeSet::new()).is_err());
    }

    #[test]
    fn plan_output_lines() {
        let steps = parse_plan_output("(pick-place_center_left__k0011aabb o1 o0)\n; cost = 1 (unit cost)\n");
        assert_eq!(steps, vec![("pick-place_center_left__k0011aabb".to_string(), vec!["o1".to_string(), "o0".to_string()])]);
    }
}

//! Symbolic states and transitions.
//!
//! A [`SymbolicState`] stores, for a set of objects in id order, one unary
//! bitvector per object and one row-major `n x n` boolean matrix per relation
//! head (diagonal included).

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{Real, RelationalNet};
use crate::sim::{ActionSpec, ObjectFeature, ObjectId, ObjectKind, Transition};

/// Anything that maps a set of objects to unary bits and relation matrices.
pub trait Symbolizer {
    /// Unary bits per object.
    fn unary_bits(&self) -> usize;
    /// Number of relation heads.
    fn relation_heads(&self) -> usize;
    /// `(unary, relations)` as in [`SymbolicState`].
    fn symbols(&self, objects: &[ObjectFeature]) -> (Vec<Vec<bool>>, Vec<Vec<bool>>);
}

impl<F: Real> Symbolizer for RelationalNet<F> {
    fn unary_bits(&self) -> usize {
        self.config.d_k
    }

    fn relation_heads(&self) -> usize {
        self.config.heads
    }

    fn symbols(&self, objects: &[ObjectFeature]) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
        let s = self.sample_symbols(objects);
        (s.unary, s.relations)
    }
}

impl<S: Symbolizer + ?Sized> Symbolizer for &S {
    fn unary_bits(&self) -> usize {
        (**self).unary_bits()
    }

    fn relation_heads(&self) -> usize {
        (**self).relation_heads()
    }

    fn symbols(&self, objects: &[ObjectFeature]) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
        (**self).symbols(objects)
    }
}

/// Hand-written symbolizer over exact geometry, used as a reference.
///
/// Unary bit: the object is long. Relations `r0`, `r1`, `r2`: `i` rests
/// directly on `j` with its center left of, over, or right of `j`'s center.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GeometricSymbolizer;

impl Symbolizer for GeometricSymbolizer {
    fn unary_bits(&self) -> usize {
        1
    }

    fn relation_heads(&self) -> usize {
        3
    }

    fn symbols(&self, objects: &[ObjectFeature]) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
        let n = objects.len();
        let unary = objects.iter().map(|o| vec![o.kind == ObjectKind::Long]).collect();
        let mut rel = vec![vec![false; n * n]; 3];
        for (i, a) in objects.iter().enumerate() {
            for (j, b) in objects.iter().enumerate() {
                let resting = i != j && (a.bottom() - b.top()).abs() < 1e-3 && a.footprint().overlaps(&b.footprint());
                if !resting {
                    continue;
                }
                let dx = a.position[0] - b.position[0];
                let k = if dx < -1.0 {
                    0
                } else if dx > 1.0 {
                    2
                } else {
                    1
                };
                rel[k][i * n + j] = true;
            }
        }
        (unary, rel)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SymbolError {
    #[error("state has {ids} ids but {unary} unary rows")]
    UnaryCount { ids: usize, unary: usize },
    #[error("relation head {head} has {len} entries, expected {expected}")]
    RelationShape { head: usize, len: usize, expected: usize },
    #[error("unary rows have inconsistent lengths")]
    UnaryWidth,
    #[error("pre and post states cover different objects")]
    ObjectMismatch,
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("object {0} needs exactly one of p{1}/not_p{1}")]
    UnaryPolarity(ObjectId, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolicState {
    /// Objects in ascending id order.
    pub ids: Vec<ObjectId>,
    pub unary: Vec<Vec<bool>>,
    /// One row-major `n x n` matrix per head.
    pub relations: Vec<Vec<bool>>,
}

impl SymbolicState {
    pub fn new(ids: Vec<ObjectId>, unary: Vec<Vec<bool>>, relations: Vec<Vec<bool>>) -> Result<Self, SymbolError> {
        let s = SymbolicState { ids, unary, relations };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), SymbolError> {
        let n = self.ids.len();
        if self.unary.len() != n {
            return Err(SymbolError::UnaryCount { ids: n, unary: self.unary.len() });
        }
        if let Some(first) = self.unary.first() {
            if self.unary.iter().any(|u| u.len() != first.len()) {
                return Err(SymbolError::UnaryWidth);
            }
        }
        for (head, r) in self.relations.iter().enumerate() {
            if r.len() != n * n {
                return Err(SymbolError::RelationShape { head, len: r.len(), expected: n * n });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: ObjectId) -> Option<usize> {
        self.ids.iter().position(|x| *x == id)
    }

    pub fn unary_bits(&self) -> usize {
        self.unary.first().map_or(0, Vec::len)
    }

    pub fn heads(&self) -> usize {
        self.relations.len()
    }

    /// Relation `head` between record indices `i` and `j`.
    pub fn relation(&self, head: usize, i: usize, j: usize) -> bool {
        self.relations[head][i * self.len() + j]
    }

    pub fn set_relation(&mut self, head: usize, i: usize, j: usize, value: bool) {
        let n = self.len();
        self.relations[head][i * n + j] = value;
    }

    /// Restriction to `ids` (which must be present), in the given order.
    pub fn restrict(&self, ids: &[ObjectId]) -> Result<SymbolicState, SymbolError> {
        let idx: Vec<usize> = ids
            .iter()
            .map(|id| self.index_of(*id).ok_or(SymbolError::UnknownObject(*id)))
            .collect::<Result<_, _>>()?;
        let m = idx.len();
        let relations = self
            .relations
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let mut out = vec![false; m * m];
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        out[a * m + b] = self.relation(k, i, j);
                    }
                }
                out
            })
            .collect();
        Ok(SymbolicState { ids: ids.to_vec(), unary: idx.iter().map(|&i| self.unary[i].clone()).collect(), relations })
    }
}

/// A ground atom of the symbolic vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroundAtom {
    /// `(p{bit} o)` when `value`, else `(not_p{bit} o)`.
    Unary { bit: usize, value: bool, object: ObjectId },
    /// `(r{head} from to)`.
    Relation { head: usize, from: ObjectId, to: ObjectId },
}

impl GroundAtom {
    pub fn predicate(&self) -> String {
        match *self {
            GroundAtom::Unary { bit, value: true, .. } => format!("p{bit}"),
            GroundAtom::Unary { bit, value: false, .. } => format!("not_p{bit}"),
            GroundAtom::Relation { head, .. } => format!("r{head}"),
        }
    }

    pub fn objects(&self) -> Vec<ObjectId> {
        match *self {
            GroundAtom::Unary { object, .. } => vec![object],
            GroundAtom::Relation { from, to, .. } => vec![from, to],
        }
    }
}

impl std::fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let args: Vec<String> = self.objects().iter().map(ObjectId::to_string).collect();
        write!(f, "({} {})", self.predicate(), args.join(" "))
    }
}

impl SymbolicState {
    /// Every true atom: one unary literal per object and bit, plus the set relations.
    pub fn atoms(&self) -> BTreeSet<GroundAtom> {
        let mut out = BTreeSet::new();
        for (i, id) in self.ids.iter().enumerate() {
            for (bit, &value) in self.unary[i].iter().enumerate() {
                out.insert(GroundAtom::Unary { bit, value, object: *id });
            }
        }
        for head in 0..self.heads() {
            for (i, from) in self.ids.iter().enumerate() {
                for (j, to) in self.ids.iter().enumerate() {
                    if self.relation(head, i, j) {
                        out.insert(GroundAtom::Relation { head, from: *from, to: *to });
                    }
                }
            }
        }
        out
    }

    /// Inverse of [`Self::atoms`]. Each object needs exactly one of `p`/`not_p` per bit.
    pub fn from_atoms(ids: &[ObjectId], unary_bits: usize, heads: usize, atoms: &BTreeSet<GroundAtom>) -> Result<Self, SymbolError> {
        let mut sorted = ids.to_vec();
        sorted.sort();
        sorted.dedup();
        let n = sorted.len();
        let mut unary: Vec<Vec<Option<bool>>> = vec![vec![None; unary_bits]; n];
        let mut relations = vec![vec![false; n * n]; heads];
        let index = |o: ObjectId| sorted.binary_search(&o).map_err(|_| SymbolError::UnknownObject(o));
        for atom in atoms {
            match *atom {
                GroundAtom::Unary { bit, value, object } => {
                    let i = index(object)?;
                    if bit >= unary_bits {
                        return Err(SymbolError::UnaryWidth);
                    }
                    if unary[i][bit].replace(value).is_some_and(|old| old != value) {
                        return Err(SymbolError::UnaryPolarity(object, bit));
                    }
                }
                GroundAtom::Relation { head, from, to } => {
                    let (i, j) = (index(from)?, index(to)?);
                    if head >= heads {
                        return Err(SymbolError::RelationShape { head, len: 0, expected: n * n });
                    }
                    relations[head][i * n + j] = true;
                }
            }
        }
        let unary = unary
            .into_iter()
            .zip(&sorted)
            .map(|(bits, id)| {
                bits.into_iter()
                    .enumerate()
                    .map(|(bit, v)| v.ok_or(SymbolError::UnaryPolarity(*id, bit)))
                    .collect::<Result<Vec<bool>, _>>()
            })
            .collect::<Result<_, _>>()?;
        SymbolicState::new(sorted, unary, relations)
    }

    pub fn holds(&self, atom: &GroundAtom) -> bool {
        match *atom {
            GroundAtom::Unary { bit, value, object } => self.index_of(object).is_some_and(|i| self.unary[i][bit] == value),
            GroundAtom::Relation { head, from, to } => match (self.index_of(from), self.index_of(to)) {
                (Some(i), Some(j)) => self.relation(head, i, j),
                _ => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolicTransition {
    pub pre: SymbolicState,
    pub action: ActionSpec,
    pub post: SymbolicState,
}

impl SymbolicTransition {
    pub fn new(pre: SymbolicState, action: ActionSpec, post: SymbolicState) -> Result<Self, SymbolError> {
        pre.check()?;
        post.check()?;
        if pre.ids != post.ids {
            return Err(SymbolError::ObjectMismatch);
        }
        for id in [action.pick, action.place] {
            if pre.index_of(id).is_none() {
                return Err(SymbolError::UnknownObject(id));
            }
        }
        Ok(SymbolicTransition { pre, action, post })
    }

    pub fn ids(&self) -> &[ObjectId] {
        &self.pre.ids
    }
}

/// Symbols of the objects `ids` with features `objects` (same order).
pub fn symbolize_state<S: Symbolizer + ?Sized>(symbolizer: &S, ids: &[ObjectId], objects: &[ObjectFeature]) -> SymbolicState {
    assert_eq!(ids.len(), objects.len(), "one feature per id");
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| ids[i]);
    let sorted_ids: Vec<ObjectId> = order.iter().map(|&i| ids[i]).collect();
    let sorted: Vec<ObjectFeature> = order.iter().map(|&i| objects[i]).collect();
    let (unary, relations) = symbolizer.symbols(&sorted);
    SymbolicState { ids: sorted_ids, unary, relations }
}

pub fn symbolize_transition<S: Symbolizer + ?Sized>(symbolizer: &S, t: &Transition) -> SymbolicTransition {
    SymbolicTransition {
        pre: symbolize_state(symbolizer, &t.ids, &t.pre),
        action: t.action,
        post: symbolize_state(symbolizer, &t.ids, &t.post),
    }
}

pub fn symbolize_dataset<S: Symbolizer + ?Sized>(symbolizer: &S, transitions: &[Transition]) -> Vec<SymbolicTransition> {
    transitions.iter().map(|t| symbolize_transition(symbolizer, t)).collect()
}

// ---- line-delimited file format ----

const FORMAT: &str = "relsym-symbolic";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    unary_bits: usize,
    heads: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateRecord {
    /// One bit string per object.
    unary: Vec<String>,
    /// Per head, one bit string per matrix row.
    relations: Vec<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    ids: Vec<ObjectId>,
    action: ActionSpec,
    pre: StateRecord,
    post: StateRecord,
}

fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

fn string_to_bits(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

fn state_record(s: &SymbolicState) -> StateRecord {
    let n = s.len().max(1);
    StateRecord {
        unary: s.unary.iter().map(|u| bits_to_string(u)).collect(),
        relations: s.relations.iter().map(|r| r.chunks(n).map(bits_to_string).collect()).collect(),
    }
}

fn state_from_record(ids: &[ObjectId], r: &StateRecord) -> Option<SymbolicState> {
    let unary = r.unary.iter().map(|u| string_to_bits(u)).collect::<Option<Vec<_>>>()?;
    let relations = r
        .relations
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|row| string_to_bits(row))
                .collect::<Option<Vec<_>>>()
                .map(|v| v.concat())
        })
        .collect::<Option<Vec<_>>>()?;
    SymbolicState::new(ids.to_vec(), unary, relations).ok()
}

#[derive(Debug, Error)]
pub enum SymbolicIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

pub fn write_symbolic<W: Write>(records: &[SymbolicTransition], unary_bits: usize, heads: usize, mut w: W) -> io::Result<()> {
    let header = Header { format: FORMAT.into(), version: VERSION, unary_bits, heads };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(io::Error::other)?)?;
    for t in records {
        let rec = Record { ids: t.pre.ids.clone(), action: t.action, pre: state_record(&t.pre), post: state_record(&t.post) };
        writeln!(w, "{}", serde_json::to_string(&rec).map_err(io::Error::other)?)?;
    }
    w.flush()
}

/// Reads a symbolic dataset; returns `(records, unary_bits, heads)`.
pub fn read_symbolic<R: BufRead>(r: R) -> Result<(Vec<SymbolicTransition>, usize, usize), SymbolicIoError> {
    let mut lines = r.lines();
    let bad = |line: usize, message: String| SymbolicIoError::Format { line, message };
    let head = lines.next().ok_or_else(|| bad(1, "missing header".into()))??;
    let header: Header = serde_json::from_str(&head).map_err(|e| bad(1, e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(1, format!("unsupported format {} v{}", header.format, header.version)));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| bad(line_no, e.to_string()))?;
        let pre = state_from_record(&rec.ids, &rec.pre).ok_or_else(|| bad(line_no, "malformed pre state".into()))?;
        let post = state_from_record(&rec.ids, &rec.post).ok_or_else(|| bad(line_no, "malformed post state".into()))?;
        if pre.unary_bits() != header.unary_bits && !pre.is_empty() || pre.heads() != header.heads {
            return Err(bad(line_no, "symbol dimensions differ from header".into()));
        }
        let t = SymbolicTransition::new(pre, rec.action, post).map_err(|e| bad(line_no, e.to_string()))?;
        out.push(t);
    }
    Ok((out, header.unary_bits, header.heads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ModelConfig;
    use crate::sim::{collect_dataset, init_scene, SidePos, Support, WorldState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn net() -> RelationalNet<f64> {
        let cfg = ModelConfig { hidden: 8, d_att: 4, d_z: 4, ..ModelConfig::default() };
        RelationalNet::init(cfg, &mut ChaCha8Rng::seed_from_u64(2))
    }

    #[test]
    fn single_object_shapes() {
        let s = symbolize_state(&net(), &[ObjectId(4)], &[ObjectFeature::new(ObjectKind::Short, [0.0, 0.0, 2.5])]);
        assert_eq!(s.unary.len(), 1);
        assert_eq!(s.relations.len(), 3);
        assert!(s.relations.iter().all(|r| r.len() == 1));
    }

    #[test]
    fn deterministic_and_subset_consistent() {
        let m = net();
        let w = init_scene(3, 5).unwrap();
        let ids = w.ids();
        let feats: Vec<_> = ids.iter().map(|id| w.objects[id]).collect();
        let a = symbolize_state(&m, &ids, &feats);
        assert_eq!(a, symbolize_state(&m, &ids, &feats));
        let b = symbolize_state(&m, &ids[..2], &feats[..2]);
        assert_eq!(a.restrict(&ids[..2]).unwrap(), b);
    }

    #[test]
    fn order_of_input_does_not_matter() {
        let m = net();
        let w = init_scene(4, 6).unwrap();
        let ids = w.ids();
        let feats: Vec<_> = ids.iter().map(|id| w.objects[id]).collect();
        let mut rid = ids.clone();
        let mut rfe = feats.clone();
        rid.reverse();
        rfe.reverse();
        assert_eq!(symbolize_state(&m, &ids, &feats), symbolize_state(&m, &rid, &rfe));
    }

    #[test]
    fn dataset_shapes_and_noops() {
        let m = net();
        assert!(symbolize_dataset(&m, &[]).is_empty());
        let data = collect_dataset(1000, 3, (2, 4));
        let sym = symbolize_dataset(&m, &data);
        assert_eq!(sym.len(), 1000);
        for (t, s) in data.iter().zip(&sym) {
            assert_eq!(s.pre.ids, s.post.ids);
            assert!(s.pre.ids.iter().all(|id| t.ids.contains(id)));
            if t.is_noop() {
                assert_eq!(s.pre, s.post);
            }
        }
        assert!(data.iter().any(Transition::is_noop));
    }

    #[test]
    fn geometric_relations() {
        let mut objects = BTreeMap::new();
        let mut support = BTreeMap::new();
        objects.insert(ObjectId(0), ObjectFeature::new(ObjectKind::Long, [0.0, 0.0, 2.5]));
        objects.insert(ObjectId(1), ObjectFeature::new(ObjectKind::Short, [-10.0, 0.0, 7.5]));
        objects.insert(ObjectId(2), ObjectFeature::new(ObjectKind::Short, [20.0, 0.0, 2.5]));
        support.insert(ObjectId(0), Support::Table);
        support.insert(ObjectId(1), Support::On(ObjectId(0)));
        support.insert(ObjectId(2), Support::Table);
        let w = WorldState { objects, support };
        let ids = w.ids();
        let feats: Vec<_> = ids.iter().map(|id| w.objects[id]).collect();
        let s = symbolize_state(&GeometricSymbolizer, &ids, &feats);
        assert_eq!(s.unary, vec![vec![true], vec![false], vec![false]]);
        assert!(s.relation(0, 1, 0));
        assert_eq!(s.relations.iter().flatten().filter(|b| **b).count(), 1);
    }

    #[test]
    fn file_round_trip() {
        let data = collect_dataset(50, 8, (2, 4));
        let sym = symbolize_dataset(&net(), &data);
        let mut buf = Vec::new();
        write_symbolic(&sym, 1, 3, &mut buf).unwrap();
        let (back, k, h) = read_symbolic(&buf[..]).unwrap();
        assert_eq!((k, h), (1, 3));
        assert_eq!(back, sym);
        let text = String::from_utf8(buf).unwrap().replacen("\"unary\":[\"", "\"unary\":[\"x", 1);
        assert!(matches!(read_symbolic(text.as_bytes()), Err(SymbolicIoError::Format { line: 2, .. })));
    }

    #[test]
    fn atoms_round_trip() {
        let w = init_scene(4, 3).unwrap();
        let ids = w.ids();
        let feats: Vec<_> = ids.iter().map(|id| w.objects[id]).collect();
        let s = symbolize_state(&net(), &ids, &feats);
        let atoms = s.atoms();
        assert_eq!(atoms.iter().filter(|a| matches!(a, GroundAtom::Unary { .. })).count(), 4);
        assert!(atoms.iter().all(|a| s.holds(a)));
        assert_eq!(SymbolicState::from_atoms(&ids, 1, 3, &atoms).unwrap(), s);
        let mut missing = atoms.clone();
        missing.retain(|a| !matches!(a, GroundAtom::Unary { object, .. } if *object == ids[0]));
        assert_eq!(SymbolicState::from_atoms(&ids, 1, 3, &missing), Err(SymbolError::UnaryPolarity(ids[0], 0)));
    }

    #[test]
    fn transition_checks_objects() {
        let s = SymbolicState::new(vec![ObjectId(0), ObjectId(1)], vec![vec![true], vec![false]], vec![vec![false; 4]]).unwrap();
        let a = ActionSpec::new(ObjectId(0), SidePos::Center, ObjectId(1), SidePos::Center).unwrap();
        assert!(SymbolicTransition::new(s.clone(), a, s.clone()).is_ok());
        let b = ActionSpec::new(ObjectId(0), SidePos::Center, ObjectId(7), SidePos::Center).unwrap();
        assert_eq!(SymbolicTransition::new(s.clone(), b, s.clone()), Err(SymbolError::UnknownObject(ObjectId(7))));
        assert!(SymbolicState::new(vec![ObjectId(0)], vec![], vec![]).is_err());
    }
}

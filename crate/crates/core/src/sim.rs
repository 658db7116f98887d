//! Deterministic kinematic tabletop world with pick-and-place actions.
//!
//! Blocks are axis-aligned boxes whose long axis is the world x axis (yaw is
//! carried in the feature vector but is always zero). Every object rests
//! either on the table (z = 0 plane) or on exactly one supporting object.
//!
//! Action semantics:
//! * The gripper grasps the pick object at its center shifted by the grasp
//!   offset along the long axis. A grasp outside the object's extent misses
//!   and the action is a no-op.
//! * A center grasp carries the pick object together with everything stacked
//!   on it. An off-center grasp carries only the pick object; whatever rested
//!   on it drops straight down onto the highest surface underneath.
//! * The release point is the place object's top-face center shifted by the
//!   release offset along its long axis. The carried compound stacks on the
//!   highest surface whose footprint contains the release point, or rests on
//!   the table there. A release that would interpenetrate another object is
//!   refused and the action becomes a no-op.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Edge length of a short block and the width/height of a long block, in cm.
pub const BLOCK_SIDE: f64 = 5.0;
/// Length of a long block along its long axis, in cm.
pub const LONG_LENGTH: f64 = 25.0;
/// Magnitude of the grasp/release offsets along the long axis, in cm.
pub const SIDE_OFFSET: f64 = 10.0;
/// Number of random actions executed before an exploration episode resets.
pub const EPISODE_LENGTH: usize = 8;
/// Half extents of the area initial scenes are sampled from.
pub const TABLE_HALF_EXTENT: [f64; 2] = [50.0, 35.0];
/// Minimum free gap between footprints in a freshly generated scene.
pub const SCENE_CLEARANCE: f64 = 1.0;

const GEOM_EPS: f64 = 1e-6;
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("could not place object {index} of {n_objects} without collision (seed {seed})")]
    ScenePlacement { index: usize, n_objects: usize, seed: u64 },
    #[error("scene must contain at least one object")]
    EmptyScene,
    #[error("object sets differ between states")]
    ObjectMismatch,
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("invalid feature vector: {0}")]
    InvalidFeature(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    Short,
    Long,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 2] = [ObjectKind::Short, ObjectKind::Long];

    /// Half extents (x, y, z) with the long axis along x.
    pub fn half_extents(self) -> [f64; 3] {
        match self {
            ObjectKind::Short => [BLOCK_SIDE / 2.0; 3],
            ObjectKind::Long => [LONG_LENGTH / 2.0, BLOCK_SIDE / 2.0, BLOCK_SIDE / 2.0],
        }
    }

    pub fn half_length(self) -> f64 {
        self.half_extents()[0]
    }

    fn one_hot(self) -> [f64; 2] {
        match self {
            ObjectKind::Short => [1.0, 0.0],
            ObjectKind::Long => [0.0, 1.0],
        }
    }
}

/// Grasp or release position along an object's long axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SidePos {
    Left,
    Center,
    Right,
}

impl SidePos {
    pub const ALL: [SidePos; 3] = [SidePos::Left, SidePos::Center, SidePos::Right];

    pub fn offset(self) -> f64 {
        match self {
            SidePos::Left => -SIDE_OFFSET,
            SidePos::Center => 0.0,
            SidePos::Right => SIDE_OFFSET,
        }
    }

    pub fn index(self) -> usize {
        match self {
            SidePos::Left => 0,
            SidePos::Center => 1,
            SidePos::Right => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SidePos::Left => "left",
            SidePos::Center => "center",
            SidePos::Right => "right",
        }
    }

    pub fn from_name(name: &str) -> Option<SidePos> {
        SidePos::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Continuous per-object state: position in cm, yaw in radians, and type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectFeature {
    pub position: [f64; 3],
    pub yaw: f64,
    pub kind: ObjectKind,
}

impl ObjectFeature {
    /// Length of the feature vector: position (3), yaw (1), type one-hot (2).
    pub const DIM: usize = 6;
    pub const FIELD_NAMES: [&'static str; Self::DIM] = ["x", "y", "z", "yaw", "short", "long"];

    pub fn new(kind: ObjectKind, position: [f64; 3]) -> Self {
        ObjectFeature { position, yaw: 0.0, kind }
    }

    pub fn to_vector(&self) -> [f64; Self::DIM] {
        let [s, l] = self.kind.one_hot();
        let [x, y, z] = self.position;
        [x, y, z, self.yaw, s, l]
    }

    pub fn from_vector(v: &[f64]) -> Result<Self, SimError> {
        if v.len() != Self::DIM {
            return Err(SimError::InvalidFeature(format!("expected {} values, got {}", Self::DIM, v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SimError::InvalidFeature("non-finite value".into()));
        }
        let kind = if v[4] >= v[5] { ObjectKind::Short } else { ObjectKind::Long };
        Ok(ObjectFeature { position: [v[0], v[1], v[2]], yaw: v[3], kind })
    }

    pub fn bottom(&self) -> f64 {
        self.position[2] - self.kind.half_extents()[2]
    }

    pub fn top(&self) -> f64 {
        self.position[2] + self.kind.half_extents()[2]
    }

    pub fn footprint(&self) -> Rect {
        let [hx, hy, _] = self.kind.half_extents();
        Rect {
            min: [self.position[0] - hx, self.position[1] - hy],
            max: [self.position[0] + hx, self.position[1] + hy],
        }
    }

    fn translated(&self, d: [f64; 3]) -> Self {
        let mut out = *self;
        for (p, dp) in out.position.iter_mut().zip(d) {
            *p += dp;
        }
        out
    }
}

/// Axis-aligned rectangle in the table plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    /// True when the interiors intersect (touching edges do not count).
    pub fn overlaps(&self, other: &Rect) -> bool {
        (0..2).all(|a| self.min[a] < other.max[a] - GEOM_EPS && other.min[a] < self.max[a] - GEOM_EPS)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] - GEOM_EPS && p[a] <= self.max[a] + GEOM_EPS)
    }

    fn inflate(&self, margin: f64) -> Rect {
        Rect {
            min: [self.min[0] - margin, self.min[1] - margin],
            max: [self.max[0] + margin, self.max[1] + margin],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    Table,
    On(ObjectId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionSpec {
    pub pick: ObjectId,
    pub grasp: SidePos,
    pub place: ObjectId,
    pub release: SidePos,
}

impl ActionSpec {
    /// Returns `None` when pick and place name the same object.
    pub fn new(pick: ObjectId, grasp: SidePos, place: ObjectId, release: SidePos) -> Option<Self> {
        (pick != place).then_some(ActionSpec { pick, grasp, place, release })
    }
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pick-place({}, {}, {}, {})",
            self.pick,
            self.grasp.name(),
            self.place,
            self.release.name()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: BTreeMap<ObjectId, ObjectFeature>,
    pub support: BTreeMap<ObjectId, Support>,
}

/// What happened when an action actually changed the world.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub next: WorldState,
    /// Objects attached to the gripper during the carry.
    pub carried: BTreeSet<ObjectId>,
    /// Horizontal arm displacement: release point minus grasp point.
    pub arm_delta: [f64; 2],
}

impl WorldState {
    pub fn ids(&self) -> Vec<ObjectId> {
        self.objects.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn feature(&self, id: ObjectId) -> Option<&ObjectFeature> {
        self.objects.get(&id)
    }

    /// Objects resting directly on `id`, in id order.
    pub fn riders(&self, id: ObjectId) -> Vec<ObjectId> {
        self.support
            .iter()
            .filter(|(_, s)| **s == Support::On(id))
            .map(|(k, _)| *k)
            .collect()
    }

    /// Every object stacked (transitively) on top of `id`.
    pub fn stack_above(&self, id: ObjectId) -> BTreeSet<ObjectId> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![id];
        while let Some(cur) = frontier.pop() {
            for r in self.riders(cur) {
                if out.insert(r) {
                    frontier.push(r);
                }
            }
        }
        out
    }

    /// Checks the structural invariants: acyclic support, resting heights, no
    /// interpenetration. Returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.objects.keys().ne(self.support.keys()) {
            return Err("support map does not cover the object set".into());
        }
        for (&id, &sup) in &self.support {
            let f = &self.objects[&id];
            let expected = match sup {
                Support::Table => f.kind.half_extents()[2],
                Support::On(s) => {
                    let Some(below) = self.objects.get(&s) else {
                        return Err(format!("{id} rests on unknown {s}"));
                    };
                    below.top() + f.kind.half_extents()[2]
                }
            };
            if (f.position[2] - expected).abs() > 1e-6 {
                return Err(format!("{id} at z={} but support implies {}", f.position[2], expected));
            }
            let mut seen = BTreeSet::from([id]);
            let mut cur = sup;
            while let Support::On(next) = cur {
                if !seen.insert(next) {
                    return Err(format!("support cycle through {id}"));
                }
                cur = self.support[&next];
            }
        }
        let ids = self.ids();
        for (k, a) in ids.iter().enumerate() {
            for b in &ids[k + 1..] {
                if boxes_intersect(&self.objects[a], &self.objects[b]) {
                    return Err(format!("{a} and {b} interpenetrate"));
                }
            }
        }
        Ok(())
    }

    /// Highest object, excluding `skip`, whose footprint contains `point`.
    fn highest_containing(&self, point: [f64; 2], skip: &BTreeSet<ObjectId>) -> Option<ObjectId> {
        self.objects
            .iter()
            .filter(|(id, f)| !skip.contains(id) && f.footprint().contains(point))
            .max_by(|(ia, a), (ib, b)| a.top().total_cmp(&b.top()).then(ib.cmp(ia)))
            .map(|(id, _)| *id)
    }

    /// Highest object, excluding `skip`, overlapping `rect` whose top is at or
    /// below `max_top`.
    fn highest_under(&self, rect: &Rect, max_top: f64, skip: &BTreeSet<ObjectId>) -> Option<ObjectId> {
        self.objects
            .iter()
            .filter(|(id, f)| !skip.contains(id) && f.top() <= max_top + GEOM_EPS && f.footprint().overlaps(rect))
            .max_by(|(ia, a), (ib, b)| a.top().total_cmp(&b.top()).then(ib.cmp(ia)))
            .map(|(id, _)| *id)
    }

    fn shift(&mut self, ids: &BTreeSet<ObjectId>, d: [f64; 3]) {
        for id in ids {
            let f = self.objects.get_mut(id).expect("shifted object exists");
            *f = f.translated(d);
        }
    }
}

fn boxes_intersect(a: &ObjectFeature, b: &ObjectFeature) -> bool {
    a.footprint().overlaps(&b.footprint()) && a.bottom() < b.top() - GEOM_EPS && b.bottom() < a.top() - GEOM_EPS
}

/// Generates a scene with `n_objects` blocks resting on the table at
/// collision-free positions. Deterministic in `seed`.
pub fn init_scene(n_objects: usize, seed: u64) -> Result<WorldState, SimError> {
    if n_objects == 0 {
        return Err(SimError::EmptyScene);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects = BTreeMap::new();
    let mut support = BTreeMap::new();
    for index in 0..n_objects {
        let kind = if rng.random_bool(0.5) { ObjectKind::Short } else { ObjectKind::Long };
        let [hx, hy, hz] = kind.half_extents();
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let x = rng.random_range(-TABLE_HALF_EXTENT[0] + hx..=TABLE_HALF_EXTENT[0] - hx);
            let y = rng.random_range(-TABLE_HALF_EXTENT[1] + hy..=TABLE_HALF_EXTENT[1] - hy);
            // millimetre grid keeps serialized scenes short
            let candidate = ObjectFeature::new(kind, [(x * 10.0).round() / 10.0, (y * 10.0).round() / 10.0, hz]);
            let fp = candidate.footprint().inflate(SCENE_CLEARANCE);
            if objects.values().all(|o: &ObjectFeature| !o.footprint().overlaps(&fp)) {
                placed = Some(candidate);
                break;
            }
        }
        let Some(feature) = placed else {
            return Err(SimError::ScenePlacement { index, n_objects, seed });
        };
        let id = ObjectId(index as u32);
        objects.insert(id, feature);
        support.insert(id, Support::Table);
    }
    Ok(WorldState { objects, support })
}

/// Simulates `action`, returning `None` when it has no effect (grasp miss,
/// placing a compound onto itself, blocked release, unknown objects).
pub fn simulate(state: &WorldState, action: &ActionSpec) -> Option<ActionOutcome> {
    if action.pick == action.place {
        return None;
    }
    let picked = *state.objects.get(&action.pick)?;
    state.objects.get(&action.place)?;

    let grasp_offset = action.grasp.offset();
    if grasp_offset.abs() > picked.kind.half_length() + GEOM_EPS {
        return None;
    }
    let center_grasp = grasp_offset == 0.0;
    let mut carried = BTreeSet::from([action.pick]);
    if center_grasp {
        carried.extend(state.stack_above(action.pick));
    }
    if carried.contains(&action.place) {
        return None;
    }

    let mut next = state.clone();

    if !center_grasp {
        // riders slide off and fall straight down
        for rider in state.riders(action.pick) {
            let mut compound = state.stack_above(rider);
            compound.insert(rider);
            let f = next.objects[&rider];
            let mut skip = carried.clone();
            skip.extend(compound.iter().copied());
            let landing = next.highest_under(&f.footprint(), f.bottom(), &skip);
            let base = landing.map_or(0.0, |id| next.objects[&id].top());
            let dz = base - f.bottom();
            next.shift(&compound, [0.0, 0.0, dz]);
            next.support.insert(rider, landing.map_or(Support::Table, Support::On));
        }
    }

    let target = next.objects[&action.place];
    let release_point = [target.position[0] + action.release.offset(), target.position[1]];
    let grasp_point = [picked.position[0] + grasp_offset, picked.position[1]];
    let arm_delta = [release_point[0] - grasp_point[0], release_point[1] - grasp_point[1]];

    let surface = next.highest_containing(release_point, &carried);
    let base = surface.map_or(0.0, |id| next.objects[&id].top());
    let dz = base - picked.bottom();
    next.shift(&carried, [arm_delta[0], arm_delta[1], dz]);
    next.support.insert(action.pick, surface.map_or(Support::Table, Support::On));

    let blocked = carried.iter().any(|c| {
        let moved = &next.objects[c];
        next.objects
            .iter()
            .any(|(id, other)| !carried.contains(id) && boxes_intersect(moved, other))
    });
    if blocked {
        return None;
    }
    debug_assert!(next.check_invariants().is_ok(), "{:?}", next.check_invariants());
    Some(ActionOutcome { next, carried, arm_delta })
}

/// Next state under `action`; actions without effect return the state unchanged.
pub fn apply_action(state: &WorldState, action: &ActionSpec) -> WorldState {
    simulate(state, action).map_or_else(|| state.clone(), |o| o.next)
}

/// Unordered pairs `(min, max)` of objects in supporting contact.
pub fn contact_graph(state: &WorldState) -> BTreeSet<(ObjectId, ObjectId)> {
    state
        .support
        .iter()
        .filter_map(|(&id, s)| match s {
            Support::On(other) => Some(ordered_pair(id, *other)),
            Support::Table => None,
        })
        .collect()
}

pub fn ordered_pair(a: ObjectId, b: ObjectId) -> (ObjectId, ObjectId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Action arguments plus their contact partners, in id order.
pub fn relevant_objects(state: &WorldState, action: &ActionSpec) -> Vec<ObjectId> {
    let mut out = BTreeSet::from([action.pick, action.place]);
    for (a, b) in contact_graph(state) {
        if a == action.pick || a == action.place {
            out.insert(b);
        }
        if b == action.pick || b == action.place {
            out.insert(a);
        }
    }
    out.into_iter().collect()
}

pub type EffectVector = [f64; ObjectFeature::DIM];

/// Per-object effect `post - pre`, with the arm's horizontal displacement
/// removed from objects that travelled with the gripper.
pub fn effect_of(
    pre: &WorldState,
    post: &WorldState,
    action: &ActionSpec,
) -> Result<BTreeMap<ObjectId, EffectVector>, SimError> {
    if pre.objects.keys().ne(post.objects.keys()) {
        return Err(SimError::ObjectMismatch);
    }
    let carry = simulate(pre, action)
        .filter(|o| o.next == *post)
        .map(|o| (o.carried, o.arm_delta));
    let mut out = BTreeMap::new();
    for (id, before) in &pre.objects {
        let after = post.objects[id].to_vector();
        let before = before.to_vector();
        let mut e = [0.0; ObjectFeature::DIM];
        for k in 0..ObjectFeature::DIM {
            e[k] = after[k] - before[k];
        }
        if let Some((carried, delta)) = &carry {
            if carried.contains(id) {
                e[0] -= delta[0];
                e[1] -= delta[1];
            }
        }
        out.insert(*id, e);
    }
    Ok(out)
}

/// Uniformly random action: pick object, distinct place object, grasp and
/// release positions.
pub fn random_action<R: Rng + ?Sized>(state: &WorldState, rng: &mut R) -> ActionSpec {
    let ids = state.ids();
    assert!(ids.len() >= 2, "actions need at least two objects");
    let pick = *ids.choose(rng).expect("non-empty");
    let others: Vec<ObjectId> = ids.into_iter().filter(|id| *id != pick).collect();
    let place = *others.choose(rng).expect("at least one other object");
    let grasp = *SidePos::ALL.choose(rng).expect("non-empty");
    let release = *SidePos::ALL.choose(rng).expect("non-empty");
    ActionSpec { pick, grasp, place, release }
}

/// One recorded interaction, restricted to the relevant objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub ids: Vec<ObjectId>,
    pub pre: Vec<ObjectFeature>,
    pub action: ActionSpec,
    pub post: Vec<ObjectFeature>,
    pub effects: Vec<EffectVector>,
    pub contacts_pre: Vec<(ObjectId, ObjectId)>,
    pub contacts_post: Vec<(ObjectId, ObjectId)>,
    pub episode: u64,
    pub step: u32,
}

impl Transition {
    /// Builds the record for `action` executed in `pre`.
    pub fn record(pre: &WorldState, action: ActionSpec, episode: u64, step: u32) -> (Transition, WorldState) {
        let post = apply_action(pre, &action);
        let ids = relevant_objects(pre, &action);
        let effects = effect_of(pre, &post, &action).expect("same object set");
        let keep = |pairs: BTreeSet<(ObjectId, ObjectId)>| -> Vec<(ObjectId, ObjectId)> {
            pairs
                .into_iter()
                .filter(|(a, b)| ids.contains(a) && ids.contains(b))
                .collect()
        };
        let t = Transition {
            pre: ids.iter().map(|id| pre.objects[id]).collect(),
            action,
            post: ids.iter().map(|id| post.objects[id]).collect(),
            effects: ids.iter().map(|id| effects[id]).collect(),
            contacts_pre: keep(contact_graph(pre)),
            contacts_post: keep(contact_graph(&post)),
            ids,
            episode,
            step,
        };
        (t, post)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Position of `id` within the record.
    pub fn index_of(&self, id: ObjectId) -> Option<usize> {
        self.ids.iter().position(|x| *x == id)
    }

    /// True when no recorded object changed.
    pub fn is_noop(&self) -> bool {
        self.pre == self.post
    }
}

/// A full-scene exploration episode, used for autoregressive evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<WorldState>,
    pub actions: Vec<ActionSpec>,
}

fn episode_scene<R: Rng + ?Sized>(rng: &mut R, n_objects: (usize, usize)) -> WorldState {
    loop {
        let n = rng.random_range(n_objects.0..=n_objects.1);
        if let Ok(scene) = init_scene(n, rng.random()) {
            return scene;
        }
    }
}

/// Random-exploration dataset of exactly `n_samples` transitions. Episodes of
/// [`EPISODE_LENGTH`] actions start from fresh scenes whose object count is
/// drawn uniformly from the inclusive `n_objects` range.
pub fn collect_dataset(n_samples: usize, seed: u64, n_objects: (usize, usize)) -> Vec<Transition> {
    assert!(n_objects.0 >= 2 && n_objects.0 <= n_objects.1, "object range must start at 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    let mut episode = 0u64;
    while out.len() < n_samples {
        let mut state = episode_scene(&mut rng, n_objects);
        for step in 0..EPISODE_LENGTH {
            if out.len() == n_samples {
                break;
            }
            let action = random_action(&state, &mut rng);
            let (t, next) = Transition::record(&state, action, episode, step as u32);
            out.push(t);
            state = next;
        }
        episode += 1;
    }
    out
}

/// Full-state episodes of `horizon` random actions each.
pub fn collect_episodes(n_episodes: usize, horizon: usize, seed: u64, n_objects: (usize, usize)) -> Vec<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_episodes)
        .map(|_| {
            let mut states = vec![episode_scene(&mut rng, n_objects)];
            let mut actions = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let last = states.last().expect("non-empty");
                let action = random_action(last, &mut rng);
                states.push(apply_action(last, &action));
                actions.push(action);
            }
            Episode { states, actions }
        })
        .collect()
}

/// Splits a dataset into consecutive train/validation/test slices.
pub fn split_dataset<T: Clone>(records: &[T], train: usize, val: usize, test: usize) -> Option<(Vec<T>, Vec<T>, Vec<T>)> {
    if train + val + test > records.len() {
        return None;
    }
    Some((
        records[..train].to_vec(),
        records[train..train + val].to_vec(),
        records[train + val..train + val + test].to_vec(),
    ))
}

const DATASET_FORMAT: &str = "relsym-dataset";
const DATASET_VERSION: u64 = 1;
/// Version of the `ActionSpec` field layout inside records.
const ACTION_ENCODING: u64 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u64,
    d_o: usize,
    fields: Vec<String>,
    action_encoding: u64,
    records: usize,
}

/// Writes a header line followed by one JSON record per transition.
pub fn write_dataset<W: std::io::Write>(records: &[Transition], mut w: W) -> std::io::Result<()> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        d_o: ObjectFeature::DIM,
        fields: ObjectFeature::FIELD_NAMES.iter().map(|s| s.to_string()).collect(),
        action_encoding: ACTION_ENCODING,
        records: records.len(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(std::io::Error::other)?)?;
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
    }
    w.flush()
}

pub fn read_dataset<R: std::io::BufRead>(r: R) -> Result<Vec<Transition>, DatasetError> {
    let bad = |line, message: String| DatasetError::Format { line, message };
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| bad(1, "missing header".into()))??;
    let header: DatasetHeader = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION || header.action_encoding != ACTION_ENCODING {
        return Err(bad(1, format!("unsupported dataset {} v{}", header.format, header.version)));
    }
    if header.d_o != ObjectFeature::DIM {
        return Err(bad(1, format!("feature dimension {} != {}", header.d_o, ObjectFeature::DIM)));
    }
    let mut out = Vec::with_capacity(header.records);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| bad(i + 2, e.to_string()))?);
    }
    if out.len() != header.records {
        return Err(bad(1, format!("header announces {} records, found {}", header.records, out.len())));
    }
    Ok(out)
}

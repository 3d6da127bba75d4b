//! Labelers and state abstraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::atoms::{AbstractState, GroundAtom, KindTag, Label, Pred, PredicateKind};
use crate::operator::Demonstration;
use crate::types::{Action, Obj, State, TypeHierarchy};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("labeler {labeler} cannot evaluate {predicate} ({kind:?})")]
    UnsupportedPredicateKind {
        labeler: String,
        predicate: String,
        kind: KindTag,
    },
    #[error("labeler unavailable: {0}")]
    LabelerUnavailable(String),
    #[error("label context must carry previous state, labels and action together")]
    IncompleteContext,
    #[error("label cache: {0}")]
    Cache(String),
    #[error("{0}")]
    Fatal(String),
}

/// What happened at the previous timestep of a trajectory.
#[derive(Debug, Clone)]
pub struct PreviousStep {
    pub state: State,
    pub labels: BTreeMap<GroundAtom, Label>,
    pub action: Action,
    /// Raw labeler output for the previous step, when the labeler produced one.
    pub raw_response: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LabelContext {
    pub previous: Option<PreviousStep>,
}

impl LabelContext {
    pub fn initial() -> Self {
        Self::default()
    }

    pub fn from_parts(
        state: Option<State>,
        labels: Option<BTreeMap<GroundAtom, Label>>,
        action: Option<Action>,
    ) -> Result<Self, LabelError> {
        match (state, labels, action) {
            (None, None, None) => Ok(Self::default()),
            (Some(state), Some(labels), Some(action)) => Ok(Self {
                previous: Some(PreviousStep {
                    state,
                    labels,
                    action,
                    raw_response: None,
                }),
            }),
            _ => Err(LabelError::IncompleteContext),
        }
    }
}

/// Labels for one batch, plus the raw text the labeler produced, if any.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelBatch {
    pub labels: BTreeMap<GroundAtom, Label>,
    pub raw: Option<String>,
}

pub trait Labeler: Send + Sync {
    /// Stable identity used in cache keys.
    fn identity(&self) -> String;

    fn supports(&self, kind: KindTag) -> bool;

    /// Labels every atom in `atoms` exactly once.
    fn label_batch(
        &self,
        state: &State,
        atoms: &[GroundAtom],
        ctx: &LabelContext,
    ) -> Result<LabelBatch, LabelError>;
}

impl<L: Labeler + ?Sized> Labeler for Arc<L> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn supports(&self, kind: KindTag) -> bool {
        (**self).supports(kind)
    }
    fn label_batch(
        &self,
        state: &State,
        atoms: &[GroundAtom],
        ctx: &LabelContext,
    ) -> Result<LabelBatch, LabelError> {
        (**self).label_batch(state, atoms, ctx)
    }
}

/// Evaluates feature predicates only.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureLabeler;

impl Labeler for FeatureLabeler {
    fn identity(&self) -> String {
        "feature".into()
    }
    fn supports(&self, kind: KindTag) -> bool {
        kind == KindTag::Feature
    }
    fn label_batch(
        &self,
        state: &State,
        atoms: &[GroundAtom],
        _ctx: &LabelContext,
    ) -> Result<LabelBatch, LabelError> {
        let mut labels = BTreeMap::new();
        for a in atoms {
            let l = evaluate_feature(state, a).ok_or_else(|| LabelError::UnsupportedPredicateKind {
                labeler: self.identity(),
                predicate: a.predicate.name.clone(),
                kind: a.predicate.kind.tag(),
            })?;
            labels.insert(a.clone(), l);
        }
        Ok(LabelBatch { labels, raw: None })
    }
}

/// Evaluates a feature-predicate atom from the object-centric state. Missing
/// features yield `Unknown`; non-feature predicates yield `None`.
pub fn evaluate_feature(state: &State, atom: &GroundAtom) -> Option<Label> {
    let c = atom.predicate.classifier()?;
    let obj = atom.args.first()?;
    Some(match c.evaluate(&state.objects, obj) {
        Some(b) => Label::from_bool(b),
        None => Label::Unknown,
    })
}

/// All type-compatible groundings with pairwise distinct arguments.
pub fn groundings(pred: &Pred, objects: &[Obj], types: &TypeHierarchy) -> Vec<GroundAtom> {
    let candidates: Vec<Vec<&Obj>> = pred
        .arg_types
        .iter()
        .map(|t| objects.iter().filter(|o| types.is_subtype(&o.ty, t)).collect())
        .collect();
    let mut out = Vec::new();
    let mut cur: Vec<Obj> = Vec::with_capacity(pred.arity());
    fn rec(
        i: usize,
        candidates: &[Vec<&Obj>],
        cur: &mut Vec<Obj>,
        pred: &Pred,
        out: &mut Vec<GroundAtom>,
    ) {
        if i == candidates.len() {
            out.push(GroundAtom::new_unchecked(pred.clone(), cur.clone()));
            return;
        }
        for o in &candidates[i] {
            if cur.iter().any(|c| c == *o) {
                continue;
            }
            cur.push((*o).clone());
            rec(i + 1, candidates, cur, pred, out);
            cur.pop();
        }
    }
    rec(0, &candidates, &mut cur, pred, &mut out);
    out
}

/// Labels of every grounding of `predicates`; feature predicates are evaluated
/// directly, everything else goes to `labeler` in one batch.
pub fn label_state(
    state: &State,
    predicates: &[Pred],
    objects: &[Obj],
    types: &TypeHierarchy,
    labeler: &dyn Labeler,
    ctx: &LabelContext,
) -> Result<LabelBatch, LabelError> {
    let mut labels = BTreeMap::new();
    let mut delegated = Vec::new();
    for p in predicates {
        let atoms = groundings(p, objects, types);
        match &p.kind {
            PredicateKind::Feature { .. } => {
                for a in atoms {
                    let l = evaluate_feature(state, &a).unwrap_or(Label::Unknown);
                    labels.insert(a, l);
                }
            }
            kind => {
                if !labeler.supports(kind.tag()) {
                    return Err(LabelError::UnsupportedPredicateKind {
                        labeler: labeler.identity(),
                        predicate: p.name.clone(),
                        kind: kind.tag(),
                    });
                }
                delegated.extend(atoms);
            }
        }
    }
    let mut raw = None;
    if !delegated.is_empty() {
        let batch = labeler.label_batch(state, &delegated, ctx)?;
        for a in &delegated {
            let l = batch.labels.get(a).copied().unwrap_or(Label::Unknown);
            labels.insert(a.clone(), l);
        }
        raw = batch.raw;
    }
    Ok(LabelBatch { labels, raw })
}

/// Atoms labeled true; unknown counts as false.
pub fn to_abstract(labels: &BTreeMap<GroundAtom, Label>) -> AbstractState {
    AbstractState::new(
        labels
            .iter()
            .filter(|(_, l)| l.holds())
            .map(|(a, _)| a.clone()),
    )
}

pub fn abstract_state(
    state: &State,
    predicates: &[Pred],
    objects: &[Obj],
    types: &TypeHierarchy,
    labeler: &dyn Labeler,
) -> Result<AbstractState, LabelError> {
    let batch = label_state(
        state,
        predicates,
        objects,
        types,
        labeler,
        &LabelContext::initial(),
    )?;
    Ok(to_abstract(&batch.labels))
}

/// Labels every state of a demonstration, threading the previous step's state,
/// labels and action into each context.
pub fn label_demo(
    demo: &Demonstration,
    predicates: &[Pred],
    types: &TypeHierarchy,
    labeler: &dyn Labeler,
) -> Result<Vec<BTreeMap<GroundAtom, Label>>, LabelError> {
    let mut out: Vec<BTreeMap<GroundAtom, Label>> = Vec::with_capacity(demo.states.len());
    let mut ctx = LabelContext::initial();
    for (t, state) in demo.states.iter().enumerate() {
        let batch = label_state(state, predicates, &demo.objects, types, labeler, &ctx)?;
        if t < demo.actions.len() {
            ctx = LabelContext {
                previous: Some(PreviousStep {
                    state: state.clone(),
                    labels: batch.labels.clone(),
                    action: demo.actions[t].clone(),
                    raw_response: batch.raw.clone(),
                }),
            };
        }
        out.push(batch.labels);
    }
    Ok(out)
}

/// SHA-256 over a canonical encoding of the state.
pub fn state_digest(state: &State) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"state\0");
    h.update((state.timestep as u64).to_le_bytes());
    for img in &state.images {
        h.update(img.as_bytes());
        h.update([0]);
    }
    h.update([1]);
    for (o, feats) in state.objects.iter() {
        h.update(o.name.as_bytes());
        h.update([0]);
        h.update(o.ty.as_bytes());
        h.update([0]);
        for (f, v) in feats {
            h.update(f.as_bytes());
            h.update([0]);
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([1]);
    }
    for (k, v) in &state.hidden {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

/// Canonical key of an atom: rendered form plus argument types.
pub fn atom_key(atom: &GroundAtom) -> String {
    let types: Vec<&str> = atom.predicate.arg_types.iter().map(String::as_str).collect();
    format!("{}/{}", atom, types.join(","))
}

pub fn atom_digest(atom: &GroundAtom) -> [u8; 32] {
    Sha256::digest(atom_key(atom).as_bytes()).into()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based uniform draw in [0, 1) keyed on (seed, state, atom).
pub fn keyed_uniform(seed: u64, state: &[u8; 32], atom: &[u8; 32]) -> f64 {
    let s = u64::from_le_bytes(state[..8].try_into().unwrap());
    let a = u64::from_le_bytes(atom[..8].try_into().unwrap());
    let x = splitmix64(splitmix64(seed ^ 0xA076_1D64_78BD_642F) ^ s);
    let y = splitmix64(x ^ a.rotate_left(17));
    (y >> 11) as f64 / (1u64 << 53) as f64
}

/// Which predicate kinds the noisy wrapper corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    /// Only labels of visual predicates (the ones a VLM would produce).
    #[default]
    Visual,
    /// Every label returned by the wrapped labeler.
    All,
}

/// Flips true/false labels with probability `flip_rate`, independently per
/// (atom, state), reproducibly under `seed`.
pub struct NoisyLabeler<L> {
    inner: L,
    flip_rate: f64,
    seed: u64,
    protected: BTreeSet<Pred>,
    scope: NoiseScope,
}

pub fn make_noisy<L: Labeler>(
    inner: L,
    flip_rate: f64,
    seed: u64,
    protected: BTreeSet<Pred>,
) -> NoisyLabeler<L> {
    assert!((0.0..=1.0).contains(&flip_rate), "flip rate must be in [0, 1]");
    NoisyLabeler {
        inner,
        flip_rate,
        seed,
        protected,
        scope: NoiseScope::default(),
    }
}

impl<L> NoisyLabeler<L> {
    pub fn with_scope(mut self, scope: NoiseScope) -> Self {
        self.scope = scope;
        self
    }

    fn in_scope(&self, atom: &GroundAtom) -> bool {
        if self.protected.contains(&atom.predicate) {
            return false;
        }
        match self.scope {
            NoiseScope::All => true,
            NoiseScope::Visual => atom.predicate.kind.tag() == KindTag::Visual,
        }
    }
}

impl<L: Labeler> Labeler for NoisyLabeler<L> {
    fn identity(&self) -> String {
        format!(
            "noisy({};eps={};seed={};scope={:?})",
            self.inner.identity(),
            self.flip_rate,
            self.seed,
            self.scope
        )
    }

    fn supports(&self, kind: KindTag) -> bool {
        self.inner.supports(kind)
    }

    fn label_batch(
        &self,
        state: &State,
        atoms: &[GroundAtom],
        ctx: &LabelContext,
    ) -> Result<LabelBatch, LabelError> {
        let mut batch = self.inner.label_batch(state, atoms, ctx)?;
        if self.flip_rate == 0.0 {
            return Ok(batch);
        }
        let sd = state_digest(state);
        for (atom, label) in batch.labels.iter_mut() {
            if *label == Label::Unknown || !self.in_scope(atom) {
                continue;
            }
            if keyed_uniform(self.seed, &sd, &atom_digest(atom)) < self.flip_rate {
                *label = label.flipped();
            }
        }
        Ok(batch)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CachedLabel {
    pub atom: String,
    pub label: Label,
}

/// On-disk record for one labeling request.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CacheRecord {
    pub schema_version: u32,
    pub labeler: String,
    pub request_digest: String,
    pub raw_response: Option<String>,
    pub labels: Vec<CachedLabel>,
}

pub const CACHE_SCHEMA_VERSION: u32 = 1;

/// Disk-backed cache in front of a labeler. Records live at
/// `<dir>/<labeler identity>/<sha256 of request>.json`.
pub struct DiskCachedLabeler<L> {
    inner: L,
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    hits: std::sync::atomic::AtomicUsize,
    misses: std::sync::atomic::AtomicUsize,
}

impl<L: Labeler> DiskCachedLabeler<L> {
    pub fn new(inner: L, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
            locks: Mutex::new(HashMap::new()),
            hits: Default::default(),
            misses: Default::default(),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(std::sync::atomic::Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(std::sync::atomic::Ordering::Relaxed)
    }

    pub fn request_digest(&self, state: &State, atoms: &[GroundAtom], ctx: &LabelContext) -> String {
        let mut h = Sha256::new();
        h.update(self.inner.identity().as_bytes());
        h.update([0]);
        h.update(state_digest(state));
        for a in atoms {
            h.update(atom_key(a).as_bytes());
            h.update([0]);
        }
        if let Some(prev) = &ctx.previous {
            h.update(b"prev");
            h.update(state_digest(&prev.state));
            h.update(prev.action.to_string().as_bytes());
            for (a, l) in &prev.labels {
                h.update(atom_key(a).as_bytes());
                h.update([*l as u8]);
            }
            if let Some(r) = &prev.raw_response {
                h.update(r.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn path_for(&self, digest: &str) -> PathBuf {
        self.dir
            .join(sanitize(&self.inner.identity()))
            .join(format!("{digest}.json"))
    }

    fn key_lock(&self, digest: &str) -> Arc<Mutex<()>> {
        let mut m = self.locks.lock().unwrap();
        m.entry(digest.to_owned()).or_default().clone()
    }

    fn read(&self, path: &Path, atoms: &[GroundAtom]) -> Option<LabelBatch> {
        let text = fs::read_to_string(path).ok()?;
        let rec: CacheRecord = serde_json::from_str(&text).ok()?;
        let by_key: HashMap<&str, Label> = rec
            .labels
            .iter()
            .map(|c| (c.atom.as_str(), c.label))
            .collect();
        let mut labels = BTreeMap::new();
        for a in atoms {
            labels.insert(a.clone(), *by_key.get(atom_key(a).as_str())?);
        }
        Some(LabelBatch {
            labels,
            raw: rec.raw_response,
        })
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

impl<L: Labeler> Labeler for DiskCachedLabeler<L> {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn supports(&self, kind: KindTag) -> bool {
        self.inner.supports(kind)
    }

    fn label_batch(
        &self,
        state: &State,
        atoms: &[GroundAtom],
        ctx: &LabelContext,
    ) -> Result<LabelBatch, LabelError> {
        let digest = self.request_digest(state, atoms, ctx);
        let path = self.path_for(&digest);
        if let Some(b) = self.read(&path, atoms) {
            self.hits.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            return Ok(b);
        }
        let lock = self.key_lock(&digest);
        let _guard = lock.lock().unwrap();
        if let Some(b) = self.read(&path, atoms) {
            self.hits.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            return Ok(b);
        }
        self.misses.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let batch = self.inner.label_batch(state, atoms, ctx)?;
        let rec = CacheRecord {
            schema_version: CACHE_SCHEMA_VERSION,
            labeler: self.inner.identity(),
            request_digest: digest.clone(),
            raw_response: batch.raw.clone(),
            labels: atoms
                .iter()
                .map(|a| CachedLabel {
                    atom: atom_key(a),
                    label: batch.labels.get(a).copied().unwrap_or(Label::Unknown),
                })
                .collect(),
        };
        write_atomic(&path, &serde_json::to_string_pretty(&rec).expect("serializable"))
            .map_err(|e| LabelError::Cache(format!("{}: {e}", path.display())))?;
        Ok(batch)
    }
}

/// Writes through a temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile_in(dir)?;
    tmp.1.write_all(contents.as_bytes())?;
    tmp.1.sync_all()?;
    drop(tmp.1);
    fs::rename(&tmp.0, path)
}

fn tempfile_in(dir: &Path) -> std::io::Result<(PathBuf, fs::File)> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    loop {
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let p = dir.join(format!(".tmp-{}-{n}", std::process::id()));
        match fs::OpenOptions::new().write(true).create_new(true).open(&p) {
            Ok(f) => return Ok((p, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Per-state labels of a demo set, computed lazily per predicate and reused
/// across predicate subsets.
pub struct AbstractionStore {
    pub demos: Arc<Vec<Demonstration>>,
    pub types: TypeHierarchy,
    /// predicate -> demo -> state -> true atoms of that predicate
    table: RwLock<BTreeMap<Pred, Vec<Vec<Vec<GroundAtom>>>>>,
}

impl AbstractionStore {
    pub fn new(demos: Arc<Vec<Demonstration>>, types: TypeHierarchy) -> Self {
        Self {
            demos,
            types,
            table: RwLock::new(BTreeMap::new()),
        }
    }

    /// Labels every predicate not yet in the table.
    pub fn ensure(&self, predicates: &[Pred], labeler: &dyn Labeler) -> Result<(), LabelError> {
        let missing: Vec<Pred> = {
            let t = self.table.read().unwrap();
            let mut seen = BTreeSet::new();
            predicates
                .iter()
                .filter(|p| !t.contains_key(*p) && seen.insert((*p).clone()))
                .cloned()
                .collect()
        };
        if missing.is_empty() {
            return Ok(());
        }
        let per_demo: Vec<Vec<BTreeMap<GroundAtom, Label>>> = self
            .demos
            .par_iter()
            .map(|d| label_demo(d, &missing, &self.types, labeler))
            .collect::<Result<_, _>>()?;
        let mut t = self.table.write().unwrap();
        for p in &missing {
            let rows = per_demo
                .iter()
                .map(|states| {
                    states
                        .iter()
                        .map(|labels| {
                            labels
                                .iter()
                                .filter(|(a, l)| &a.predicate == p && l.holds())
                                .map(|(a, _)| a.clone())
                                .collect()
                        })
                        .collect()
                })
                .collect();
            t.insert(p.clone(), rows);
        }
        Ok(())
    }

    /// Abstract state of `demo`'s `step`-th state restricted to `predicates`
    /// (which must have been ensured).
    pub fn state(&self, predicates: &[Pred], demo: usize, step: usize) -> AbstractState {
        let t = self.table.read().unwrap();
        let mut atoms = BTreeSet::new();
        for p in predicates {
            if let Some(rows) = t.get(p) {
                atoms.extend(rows[demo][step].iter().cloned());
            }
        }
        AbstractState { atoms }
    }

    /// Abstract trajectory of every demo under `predicates`.
    pub fn abstract_demos(&self, predicates: &[Pred]) -> Vec<Vec<AbstractState>> {
        let t = self.table.read().unwrap();
        let rows: Vec<&Vec<Vec<Vec<GroundAtom>>>> =
            predicates.iter().filter_map(|p| t.get(p)).collect();
        self.demos
            .iter()
            .enumerate()
            .map(|(d, demo)| {
                (0..demo.states.len())
                    .map(|s| AbstractState {
                        atoms: rows
                            .iter()
                            .flat_map(|r| r[d][s].iter().cloned())
                            .collect(),
                    })
                    .collect()
            })
            .collect()
    }
}

//! Compiled state exploration.
//!
//! The static skeleton of a process (parallel, interleave, hiding and
//! renaming operators above the sequential parts) is compiled into a node
//! tree once. A state is then a vector of leaf ids, one per slot, and
//! transitions are assembled from memoised leaf transitions. Events and
//! leaf terms are interned per explorer; no ordering ever depends on the
//! interned ids, only on the kernel's sorted transition lists and the
//! traversal order, so results are reproducible.

use std::collections::{BTreeSet, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::{Duration, Instant};

use hashbrown::HashTable;
use rustc_hash::{FxHashMap, FxHasher};
use smallvec::SmallVec;

use crate::error::KernelError;
use crate::event::{Event, KindMask};
use crate::kernel::{Definitions, Kernel, Trace};
use crate::process::{EventSet, Process, Renaming, Term};

pub const TAU: u32 = 0;
pub const TICK: u32 = 1;

/// Slot updates produced by one transition.
pub type Delta = SmallVec<[(u16, u32); 4]>;

/// Why an exploration stopped early.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limit {
    States(usize),
    Depth(usize),
    Time(Duration),
}

impl std::fmt::Display for Limit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Limit::States(n) => write!(f, "state limit of {n} reached"),
            Limit::Depth(n) => write!(f, "depth limit of {n} reached"),
            Limit::Time(d) => write!(f, "time budget of {d:?} exhausted"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExploreError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{0}")]
    Limit(Limit),
}

/// A value-to-id table.
#[derive(Clone, Debug)]
pub struct Interner<T> {
    items: Vec<T>,
    ids: FxHashMap<T, u32>,
}

impl<T: Clone + Eq + Hash> Default for Interner<T> {
    fn default() -> Self {
        Interner {
            items: Vec::new(),
            ids: FxHashMap::default(),
        }
    }
}

impl<T: Clone + Eq + Hash> Interner<T> {
    pub fn intern(&mut self, x: &T) -> u32 {
        if let Some(&i) = self.ids.get(x) {
            return i;
        }
        let i = self.items.len() as u32;
        self.items.push(x.clone());
        self.ids.insert(x.clone(), i);
        i
    }

    pub fn get(&self, x: &T) -> Option<u32> {
        self.ids.get(x).copied()
    }

    pub fn value(&self, i: u32) -> &T {
        &self.items[i as usize]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Fixed-width states stored contiguously, deduplicated by content.
pub struct StateStore {
    width: usize,
    arena: Vec<u32>,
    table: HashTable<u32>,
}

fn slice_hash(s: &[u32]) -> u64 {
    let mut h = FxHasher::default();
    s.hash(&mut h);
    h.finish()
}

impl StateStore {
    pub fn new(width: usize) -> Self {
        StateStore {
            width,
            arena: Vec::new(),
            table: HashTable::new(),
        }
    }

    pub fn len(&self) -> usize {
        if self.width == 0 {
            self.table.len()
        } else {
            self.arena.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: u32) -> &[u32] {
        let w = self.width;
        &self.arena[id as usize * w..(id as usize + 1) * w]
    }

    /// Returns the id of `s` and whether it was new.
    pub fn insert(&mut self, s: &[u32]) -> (u32, bool) {
        debug_assert_eq!(s.len(), self.width);
        let h = slice_hash(s);
        let w = self.width;
        let arena = &self.arena;
        if let Some(&id) = self
            .table
            .find(h, |&id| &arena[id as usize * w..(id as usize + 1) * w] == s)
        {
            return (id, false);
        }
        let id = self.len() as u32;
        self.arena.extend_from_slice(s);
        let arena = &self.arena;
        self.table
            .insert_unique(h, id, |&id| slice_hash(&arena[id as usize * w..(id as usize + 1) * w]));
        (id, true)
    }
}

enum Node {
    Leaf(u16),
    Par {
        l: usize,
        r: usize,
        iface: Option<EventSet>,
        covered: KindMask,
    },
    Hide {
        c: usize,
        set: EventSet,
        touched: KindMask,
    },
    Rename {
        c: usize,
        r: Renaming,
    },
}

/// Per-node caches keyed by event id.
#[derive(Default)]
struct NodeCache {
    member: FxHashMap<u32, bool>,
    images: FxHashMap<u32, Arc<[u32]>>,
    preimages: FxHashMap<u32, Option<Arc<[u32]>>>,
}

type LeafTrans = Arc<[(u32, u32)]>;

/// A leaf state: a sorted, tau-closed set of process terms. Sequential
/// components are explored in this determinised form, which keeps their
/// traces and drops internal choice points.
type Leaf = Arc<[Process]>;

/// Successor generator for one compiled process.
pub struct Explorer {
    kernel: Kernel,
    nodes: Vec<Node>,
    caches: Vec<NodeCache>,
    init: Vec<u32>,
    leaves: Interner<Leaf>,
    events: Interner<Event>,
    kinds: Vec<KindMask>,
    leaf_trans: FxHashMap<(u32, u16), LeafTrans>,
    leaf_after: FxHashMap<(u32, u32), Arc<[u32]>>,
    pub store: StateStore,
}

impl Explorer {
    pub fn new(defs: Arc<Definitions>, p: &Process) -> Result<Explorer, KernelError> {
        let mut ex = Explorer {
            kernel: Kernel::new(defs),
            nodes: Vec::new(),
            caches: Vec::new(),
            init: Vec::new(),
            leaves: Interner::default(),
            events: Interner::default(),
            kinds: Vec::new(),
            leaf_trans: FxHashMap::default(),
            leaf_after: FxHashMap::default(),
            store: StateStore::new(0),
        };
        ex.intern_event(&Event::Tau);
        ex.intern_event(&Event::Tick);
        ex.compile(p)?;
        ex.store = StateStore::new(ex.init.len());
        let init = ex.init.clone();
        ex.store.insert(&init);
        Ok(ex)
    }

    fn compile(&mut self, p: &Process) -> Result<usize, KernelError> {
        let p = match p.term() {
            Term::Call(..) => {
                let b = self.kernel.unfold(p)?;
                if matches!(
                    b.term(),
                    Term::Parallel(..) | Term::Interleave(..) | Term::Hide(..) | Term::Rename(..)
                ) {
                    b
                } else {
                    p.clone()
                }
            }
            _ => p.clone(),
        };
        let node = match p.term() {
            Term::Parallel(l, r, x) => {
                let l = self.compile(l)?;
                let r = self.compile(r)?;
                Node::Par {
                    l,
                    r,
                    covered: x.covered_kinds(),
                    iface: Some(x.clone()),
                }
            }
            Term::Interleave(l, r) => {
                let l = self.compile(l)?;
                let r = self.compile(r)?;
                Node::Par {
                    l,
                    r,
                    iface: None,
                    covered: KindMask::NONE,
                }
            }
            Term::Hide(q, h) => Node::Hide {
                c: self.compile(q)?,
                touched: h.touched_kinds(),
                set: h.clone(),
            },
            Term::Rename(q, r) => Node::Rename {
                c: self.compile(q)?,
                r: r.clone(),
            },
            _ => {
                let slot = self.init.len() as u16;
                let leaf = self.closure(vec![p.clone()])?;
                let id = self.leaves.intern(&leaf);
                self.init.push(id);
                Node::Leaf(slot)
            }
        };
        self.nodes.push(node);
        self.caches.push(NodeCache::default());
        Ok(self.nodes.len() - 1)
    }

    fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn width(&self) -> usize {
        self.init.len()
    }

    pub fn intern_event(&mut self, e: &Event) -> u32 {
        let i = self.events.intern(e);
        if i as usize == self.kinds.len() {
            self.kinds.push(e.kind());
        }
        i
    }

    pub fn event_id(&self, e: &Event) -> Option<u32> {
        self.events.get(e)
    }

    pub fn event(&self, id: u32) -> &Event {
        self.events.value(id)
    }

    pub fn kind(&self, id: u32) -> KindMask {
        self.kinds[id as usize]
    }

    pub fn state_count(&self) -> usize {
        self.store.len()
    }

    /// The leaf processes of a state, slot by slot.
    pub fn leaves_of(&self, state: u32) -> Vec<Vec<Process>> {
        self.store.get(state).iter().map(|&l| self.leaves.value(l).to_vec()).collect()
    }

    fn closure(&mut self, mut set: Vec<Process>) -> Result<Leaf, KernelError> {
        let mut stack = set.clone();
        while let Some(p) = stack.pop() {
            for (_, q) in self.kernel.transitions(&p, KindMask::TAU)? {
                if !set.contains(&q) {
                    set.push(q.clone());
                    stack.push(q);
                }
            }
        }
        set.sort();
        set.dedup();
        Ok(set.into())
    }

    fn leaf_transitions(&mut self, leaf: u32, want: KindMask) -> Result<LeafTrans, KernelError> {
        if let Some(t) = self.leaf_trans.get(&(leaf, want.0)) {
            return Ok(t.clone());
        }
        let members = self.leaves.value(leaf).clone();
        let mut groups: std::collections::BTreeMap<Event, Vec<Process>> = std::collections::BTreeMap::new();
        let visible = want & !KindMask::TAU;
        if !visible.is_empty() {
            for m in members.iter() {
                for (e, q) in self.kernel.transitions(m, visible)? {
                    groups.entry(e).or_default().push(q);
                }
            }
        }
        let mut v = Vec::with_capacity(groups.len());
        for (e, qs) in groups {
            let next = self.closure(qs)?;
            v.push((self.intern_event(&e), self.leaves.intern(&next)));
        }
        let v: LeafTrans = v.into();
        self.leaf_trans.insert((leaf, want.0), v.clone());
        Ok(v)
    }

    fn leaf_after(&mut self, leaf: u32, e: u32) -> Result<Arc<[u32]>, KernelError> {
        if let Some(t) = self.leaf_after.get(&(leaf, e)) {
            return Ok(t.clone());
        }
        let members = self.leaves.value(leaf).clone();
        let ev = self.events.value(e).clone();
        let mut qs = Vec::new();
        for m in members.iter() {
            qs.extend(self.kernel.after(m, &ev)?);
        }
        let v: Arc<[u32]> = if qs.is_empty() {
            Arc::from(Vec::new())
        } else {
            let next = self.closure(qs)?;
            Arc::from(vec![self.leaves.intern(&next)])
        };
        self.leaf_after.insert((leaf, e), v.clone());
        Ok(v)
    }

    fn member(&mut self, n: usize, e: u32) -> bool {
        if e == TAU {
            return false;
        }
        if let Some(&b) = self.caches[n].member.get(&e) {
            return b;
        }
        let ev = self.events.value(e);
        let b = match &self.nodes[n] {
            Node::Par { iface, .. } => e == TICK || iface.as_ref().is_some_and(|x| x.contains(ev)),
            Node::Hide { set, .. } => e != TICK && set.contains(ev),
            _ => false,
        };
        self.caches[n].member.insert(e, b);
        b
    }

    fn images(&mut self, n: usize, e: u32) -> Result<Arc<[u32]>, KernelError> {
        if let Some(v) = self.caches[n].images.get(&e) {
            return Ok(v.clone());
        }
        let Node::Rename { r, .. } = &self.nodes[n] else {
            unreachable!()
        };
        let imgs = r.images(self.events.value(e))?;
        let v: Vec<u32> = imgs.iter().map(|x| self.intern_event(x)).collect();
        let v: Arc<[u32]> = v.into();
        self.caches[n].images.insert(e, v.clone());
        Ok(v)
    }

    fn preimages(&mut self, n: usize, e: u32) -> Option<Arc<[u32]>> {
        if let Some(v) = self.caches[n].preimages.get(&e) {
            return v.clone();
        }
        let Node::Rename { r, .. } = &self.nodes[n] else {
            unreachable!()
        };
        let pre = r.preimages(self.events.value(e));
        let v = pre.map(|xs| {
            let v: Vec<u32> = xs.iter().map(|x| self.intern_event(x)).collect();
            Arc::<[u32]>::from(v)
        });
        self.caches[n].preimages.insert(e, v.clone());
        v
    }

    fn trans(&mut self, n: usize, s: &[u32], want: KindMask, out: &mut Vec<(u32, Delta)>) -> Result<(), KernelError> {
        match self.nodes[n] {
            Node::Leaf(slot) => {
                for &(e, q) in self.leaf_transitions(s[slot as usize], want)?.iter() {
                    let mut d = Delta::new();
                    d.push((slot, q));
                    out.push((e, d));
                }
            }
            Node::Par { l, r, covered, .. } => {
                let mut lt = Vec::new();
                self.trans(l, s, want, &mut lt)?;
                let mut ra = Vec::new();
                for (e, d) in lt {
                    if e != TAU && self.member(n, e) {
                        ra.clear();
                        self.after_node(r, s, e, &mut ra)?;
                        for rd in &ra {
                            let mut d2 = d.clone();
                            d2.extend_from_slice(rd);
                            out.push((e, d2));
                        }
                    } else {
                        out.push((e, d));
                    }
                }
                let mut rt = Vec::new();
                self.trans(r, s, want & !(covered | KindMask::TICK), &mut rt)?;
                for (e, d) in rt {
                    if e == TAU || !self.member(n, e) {
                        out.push((e, d));
                    }
                }
            }
            Node::Hide { c, touched, .. } => {
                let tau = want.contains(KindMask::TAU);
                let cw = if tau { want | touched } else { want };
                let mut tmp = Vec::new();
                self.trans(c, s, cw, &mut tmp)?;
                for (e, d) in tmp {
                    if e == TAU || self.member(n, e) {
                        if tau {
                            out.push((TAU, d));
                        }
                    } else if want.contains(self.kind(e)) {
                        out.push((e, d));
                    }
                }
            }
            Node::Rename { c, ref r } => {
                let r = r.clone();
                let cw = r.source_kinds(want) | (want & (KindMask::TAU | KindMask::TICK));
                let mut tmp = Vec::new();
                self.trans(c, s, cw, &mut tmp)?;
                for (e, d) in tmp {
                    if e == TAU || e == TICK {
                        if want.contains(self.kind(e)) {
                            out.push((e, d));
                        }
                        continue;
                    }
                    for &img in self.images(n, e)?.iter() {
                        if want.contains(self.kind(img)) {
                            out.push((img, d.clone()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn after_node(&mut self, n: usize, s: &[u32], e: u32, out: &mut Vec<Delta>) -> Result<(), KernelError> {
        debug_assert!(e != TAU);
        match self.nodes[n] {
            Node::Leaf(slot) => {
                for &q in self.leaf_after(s[slot as usize], e)?.iter() {
                    let mut d = Delta::new();
                    d.push((slot, q));
                    out.push(d);
                }
            }
            Node::Par { l, r, .. } => {
                let mut ls = Vec::new();
                self.after_node(l, s, e, &mut ls)?;
                if self.member(n, e) {
                    if ls.is_empty() {
                        return Ok(());
                    }
                    let mut rs = Vec::new();
                    self.after_node(r, s, e, &mut rs)?;
                    for a in &ls {
                        for b in &rs {
                            let mut d = a.clone();
                            d.extend_from_slice(b);
                            out.push(d);
                        }
                    }
                } else {
                    out.extend(ls);
                    self.after_node(r, s, e, out)?;
                }
            }
            Node::Hide { c, .. } => {
                if !self.member(n, e) {
                    self.after_node(c, s, e, out)?;
                }
            }
            Node::Rename { c, ref r } => {
                if e == TICK {
                    return self.after_node(c, s, e, out);
                }
                let r = r.clone();
                match self.preimages(n, e) {
                    Some(pre) => {
                        for &x in pre.iter() {
                            self.after_node(c, s, x, out)?;
                        }
                    }
                    None => {
                        let mut tmp = Vec::new();
                        self.trans(c, s, r.source_kinds(self.kind(e)), &mut tmp)?;
                        for (y, d) in tmp {
                            if y != TAU && y != TICK && self.images(n, y)?.contains(&e) {
                                out.push(d);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, state: u32, d: &Delta, buf: &mut Vec<u32>) -> (u32, bool) {
        buf.clear();
        buf.extend_from_slice(self.store.get(state));
        for &(slot, leaf) in d {
            buf[slot as usize] = leaf;
        }
        self.store.insert(buf)
    }

    /// Transitions of `state` whose kinds are in `want`, as `(event, state)`
    /// pairs in canonical order. New states are added to the store.
    pub fn successors(&mut self, state: u32, want: KindMask, out: &mut Vec<(u32, u32)>) -> Result<(), KernelError> {
        let s = self.store.get(state).to_vec();
        let mut ts = Vec::new();
        let root = self.root();
        self.trans(root, &s, want, &mut ts)?;
        let mut buf = Vec::with_capacity(s.len());
        for (e, d) in ts {
            let (t, _) = self.apply(state, &d, &mut buf);
            out.push((e, t));
        }
        Ok(())
    }

    /// States reached from `state` by the visible event `e`.
    pub fn after(&mut self, state: u32, e: u32, out: &mut Vec<u32>) -> Result<(), KernelError> {
        let s = self.store.get(state).to_vec();
        let mut ds = Vec::new();
        let root = self.root();
        self.after_node(root, &s, e, &mut ds)?;
        let mut buf = Vec::with_capacity(s.len());
        for d in ds {
            let (t, _) = self.apply(state, &d, &mut buf);
            out.push(t);
        }
        Ok(())
    }

    /// Tau-closure of a set of states, sorted.
    pub fn tau_closure(&mut self, states: &mut Vec<u32>) -> Result<(), KernelError> {
        let mut seen: BTreeSet<u32> = states.iter().copied().collect();
        let mut stack: Vec<u32> = states.clone();
        let mut ts = Vec::new();
        while let Some(x) = stack.pop() {
            ts.clear();
            self.successors(x, KindMask::TAU, &mut ts)?;
            for &(_, y) in &ts {
                if seen.insert(y) {
                    stack.push(y);
                }
            }
        }
        states.clear();
        states.extend(seen);
        Ok(())
    }
}

/// Resource limits for an exploration.
#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    pub max_states: usize,
    pub max_depth: usize,
    pub deadline: Option<Instant>,
    pub budget: Option<Duration>,
}

impl Bounds {
    pub fn new(max_states: usize, max_depth: usize, budget: Option<Duration>) -> Bounds {
        Bounds {
            max_states,
            max_depth,
            deadline: budget.map(|b| Instant::now() + b),
            budget,
        }
    }

    pub fn check_time(&self) -> Result<(), Limit> {
        match (self.deadline, self.budget) {
            (Some(d), Some(b)) if Instant::now() >= d => Err(Limit::Time(b)),
            _ => Ok(()),
        }
    }
}

/// An explicit labelled transition system. State 0 is initial.
#[derive(Clone, Debug)]
pub struct Lts {
    pub events: Vec<Event>,
    pub transitions: Vec<Vec<(u32, u32)>>,
}

impl Lts {
    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }
}

/// Breadth-first exploration of every reachable state, tau included.
/// `max_depth` bounds the number of transitions from the initial state.
pub fn explore(defs: Arc<Definitions>, p: &Process, bounds: Bounds) -> Result<Lts, ExploreError> {
    let mut ex = Explorer::new(defs, p)?;
    let mut transitions: Vec<Vec<(u32, u32)>> = Vec::new();
    let mut depth = vec![0usize];
    let mut next = 0u32;
    let mut out = Vec::new();
    while (next as usize) < ex.state_count() {
        if ex.state_count() > bounds.max_states {
            return Err(ExploreError::Limit(Limit::States(bounds.max_states)));
        }
        if next % 1024 == 0 {
            bounds.check_time().map_err(ExploreError::Limit)?;
        }
        out.clear();
        let before = ex.state_count();
        ex.successors(next, KindMask::ALL, &mut out)?;
        let d = depth[next as usize];
        if ex.state_count() > before && d >= bounds.max_depth {
            return Err(ExploreError::Limit(Limit::Depth(bounds.max_depth)));
        }
        depth.resize(ex.state_count(), d + 1);
        transitions.push(out.clone());
        next += 1;
    }
    if ex.state_count() > bounds.max_states {
        return Err(ExploreError::Limit(Limit::States(bounds.max_states)));
    }
    let events = (0..ex.events.len() as u32).map(|i| ex.event(i).clone()).collect();
    Ok(Lts { events, transitions })
}

/// A deterministic automaton over visible events; every state accepts.
#[derive(Clone, Debug)]
pub struct Dfa {
    pub events: Vec<Event>,
    /// Outgoing edges per state, sorted by event.
    pub transitions: Vec<Vec<(u32, u32)>>,
    /// The LTS states each automaton state stands for.
    pub members: Vec<Vec<u32>>,
}

impl Dfa {
    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn step(&self, state: u32, e: &Event) -> Option<u32> {
        self.transitions[state as usize]
            .iter()
            .find(|(x, _)| &self.events[*x as usize] == e)
            .map(|&(_, t)| t)
    }

    pub fn accepts(&self, trace: &[Event]) -> bool {
        let mut s = 0;
        for e in trace {
            match self.step(s, e) {
                Some(t) => s = t,
                None => return false,
            }
        }
        true
    }

    /// Every accepted trace of length at most `depth`.
    pub fn traces(&self, depth: usize) -> BTreeSet<Trace> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([(0u32, Vec::new())]);
        while let Some((s, t)) = queue.pop_front() {
            if t.len() < depth {
                for &(e, to) in &self.transitions[s as usize] {
                    let mut t2: Trace = t.clone();
                    t2.push(self.events[e as usize].clone());
                    queue.push_back((to, t2));
                }
            }
            out.insert(t);
        }
        out
    }
}

fn lts_closure(lts: &Lts, set: &mut Vec<u32>) {
    let mut seen: BTreeSet<u32> = set.iter().copied().collect();
    let mut stack = set.clone();
    while let Some(x) = stack.pop() {
        for &(e, y) in &lts.transitions[x as usize] {
            if e == TAU && seen.insert(y) {
                stack.push(y);
            }
        }
    }
    set.clear();
    set.extend(seen);
}

/// Tau-closure and subset construction.
pub fn normalize(lts: &Lts, max_states: usize) -> Result<Dfa, ExploreError> {
    let mut start = vec![0u32];
    lts_closure(lts, &mut start);
    let mut ids: FxHashMap<Vec<u32>, u32> = FxHashMap::default();
    ids.insert(start.clone(), 0);
    let mut members = vec![start];
    let mut transitions = Vec::new();
    let mut i = 0;
    while i < members.len() {
        let mut by_event: std::collections::BTreeMap<&Event, Vec<u32>> = std::collections::BTreeMap::new();
        for &x in &members[i] {
            for &(e, y) in &lts.transitions[x as usize] {
                if e != TAU {
                    by_event.entry(&lts.events[e as usize]).or_default().push(y);
                }
            }
        }
        let mut edges = Vec::new();
        for (ev, mut targets) in by_event {
            let e = lts.events.iter().position(|x| x == ev).unwrap() as u32;
            targets.sort_unstable();
            targets.dedup();
            lts_closure(lts, &mut targets);
            let next = ids.len() as u32;
            let id = *ids.entry(targets.clone()).or_insert_with(|| {
                members.push(targets);
                next
            });
            if members.len() > max_states {
                return Err(ExploreError::Limit(Limit::States(max_states)));
            }
            edges.push((e, id));
        }
        transitions.push(edges);
        i += 1;
    }
    Ok(Dfa {
        events: lts.events.clone(),
        transitions,
        members,
    })
}

//! Small-step operational semantics for process terms.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::KernelError;
use crate::event::{Event, KindMask};
use crate::fact::Name;
use crate::process::{Arg, EventSet, Process, Term};

pub type Body = Arc<dyn Fn(&[Arg]) -> Result<Process, KernelError> + Send + Sync>;

pub const DEFAULT_ORACLE_BOUND: usize = 10;
pub const DEFAULT_ORACLE_CAP: usize = 2_000_000;
const UNFOLD_LIMIT: usize = 1_000;

/// Named process definitions resolved by `Call`.
#[derive(Clone, Default)]
pub struct Definitions {
    map: FxHashMap<Name, Body>,
}

impl Definitions {
    pub fn new() -> Self {
        Definitions::default()
    }

    pub fn define<F>(&mut self, name: &str, body: F)
    where
        F: Fn(&[Arg]) -> Result<Process, KernelError> + Send + Sync + 'static,
    {
        self.map.insert(Name::new(name), Arc::new(body));
    }

    pub fn get(&self, name: &Name) -> Option<&Body> {
        self.map.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(&Name::new(name))
    }
}

pub type Trace = Vec<Event>;

/// Evaluates process terms against a definition table.
///
/// The kernel keeps an unfold cache, so repeated calls with the same
/// arguments share one body term.
pub struct Kernel {
    defs: Arc<Definitions>,
    unfolded: FxHashMap<Process, Process>,
    pub oracle_bound: usize,
    pub oracle_cap: usize,
}

impl Kernel {
    pub fn new(defs: Arc<Definitions>) -> Self {
        Kernel {
            defs,
            unfolded: FxHashMap::default(),
            oracle_bound: DEFAULT_ORACLE_BOUND,
            oracle_cap: DEFAULT_ORACLE_CAP,
        }
    }

    pub fn empty() -> Self {
        Kernel::new(Arc::new(Definitions::new()))
    }

    pub fn definitions(&self) -> &Arc<Definitions> {
        &self.defs
    }

    /// Resolve a `Call` to its body, following chains of calls.
    pub fn unfold(&mut self, p: &Process) -> Result<Process, KernelError> {
        if let Some(b) = self.unfolded.get(p) {
            return Ok(b.clone());
        }
        let mut cur = p.clone();
        for _ in 0..UNFOLD_LIMIT {
            match cur.term() {
                Term::Call(name, args) => {
                    let body = self
                        .defs
                        .get(name)
                        .ok_or_else(|| KernelError::DefinitionMissing(name.to_string()))?
                        .clone();
                    cur = body(args)?;
                }
                _ => {
                    self.unfolded.insert(p.clone(), cur.clone());
                    return Ok(cur);
                }
            }
        }
        let name = match p.term() {
            Term::Call(n, _) => n.to_string(),
            _ => String::new(),
        };
        Err(KernelError::Unguarded(name))
    }

    /// All enabled transitions, sorted canonically by event then successor.
    pub fn initials(&mut self, p: &Process) -> Result<Vec<(Event, Process)>, KernelError> {
        self.transitions(p, KindMask::ALL)
    }

    /// Enabled transitions whose event kind is in `want`.
    pub fn transitions(&mut self, p: &Process, want: KindMask) -> Result<Vec<(Event, Process)>, KernelError> {
        let mut out = Vec::new();
        self.collect(p, want, &mut out)?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn collect(&mut self, p: &Process, want: KindMask, out: &mut Vec<(Event, Process)>) -> Result<(), KernelError> {
        match p.term() {
            Term::Stop => {}
            Term::Skip => {
                if want.contains(KindMask::TICK) {
                    out.push((Event::Tick, Process::stop()));
                }
            }
            Term::Prefix(e, q) => {
                if want.contains(e.kind()) {
                    out.push((e.clone(), q.clone()));
                }
            }
            Term::ExtChoice(ps) => {
                let mut tmp = Vec::new();
                for (i, b) in ps.iter().enumerate() {
                    tmp.clear();
                    self.collect(b, want, &mut tmp)?;
                    for (e, q) in tmp.drain(..) {
                        if e.is_tau() {
                            let mut v = ps.to_vec();
                            v[i] = q;
                            out.push((Event::Tau, Process::ext_choice_raw(v)));
                        } else {
                            out.push((e, q));
                        }
                    }
                }
            }
            Term::IntChoice(ps) => {
                if want.contains(KindMask::TAU) {
                    out.extend(ps.iter().map(|b| (Event::Tau, b.clone())));
                }
            }
            Term::Parallel(l, r, x) => {
                let x2 = x.clone();
                self.collect_par(l, r, Some(x), want, out, move |a, b| Process::par(a, b, x2.clone()))?;
            }
            Term::Interleave(l, r) => {
                self.collect_par(l, r, None, want, out, Process::interleave)?;
            }
            Term::Hide(q, h) => {
                let cw = if want.contains(KindMask::TAU) {
                    want | h.touched_kinds()
                } else {
                    want
                };
                let mut tmp = Vec::new();
                self.collect(q, cw, &mut tmp)?;
                for (e, q2) in tmp {
                    let hidden = !matches!(e, Event::Tick) && h.contains(&e);
                    let next = Process::hide(q2, h.clone());
                    if e.is_tau() || hidden {
                        if want.contains(KindMask::TAU) {
                            out.push((Event::Tau, next));
                        }
                    } else if want.contains(e.kind()) {
                        out.push((e, next));
                    }
                }
            }
            Term::Rename(q, r) => {
                let cw = r.source_kinds(want) | (want & (KindMask::TAU | KindMask::TICK));
                let mut tmp = Vec::new();
                self.collect(q, cw, &mut tmp)?;
                for (e, q2) in tmp {
                    let next = Process::rename(q2, r.clone());
                    if e.is_tau() || matches!(e, Event::Tick) {
                        if want.contains(e.kind()) {
                            out.push((e, next));
                        }
                        continue;
                    }
                    for img in r.images(&e)? {
                        if want.contains(img.kind()) {
                            out.push((img, next.clone()));
                        }
                    }
                }
            }
            Term::Call(..) => {
                let b = self.unfold(p)?;
                self.collect(&b, want, out)?;
            }
            Term::Spy(s) => s.transitions(want, out),
        }
        Ok(())
    }

    fn collect_par<F>(
        &mut self,
        l: &Process,
        r: &Process,
        x: Option<&EventSet>,
        want: KindMask,
        out: &mut Vec<(Event, Process)>,
        mk: F,
    ) -> Result<(), KernelError>
    where
        F: Fn(Process, Process) -> Process,
    {
        let synced = |e: &Event| matches!(e, Event::Tick) || x.is_some_and(|x| x.contains(e));
        let mut lt = Vec::new();
        self.collect(l, want, &mut lt)?;
        for (e, l2) in lt {
            if !e.is_tau() && synced(&e) {
                for r2 in self.after(r, &e)? {
                    out.push((e.clone(), mk(l2.clone(), r2)));
                }
            } else {
                out.push((e, mk(l2, r.clone())));
            }
        }
        let covered = x.map(|x| x.covered_kinds()).unwrap_or(KindMask::NONE) | KindMask::TICK;
        let mut rt = Vec::new();
        self.collect(r, want & !covered, &mut rt)?;
        for (e, r2) in rt {
            if e.is_tau() || !synced(&e) {
                out.push((e, mk(l.clone(), r2)));
            }
        }
        Ok(())
    }

    /// Successors of `p` by the visible event `e`, sorted.
    pub fn after(&mut self, p: &Process, e: &Event) -> Result<Vec<Process>, KernelError> {
        debug_assert!(!e.is_tau());
        let mut out = Vec::new();
        self.after_into(p, e, &mut out)?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn after_into(&mut self, p: &Process, e: &Event, out: &mut Vec<Process>) -> Result<(), KernelError> {
        match p.term() {
            Term::Stop | Term::IntChoice(_) => {}
            Term::Skip => {
                if matches!(e, Event::Tick) {
                    out.push(Process::stop());
                }
            }
            Term::Prefix(x, q) => {
                if x == e {
                    out.push(q.clone());
                }
            }
            Term::ExtChoice(ps) => {
                for b in ps.iter() {
                    self.after_into(b, e, out)?;
                }
            }
            Term::Parallel(l, r, x) => {
                let synced = matches!(e, Event::Tick) || x.contains(e);
                self.after_par(l, r, synced, e, out, |a, b| Process::par(a, b, x.clone()))?;
            }
            Term::Interleave(l, r) => {
                let synced = matches!(e, Event::Tick);
                self.after_par(l, r, synced, e, out, Process::interleave)?;
            }
            Term::Hide(q, h) => {
                if matches!(e, Event::Tick) || !h.contains(e) {
                    for q2 in self.after(q, e)? {
                        out.push(Process::hide(q2, h.clone()));
                    }
                }
            }
            Term::Rename(q, r) => {
                if matches!(e, Event::Tick) {
                    for q2 in self.after(q, e)? {
                        out.push(Process::rename(q2, r.clone()));
                    }
                    return Ok(());
                }
                match r.preimages(e) {
                    Some(pre) => {
                        for x in pre {
                            for q2 in self.after(q, &x)? {
                                out.push(Process::rename(q2, r.clone()));
                            }
                        }
                    }
                    None => {
                        let mut tmp = Vec::new();
                        self.collect(q, r.source_kinds(e.kind()), &mut tmp)?;
                        for (y, q2) in tmp {
                            if !y.is_tau() && r.images(&y)?.contains(e) {
                                out.push(Process::rename(q2, r.clone()));
                            }
                        }
                    }
                }
            }
            Term::Call(..) => {
                let b = self.unfold(p)?;
                self.after_into(&b, e, out)?;
            }
            Term::Spy(s) => s.after(e, out),
        }
        Ok(())
    }

    fn after_par<F>(
        &mut self,
        l: &Process,
        r: &Process,
        synced: bool,
        e: &Event,
        out: &mut Vec<Process>,
        mk: F,
    ) -> Result<(), KernelError>
    where
        F: Fn(Process, Process) -> Process,
    {
        let ls = self.after(l, e)?;
        if synced {
            if ls.is_empty() {
                return Ok(());
            }
            let rs = self.after(r, e)?;
            for a in &ls {
                for b in &rs {
                    out.push(mk(a.clone(), b.clone()));
                }
            }
        } else {
            for a in ls {
                out.push(mk(a, r.clone()));
            }
            for b in self.after(r, e)? {
                out.push(mk(l.clone(), b));
            }
        }
        Ok(())
    }

    /// Every tau-free trace of length at most `depth`, by exhaustive search.
    pub fn traces_bruteforce(&mut self, p: &Process, depth: usize) -> Result<BTreeSet<Trace>, KernelError> {
        if depth > self.oracle_bound {
            return Err(KernelError::OracleDepth {
                depth,
                bound: self.oracle_bound,
            });
        }
        let mut traces = BTreeSet::new();
        let mut seen: FxHashSet<(Process, Trace)> = FxHashSet::default();
        let mut queue = VecDeque::new();
        seen.insert((p.clone(), Vec::new()));
        queue.push_back((p.clone(), Vec::new()));
        while let Some((q, t)) = queue.pop_front() {
            traces.insert(t.clone());
            for (e, q2) in self.initials(&q)? {
                let t2 = if e.is_tau() {
                    t.clone()
                } else if t.len() < depth {
                    let mut t2 = t.clone();
                    t2.push(e);
                    t2
                } else {
                    continue;
                };
                if seen.insert((q2.clone(), t2.clone())) {
                    if seen.len() > self.oracle_cap {
                        return Err(KernelError::OracleOverflow(self.oracle_cap));
                    }
                    queue.push_back((q2, t2));
                }
            }
        }
        Ok(traces)
    }

    /// Repeatedly take the first enabled transition whose kind is in
    /// `kinds`, until none is enabled. Returns the final process and the
    /// events taken.
    pub fn chase(&mut self, p: &Process, kinds: KindMask, limit: usize) -> Result<(Process, Vec<Event>), KernelError> {
        let mut cur = p.clone();
        let mut taken = Vec::new();
        for _ in 0..limit {
            let ts = self.transitions(&cur, kinds)?;
            match ts.into_iter().next() {
                Some((e, q)) => {
                    taken.push(e);
                    cur = q;
                }
                None => return Ok((cur, taken)),
            }
        }
        Err(KernelError::OracleOverflow(limit))
    }
}

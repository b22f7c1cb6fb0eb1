//! Trace refinement, masked anonymity and secrecy checks.

use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rustc_hash::{FxHashMap, FxHasher};
use serde::Serialize;

use crate::channels::Threat;
use crate::error::{ConfigError, Error, KernelError};
use crate::event::{Chan, ControlName, Event, KindMask};
use crate::explore::{Explorer, Interner, TAU};
use crate::fact::{Fact, Masking};
use crate::kernel::{Definitions, Trace};
use crate::process::{EventSet, Events, Pattern, Process, Relabel, Renaming};
use crate::protocol::{Limits, Scenario, ScenarioConfig};
use crate::universe::Universe;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Fails,
    ResourceLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LeftNotInRight,
    RightNotInLeft,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub impl_states: usize,
    pub spec_states: usize,
    pub dfa_states: usize,
    pub product_states: usize,
    pub transitions: usize,
    pub max_depth_reached: usize,
}

impl Stats {
    fn merge(&mut self, o: &Stats) {
        self.impl_states += o.impl_states;
        self.spec_states += o.spec_states;
        self.dfa_states += o.dfa_states;
        self.product_states += o.product_states;
        self.transitions += o.transitions;
        self.max_depth_reached = self.max_depth_reached.max(o.max_depth_reached);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub result: Outcome,
    pub counterexample: Option<Trace>,
    pub direction: Option<Direction>,
    /// Which limit stopped the search, for `resource_limit`.
    pub limit: Option<String>,
    pub stats: Stats,
}

impl Verdict {
    fn holds(stats: Stats) -> Verdict {
        Verdict {
            result: Outcome::Holds,
            counterexample: None,
            direction: None,
            limit: None,
            stats,
        }
    }
}

/// Renaming that masks the payload of every event on nsbcomm, take and fake.
#[derive(Debug)]
pub struct MaskRelabel {
    masking: Masking,
    inverse: FxHashMap<Fact, Vec<Fact>>,
    fingerprint: u64,
}

impl MaskRelabel {
    pub fn new(masking: Masking, messages: &[Fact]) -> MaskRelabel {
        let mut inverse: FxHashMap<Fact, Vec<Fact>> = FxHashMap::default();
        for m in messages {
            inverse.entry(masking.apply(m)).or_default().push(m.clone());
        }
        for v in inverse.values_mut() {
            v.sort();
            v.dedup();
        }
        let mut h = FxHasher::default();
        "mask".hash(&mut h);
        masking.readable().hash(&mut h);
        messages.len().hash(&mut h);
        MaskRelabel {
            masking,
            inverse,
            fingerprint: h.finish(),
        }
    }

    fn masked(chan: Chan) -> bool {
        matches!(chan, Chan::Nsbcomm | Chan::Take | Chan::Fake)
    }

    pub fn apply(&self, e: &Event) -> Event {
        match e {
            Event::Comm { chan, from, to, payload } if Self::masked(*chan) && self.masking.touches(payload) => Event::Comm {
                chan: *chan,
                from: from.clone(),
                to: to.clone(),
                payload: self.masking.apply(payload),
            },
            _ => e.clone(),
        }
    }
}

impl Relabel for MaskRelabel {
    fn images(&self, e: &Event) -> Result<Events, KernelError> {
        Ok(Events::from_iter([self.apply(e)]))
    }

    fn preimages(&self, e: &Event) -> Option<Events> {
        match e {
            Event::Comm { chan, from, to, payload } if Self::masked(*chan) => {
                let pre = self.inverse.get(payload)?;
                Some(
                    pre.iter()
                        .map(|m| Event::Comm {
                            chan: *chan,
                            from: from.clone(),
                            to: to.clone(),
                            payload: m.clone(),
                        })
                        .collect(),
                )
            }
            _ => Some(Events::from_iter([e.clone()])),
        }
    }

    fn source_kinds(&self, want: KindMask) -> KindMask {
        want
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn label(&self) -> String {
        "mask".to_string()
    }
}

/// `p` with every nsbcomm, take and fake payload masked against `ik`.
pub fn mask_process(p: Process, ik: &BTreeSet<Fact>, u: &Universe) -> Process {
    let relabel = MaskRelabel::new(Masking::from_knowledge(ik), u.messages());
    Process::rename(p, Renaming::new(relabel))
}

enum Stop {
    Fail(Trace),
    Limit(String),
}

struct Budget {
    max_states: usize,
    max_depth: usize,
    deadline: Option<(Instant, Duration)>,
}

impl Budget {
    fn new(l: &Limits) -> Budget {
        Budget {
            max_states: l.max_states,
            max_depth: l.max_depth,
            deadline: l.time_budget.map(|d| (Instant::now() + d, d)),
        }
    }

    fn time_left(&self) -> Result<(), Stop> {
        match self.deadline {
            Some((t, d)) if Instant::now() >= t => Err(Stop::Limit(format!("time budget of {d:?} exhausted"))),
            _ => Ok(()),
        }
    }
}

/// Subset automaton of a spec explorer, built on demand.
struct Dfa<'a> {
    ex: &'a mut Explorer,
    sets: Interner<Vec<u32>>,
    steps: FxHashMap<(u32, u32), u32>,
}

const NONE: u32 = u32::MAX;

impl<'a> Dfa<'a> {
    fn new(ex: &'a mut Explorer) -> Result<Dfa<'a>, KernelError> {
        let mut start = vec![0];
        ex.tau_closure(&mut start)?;
        let mut sets = Interner::default();
        sets.intern(&start);
        Ok(Dfa {
            ex,
            sets,
            steps: FxHashMap::default(),
        })
    }

    fn step(&mut self, d: u32, e: &Event) -> Result<u32, KernelError> {
        let eid = self.ex.intern_event(e);
        if let Some(&t) = self.steps.get(&(d, eid)) {
            return Ok(t);
        }
        let mut out = Vec::new();
        for &x in self.sets.value(d).clone().iter() {
            self.ex.after(x, eid, &mut out)?;
        }
        let t = if out.is_empty() {
            NONE
        } else {
            out.sort_unstable();
            out.dedup();
            self.ex.tau_closure(&mut out)?;
            self.sets.intern(&out)
        };
        self.steps.insert((d, eid), t);
        Ok(t)
    }
}

/// Decide whether every trace of `imp` is a trace of the spec, by layered
/// breadth-first search of the product with the spec's subset automaton.
/// Tau moves stay in their layer, so the first failure found is shortest.
fn refine(imp: &mut Explorer, spec: &mut Explorer, budget: &Budget, stats: &mut Stats) -> Result<Option<Stop>, KernelError> {
    let mut dfa = Dfa::new(spec)?;
    let key = |i: u32, d: u32| (u64::from(i) << 32) | u64::from(d);
    let mut index: FxHashMap<u64, u32> = FxHashMap::default();
    index.insert(key(0, 0), 0);
    // (impl state, dfa state) and (parent, event) per product node
    let mut nodes: Vec<(u32, u32)> = vec![(0, 0)];
    let mut parent: Vec<(u32, u32)> = vec![(NONE, TAU)];
    let mut layer: Vec<u32> = vec![0];
    let mut next: Vec<(u32, u32, u32, u32)> = Vec::new();
    let mut succ = Vec::new();
    let mut depth = 0usize;
    let mut processed = 0usize;
    let state_limit = || Stop::Limit(format!("state limit of {} reached", budget.max_states));
    let stop = 'search: loop {
        stats.max_depth_reached = depth;
        let mut k = 0;
        while k < layer.len() {
            let id = layer[k];
            k += 1;
            processed += 1;
            if processed % 4096 == 0 {
                if let Err(s) = budget.time_left() {
                    break 'search Some(s);
                }
            }
            let (i, d) = nodes[id as usize];
            succ.clear();
            imp.successors(i, KindMask::ALL, &mut succ)?;
            // ties between equally short traces go to intruder actions
            succ.sort_by_key(|&(e, _)| !imp.kind(e).intersects(KindMask::TAKE | KindMask::FAKE));
            stats.transitions += succ.len();
            for &(e, j) in &succ {
                if e == TAU {
                    if let std::collections::hash_map::Entry::Vacant(v) = index.entry(key(j, d)) {
                        let n = nodes.len() as u32;
                        v.insert(n);
                        nodes.push((j, d));
                        parent.push((id, TAU));
                        layer.push(n);
                    }
                    continue;
                }
                let ev = imp.event(e).clone();
                let d2 = dfa.step(d, &ev)?;
                if d2 == NONE {
                    let mut trace = vec![ev];
                    let mut at = id;
                    while at != 0 {
                        let (p, pe) = parent[at as usize];
                        if pe != TAU {
                            trace.push(imp.event(pe).clone());
                        }
                        at = p;
                    }
                    trace.reverse();
                    break 'search Some(Stop::Fail(trace));
                }
                if !index.contains_key(&key(j, d2)) {
                    next.push((j, d2, id, e));
                }
            }
            if nodes.len() > budget.max_states {
                break 'search Some(state_limit());
            }
        }
        let mut fresh = Vec::new();
        for &(j, d2, p, e) in &next {
            if let std::collections::hash_map::Entry::Vacant(v) = index.entry(key(j, d2)) {
                let n = nodes.len() as u32;
                v.insert(n);
                nodes.push((j, d2));
                parent.push((p, e));
                fresh.push(n);
            }
        }
        next.clear();
        if fresh.is_empty() {
            break None;
        }
        if depth >= budget.max_depth {
            break Some(Stop::Limit(format!("depth limit of {} reached", budget.max_depth)));
        }
        if nodes.len() > budget.max_states {
            break Some(state_limit());
        }
        depth += 1;
        layer = fresh;
    };
    stats.impl_states = imp.state_count();
    stats.spec_states = dfa.ex.state_count();
    stats.dfa_states = dfa.sets.len();
    stats.product_states = nodes.len();
    Ok(stop)
}

fn verdict_of(stop: Option<Stop>, dir: Direction, stats: Stats) -> Verdict {
    match stop {
        None => Verdict::holds(stats),
        Some(Stop::Fail(t)) => Verdict {
            result: Outcome::Fails,
            counterexample: Some(t),
            direction: Some(dir),
            limit: None,
            stats,
        },
        Some(Stop::Limit(why)) => Verdict {
            result: Outcome::ResourceLimit,
            counterexample: None,
            direction: None,
            limit: Some(why),
            stats,
        },
    }
}

/// Holds iff every trace of `imp` is a trace of `spec`. A failure carries a
/// shortest trace of `imp` that `spec` cannot perform.
pub fn trace_refines(defs: Arc<Definitions>, spec: &Process, imp: &Process, limits: &Limits) -> Result<Verdict, KernelError> {
    let budget = Budget::new(limits);
    let mut s = Explorer::new(defs.clone(), spec)?;
    let mut i = Explorer::new(defs, imp)?;
    let mut stats = Stats::default();
    let stop = refine(&mut i, &mut s, &budget, &mut stats)?;
    Ok(verdict_of(stop, Direction::LeftNotInRight, stats))
}

/// Trace equivalence of `left` and `right`, checked one direction at a time.
/// A failure of the left-to-right refinement is reported first.
pub fn trace_equivalent(defs: Arc<Definitions>, left: &Process, right: &Process, limits: &Limits) -> Result<Verdict, KernelError> {
    let budget = Budget::new(limits);
    let (a, b) = if limits.workers > 1 {
        let (d1, d2) = rayon::join(
            || -> Result<_, KernelError> {
                let mut l = Explorer::new(defs.clone(), left)?;
                let mut r = Explorer::new(defs.clone(), right)?;
                let mut st = Stats::default();
                let stop = refine(&mut l, &mut r, &budget, &mut st)?;
                Ok((stop, st))
            },
            || -> Result<_, KernelError> {
                let mut l = Explorer::new(defs.clone(), left)?;
                let mut r = Explorer::new(defs.clone(), right)?;
                let mut st = Stats::default();
                let stop = refine(&mut r, &mut l, &budget, &mut st)?;
                Ok((stop, st))
            },
        );
        (d1?, Some(d2?))
    } else {
        // sequential runs share the two explorers between directions
        let mut l = Explorer::new(defs.clone(), left)?;
        let mut r = Explorer::new(defs, right)?;
        let mut st = Stats::default();
        let stop = refine(&mut l, &mut r, &budget, &mut st)?;
        if matches!(stop, Some(Stop::Fail(_))) {
            ((stop, st), None)
        } else {
            let mut st2 = Stats::default();
            let stop2 = refine(&mut r, &mut l, &budget, &mut st2)?;
            ((stop, st), Some((stop2, st2)))
        }
    };
    let (stop1, mut stats) = a;
    let (stop2, st2) = match b {
        Some((s, st)) => (s, Some(st)),
        None => (None, None),
    };
    if let Some(st2) = &st2 {
        if limits.workers > 1 {
            stats.merge(st2);
        } else {
            // the second direction reuses both explorers, so its state counts
            // already include the first
            let product = stats.product_states + st2.product_states;
            let transitions = stats.transitions + st2.transitions;
            let depth = stats.max_depth_reached.max(st2.max_depth_reached);
            stats = Stats {
                impl_states: st2.spec_states,
                spec_states: st2.impl_states,
                dfa_states: stats.dfa_states + st2.dfa_states,
                product_states: product,
                transitions,
                max_depth_reached: depth,
            };
        }
    }
    Ok(match (stop1, stop2) {
        (Some(Stop::Fail(t)), _) => verdict_of(Some(Stop::Fail(t)), Direction::LeftNotInRight, stats),
        (_, Some(Stop::Fail(t))) => verdict_of(Some(Stop::Fail(t)), Direction::RightNotInLeft, stats),
        (Some(l @ Stop::Limit(_)), _) | (None, Some(l @ Stop::Limit(_))) => verdict_of(Some(l), Direction::LeftNotInRight, stats),
        (None, None) => Verdict::holds(stats),
    })
}

/// Whether `p` can perform `trace`.
pub fn replays(defs: Arc<Definitions>, p: &Process, trace: &[Event]) -> Result<bool, KernelError> {
    let mut ex = Explorer::new(defs, p)?;
    let mut cur = vec![0];
    ex.tau_closure(&mut cur)?;
    for e in trace {
        let eid = ex.intern_event(e);
        let mut out = Vec::new();
        for &x in &cur {
            ex.after(x, eid, &mut out)?;
        }
        if out.is_empty() {
            return Ok(false);
        }
        out.sort_unstable();
        out.dedup();
        ex.tau_closure(&mut out)?;
        cur = out;
    }
    Ok(true)
}

/// One world's system, masked against the intruder's knowledge with scomm
/// hidden.
pub fn anonymity_view(sc: &Scenario, world: crate::protocol::World) -> Result<Process, Error> {
    let sys = sc.system(world, &BTreeSet::new())?;
    let masked = mask_process(sys, &sc.ik, &sc.universe);
    Ok(Process::hide(masked, EventSet::kinds(KindMask::SCOMM)))
}

/// `p` with every fake event refused: the runs in which the intruder only
/// listens and blocks. Its traces are a subset of those of `p`.
pub fn without_spoofing(p: &Process) -> Process {
    Process::par(p.clone(), Process::stop(), EventSet::kinds(KindMask::FAKE))
}

/// Masked trace equivalence of the two worlds.
///
/// Under the full threat both directions are first checked with spoofing
/// refused on the implementation side; any failure found there is a trace
/// of the full system and is reported as is. Otherwise the full check runs.
pub fn anonymity_check(cfg: &ScenarioConfig) -> Result<Verdict, Error> {
    let sc = Scenario::build(cfg)?;
    let left = anonymity_view(&sc, cfg.world)?;
    let right = anonymity_view(&sc, cfg.world.other())?;
    let mut stats = Stats::default();
    if cfg.threat == Threat::Full {
        for (dir, spec, imp) in [
            (Direction::LeftNotInRight, &right, &left),
            (Direction::RightNotInLeft, &left, &right),
        ] {
            let mut v = trace_refines(sc.defs.clone(), spec, &without_spoofing(imp), &cfg.limits)?;
            stats.merge(&v.stats);
            if v.result == Outcome::Fails {
                v.direction = Some(dir);
                v.stats = stats;
                return Ok(v);
            }
        }
    }
    let mut v = trace_equivalent(sc.defs.clone(), &left, &right, &cfg.limits)?;
    stats.merge(&v.stats);
    v.stats = stats;
    Ok(v)
}

/// The system with everything but `intruderknows` hidden.
pub fn secrecy_view(sc: &Scenario) -> Result<Process, Error> {
    let banned: BTreeSet<Fact> = sc.cfg.banned.iter().cloned().collect();
    let sys = sc.system(sc.cfg.world, &banned)?;
    let hidden = EventSet::with_exclusions(
        vec![Pattern::Kinds(KindMask::VISIBLE & !KindMask::TICK)],
        vec![Pattern::Control(ControlName::Intruderknows)],
    );
    Ok(Process::hide(sys, hidden))
}

/// Holds iff the intruder can never come to know a banned fact.
pub fn secrecy_check(cfg: &ScenarioConfig) -> Result<Verdict, Error> {
    if cfg.banned.is_empty() {
        return Err(ConfigError::for_key("banned", "secrecy needs at least one banned fact").into());
    }
    let sc = Scenario::build(cfg)?;
    let sys = secrecy_view(&sc)?;
    Ok(trace_refines(sc.defs.clone(), &Process::stop(), &sys, &cfg.limits)?)
}

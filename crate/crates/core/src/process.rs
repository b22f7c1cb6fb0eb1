//! Process terms.
//!
//! A [`Process`] is an immutable, reference-counted term carrying a
//! precomputed structural hash. Hashes use a fixed-seed hasher, so orderings
//! derived from them are reproducible across runs.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use rustc_hash::FxHasher;
use smallvec::SmallVec;

use crate::deduction::SpyState;
use crate::error::KernelError;
use crate::event::{Chan, ControlName, Event, KindMask};
use crate::fact::{Fact, Name};

pub type Events = SmallVec<[Event; 2]>;

/// Argument of a named process call.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Arg {
    Fact(Fact),
    Nat(u32),
    /// A set or multiset of facts, kept sorted.
    Facts(Arc<[Fact]>),
    Nats(Arc<[u32]>),
}

impl Arg {
    pub fn facts<I: IntoIterator<Item = Fact>>(it: I) -> Arg {
        let mut v: Vec<Fact> = it.into_iter().collect();
        v.sort();
        Arg::Facts(v.into())
    }

    pub fn as_fact(&self) -> Option<&Fact> {
        match self {
            Arg::Fact(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_facts(&self) -> Option<&[Fact]> {
        match self {
            Arg::Facts(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_nat(&self) -> Option<u32> {
        match self {
            Arg::Nat(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_nats(&self) -> Option<&[u32]> {
        match self {
            Arg::Nats(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Fact(x) => write!(f, "{x}"),
            Arg::Nat(n) => write!(f, "{n}"),
            Arg::Facts(xs) => {
                f.write_str("{")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("}")
            }
            Arg::Nats(xs) => write!(f, "{xs:?}"),
        }
    }
}

/// One clause of an event set.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Pattern {
    /// Every event of the given kinds.
    Kinds(KindMask),
    /// Communications on `chan` with optional fixed endpoints.
    Comm {
        chan: Chan,
        from: Option<Name>,
        to: Option<Name>,
    },
    Control(ControlName),
    Exact(Event),
    /// A sorted, deduplicated list of events.
    Events(Arc<[Event]>),
    /// Communications of the given kinds between an agent of `left` and an
    /// agent of `right`, in either direction. Both lists are sorted.
    Between {
        kinds: KindMask,
        left: Arc<[Name]>,
        right: Arc<[Name]>,
    },
}

impl Pattern {
    fn matches(&self, e: &Event) -> bool {
        match self {
            Pattern::Kinds(k) => k.contains(e.kind()),
            Pattern::Comm { chan, from, to } => match e {
                Event::Comm {
                    chan: c,
                    from: f,
                    to: t,
                    ..
                } => c == chan && from.as_ref().is_none_or(|x| x == f) && to.as_ref().is_none_or(|x| x == t),
                _ => false,
            },
            Pattern::Control(n) => matches!(e, Event::Control { name, .. } if name == n),
            Pattern::Exact(x) => x == e,
            Pattern::Events(xs) => xs.binary_search(e).is_ok(),
            Pattern::Between { kinds, left, right } => match e {
                Event::Comm { chan, from, to, .. } => {
                    kinds.contains(chan.kind())
                        && ((left.binary_search(from).is_ok() && right.binary_search(to).is_ok())
                            || (right.binary_search(from).is_ok() && left.binary_search(to).is_ok()))
                }
                _ => false,
            },
        }
    }

    fn covers(&self) -> KindMask {
        match self {
            Pattern::Kinds(k) => *k,
            Pattern::Comm {
                chan,
                from: None,
                to: None,
            } => chan.kind(),
            _ => KindMask::NONE,
        }
    }

    fn touches(&self) -> KindMask {
        match self {
            Pattern::Kinds(k) => *k,
            Pattern::Comm { chan, .. } => chan.kind(),
            Pattern::Control(_) => KindMask::CONTROL,
            Pattern::Exact(e) => e.kind(),
            Pattern::Events(xs) => xs.iter().fold(KindMask::NONE, |a, e| a | e.kind()),
            Pattern::Between { kinds, .. } => *kinds & KindMask::COMM,
        }
    }
}

/// A set of events described by inclusion and exclusion patterns.
/// `Tau` is never a member; `Tick` only if listed explicitly by kind.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct EventSet {
    include: Arc<[Pattern]>,
    exclude: Arc<[Pattern]>,
}

impl EventSet {
    pub fn empty() -> Self {
        EventSet::default()
    }

    pub fn new(include: Vec<Pattern>) -> Self {
        EventSet {
            include: include.into(),
            exclude: Arc::from(Vec::new()),
        }
    }

    pub fn with_exclusions(include: Vec<Pattern>, exclude: Vec<Pattern>) -> Self {
        EventSet {
            include: include.into(),
            exclude: exclude.into(),
        }
    }

    pub fn kinds(k: KindMask) -> Self {
        EventSet::new(vec![Pattern::Kinds(k & !KindMask::TAU)])
    }

    pub fn exact<I: IntoIterator<Item = Event>>(events: I) -> Self {
        let mut v: Vec<Event> = events.into_iter().filter(|e| !e.is_tau()).collect();
        v.sort();
        v.dedup();
        EventSet::new(vec![Pattern::Events(v.into())])
    }

    pub fn contains(&self, e: &Event) -> bool {
        !e.is_tau() && self.include.iter().any(|p| p.matches(e)) && !self.exclude.iter().any(|p| p.matches(e))
    }

    /// Kinds whose every event belongs to the set.
    pub fn covered_kinds(&self) -> KindMask {
        let inc = self.include.iter().fold(KindMask::NONE, |a, p| a | p.covers());
        let exc = self.exclude.iter().fold(KindMask::NONE, |a, p| a | p.touches());
        inc & !exc & !KindMask::TAU
    }

    /// Kinds with at least one possible member.
    pub fn touched_kinds(&self) -> KindMask {
        let inc = self.include.iter().fold(KindMask::NONE, |a, p| a | p.touches());
        let exc = self.exclude.iter().fold(KindMask::NONE, |a, p| a | p.covers());
        inc & !exc & !KindMask::TAU
    }

    pub fn union(&self, other: &EventSet) -> EventSet {
        assert!(self.exclude.is_empty() && other.exclude.is_empty());
        let mut v: Vec<Pattern> = self.include.iter().cloned().collect();
        v.extend(other.include.iter().cloned());
        v.sort();
        v.dedup();
        EventSet::new(v)
    }

    /// Communications between the two agent groups on the given kinds.
    pub fn between(kinds: KindMask, left: &[Name], right: &[Name]) -> EventSet {
        let mut l = left.to_vec();
        let mut r = right.to_vec();
        l.sort();
        r.sort();
        EventSet::new(vec![Pattern::Between {
            kinds,
            left: l.into(),
            right: r.into(),
        }])
    }

    pub fn patterns(&self) -> (&[Pattern], &[Pattern]) {
        (&self.include, &self.exclude)
    }
}

/// An event relation used by the renaming operator.
///
/// Renamings are one-to-many: each event maps to a non-empty list of
/// images (identity outside the relation's domain). `preimages` answers the
/// inverse query when it can be computed directly; returning `None` makes
/// the kernel fall back to enumerating the renamed process.
pub trait Relabel: Send + Sync + fmt::Debug {
    fn images(&self, e: &Event) -> Result<Events, KernelError>;
    fn preimages(&self, e: &Event) -> Option<Events>;
    /// Kinds the inner process must offer to produce events of kinds `want`.
    fn source_kinds(&self, want: KindMask) -> KindMask;
    /// A deterministic digest of the relation's content.
    fn fingerprint(&self) -> u64;
    fn label(&self) -> String;
}

#[derive(Clone)]
pub struct Renaming(pub Arc<dyn Relabel>);

impl Renaming {
    pub fn new<R: Relabel + 'static>(r: R) -> Self {
        Renaming(Arc::new(r))
    }

    pub fn images(&self, e: &Event) -> Result<Events, KernelError> {
        self.0.images(e)
    }

    pub fn preimages(&self, e: &Event) -> Option<Events> {
        self.0.preimages(e)
    }

    pub fn source_kinds(&self, want: KindMask) -> KindMask {
        self.0.source_kinds(want)
    }

    pub fn fingerprint(&self) -> u64 {
        self.0.fingerprint()
    }
}

impl PartialEq for Renaming {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.fingerprint() == other.fingerprint()
    }
}
impl Eq for Renaming {}
impl Hash for Renaming {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.fingerprint());
    }
}
impl PartialOrd for Renaming {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Renaming {
    fn cmp(&self, other: &Self) -> Ordering {
        self.fingerprint().cmp(&other.fingerprint())
    }
}
impl fmt::Debug for Renaming {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.label())
    }
}

/// An explicit finite relation; events outside its domain are unchanged.
#[derive(Debug)]
pub struct PairRenaming {
    forward: BTreeMap<Event, Vec<Event>>,
    backward: BTreeMap<Event, Vec<Event>>,
    fingerprint: u64,
}

impl PairRenaming {
    pub fn new<I: IntoIterator<Item = (Event, Event)>>(pairs: I) -> Self {
        let mut forward: BTreeMap<Event, Vec<Event>> = BTreeMap::new();
        let mut backward: BTreeMap<Event, Vec<Event>> = BTreeMap::new();
        for (a, b) in pairs {
            assert!(!a.is_tau() && !b.is_tau(), "tau cannot be renamed");
            forward.entry(a.clone()).or_default().push(b.clone());
            backward.entry(b).or_default().push(a);
        }
        for v in forward.values_mut().chain(backward.values_mut()) {
            v.sort();
            v.dedup();
        }
        let mut h = FxHasher::default();
        "pairs".hash(&mut h);
        forward.hash(&mut h);
        PairRenaming {
            fingerprint: h.finish(),
            forward,
            backward,
        }
    }
}

impl Relabel for PairRenaming {
    fn images(&self, e: &Event) -> Result<Events, KernelError> {
        Ok(match self.forward.get(e) {
            Some(v) => v.iter().cloned().collect(),
            None => smallvec::smallvec![e.clone()],
        })
    }

    fn preimages(&self, e: &Event) -> Option<Events> {
        let mut out: Events = self.backward.get(e).map(|v| v.iter().cloned().collect()).unwrap_or_default();
        if !self.forward.contains_key(e) {
            out.push(e.clone());
        }
        Some(out)
    }

    fn source_kinds(&self, want: KindMask) -> KindMask {
        let mut k = want;
        for (a, bs) in &self.forward {
            if bs.iter().any(|b| want.contains(b.kind())) {
                k = k | a.kind();
            }
        }
        k
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn label(&self) -> String {
        format!("pairs({})", self.forward.len())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Term {
    Stop,
    Skip,
    Prefix(Event, Process),
    ExtChoice(Arc<[Process]>),
    IntChoice(Arc<[Process]>),
    Parallel(Process, Process, EventSet),
    Interleave(Process, Process),
    Hide(Process, EventSet),
    Rename(Process, Renaming),
    Call(Name, Arc<[Arg]>),
    /// The lazy intruder as a native knowledge-set process.
    Spy(SpyState),
}

struct Node {
    hash: u64,
    term: Term,
}

#[derive(Clone)]
pub struct Process(Arc<Node>);

impl Process {
    fn make(term: Term) -> Process {
        let mut h = FxHasher::default();
        term.hash(&mut h);
        Process(Arc::new(Node { hash: h.finish(), term }))
    }

    pub fn term(&self) -> &Term {
        &self.0.term
    }

    pub fn structural_hash(&self) -> u64 {
        self.0.hash
    }

    pub fn ptr_eq(&self, other: &Process) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn stop() -> Process {
        static STOP: OnceLock<Process> = OnceLock::new();
        STOP.get_or_init(|| Process::make(Term::Stop)).clone()
    }

    pub fn skip() -> Process {
        static SKIP: OnceLock<Process> = OnceLock::new();
        SKIP.get_or_init(|| Process::make(Term::Skip)).clone()
    }

    pub fn prefix(e: Event, p: Process) -> Process {
        assert!(!e.is_tau(), "tau cannot be used as a prefix");
        Process::make(Term::Prefix(e, p))
    }

    /// Prefix a chain of events onto `p`.
    pub fn seq<I>(events: I, p: Process) -> Process
    where
        I: IntoIterator<Item = Event>,
        I::IntoIter: DoubleEndedIterator,
    {
        events.into_iter().rev().fold(p, |acc, e| Process::prefix(e, acc))
    }

    /// External choice; an empty choice is `Stop` and a single branch is
    /// returned as is.
    pub fn ext(mut branches: Vec<Process>) -> Process {
        match branches.len() {
            0 => Process::stop(),
            1 => branches.pop().unwrap(),
            _ => Process::make(Term::ExtChoice(branches.into())),
        }
    }

    pub fn int(mut branches: Vec<Process>) -> Process {
        match branches.len() {
            0 => Process::stop(),
            1 => branches.pop().unwrap(),
            _ => Process::make(Term::IntChoice(branches.into())),
        }
    }

    pub fn ext_choice_raw(branches: Vec<Process>) -> Process {
        assert!(!branches.is_empty());
        Process::make(Term::ExtChoice(branches.into()))
    }

    pub fn int_choice_raw(branches: Vec<Process>) -> Process {
        assert!(!branches.is_empty());
        Process::make(Term::IntChoice(branches.into()))
    }

    pub fn par(l: Process, r: Process, iface: EventSet) -> Process {
        Process::make(Term::Parallel(l, r, iface))
    }

    pub fn interleave(l: Process, r: Process) -> Process {
        Process::make(Term::Interleave(l, r))
    }

    pub fn hide(p: Process, set: EventSet) -> Process {
        Process::make(Term::Hide(p, set))
    }

    pub fn rename(p: Process, r: Renaming) -> Process {
        Process::make(Term::Rename(p, r))
    }

    pub fn call(name: &str, args: Vec<Arg>) -> Process {
        Process::make(Term::Call(Name::new(name), args.into()))
    }

    pub fn spy(s: SpyState) -> Process {
        Process::make(Term::Spy(s))
    }

    pub fn is_stop(&self) -> bool {
        matches!(self.term(), Term::Stop)
    }
}

impl PartialEq for Process {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.hash == other.0.hash && self.0.term == other.0.term)
    }
}
impl Eq for Process {}

impl Hash for Process {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for Process {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Process {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        self.0.hash.cmp(&other.0.hash).then_with(|| self.0.term.cmp(&other.0.term))
    }
}

impl fmt::Debug for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.term() {
            Term::Stop => f.write_str("STOP"),
            Term::Skip => f.write_str("SKIP"),
            Term::Prefix(e, p) => write!(f, "{e} -> {p}"),
            Term::ExtChoice(ps) => join(f, ps, " [] "),
            Term::IntChoice(ps) => join(f, ps, " |~| "),
            Term::Parallel(l, r, _) => write!(f, "({l} [|..|] {r})"),
            Term::Interleave(l, r) => write!(f, "({l} ||| {r})"),
            Term::Hide(p, _) => write!(f, "({p} \\ ..)"),
            Term::Rename(p, r) => write!(f, "{p}[[{r:?}]]"),
            Term::Call(n, args) => {
                write!(f, "{n}")?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{a}")?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
            Term::Spy(s) => write!(f, "Spy({} known)", s.known_count()),
        }
    }
}

fn join(f: &mut fmt::Formatter<'_>, ps: &[Process], sep: &str) -> fmt::Result {
    f.write_str("(")?;
    for (i, p) in ps.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        write!(f, "{p}")?;
    }
    f.write_str(")")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_equality_and_stable_hash() {
        let a = Process::prefix(Event::plain("a"), Process::stop());
        let b = Process::prefix(Event::plain("a"), Process::stop());
        assert!(!a.ptr_eq(&b));
        assert_eq!(a, b);
        assert_eq!(a.structural_hash(), b.structural_hash());
        let c = Process::prefix(Event::plain("b"), Process::stop());
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_choices() {
        assert!(Process::ext(vec![]).is_stop());
        let a = Process::prefix(Event::plain("a"), Process::stop());
        assert_eq!(Process::int(vec![a.clone()]), a);
    }

    #[test]
    fn event_set_kinds() {
        let s = EventSet::with_exclusions(
            vec![Pattern::Kinds(KindMask::VISIBLE)],
            vec![Pattern::Control(ControlName::Intruderknows)],
        );
        assert!(s.contains(&Event::control(ControlName::Done)));
        assert!(!s.contains(&Event::control(ControlName::Intruderknows)));
        assert!(!s.contains(&Event::Tau));
        assert!(!s.covered_kinds().intersects(KindMask::CONTROL));
        assert!(s.covered_kinds().contains(KindMask::NSBCOMM));

        let alice = Name::new("Alice");
        let c = EventSet::new(vec![Pattern::Comm {
            chan: Chan::Nsbcomm,
            from: Some(alice.clone()),
            to: None,
        }]);
        assert!(c.contains(&Event::nsb(&alice, &Name::new("Tom"), Fact::Agent(alice.clone()))));
        assert!(!c.contains(&Event::nsb(&Name::new("Tom"), &alice, Fact::Agent(alice.clone()))));
        assert_eq!(c.covered_kinds(), KindMask::NONE);
        assert_eq!(c.touched_kinds(), KindMask::NSBCOMM);
    }

    #[test]
    fn pair_renaming_inverse() {
        let r = PairRenaming::new([
            (Event::plain("a"), Event::plain("b")),
            (Event::plain("a"), Event::plain("c")),
        ]);
        assert_eq!(r.images(&Event::plain("a")).unwrap().len(), 2);
        assert_eq!(r.images(&Event::plain("d")).unwrap()[0], Event::plain("d"));
        let pre = r.preimages(&Event::plain("b")).unwrap();
        assert!(pre.contains(&Event::plain("a")) && pre.contains(&Event::plain("b")));
        assert!(r.preimages(&Event::plain("a")).unwrap().is_empty());
    }
}

//! Deduction rules and the lazy intruder.
//!
//! Rules are instantiated eagerly over the finite fact space. The intruder
//! itself comes in two forms that are trace-equivalent once `infer` events
//! are hidden: a composition of per-fact cells ([`intruder_process`]) and a
//! native process ([`SpyState`]) that keeps its knowledge as a closed bitset.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHasher};

use crate::error::{ConfigError, KernelError};
use crate::event::{ControlName, Event, KindMask};
use crate::fact::{Fact, Name};
use crate::kernel::Definitions;
use crate::process::{Arg, EventSet, Process};
use crate::universe::Universe;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleName {
    SymEnc,
    SymDec,
    AsymEnc,
    AsymDec,
    SignSig,
    SignExt,
    BallotComp,
    BallotDcmp,
    RhsComp,
    RhsDcmp,
    VoteComp,
    VoteDcmp,
    DigBltComp,
    DigBltDcmp,
    RawBltComp,
    RawBltDcmp,
    IndComp,
    IndDcmp,
}

impl RuleName {
    pub fn label(self) -> &'static str {
        match self {
            RuleName::SymEnc => "SYM-ENC",
            RuleName::SymDec => "SYM-DEC",
            RuleName::AsymEnc => "ASYM-ENC",
            RuleName::AsymDec => "ASYM-DEC",
            RuleName::SignSig => "SIGN-SIG",
            RuleName::SignExt => "SIGN-EXT",
            RuleName::BallotComp => "BALLOT-COMP",
            RuleName::BallotDcmp => "BALLOT-DCMP",
            RuleName::RhsComp => "RHS-COMP",
            RuleName::RhsDcmp => "RHS-DCMP",
            RuleName::VoteComp => "VOTE-COMP",
            RuleName::VoteDcmp => "VOTE-DCMP",
            RuleName::DigBltComp => "DIG.BLT-COMP",
            RuleName::DigBltDcmp => "DIG.BLT-DCMP",
            RuleName::RawBltComp => "RAW.BLT-COMP",
            RuleName::RawBltDcmp => "RAW.BLT-DCMP",
            RuleName::IndComp => "IND-COMP",
            RuleName::IndDcmp => "IND-DCMP",
        }
    }
}

/// A ground rule instance `premises ⊢ conclusion`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Deduction {
    pub rule: RuleName,
    pub premises: Vec<Fact>,
    pub conclusion: Fact,
}

impl Deduction {
    fn new(rule: RuleName, premises: Vec<Fact>, conclusion: Fact) -> Deduction {
        let mut premises = premises;
        premises.sort();
        premises.dedup();
        Deduction {
            rule,
            premises,
            conclusion,
        }
    }
}

impl fmt::Display for Deduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {{", self.rule.label())?;
        for (i, p) in self.premises.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}} |- {}", self.conclusion)
    }
}

/// All ground rule instances whose facts lie in the universe's fact space.
pub fn instantiate_rules(u: &Universe) -> Vec<Deduction> {
    let mut out = Vec::new();
    for f in u.fact_space() {
        rules_for(f, &mut out);
    }
    out.retain(|d| u.in_fact_space(&d.conclusion) && d.premises.iter().all(|p| u.in_fact_space(p)));
    out.sort();
    out.dedup();
    out
}

/// The composition rule building `f` and the decomposition rules opening it.
fn rules_for(f: &Fact, out: &mut Vec<Deduction>) {
    use RuleName::*;
    let me = f.clone();
    let d = Deduction::new;
    match f {
        Fact::Enc { key, body } => {
            out.push(d(AsymEnc, vec![Fact::PubKey(key.clone()), (**body).clone()], me.clone()));
            out.push(d(AsymDec, vec![Fact::SecKey(key.clone()), me], (**body).clone()));
        }
        Fact::SymEnc { key, body } => {
            out.push(d(SymEnc, vec![(**key).clone(), (**body).clone()], me.clone()));
            out.push(d(SymDec, vec![(**key).clone(), me], (**body).clone()));
        }
        Fact::Sign { key, body } => {
            out.push(d(SignSig, vec![Fact::SecKey(key.clone()), (**body).clone()], me.clone()));
            out.push(d(SignExt, vec![Fact::PubKey(key.clone()), me], (**body).clone()));
        }
        Fact::SignPair { key, serial, nonce } => {
            let s = Fact::Serial(serial.clone());
            let n = Fact::Nonce(nonce.clone());
            out.push(d(SignSig, vec![Fact::SecKey(key.clone()), s.clone(), n.clone()], me.clone()));
            out.push(d(SignExt, vec![Fact::PubKey(key.clone()), me.clone()], s));
            out.push(d(SignExt, vec![Fact::PubKey(key.clone()), me], n));
        }
        Fact::Receipt { key, rhs } => {
            out.push(d(SignSig, vec![Fact::SecKey(key.clone()), (**rhs).clone()], me.clone()));
            out.push(d(SignExt, vec![Fact::PubKey(key.clone()), me], (**rhs).clone()));
        }
        Fact::Ballot { list, signed, index } => {
            let parts = vec![(**list).clone(), (**signed).clone(), (**index).clone()];
            composite(BallotComp, BallotDcmp, parts, me, out);
        }
        Fact::Rhs { signed, index } => {
            composite(RhsComp, RhsDcmp, vec![(**signed).clone(), (**index).clone()], me, out);
        }
        Fact::Vote { index, enc } => {
            composite(VoteComp, VoteDcmp, vec![(**index).clone(), (**enc).clone()], me, out);
        }
        Fact::DigBallot { signed, enc } => {
            composite(DigBltComp, DigBltDcmp, vec![(**signed).clone(), (**enc).clone()], me, out);
        }
        Fact::Raw { serial, enc } => {
            composite(RawBltComp, RawBltDcmp, vec![(**serial).clone(), (**enc).clone()], me, out);
        }
        Fact::Index(i) => {
            out.push(d(IndComp, vec![Fact::Int(*i)], me.clone()));
            out.push(d(IndDcmp, vec![me], Fact::Int(*i)));
        }
        _ => {}
    }
}

fn composite(comp: RuleName, dcmp: RuleName, parts: Vec<Fact>, whole: Fact, out: &mut Vec<Deduction>) {
    for p in &parts {
        out.push(Deduction::new(dcmp, vec![whole.clone()], p.clone()));
    }
    out.push(Deduction::new(comp, parts, whole));
}

/// Least fixed point of `rules` over `start`, by naive iteration.
pub fn close(rules: &[Deduction], start: &BTreeSet<Fact>) -> BTreeSet<Fact> {
    let mut known = start.clone();
    loop {
        let mut grew = false;
        for r in rules {
            if !known.contains(&r.conclusion) && r.premises.iter().all(|p| known.contains(p)) {
                known.insert(r.conclusion.clone());
                grew = true;
            }
        }
        if !grew {
            return known;
        }
    }
}

/// Key owners whose secret key a corrupted agent leaks.
pub fn corrupt_key(agent: &str) -> Option<&'static str> {
    match agent {
        "podservice" => Some("PS"),
        "authority" => Some("EA"),
        "wbb" => Some("W"),
        _ => None,
    }
}

/// Agents, public keys, indices and nonces, plus the secret keys of the
/// given owners and optionally the serial numbers.
pub fn default_initial_knowledge(u: &Universe, leaked_keys: &[Name], with_serials: bool) -> BTreeSet<Fact> {
    let mut ik: BTreeSet<Fact> = u.agents.iter().map(|a| Fact::Agent(a.clone())).collect();
    ik.extend(u.pub_keys());
    ik.extend(u.indices.iter().cloned());
    ik.extend(u.nonces.iter().map(|n| Fact::Nonce(n.clone())));
    ik.extend(leaked_keys.iter().map(|k| Fact::SecKey(k.clone())));
    if with_serials {
        ik.extend(u.serials.iter().map(|s| Fact::Serial(s.clone())));
    }
    ik
}

/// The intruder's knowledge: what it started with, what it knows now, and
/// which facts it must never learn.
#[derive(Clone, Debug)]
pub struct KnowledgeState {
    pub initial: BTreeSet<Fact>,
    pub known: BTreeSet<Fact>,
    pub banned: BTreeSet<Fact>,
    pub rules: Arc<[Deduction]>,
}

impl KnowledgeState {
    pub fn new(
        u: &Universe,
        rules: Arc<[Deduction]>,
        initial: BTreeSet<Fact>,
        banned: BTreeSet<Fact>,
    ) -> Result<KnowledgeState, ConfigError> {
        for f in &initial {
            if !u.in_fact_space(f) {
                return Err(ConfigError::for_key("initial", format!("{f} is not in the fact space")));
            }
        }
        for f in &banned {
            if !u.in_fact_space(f) {
                return Err(ConfigError::for_key("banned", format!("{f} is not in the fact space")));
            }
        }
        let known = close(&rules, &initial);
        Ok(KnowledgeState {
            initial,
            known,
            banned,
            rules,
        })
    }

    pub fn learn(&mut self, f: Fact) {
        if self.known.insert(f) {
            self.known = close(&self.rules, &self.known);
        }
    }

    pub fn knows(&self, f: &Fact) -> bool {
        self.known.contains(f)
    }
}

type Bits = Arc<[u64]>;

fn bit(bits: &[u64], i: u32) -> bool {
    bits[(i / 64) as usize] >> (i % 64) & 1 == 1
}

fn set_bit(bits: &mut [u64], i: u32) {
    bits[(i / 64) as usize] |= 1 << (i % 64);
}

struct CompiledRule {
    premises: Box<[u32]>,
    conclusion: u32,
}

/// Fixed data shared by every state of one native intruder.
pub struct SpyContext {
    facts: Vec<Fact>,
    index: FxHashMap<Fact, u32>,
    rules: Vec<CompiledRule>,
    uses: Vec<Vec<u32>>,
    sayable: Vec<u64>,
    banned: Vec<u64>,
    words: usize,
    fingerprint: u64,
}

impl SpyContext {
    /// `facts` is the fact space; `sayable` marks the facts that may be
    /// learnt from and said onto the network.
    pub fn new(
        facts: &[Fact],
        rules: &[Deduction],
        sayable: impl Fn(&Fact) -> bool,
        banned: &BTreeSet<Fact>,
    ) -> Result<Arc<SpyContext>, ConfigError> {
        let index: FxHashMap<Fact, u32> = facts.iter().enumerate().map(|(i, f)| (f.clone(), i as u32)).collect();
        let words = facts.len().div_ceil(64).max(1);
        let lookup = |f: &Fact| index.get(f).copied();
        let mut compiled = Vec::with_capacity(rules.len());
        let mut uses = vec![Vec::new(); facts.len()];
        for r in rules {
            let prem: Option<Vec<u32>> = r.premises.iter().map(lookup).collect();
            let (Some(prem), Some(c)) = (prem, lookup(&r.conclusion)) else {
                continue;
            };
            let id = compiled.len() as u32;
            for &p in &prem {
                uses[p as usize].push(id);
            }
            compiled.push(CompiledRule {
                premises: prem.into(),
                conclusion: c,
            });
        }
        let mut say = vec![0u64; words];
        for (i, f) in facts.iter().enumerate() {
            if sayable(f) {
                set_bit(&mut say, i as u32);
            }
        }
        let mut ban = vec![0u64; words];
        for f in banned {
            let i = lookup(f).ok_or_else(|| ConfigError::for_key("banned", format!("{f} is not in the fact space")))?;
            set_bit(&mut ban, i);
        }
        let mut h = FxHasher::default();
        facts.hash(&mut h);
        rules.hash(&mut h);
        say.hash(&mut h);
        ban.hash(&mut h);
        Ok(Arc::new(SpyContext {
            facts: facts.to_vec(),
            index,
            rules: compiled,
            uses,
            sayable: say,
            banned: ban,
            words,
            fingerprint: h.finish(),
        }))
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    /// The state knowing the closure of `initial`.
    pub fn initial_state(self: &Arc<Self>, initial: &BTreeSet<Fact>) -> Result<SpyState, ConfigError> {
        let mut bits = vec![0u64; self.words];
        let mut queue = Vec::new();
        for f in initial {
            let i = self.index.get(f).copied().ok_or_else(|| {
                ConfigError::for_key("initial", format!("{f} is not in the fact space"))
            })?;
            if !bit(&bits, i) {
                set_bit(&mut bits, i);
                queue.push(i);
            }
        }
        self.saturate(&mut bits, queue);
        Ok(SpyState {
            ctx: self.clone(),
            known: bits.into(),
        })
    }

    fn saturate(&self, bits: &mut [u64], mut queue: Vec<u32>) {
        while let Some(f) = queue.pop() {
            for &r in &self.uses[f as usize] {
                let rule = &self.rules[r as usize];
                if !bit(bits, rule.conclusion) && rule.premises.iter().all(|&p| bit(bits, p)) {
                    set_bit(bits, rule.conclusion);
                    queue.push(rule.conclusion);
                }
            }
        }
    }
}

impl fmt::Debug for SpyContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpyContext({} facts, {} rules)", self.facts.len(), self.rules.len())
    }
}

/// One state of the native intruder: a closed set of known facts.
///
/// Learning a fact saturates the knowledge immediately, so this process
/// never performs `infer` events.
#[derive(Clone)]
pub struct SpyState {
    ctx: Arc<SpyContext>,
    known: Bits,
}

impl SpyState {
    pub fn context(&self) -> &Arc<SpyContext> {
        &self.ctx
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn knows(&self, f: &Fact) -> bool {
        self.ctx.index.get(f).is_some_and(|&i| bit(&self.known, i))
    }

    pub fn known_facts(&self) -> BTreeSet<Fact> {
        self.ctx
            .facts
            .iter()
            .enumerate()
            .filter(|(i, _)| bit(&self.known, *i as u32))
            .map(|(_, f)| f.clone())
            .collect()
    }

    /// Facts the intruder can say right now.
    pub fn sayable_now(&self) -> BTreeSet<Fact> {
        self.ctx
            .facts
            .iter()
            .enumerate()
            .filter(|(i, _)| bit(&self.known, *i as u32) && bit(&self.ctx.sayable, *i as u32))
            .map(|(_, f)| f.clone())
            .collect()
    }

    /// The state after learning `f`, or `None` if `f` cannot be learnt.
    pub fn learn(&self, f: &Fact) -> Option<SpyState> {
        let &i = self.ctx.index.get(f)?;
        if !bit(&self.ctx.sayable, i) {
            return None;
        }
        if bit(&self.known, i) {
            return Some(self.clone());
        }
        let mut bits = self.known.to_vec();
        set_bit(&mut bits, i);
        self.ctx.saturate(&mut bits, vec![i]);
        Some(SpyState {
            ctx: self.ctx.clone(),
            known: bits.into(),
        })
    }

    fn can_say(&self, f: &Fact) -> bool {
        self.ctx
            .index
            .get(f)
            .is_some_and(|&i| bit(&self.known, i) && bit(&self.ctx.sayable, i))
    }

    fn can_flag(&self, f: &Fact) -> bool {
        self.ctx
            .index
            .get(f)
            .is_some_and(|&i| bit(&self.known, i) && bit(&self.ctx.banned, i))
    }

    pub(crate) fn transitions(&self, want: KindMask, out: &mut Vec<(Event, Process)>) {
        let me = || Process::spy(self.clone());
        for (i, f) in self.ctx.facts.iter().enumerate() {
            let i = i as u32;
            let known = bit(&self.known, i);
            if bit(&self.ctx.sayable, i) {
                if want.contains(KindMask::LEARN) {
                    let next = self.learn(f).expect("sayable facts are learnable");
                    out.push((Event::Learn(f.clone()), Process::spy(next)));
                }
                if known && want.contains(KindMask::SAY) {
                    out.push((Event::Say(f.clone()), me()));
                }
            }
            if known && bit(&self.ctx.banned, i) && want.contains(KindMask::CONTROL) {
                out.push((Event::control_with(ControlName::Intruderknows, f.clone()), me()));
            }
        }
    }

    pub(crate) fn after(&self, e: &Event, out: &mut Vec<Process>) {
        match e {
            Event::Learn(f) => {
                if let Some(next) = self.learn(f) {
                    out.push(Process::spy(next));
                }
            }
            Event::Say(f) => {
                if self.can_say(f) {
                    out.push(Process::spy(self.clone()));
                }
            }
            Event::Control {
                name: ControlName::Intruderknows,
                args,
            } if args.len() == 1 => {
                if self.can_flag(&args[0]) {
                    out.push(Process::spy(self.clone()));
                }
            }
            _ => {}
        }
    }
}

impl PartialEq for SpyState {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.ctx, &other.ctx) || self.ctx.fingerprint == other.ctx.fingerprint)
            && (Arc::ptr_eq(&self.known, &other.known) || self.known == other.known)
    }
}
impl Eq for SpyState {}

impl Hash for SpyState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.ctx.fingerprint);
        self.known.hash(state);
    }
}

impl PartialOrd for SpyState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SpyState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ctx
            .fingerprint
            .cmp(&other.ctx.fingerprint)
            .then_with(|| self.known.cmp(&other.known))
    }
}

impl fmt::Debug for SpyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Spy({} known)", self.known_count())
    }
}

struct CellTable {
    concluding: FxHashMap<Fact, Vec<u32>>,
    premise_of: FxHashMap<Fact, Vec<u32>>,
    sayable: BTreeSet<Fact>,
    banned: BTreeSet<Fact>,
}

fn fact_arg(name: &str, args: &[Arg]) -> Result<Fact, KernelError> {
    match args {
        [Arg::Fact(f)] => Ok(f.clone()),
        _ => Err(KernelError::BadArguments {
            name: name.to_string(),
            message: "expected one fact".to_string(),
        }),
    }
}

/// The intruder as a parallel composition of per-fact cells.
///
/// Each fact of the universe gets a cell that starts in `Knows` if the fact
/// is initial knowledge and in `Ignorantof` otherwise. Cells synchronise on
/// `infer.r`, where `r` indexes `ks.rules`. The cell definitions are added to
/// `defs` under the names `Ignorantof` and `Knows`.
pub fn intruder_process(
    u: &Universe,
    ks: &KnowledgeState,
    sayable: &BTreeSet<Fact>,
    defs: &mut Definitions,
) -> Result<Process, ConfigError> {
    for f in &ks.banned {
        if !u.in_fact_space(f) {
            return Err(ConfigError::for_key("banned", format!("{f} is not in the fact space")));
        }
    }
    let mut concluding: FxHashMap<Fact, Vec<u32>> = FxHashMap::default();
    let mut premise_of: FxHashMap<Fact, Vec<u32>> = FxHashMap::default();
    for (r, d) in ks.rules.iter().enumerate() {
        concluding.entry(d.conclusion.clone()).or_default().push(r as u32);
        for p in &d.premises {
            premise_of.entry(p.clone()).or_default().push(r as u32);
        }
    }
    let table = Arc::new(CellTable {
        concluding,
        premise_of,
        sayable: sayable.clone(),
        banned: ks.banned.clone(),
    });

    let t = table.clone();
    defs.define("Ignorantof", move |args| {
        let f = fact_arg("Ignorantof", args)?;
        let knows = Process::call("Knows", vec![Arg::Fact(f.clone())]);
        let mut branches = Vec::new();
        if t.sayable.contains(&f) {
            branches.push(Process::prefix(Event::Learn(f.clone()), knows.clone()));
        }
        for &r in t.concluding.get(&f).map(Vec::as_slice).unwrap_or(&[]) {
            branches.push(Process::prefix(Event::Infer(r), knows.clone()));
        }
        Ok(Process::ext(branches))
    });
    let t = table.clone();
    defs.define("Knows", move |args| {
        let f = fact_arg("Knows", args)?;
        let me = Process::call("Knows", vec![Arg::Fact(f.clone())]);
        let mut branches = Vec::new();
        if t.sayable.contains(&f) {
            branches.push(Process::prefix(Event::Say(f.clone()), me.clone()));
            branches.push(Process::prefix(Event::Learn(f.clone()), me.clone()));
        }
        for &r in t.premise_of.get(&f).map(Vec::as_slice).unwrap_or(&[]) {
            branches.push(Process::prefix(Event::Infer(r), me.clone()));
        }
        if t.banned.contains(&f) {
            branches.push(Process::prefix(
                Event::control_with(ControlName::Intruderknows, f.clone()),
                me.clone(),
            ));
        }
        Ok(Process::ext(branches))
    });

    let mut cells: Vec<(Process, BTreeSet<u32>)> = Vec::new();
    for f in u.fact_space() {
        let name = if ks.initial.contains(f) { "Knows" } else { "Ignorantof" };
        let mut alpha: BTreeSet<u32> = BTreeSet::new();
        alpha.extend(table.concluding.get(f).into_iter().flatten());
        alpha.extend(table.premise_of.get(f).into_iter().flatten());
        cells.push((Process::call(name, vec![Arg::Fact(f.clone())]), alpha));
    }
    Ok(compose_cells(&cells).0)
}

fn compose_cells(cells: &[(Process, BTreeSet<u32>)]) -> (Process, BTreeSet<u32>) {
    match cells {
        [] => (Process::stop(), BTreeSet::new()),
        [one] => one.clone(),
        _ => {
            let (l, la) = compose_cells(&cells[..cells.len() / 2]);
            let (r, ra) = compose_cells(&cells[cells.len() / 2..]);
            let shared = EventSet::exact(la.intersection(&ra).map(|&i| Event::Infer(i)));
            let alpha = la.union(&ra).copied().collect();
            (Process::par(l, r, shared), alpha)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::universe::Atoms;

    fn small() -> Universe {
        Universe::build(&Atoms::defaults(2, 2)).unwrap()
    }

    #[test]
    fn keys_are_never_concluded() {
        let u = small();
        let rules = instantiate_rules(&u);
        assert!(!rules.is_empty());
        assert!(rules
            .iter()
            .all(|d| !matches!(d.conclusion, Fact::SecKey(_) | Fact::PubKey(_))));
        assert!(rules.iter().all(|d| !matches!(d.rule, RuleName::SymEnc | RuleName::SymDec)));
    }

    #[test]
    fn native_spy_matches_closure() {
        let u = small();
        let rules: Arc<[Deduction]> = instantiate_rules(&u).into();
        let ik = default_initial_knowledge(&u, &[Name::new("PS")], false);
        let ctx = SpyContext::new(u.fact_space(), &rules, |f| u.is_message(f), &BTreeSet::new()).unwrap();
        let s0 = ctx.initial_state(&ik).unwrap();
        assert_eq!(s0.known_facts(), close(&rules, &ik));
        let l = u.lists[0].clone();
        let raw = Fact::raw(Fact::serial("s1"), Fact::enc(&Name::new("PS"), l.clone()).unwrap()).unwrap();
        let s1 = s0.learn(&raw).unwrap();
        assert!(s1.knows(&l));
        let mut start = ik.clone();
        start.insert(raw);
        assert_eq!(s1.known_facts(), close(&rules, &start));
        assert!(s0.learn(&l).is_none(), "lists are not network messages");
    }
}

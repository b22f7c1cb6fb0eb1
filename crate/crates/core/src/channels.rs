//! Channel capabilities and the renamings that connect agents to the intruder.

use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rustc_hash::FxHasher;
use smallvec::smallvec;

use crate::error::KernelError;
use crate::event::{Chan, Event, KindMask};
use crate::fact::{Fact, Name};
use crate::process::{EventSet, Events, Process, Relabel, Renaming};
use crate::universe::SharedUniverse;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelType {
    /// Secure.
    S,
    /// No overhearing.
    Noh,
    /// No spoofing and no blocking.
    Nsb,
    /// Insecure.
    Ins,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub overhear: bool,
    pub block: bool,
    pub spoof: bool,
}

impl ChannelType {
    pub const ALL: [ChannelType; 4] = [ChannelType::S, ChannelType::Noh, ChannelType::Nsb, ChannelType::Ins];

    pub fn capabilities(self) -> Capabilities {
        let (overhear, block, spoof) = match self {
            ChannelType::S => (false, false, false),
            ChannelType::Noh => (false, true, true),
            ChannelType::Nsb => (true, false, false),
            ChannelType::Ins => (true, true, true),
        };
        Capabilities { overhear, block, spoof }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelType::S => "S",
            ChannelType::Noh => "NOH",
            ChannelType::Nsb => "NSB",
            ChannelType::Ins => "InS",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threat {
    /// The intruder controls only traffic to and from dishonest agents.
    Restricted,
    /// Every channel is insecure.
    Full,
}

/// The message triples the intruder may overhear and manipulate.
///
/// Membership is decided by predicate; `comms` is far too large to
/// materialise for four voters.
#[derive(Clone, Debug)]
pub struct CommSets {
    u: SharedUniverse,
    dishonest: BTreeSet<Name>,
    threat: Threat,
    receipts_insecure: bool,
}

impl CommSets {
    pub fn new(u: SharedUniverse, dishonest: BTreeSet<Name>, threat: Threat, receipts_insecure: bool) -> Self {
        CommSets {
            u,
            dishonest,
            threat,
            receipts_insecure,
        }
    }

    pub fn universe(&self) -> &SharedUniverse {
        &self.u
    }

    pub fn dishonest(&self) -> &BTreeSet<Name> {
        &self.dishonest
    }

    pub fn in_comms(&self, a: &Name, b: &Name, m: &Fact) -> bool {
        a != b && self.u.is_agent(a) && self.u.is_agent(b) && self.u.is_message(m)
    }

    pub fn in_nsbcomms(&self, a: &Name, b: &Name, m: &Fact) -> bool {
        self.in_comms(a, b, m) && !matches!(m, Fact::Ballot { .. })
    }

    pub fn in_ucomms(&self, a: &Name, b: &Name, m: &Fact) -> bool {
        self.in_comms(a, b, m)
            && (self.threat == Threat::Full
                || self.dishonest.contains(a)
                || self.dishonest.contains(b)
                || (self.receipts_insecure && matches!(m, Fact::Receipt { .. })))
    }

    pub fn comms_count(&self) -> usize {
        let a = self.u.agents.len();
        self.u.messages().len() * a * (a - 1)
    }

    /// Every triple of `comms`, in agent-then-message order.
    pub fn comms(&self) -> impl Iterator<Item = (Name, Name, Fact)> + '_ {
        self.u.agents.iter().flat_map(move |a| {
            self.u.agents.iter().filter(move |b| *b != a).flat_map(move |b| {
                self.u.messages().iter().map(move |m| (a.clone(), b.clone(), m.clone()))
            })
        })
    }

    /// The weakest channel type a triple travels over.
    pub fn channel_type(&self, a: &Name, b: &Name, m: &Fact) -> ChannelType {
        if self.in_ucomms(a, b, m) {
            ChannelType::Ins
        } else if self.in_nsbcomms(a, b, m) {
            ChannelType::Nsb
        } else {
            ChannelType::S
        }
    }

    fn fingerprint(&self, h: &mut FxHasher) {
        self.u.messages().len().hash(h);
        self.u.agents.hash(h);
        self.dishonest.hash(h);
        self.threat.hash(h);
        self.receipts_insecure.hash(h);
    }
}

fn fingerprint_of(f: impl FnOnce(&mut FxHasher)) -> u64 {
    let mut h = FxHasher::default();
    f(&mut h);
    h.finish()
}

/// The renaming applied to one agent: every `nsbcomm` it sends also appears
/// as `take`, every `nsbcomm` it receives also as `fake`. Private `scomm`
/// traffic gets the same aliases when either endpoint is dishonest.
#[derive(Debug)]
pub struct AgentWiring {
    agent: Name,
    exposed: Arc<BTreeSet<Name>>,
    fingerprint: u64,
}

impl AgentWiring {
    pub fn new(agent: Name, dishonest: Arc<BTreeSet<Name>>) -> Self {
        let fingerprint = fingerprint_of(|h| {
            "agent-wiring".hash(h);
            agent.hash(h);
            dishonest.hash(h);
        });
        AgentWiring {
            agent,
            exposed: dishonest,
            fingerprint,
        }
    }

    fn aliased(&self, chan: Chan, from: &Name, to: &Name) -> bool {
        match chan {
            Chan::Nsbcomm => true,
            Chan::Scomm => self.exposed.contains(from) || self.exposed.contains(to),
            Chan::Take | Chan::Fake => false,
        }
    }
}

impl Relabel for AgentWiring {
    fn images(&self, e: &Event) -> Result<Events, KernelError> {
        let Event::Comm {
            chan,
            from,
            to,
            payload,
        } = e
        else {
            return Ok(smallvec![e.clone()]);
        };
        if *from != self.agent && *to != self.agent {
            return Err(KernelError::Wiring(format!("{e} is outside the alphabet of {}", self.agent)));
        }
        if !self.aliased(*chan, from, to) {
            return Ok(smallvec![e.clone()]);
        }
        let alias = if *from == self.agent { Chan::Take } else { Chan::Fake };
        Ok(smallvec![e.clone(), Event::comm(alias, from, to, payload.clone())])
    }

    fn preimages(&self, e: &Event) -> Option<Events> {
        let Event::Comm {
            chan,
            from,
            to,
            payload,
        } = e
        else {
            return Some(smallvec![e.clone()]);
        };
        let mine = match chan {
            Chan::Nsbcomm | Chan::Scomm => *from == self.agent || *to == self.agent,
            Chan::Take => *from == self.agent,
            Chan::Fake => *to == self.agent,
        };
        if !mine {
            return Some(Events::new());
        }
        Some(match chan {
            Chan::Nsbcomm | Chan::Scomm => smallvec![e.clone()],
            Chan::Take | Chan::Fake => [Chan::Nsbcomm, Chan::Scomm]
                .into_iter()
                .filter(|c| self.aliased(*c, from, to))
                .map(|c| Event::comm(c, from, to, payload.clone()))
                .collect(),
        })
    }

    fn source_kinds(&self, want: KindMask) -> KindMask {
        if want.intersects(KindMask::TAKE | KindMask::FAKE) {
            want | KindMask::NSBCOMM | KindMask::SCOMM
        } else {
            want
        }
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn label(&self) -> String {
        format!("wire({})", self.agent)
    }
}

/// Connects the intruder's `learn`/`say` channels to the network: `learn.f`
/// becomes every overheard `nsbcomm` and every `take` it is allowed, `say.f`
/// every `fake` it is allowed. Unmatched `learn`/`say` events are dropped.
#[derive(Debug)]
pub struct IntruderWiring {
    sets: CommSets,
    fingerprint: u64,
}

impl IntruderWiring {
    pub fn new(sets: CommSets) -> Self {
        let fingerprint = fingerprint_of(|h| {
            "intruder-wiring".hash(h);
            sets.fingerprint(h);
        });
        IntruderWiring { sets, fingerprint }
    }

    fn pairs(&self) -> impl Iterator<Item = (&Name, &Name)> {
        let agents = &self.sets.u.agents;
        agents
            .iter()
            .flat_map(move |a| agents.iter().filter(move |b| *b != a).map(move |b| (a, b)))
    }
}

impl Relabel for IntruderWiring {
    fn images(&self, e: &Event) -> Result<Events, KernelError> {
        let mut out = Events::new();
        match e {
            Event::Learn(f) => {
                for (a, b) in self.pairs() {
                    if self.sets.in_nsbcomms(a, b, f) {
                        out.push(Event::comm(Chan::Nsbcomm, a, b, f.clone()));
                    }
                    if self.sets.in_ucomms(a, b, f) {
                        out.push(Event::comm(Chan::Take, a, b, f.clone()));
                    }
                }
            }
            Event::Say(f) => {
                for (a, b) in self.pairs() {
                    if self.sets.in_ucomms(a, b, f) {
                        out.push(Event::comm(Chan::Fake, a, b, f.clone()));
                    }
                }
            }
            _ => out.push(e.clone()),
        }
        Ok(out)
    }

    fn preimages(&self, e: &Event) -> Option<Events> {
        Some(match e {
            Event::Comm {
                chan,
                from,
                to,
                payload,
            } => {
                let ok = match chan {
                    Chan::Nsbcomm => self.sets.in_nsbcomms(from, to, payload),
                    Chan::Take | Chan::Fake => self.sets.in_ucomms(from, to, payload),
                    Chan::Scomm => false,
                };
                match (ok, chan) {
                    (true, Chan::Fake) => smallvec![Event::Say(payload.clone())],
                    (true, _) => smallvec![Event::Learn(payload.clone())],
                    (false, _) => Events::new(),
                }
            }
            Event::Learn(_) | Event::Say(_) => Events::new(),
            _ => smallvec![e.clone()],
        })
    }

    fn source_kinds(&self, want: KindMask) -> KindMask {
        let mut k = want & !(KindMask::COMM | KindMask::LEARN | KindMask::SAY);
        if want.intersects(KindMask::NSBCOMM | KindMask::TAKE) {
            k = k | KindMask::LEARN;
        }
        if want.intersects(KindMask::FAKE) {
            k = k | KindMask::SAY;
        }
        k
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn label(&self) -> String {
        "wire(intruder)".to_string()
    }
}

/// Rename `p` so that the intruder can take what `id` sends and fake what it
/// receives.
pub fn wire_agent(p: Process, id: &Name, dishonest: &Arc<BTreeSet<Name>>) -> Process {
    Process::rename(p, Renaming::new(AgentWiring::new(id.clone(), dishonest.clone())))
}

/// The events on which the model and the wired intruder synchronise.
pub fn intruder_interface() -> EventSet {
    EventSet::kinds(KindMask::NSBCOMM | KindMask::TAKE | KindMask::FAKE)
}

/// `model` in parallel with the intruder process `spy`, wired through `cs`.
pub fn wire_system(model: Process, spy: Process, cs: &CommSets) -> Process {
    let wired = Process::rename(spy, Renaming::new(IntruderWiring::new(cs.clone())));
    Process::par(model, wired, intruder_interface())
}

//! Events, their kinds, and the trace rendering grammar.

use std::fmt;
use std::ops::{BitAnd, BitOr, Not};

use serde::{Deserialize, Serialize};

use crate::error::AlgebraError;
use crate::fact::{parse_fact, Fact, Lexicon, Name};

/// Communication channels between agents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chan {
    Nsbcomm,
    Scomm,
    Take,
    Fake,
}

impl Chan {
    pub const ALL: [Chan; 4] = [Chan::Nsbcomm, Chan::Scomm, Chan::Take, Chan::Fake];

    pub fn name(self) -> &'static str {
        match self {
            Chan::Nsbcomm => "nsbcomm",
            Chan::Scomm => "scomm",
            Chan::Take => "take",
            Chan::Fake => "fake",
        }
    }

    pub fn kind(self) -> KindMask {
        match self {
            Chan::Nsbcomm => KindMask::NSBCOMM,
            Chan::Scomm => KindMask::SCOMM,
            Chan::Take => KindMask::TAKE,
            Chan::Fake => KindMask::FAKE,
        }
    }

    fn from_name(s: &str) -> Option<Chan> {
        Chan::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Protocol-regulating control events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControlName {
    OpenElection,
    CloseElection,
    EnterBooth,
    LeaveBooth,
    Bagempty,
    Done,
    Intruderknows,
}

impl ControlName {
    pub const ALL: [ControlName; 7] = [
        ControlName::OpenElection,
        ControlName::CloseElection,
        ControlName::EnterBooth,
        ControlName::LeaveBooth,
        ControlName::Bagempty,
        ControlName::Done,
        ControlName::Intruderknows,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControlName::OpenElection => "openElection",
            ControlName::CloseElection => "closeElection",
            ControlName::EnterBooth => "enterBooth",
            ControlName::LeaveBooth => "leaveBooth",
            ControlName::Bagempty => "bagempty",
            ControlName::Done => "done",
            ControlName::Intruderknows => "intruderknows",
        }
    }

    fn from_name(s: &str) -> Option<ControlName> {
        ControlName::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// A set of event kinds, used to filter transition enumeration.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct KindMask(pub u16);

impl KindMask {
    pub const NONE: KindMask = KindMask(0);
    pub const TAU: KindMask = KindMask(1);
    pub const TICK: KindMask = KindMask(1 << 1);
    pub const NSBCOMM: KindMask = KindMask(1 << 2);
    pub const SCOMM: KindMask = KindMask(1 << 3);
    pub const TAKE: KindMask = KindMask(1 << 4);
    pub const FAKE: KindMask = KindMask(1 << 5);
    pub const CONTROL: KindMask = KindMask(1 << 6);
    pub const ANNOUNCE: KindMask = KindMask(1 << 7);
    pub const LEARN: KindMask = KindMask(1 << 8);
    pub const SAY: KindMask = KindMask(1 << 9);
    pub const INFER: KindMask = KindMask(1 << 10);
    pub const PLAIN: KindMask = KindMask(1 << 11);
    pub const ALL: KindMask = KindMask((1 << 12) - 1);
    pub const COMM: KindMask = KindMask(0b11_1100);
    /// Everything except the silent event.
    pub const VISIBLE: KindMask = KindMask(Self::ALL.0 & !1);

    pub fn contains(self, other: KindMask) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: KindMask) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl BitOr for KindMask {
    type Output = KindMask;
    fn bitor(self, rhs: KindMask) -> KindMask {
        KindMask(self.0 | rhs.0)
    }
}

impl BitAnd for KindMask {
    type Output = KindMask;
    fn bitand(self, rhs: KindMask) -> KindMask {
        KindMask(self.0 & rhs.0)
    }
}

impl Not for KindMask {
    type Output = KindMask;
    fn not(self) -> KindMask {
        KindMask(!self.0 & Self::ALL.0)
    }
}

impl fmt::Debug for KindMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KindMask({:#014b})", self.0)
    }
}

/// An observable (or silent) action.
///
/// `Tau` is internal only and never rendered in a trace; `Tick` marks
/// successful termination. `Learn`, `Say` and `Infer` are the intruder's own
/// channels before it is wired to the network.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    Tau,
    Tick,
    Comm {
        chan: Chan,
        from: Name,
        to: Name,
        payload: Fact,
    },
    Control {
        name: ControlName,
        args: Vec<Fact>,
    },
    Announce {
        candidate: Name,
        count: u32,
    },
    Learn(Fact),
    Say(Fact),
    Infer(u32),
    Plain(Name),
}

impl Event {
    pub fn comm(chan: Chan, from: &Name, to: &Name, payload: Fact) -> Event {
        debug_assert!(from != to, "agents never message themselves");
        Event::Comm {
            chan,
            from: from.clone(),
            to: to.clone(),
            payload,
        }
    }

    pub fn nsb(from: &Name, to: &Name, payload: Fact) -> Event {
        Event::comm(Chan::Nsbcomm, from, to, payload)
    }

    pub fn scomm(from: &Name, to: &Name, payload: Fact) -> Event {
        Event::comm(Chan::Scomm, from, to, payload)
    }

    pub fn control(name: ControlName) -> Event {
        Event::Control { name, args: Vec::new() }
    }

    pub fn control_with(name: ControlName, arg: Fact) -> Event {
        Event::Control { name, args: vec![arg] }
    }

    pub fn plain(s: &str) -> Event {
        Event::Plain(Name::new(s))
    }

    pub fn kind(&self) -> KindMask {
        match self {
            Event::Tau => KindMask::TAU,
            Event::Tick => KindMask::TICK,
            Event::Comm { chan, .. } => chan.kind(),
            Event::Control { .. } => KindMask::CONTROL,
            Event::Announce { .. } => KindMask::ANNOUNCE,
            Event::Learn(_) => KindMask::LEARN,
            Event::Say(_) => KindMask::SAY,
            Event::Infer(_) => KindMask::INFER,
            Event::Plain(_) => KindMask::PLAIN,
        }
    }

    pub fn is_tau(&self) -> bool {
        matches!(self, Event::Tau)
    }

    pub fn payload(&self) -> Option<&Fact> {
        match self {
            Event::Comm { payload, .. } => Some(payload),
            _ => None,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Tau => f.write_str("tau"),
            Event::Tick => f.write_str("tick"),
            Event::Comm {
                chan,
                from,
                to,
                payload,
            } => write!(f, "{}.{from}.{to}.{payload}", chan.name()),
            Event::Control { name, args } => {
                f.write_str(name.name())?;
                for a in args {
                    write!(f, ".{a}")?;
                }
                Ok(())
            }
            Event::Announce { candidate, count } => write!(f, "announce.{candidate}.{count}"),
            Event::Learn(x) => write!(f, "learn.{x}"),
            Event::Say(x) => write!(f, "say.{x}"),
            Event::Infer(r) => write!(f, "infer.{r}"),
            Event::Plain(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Event {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Parse one rendered trace line back into an event.
pub fn parse_event(line: &str, lex: &dyn Lexicon) -> Result<Event, AlgebraError> {
    let line = line.trim();
    let bad = |msg: &str| AlgebraError::Parse {
        input: line.to_string(),
        offset: 0,
        message: msg.to_string(),
    };
    let (head, rest) = match line.split_once('.') {
        Some((h, r)) => (h, Some(r)),
        None => (line, None),
    };
    if let Some(chan) = Chan::from_name(head) {
        let rest = rest.ok_or_else(|| bad("missing sender"))?;
        let mut parts = rest.splitn(3, '.');
        let from = parts.next().ok_or_else(|| bad("missing sender"))?;
        let to = parts.next().ok_or_else(|| bad("missing receiver"))?;
        let payload = parts.next().ok_or_else(|| bad("missing payload"))?;
        if from == to {
            return Err(bad("sender and receiver coincide"));
        }
        return Ok(Event::Comm {
            chan,
            from: Name::new(from),
            to: Name::new(to),
            payload: parse_fact(payload, lex)?,
        });
    }
    if let Some(name) = ControlName::from_name(head) {
        let args = match rest {
            None => Vec::new(),
            Some(r) => vec![parse_fact(r, lex)?],
        };
        return Ok(Event::Control { name, args });
    }
    match (head, rest) {
        ("tick", None) => Ok(Event::Tick),
        ("announce", Some(r)) => {
            let (c, n) = r.split_once('.').ok_or_else(|| bad("expected announce.candidate.count"))?;
            let count = n.parse().map_err(|_| bad("count is not a number"))?;
            Ok(Event::Announce {
                candidate: Name::new(c),
                count,
            })
        }
        ("learn", Some(r)) => Ok(Event::Learn(parse_fact(r, lex)?)),
        ("say", Some(r)) => Ok(Event::Say(parse_fact(r, lex)?)),
        ("infer", Some(r)) => Ok(Event::Infer(r.parse().map_err(|_| bad("bad rule number"))?)),
        ("tau", None) => Err(bad("tau is never part of a trace")),
        (p, None) if !p.is_empty() && p.chars().all(|c| c.is_alphanumeric() || c == '_') => {
            Ok(Event::Plain(Name::new(p)))
        }
        _ => Err(bad("unrecognised event")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_partition_the_mask() {
        let all = [
            KindMask::TAU,
            KindMask::TICK,
            KindMask::NSBCOMM,
            KindMask::SCOMM,
            KindMask::TAKE,
            KindMask::FAKE,
            KindMask::CONTROL,
            KindMask::ANNOUNCE,
            KindMask::LEARN,
            KindMask::SAY,
            KindMask::INFER,
            KindMask::PLAIN,
        ];
        let union = all.iter().fold(KindMask::NONE, |a, b| a | *b);
        assert_eq!(union, KindMask::ALL);
        assert_eq!(!KindMask::TAU, KindMask::VISIBLE);
        assert!(KindMask::COMM.contains(KindMask::TAKE));
        assert!(!KindMask::COMM.intersects(KindMask::CONTROL));
    }

    #[test]
    fn rendering() {
        let e = Event::nsb(
            &Name::new("authority"),
            &Name::new("wbb"),
            Fact::raw(Fact::serial("s3"), Fact::Ciphertext).unwrap(),
        );
        assert_eq!(e.to_string(), "nsbcomm.authority.wbb.raw(s3,ciphertext)");
        assert_eq!(
            Event::control_with(ControlName::EnterBooth, Fact::agent("Alice")).to_string(),
            "enterBooth.Alice"
        );
        assert_eq!(
            Event::Announce {
                candidate: Name::new("Archimedes"),
                count: 0
            }
            .to_string(),
            "announce.Archimedes.0"
        );
        assert_eq!(Event::control(ControlName::CloseElection).to_string(), "closeElection");
    }
}

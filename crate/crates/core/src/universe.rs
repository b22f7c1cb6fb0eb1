//! The finite fact universe: agents, keys, lists, indices and the message set.

use std::collections::BTreeSet;
use std::sync::Arc;

use rustc_hash::FxHashSet;

use crate::error::ConfigError;
use crate::fact::{Fact, Lexicon, Name};

/// Owners of key pairs.
pub const KEY_OWNERS: [&str; 6] = ["W", "T", "EA", "PS", "PC", "BM"];

/// Non-voter agents, in the order they are listed in the model.
pub const SERVICE_AGENTS: [&str; 9] = [
    "Tom",
    "authority",
    "wbb",
    "teller",
    "podservice",
    "podclient",
    "ballotmngr",
    "ebm",
    "printer",
];

pub const DEFAULT_CANDIDATES: [&str; 4] = ["Archimedes", "Babbage", "Curie", "Dijkstra"];
pub const DEFAULT_VOTERS: [&str; 4] = ["Alice", "Bob", "James", "Dora"];
pub const DEFAULT_NONCES: [&str; 4] = ["na", "nb", "nc", "nd"];

pub const MIN_CANDIDATES: usize = 2;
pub const MAX_CANDIDATES: usize = 4;
pub const MIN_VOTERS: usize = 2;
pub const MAX_VOTERS: usize = 4;

/// Names of the atoms a universe is built over.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atoms {
    pub candidates: Vec<Name>,
    pub voters: Vec<Name>,
    pub serials: Vec<Name>,
    pub nonces: Vec<Name>,
}

impl Atoms {
    /// The first `c` default candidates and `v` default voters, with as many
    /// serials and nonces as voters.
    pub fn defaults(c: usize, v: usize) -> Atoms {
        Atoms {
            candidates: DEFAULT_CANDIDATES.iter().take(c).map(|s| Name::new(s)).collect(),
            voters: DEFAULT_VOTERS.iter().take(v).map(|s| Name::new(s)).collect(),
            serials: (1..=v).map(|i| Name::new(&format!("s{i}"))).collect(),
            nonces: DEFAULT_NONCES.iter().take(v).map(|s| Name::new(s)).collect(),
        }
    }
}

#[derive(Debug)]
pub struct Universe {
    pub candidates: Vec<Name>,
    pub voters: Vec<Name>,
    pub agents: Vec<Name>,
    pub serials: Vec<Name>,
    pub nonces: Vec<Name>,
    pub key_owners: Vec<Name>,
    /// Every permutation of the candidates, in lexicographic order of positions.
    pub lists: Vec<Fact>,
    /// `ind0 ..= ind|C|`.
    pub indices: Vec<Fact>,
    messages: Vec<Fact>,
    message_set: FxHashSet<Fact>,
    fact_space: Vec<Fact>,
    fact_set: FxHashSet<Fact>,
}

fn permutations(items: &[Name]) -> Vec<Vec<Name>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

fn distinct(names: &[Name]) -> bool {
    names.iter().collect::<BTreeSet<_>>().len() == names.len()
}

impl Universe {
    pub fn build(atoms: &Atoms) -> Result<Universe, ConfigError> {
        let c = atoms.candidates.len();
        let v = atoms.voters.len();
        if !(MIN_CANDIDATES..=MAX_CANDIDATES).contains(&c) {
            return Err(ConfigError::for_key(
                "candidates",
                format!("{c} candidates given, supported range is {MIN_CANDIDATES}..={MAX_CANDIDATES}"),
            ));
        }
        if !(MIN_VOTERS..=MAX_VOTERS).contains(&v) {
            return Err(ConfigError::for_key(
                "voters",
                format!("{v} voters given, supported range is {MIN_VOTERS}..={MAX_VOTERS}"),
            ));
        }
        if atoms.serials.len() < v {
            return Err(ConfigError::for_key("serials", "need at least one serial per voter"));
        }
        if atoms.nonces.len() < v {
            return Err(ConfigError::for_key("nonces", "need at least one nonce per voter"));
        }
        let mut agents: Vec<Name> = atoms.voters.clone();
        agents.extend(SERVICE_AGENTS.iter().map(|s| Name::new(s)));
        let key_owners: Vec<Name> = KEY_OWNERS.iter().map(|s| Name::new(s)).collect();

        let mut all_names: Vec<Name> = agents.clone();
        all_names.extend(atoms.candidates.iter().cloned());
        all_names.extend(atoms.serials.iter().cloned());
        all_names.extend(atoms.nonces.iter().cloned());
        all_names.extend(key_owners.iter().cloned());
        if !distinct(&all_names) {
            return Err(ConfigError::new(
                "candidate, agent, serial, nonce and key owner names must all be distinct",
            ));
        }
        for n in &all_names {
            let s = n.as_str();
            let reserved = ["ciphertext", "tick", "tau", "announce", "learn", "say", "infer"];
            if s.is_empty()
                || !s.chars().all(|ch| ch.is_alphanumeric() || ch == '_')
                || reserved.contains(&s)
                || s.starts_with("ind") && s[3..].parse::<u32>().is_ok()
                || s.parse::<u32>().is_ok()
            {
                return Err(ConfigError::new(format!("'{s}' is not a usable identifier")));
            }
        }

        let lists: Vec<Fact> = permutations(&atoms.candidates)
            .into_iter()
            .map(|p| Fact::List(p.into()))
            .collect();
        let indices: Vec<Fact> = (0..=c as u32).map(Fact::Index).collect();

        let mut u = Universe {
            candidates: atoms.candidates.clone(),
            voters: atoms.voters.clone(),
            agents,
            serials: atoms.serials.clone(),
            nonces: atoms.nonces.clone(),
            key_owners,
            lists,
            indices,
            messages: Vec::new(),
            message_set: FxHashSet::default(),
            fact_space: Vec::new(),
            fact_set: FxHashSet::default(),
        };
        let mut messages = Vec::new();
        for group in [
            u.signed_nonces(),
            u.signed_nonsers(),
            u.raw_ballots(),
            u.digital_ballots(),
            u.ballot_forms(),
            u.cast_rhs(),
            u.receipts(),
            u.votes(),
            u.atomic_facts(),
        ] {
            messages.extend(group);
        }
        messages.sort();
        messages.dedup();
        u.message_set = messages.iter().cloned().collect();
        u.messages = messages;

        let mut space: BTreeSet<Fact> = BTreeSet::new();
        for m in &u.messages {
            collect_subterms(m, &mut space);
        }
        for o in &u.key_owners {
            space.insert(Fact::PubKey(o.clone()));
            space.insert(Fact::SecKey(o.clone()));
        }
        for i in 0..=c as u32 {
            space.insert(Fact::Int(i));
        }
        for a in &u.agents {
            space.insert(Fact::Agent(a.clone()));
        }
        u.fact_set = space.iter().cloned().collect();
        u.fact_space = space.into_iter().collect();
        Ok(u)
    }

    pub fn sk(&self, owner: &str) -> Name {
        debug_assert!(KEY_OWNERS.contains(&owner));
        Name::new(owner)
    }

    /// The secret key matching a public key.
    pub fn dual(&self, f: &Fact) -> Option<Fact> {
        match f {
            Fact::PubKey(o) => Some(Fact::SecKey(o.clone())),
            Fact::SecKey(o) => Some(Fact::PubKey(o.clone())),
            _ => None,
        }
    }

    pub fn pub_keys(&self) -> Vec<Fact> {
        self.key_owners.iter().map(|o| Fact::PubKey(o.clone())).collect()
    }

    pub fn sec_keys(&self) -> Vec<Fact> {
        self.key_owners.iter().map(|o| Fact::SecKey(o.clone())).collect()
    }

    fn signed(&self, key: &Name, body: Fact) -> Fact {
        Fact::sign(key, body).expect("nonce and serial signatures are well formed")
    }

    fn enc(&self, key: &Name, l: &Fact) -> Fact {
        Fact::enc(key, l.clone()).expect("lists encrypt")
    }

    pub fn signed_serial(&self, key: &str, s: &Name) -> Fact {
        self.signed(&Name::new(key), Fact::Serial(s.clone()))
    }

    pub fn signed_nonces(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for k in &self.key_owners {
            for n in &self.nonces {
                out.push(self.signed(k, Fact::Nonce(n.clone())));
            }
        }
        out
    }

    pub fn signed_nonsers(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for k in &self.key_owners {
            for s in &self.serials {
                for n in &self.nonces {
                    out.push(Fact::sign_pair(k, s, n));
                }
            }
        }
        out
    }

    pub fn raw_ballots(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for s in &self.serials {
            for k in &self.key_owners {
                for l in &self.lists {
                    out.push(Fact::raw(Fact::Serial(s.clone()), self.enc(k, l)).unwrap());
                }
            }
        }
        out
    }

    pub fn digital_ballots(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for sk in &self.key_owners {
            for pk in &self.key_owners {
                for s in &self.serials {
                    for l in &self.lists {
                        let signed = self.signed(sk, Fact::Serial(s.clone()));
                        out.push(Fact::dig_ballot(signed, self.enc(pk, l)).unwrap());
                    }
                }
            }
        }
        out
    }

    /// Ballot forms carry the POD service's signature on the serial.
    pub fn ballot_forms(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for l in &self.lists {
            for s in &self.serials {
                for i in &self.indices {
                    out.push(Fact::ballot(l.clone(), self.signed_serial("PS", s), i.clone()).unwrap());
                }
            }
        }
        out
    }

    pub fn cast_rhs(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for s in &self.serials {
            for i in &self.indices {
                out.push(Fact::rhs(self.signed_serial("PS", s), i.clone()).unwrap());
            }
        }
        out
    }

    pub fn receipts(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for k in &self.key_owners {
            for r in self.cast_rhs() {
                out.push(Fact::receipt(k, r).unwrap());
            }
        }
        out
    }

    pub fn votes(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for i in &self.indices {
            for k in &self.key_owners {
                for l in &self.lists {
                    out.push(Fact::vote(i.clone(), self.enc(k, l)).unwrap());
                }
            }
        }
        out
    }

    /// Voters, nonces and indices.
    pub fn atomic_facts(&self) -> Vec<Fact> {
        let mut out: Vec<Fact> = self.voters.iter().map(|v| Fact::Agent(v.clone())).collect();
        out.extend(self.nonces.iter().map(|n| Fact::Nonce(n.clone())));
        out.extend(self.indices.iter().cloned());
        out
    }

    /// The message set, sorted.
    pub fn messages(&self) -> &[Fact] {
        &self.messages
    }

    pub fn is_message(&self, f: &Fact) -> bool {
        self.message_set.contains(f)
    }

    /// Messages plus every subterm, all keys, agent names and bare integers:
    /// the facts the intruder can ever hold.
    pub fn fact_space(&self) -> &[Fact] {
        &self.fact_space
    }

    pub fn in_fact_space(&self, f: &Fact) -> bool {
        self.fact_set.contains(f)
    }

    pub fn is_agent(&self, n: &Name) -> bool {
        self.agents.contains(n)
    }

    pub fn is_voter(&self, n: &Name) -> bool {
        self.voters.contains(n)
    }

    pub fn index_of(&self, i: u32) -> Fact {
        Fact::Index(i)
    }

    pub fn list_names(l: &Fact) -> &[Name] {
        l.as_list().expect("list fact")
    }
}

/// Immediate components of a composite fact.
pub fn components(f: &Fact) -> Vec<Fact> {
    match f {
        Fact::Enc { key, body } => vec![Fact::PubKey(key.clone()), (**body).clone()],
        Fact::SymEnc { key, body } => vec![(**key).clone(), (**body).clone()],
        Fact::Sign { key, body } => vec![Fact::SecKey(key.clone()), (**body).clone()],
        Fact::SignPair { key, serial, nonce } => vec![
            Fact::SecKey(key.clone()),
            Fact::Serial(serial.clone()),
            Fact::Nonce(nonce.clone()),
        ],
        Fact::Ballot { list, signed, index } => vec![(**list).clone(), (**signed).clone(), (**index).clone()],
        Fact::Rhs { signed, index } => vec![(**signed).clone(), (**index).clone()],
        Fact::Receipt { key, rhs } => vec![Fact::SecKey(key.clone()), (**rhs).clone()],
        Fact::Vote { index, enc } => vec![(**index).clone(), (**enc).clone()],
        Fact::DigBallot { signed, enc } => vec![(**signed).clone(), (**enc).clone()],
        Fact::Raw { serial, enc } => vec![(**serial).clone(), (**enc).clone()],
        Fact::Index(i) => vec![Fact::Int(*i)],
        _ => Vec::new(),
    }
}

fn collect_subterms(f: &Fact, out: &mut BTreeSet<Fact>) {
    if out.insert(f.clone()) {
        for c in components(f) {
            collect_subterms(&c, out);
        }
    }
}

impl Lexicon for Universe {
    fn atom(&self, token: &str) -> Option<Fact> {
        let n = Name::new(token);
        if self.agents.contains(&n) {
            Some(Fact::Agent(n))
        } else if self.candidates.contains(&n) {
            Some(Fact::Candidate(n))
        } else if self.nonces.contains(&n) {
            Some(Fact::Nonce(n))
        } else if self.serials.contains(&n) {
            Some(Fact::Serial(n))
        } else {
            None
        }
    }

    fn is_key_owner(&self, owner: &str) -> bool {
        KEY_OWNERS.contains(&owner)
    }
}

pub type SharedUniverse = Arc<Universe>;

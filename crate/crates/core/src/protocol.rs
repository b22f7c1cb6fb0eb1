//! The vVote agents and their composition into a model.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::channels::{wire_agent, wire_system, CommSets, Threat};
use crate::deduction::{corrupt_key, default_initial_knowledge, instantiate_rules, Deduction, SpyContext};
use crate::error::{ConfigError, KernelError};
use crate::event::{ControlName, Event, KindMask};
use crate::fact::{nth, Fact, Name};
use crate::kernel::Definitions;
use crate::process::{Arg, EventSet, Pattern, Process};
use crate::universe::{Atoms, SharedUniverse, Universe, SERVICE_AGENTS};

pub const DEFAULT_MAX_STATES: usize = 20_000_000;
pub const DEFAULT_MAX_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum World {
    Prime,
    Doubleprime,
}

impl World {
    pub fn other(self) -> World {
        match self {
            World::Prime => World::Doubleprime,
            World::Doubleprime => World::Prime,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            World::Prime => "prime",
            World::Doubleprime => "doubleprime",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Limits {
    pub max_states: usize,
    /// Longest visible trace explored.
    pub max_depth: usize,
    #[serde(skip)]
    pub time_budget: Option<Duration>,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: DEFAULT_MAX_STATES,
            max_depth: DEFAULT_MAX_DEPTH,
            time_budget: None,
            workers: 1,
        }
    }
}

/// Everything that defines one analysis run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScenarioConfig {
    pub candidates: Vec<Name>,
    pub voters: Vec<Name>,
    pub serials: Vec<Name>,
    pub nonces: Vec<Name>,
    pub dishonest: BTreeSet<Name>,
    /// Agents whose secret key the intruder holds.
    pub corrupt: BTreeSet<Name>,
    pub threat: Threat,
    pub world: World,
    /// The two honest voters whose choices differ between the worlds.
    pub world_pair: Option<(Name, Name)>,
    pub banned: Vec<Fact>,
    pub limits: Limits,
    pub ik_serials: bool,
    pub receipts_insecure: bool,
    pub booth_events: bool,
    /// Allocate nonces and serials smallest first instead of by internal choice.
    pub canonical_fresh: bool,
}

impl Serialize for Name {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl Serialize for Fact {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl ScenarioConfig {
    /// `c` candidates and `v` voters with default names; the last voter is
    /// dishonest when there are at least three.
    pub fn defaults(c: usize, v: usize) -> ScenarioConfig {
        let atoms = Atoms::defaults(c, v);
        let dishonest = if v >= 3 {
            atoms.voters.last().cloned().into_iter().collect()
        } else {
            BTreeSet::new()
        };
        ScenarioConfig {
            candidates: atoms.candidates,
            voters: atoms.voters,
            serials: atoms.serials,
            nonces: atoms.nonces,
            dishonest,
            corrupt: BTreeSet::new(),
            threat: Threat::Restricted,
            world: World::Prime,
            world_pair: None,
            banned: Vec::new(),
            limits: Limits::default(),
            ik_serials: false,
            receipts_insecure: false,
            booth_events: false,
            canonical_fresh: true,
        }
    }

    pub fn atoms(&self) -> Atoms {
        Atoms {
            candidates: self.candidates.clone(),
            voters: self.voters.clone(),
            serials: self.serials.clone(),
            nonces: self.nonces.clone(),
        }
    }

    /// The honest voters whose votes are swapped between the worlds.
    pub fn honest_pair(&self) -> Result<(Name, Name), ConfigError> {
        if let Some((a, b)) = &self.world_pair {
            for x in [a, b] {
                if !self.voters.contains(x) || self.dishonest.contains(x) {
                    return Err(ConfigError::for_key(
                        "world-pair",
                        format!("{x} is not an honest voter"),
                    ));
                }
            }
            if a == b {
                return Err(ConfigError::for_key("world-pair", "the two voters must differ"));
            }
            return Ok((a.clone(), b.clone()));
        }
        let honest: Vec<&Name> = self.voters.iter().filter(|v| !self.dishonest.contains(*v)).collect();
        match honest.as_slice() {
            [a, b, ..] => Ok(((*a).clone(), (*b).clone())),
            _ => Err(ConfigError::for_key("dishonest", "at least two honest voters are required")),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for d in &self.dishonest {
            if !self.voters.contains(d) {
                return Err(ConfigError::for_key("dishonest", format!("{d} is not a voter")));
            }
        }
        for c in &self.corrupt {
            if corrupt_key(c.as_str()).is_none() {
                return Err(ConfigError::for_key(
                    "corrupt",
                    format!("'{c}' cannot be corrupted; choose from podservice, authority, wbb"),
                ));
            }
        }
        if self.limits.max_states == 0 {
            return Err(ConfigError::for_key("max_states", "must be positive"));
        }
        if self.limits.workers == 0 {
            return Err(ConfigError::for_key("workers", "must be positive"));
        }
        self.honest_pair()?;
        Ok(())
    }
}

/// How one voter behaves in a model.
#[derive(Clone, Debug)]
pub struct VoterSpec {
    pub name: Name,
    /// A single candidate, or several chosen between internally.
    pub choices: Vec<Name>,
    pub dishonest: bool,
}

/// A model component with the alphabet information needed to compose it.
#[derive(Clone, Debug)]
struct Component {
    process: Process,
    agents: Vec<Name>,
    controls: BTreeSet<ControlName>,
    announces: bool,
}

/// Agent names used by the service processes.
#[derive(Clone, Debug)]
struct Roles {
    tom: Name,
    authority: Name,
    wbb: Name,
    teller: Name,
    podservice: Name,
    podclient: Name,
    ballotmngr: Name,
    ebm: Name,
    printer: Name,
}

impl Roles {
    fn new() -> Roles {
        let n = |i: usize| Name::new(SERVICE_AGENTS[i]);
        Roles {
            tom: n(0),
            authority: n(1),
            wbb: n(2),
            teller: n(3),
            podservice: n(4),
            podclient: n(5),
            ballotmngr: n(6),
            ebm: n(7),
            printer: n(8),
        }
    }
}

struct Ctx {
    u: SharedUniverse,
    r: Roles,
    booth: bool,
    canonical: bool,
    ps: Name,
    pc: Name,
    ea: Name,
    w: Name,
    t: Name,
    bm: Name,
}

impl Ctx {
    fn nsb(&self, a: &Name, b: &Name, m: Fact) -> Event {
        Event::nsb(a, b, m)
    }

    fn sc(&self, a: &Name, b: &Name, m: Fact) -> Event {
        Event::scomm(a, b, m)
    }

    fn sign(&self, key: &Name, body: Fact) -> Fact {
        Fact::sign(key, body).expect("signatures over atoms are well formed")
    }

    fn enc(&self, key: &Name, l: &Fact) -> Fact {
        Fact::enc(key, l.clone()).expect("lists encrypt")
    }

    fn ballot(&self, l: &Fact, s: &Name) -> Fact {
        Fact::ballot(l.clone(), self.sign(&self.ps, Fact::Serial(s.clone())), Fact::Index(0)).unwrap()
    }

    fn rhs(&self, s: &Name, i: u32) -> Fact {
        Fact::rhs(self.sign(&self.ps, Fact::Serial(s.clone())), Fact::Index(i)).unwrap()
    }

    fn receipt(&self, s: &Name, i: u32) -> Fact {
        Fact::receipt(&self.w, self.rhs(s, i)).unwrap()
    }

    fn close() -> Event {
        Event::control(ControlName::CloseElection)
    }

    fn open() -> Event {
        Event::control(ControlName::OpenElection)
    }

    fn close_then_stop() -> Process {
        Process::prefix(Ctx::close(), Process::stop())
    }

    fn index_count(&self) -> u32 {
        self.u.candidates.len() as u32
    }

    fn voter_count(&self) -> u32 {
        self.u.voters.len() as u32
    }
}

fn bad(name: &str, message: &str) -> KernelError {
    KernelError::BadArguments {
        name: name.to_string(),
        message: message.to_string(),
    }
}

fn name_arg(name: &str, a: &Arg) -> Result<Name, KernelError> {
    match a {
        Arg::Fact(Fact::Agent(n) | Fact::Candidate(n)) => Ok(n.clone()),
        _ => Err(bad(name, "expected an agent or candidate")),
    }
}

fn names_arg(name: &str, a: &Arg) -> Result<Vec<Name>, KernelError> {
    let fs = a.as_facts().ok_or_else(|| bad(name, "expected a set"))?;
    fs.iter()
        .map(|f| match f {
            Fact::Agent(n) | Fact::Serial(n) | Fact::Nonce(n) => Ok(n.clone()),
            _ => Err(bad(name, "unexpected set member")),
        })
        .collect()
}

fn without(xs: &[Name], x: &Name, wrap: fn(Name) -> Fact) -> Arg {
    Arg::facts(xs.iter().filter(|y| *y != x).cloned().map(wrap))
}

fn set_of(xs: &[Name], wrap: fn(Name) -> Fact) -> Arg {
    Arg::facts(xs.iter().cloned().map(wrap))
}

fn register(defs: &mut Definitions, ctx: Arc<Ctx>) {
    let c = ctx.clone();
    defs.define("Voter", move |args| {
        let [v, cand] = args else {
            return Err(bad("Voter", "expected voter and candidate"));
        };
        let v = name_arg("Voter", v)?;
        let cand = name_arg("Voter", cand)?;
        Ok(voter(&c, &v, &cand)?)
    });

    let c = ctx.clone();
    defs.define("Pollworker", move |args| {
        let [vs, ns] = args else {
            return Err(bad("Pollworker", "expected voters and nonces"));
        };
        let vs = names_arg("Pollworker", vs)?;
        let ns = names_arg("Pollworker", ns)?;
        let r = &c.r;
        let mut branches = vec![Ctx::close_then_stop()];
        for v in &vs {
            let sessions: Vec<Process> = ns
                .iter()
                .take(if c.canonical { 1 } else { ns.len() })
                .map(|n| {
                    let next = Process::call("Pollworker", vec![without(&vs, v, Fact::Agent), without(&ns, n, Fact::Nonce)]);
                    Process::seq(
                        [
                            c.nsb(&r.tom, &r.podservice, c.sign(&c.t, Fact::Nonce(n.clone()))),
                            c.nsb(&r.podservice, &r.tom, c.sign(&c.ps, Fact::Nonce(n.clone()))),
                            c.nsb(&r.tom, &r.podclient, Fact::Nonce(n.clone())),
                        ],
                        next,
                    )
                })
                .collect();
            branches.push(Process::prefix(c.nsb(v, &r.tom, Fact::Agent(v.clone())), Process::int(sessions)));
        }
        Ok(Process::ext(branches))
    });

    let c = ctx.clone();
    defs.define("Authority", move |args| {
        let [ss] = args else {
            return Err(bad("Authority", "expected serials"));
        };
        let ss = names_arg("Authority", ss)?;
        let r = &c.r;
        let mut branches = vec![Ctx::close_then_stop()];
        for s in &ss {
            for n in &c.u.nonces {
                let next = Process::call("Authority", vec![without(&ss, s, Fact::Serial)]);
                let lists: Vec<Process> = c
                    .u
                    .lists
                    .iter()
                    .map(|l| {
                        Process::seq(
                            [
                                c.nsb(&r.authority, &r.wbb, Fact::raw(Fact::Serial(s.clone()), c.enc(&c.ea, l)).unwrap()),
                                c.nsb(
                                    &r.authority,
                                    &r.podservice,
                                    Fact::raw(Fact::Serial(s.clone()), c.enc(&c.ps, l)).unwrap(),
                                ),
                            ],
                            next.clone(),
                        )
                    })
                    .collect();
                branches.push(Process::prefix(
                    c.nsb(&r.ballotmngr, &r.authority, Fact::sign_pair(&c.bm, s, n)),
                    Process::int(lists),
                ));
            }
        }
        Ok(Process::ext(branches))
    });

    let c = ctx.clone();
    defs.define("Podservice", move |_| {
        let r = &c.r;
        let me = Process::call("Podservice", vec![]);
        let mut branches = vec![Ctx::close_then_stop()];
        for n in &c.u.nonces {
            let nf = Fact::Nonce(n.clone());
            let per_serial: Vec<Process> = c
                .u
                .serials
                .iter()
                .map(|s| {
                    let per_list: Vec<Process> = c
                        .u
                        .lists
                        .iter()
                        .map(|l| {
                            Process::seq(
                                [
                                    c.nsb(&r.authority, &r.podservice, Fact::raw(Fact::Serial(s.clone()), c.enc(&c.ps, l)).unwrap()),
                                    c.nsb(
                                        &r.podservice,
                                        &r.podclient,
                                        Fact::dig_ballot(c.sign(&c.ps, Fact::Serial(s.clone())), c.enc(&c.pc, l)).unwrap(),
                                    ),
                                ],
                                me.clone(),
                            )
                        })
                        .collect();
                    Process::prefix(
                        c.nsb(&r.ballotmngr, &r.podservice, Fact::sign_pair(&c.w, s, n)),
                        Process::ext(per_list),
                    )
                })
                .collect();
            branches.push(Process::seq(
                [
                    c.nsb(&r.tom, &r.podservice, c.sign(&c.t, nf.clone())),
                    c.nsb(&r.podservice, &r.tom, c.sign(&c.ps, nf.clone())),
                    c.nsb(&r.podclient, &r.podservice, c.sign(&c.pc, nf.clone())),
                    c.nsb(&r.podservice, &r.ballotmngr, c.sign(&c.ps, nf.clone())),
                ],
                Process::ext(per_serial),
            ));
        }
        Ok(Process::ext(branches))
    });

    let c = ctx.clone();
    defs.define("Podclient", move |_| {
        let r = &c.r;
        let me = Process::call("Podclient", vec![]);
        let mut branches = vec![Ctx::close_then_stop()];
        for n in &c.u.nonces {
            let mut ballots = Vec::new();
            for s in &c.u.serials {
                for l in &c.u.lists {
                    let deliveries: Vec<Process> = c
                        .u
                        .voters
                        .iter()
                        .map(|v| Process::prefix(c.sc(&r.podclient, v, c.ballot(l, s)), me.clone()))
                        .collect();
                    ballots.push(Process::prefix(
                        c.nsb(
                            &r.podservice,
                            &r.podclient,
                            Fact::dig_ballot(c.sign(&c.ps, Fact::Serial(s.clone())), c.enc(&c.pc, l)).unwrap(),
                        ),
                        Process::int(deliveries),
                    ));
                }
            }
            branches.push(Process::seq(
                [
                    c.nsb(&r.tom, &r.podclient, Fact::Nonce(n.clone())),
                    c.nsb(&r.podclient, &r.podservice, c.sign(&c.pc, Fact::Nonce(n.clone()))),
                ],
                Process::ext(ballots),
            ));
        }
        Ok(Process::ext(branches))
    });

    let c = ctx.clone();
    defs.define("Ballotmanager", move |args| {
        let [ss] = args else {
            return Err(bad("Ballotmanager", "expected serials"));
        };
        let ss = names_arg("Ballotmanager", ss)?;
        if ss.is_empty() {
            return Ok(Ctx::close_then_stop());
        }
        let r = &c.r;
        let mut branches = vec![Ctx::close_then_stop()];
        for n in &c.u.nonces {
            let picks: Vec<Process> = ss
                .iter()
                .take(if c.canonical { 1 } else { ss.len() })
                .map(|s| {
                    Process::seq(
                        [
                            c.nsb(&r.ballotmngr, &r.wbb, Fact::sign_pair(&c.bm, s, n)),
                            c.nsb(&r.ballotmngr, &r.authority, Fact::sign_pair(&c.bm, s, n)),
                            c.nsb(&r.wbb, &r.ballotmngr, Fact::sign_pair(&c.w, s, n)),
                            c.nsb(&r.ballotmngr, &r.podservice, Fact::sign_pair(&c.w, s, n)),
                        ],
                        Process::call("Ballotmanager", vec![without(&ss, s, Fact::Serial)]),
                    )
                })
                .collect();
            branches.push(Process::prefix(
                c.nsb(&r.podservice, &r.ballotmngr, c.sign(&c.ps, Fact::Nonce(n.clone()))),
                Process::int(picks),
            ));
        }
        Ok(Process::ext(branches))
    });

    let c = ctx.clone();
    defs.define("EBM", move |_| {
        let r = &c.r;
        let me = Process::call("EBM", vec![]);
        let mut branches = vec![Ctx::close_then_stop()];
        for l in &c.u.lists {
            for s in &c.u.serials {
                for v in &c.u.voters {
                    let marks: Vec<Process> = (0..=c.index_count())
                        .map(|i| {
                            Process::seq(
                                [
                                    c.nsb(v, &r.ebm, Fact::Index(i)),
                                    c.nsb(&r.ebm, &r.wbb, c.rhs(s, i)),
                                ],
                                me.clone(),
                            )
                        })
                        .collect();
                    branches.push(Process::prefix(c.sc(v, &r.ebm, c.ballot(l, s)), Process::ext(marks)));
                }
            }
        }
        Ok(Process::ext(branches))
    });

    let c = ctx.clone();
    defs.define("Printer", move |_| {
        let r = &c.r;
        let me = Process::call("Printer", vec![]);
        let mut branches = vec![Ctx::close_then_stop()];
        for rc in c.u.receipts() {
            let prints: Vec<Process> = c
                .u
                .voters
                .iter()
                .map(|v| Process::prefix(c.nsb(&r.printer, v, rc.clone()), me.clone()))
                .collect();
            branches.push(Process::prefix(c.nsb(&r.wbb, &r.printer, rc), Process::ext(prints)));
        }
        Ok(Process::ext(branches))
    });

    let c = ctx.clone();
    defs.define("WBB1", move |args| {
        let [bag] = args else {
            return Err(bad("WBB1", "expected a bag"));
        };
        let bag = bag.as_facts().ok_or_else(|| bad("WBB1", "expected a bag"))?.to_vec();
        let r = &c.r;
        let mut branches = vec![Process::prefix(
            Ctx::close(),
            Process::call("WBB2", vec![Arg::Facts(bag.clone().into())]),
        )];
        for n in &c.u.nonces {
            for s in &c.u.serials {
                let per_list: Vec<Process> = c
                    .u
                    .lists
                    .iter()
                    .map(|l| {
                        let enc = c.enc(&c.ea, l);
                        let per_index: Vec<Process> = (0..=c.index_count())
                            .map(|i| {
                                let mut next = bag.clone();
                                next.push(Fact::vote(Fact::Index(i), enc.clone()).unwrap());
                                next.sort();
                                Process::seq(
                                    [
                                        c.nsb(&r.ebm, &r.wbb, c.rhs(s, i)),
                                        c.nsb(&r.wbb, &r.printer, c.receipt(s, i)),
                                    ],
                                    Process::call("WBB1", vec![Arg::Facts(next.into())]),
                                )
                            })
                            .collect();
                        Process::prefix(
                            c.nsb(&r.authority, &r.wbb, Fact::raw(Fact::Serial(s.clone()), enc.clone()).unwrap()),
                            Process::ext(per_index),
                        )
                    })
                    .collect();
                branches.push(Process::seq(
                    [
                        c.nsb(&r.ballotmngr, &r.wbb, Fact::sign_pair(&c.bm, s, n)),
                        c.nsb(&r.wbb, &r.ballotmngr, Fact::sign_pair(&c.w, s, n)),
                    ],
                    Process::ext(per_list),
                ));
            }
        }
        Ok(Process::ext(branches))
    });

    let c = ctx.clone();
    defs.define("WBB2", move |args| {
        let [bag] = args else {
            return Err(bad("WBB2", "expected a bag"));
        };
        let bag = bag.as_facts().ok_or_else(|| bad("WBB2", "expected a bag"))?.to_vec();
        let r = &c.r;
        if bag.is_empty() {
            let mut tail = Process::prefix(Event::control(ControlName::Done), Process::stop());
            for cand in c.u.candidates.iter().rev() {
                let offers: Vec<Process> = (0..=c.voter_count())
                    .map(|t| {
                        Process::prefix(
                            Event::Announce {
                                candidate: cand.clone(),
                                count: t,
                            },
                            tail.clone(),
                        )
                    })
                    .collect();
                tail = Process::ext(offers);
            }
            return Ok(Process::prefix(Event::control(ControlName::Bagempty), tail));
        }
        let mut distinct = bag.clone();
        distinct.dedup();
        let outs: Vec<Process> = distinct
            .iter()
            .map(|v| {
                let mut rest = bag.clone();
                let at = rest.iter().position(|x| x == v).unwrap();
                rest.remove(at);
                Process::prefix(
                    c.nsb(&r.wbb, &r.teller, v.clone()),
                    Process::call("WBB2", vec![Arg::Facts(rest.into())]),
                )
            })
            .collect();
        Ok(Process::int(outs))
    });

    let c = ctx.clone();
    defs.define("Teller1", move |args| {
        let [counts] = args else {
            return Err(bad("Teller1", "expected counts"));
        };
        let counts = counts.as_nats().ok_or_else(|| bad("Teller1", "expected counts"))?.to_vec();
        let r = &c.r;
        let cap = c.voter_count() + 1;
        let mut branches = Vec::new();
        for i in 0..=c.index_count() {
            for l in &c.u.lists {
                let names = l.as_list().unwrap();
                let next = match nth(i as usize, names) {
                    Ok(winner) => {
                        let k = c.u.candidates.iter().position(|x| *x == winner).unwrap();
                        let mut next = counts.clone();
                        next[k] = (next[k] + 1).min(cap);
                        Process::call("Teller1", vec![Arg::Nats(next.into())])
                    }
                    Err(_) => Process::stop(),
                };
                let vote = Fact::vote(Fact::Index(i), c.enc(&c.ea, l)).unwrap();
                branches.push(Process::prefix(c.nsb(&r.wbb, &r.teller, vote), next));
            }
        }
        let mut tail = Process::skip();
        for (k, cand) in c.u.candidates.iter().enumerate().rev() {
            tail = if counts[k] >= cap {
                Process::stop()
            } else {
                Process::prefix(
                    Event::Announce {
                        candidate: cand.clone(),
                        count: counts[k],
                    },
                    tail,
                )
            };
        }
        branches.push(Process::prefix(Event::control(ControlName::Bagempty), tail));
        Ok(Process::ext(branches))
    });
}

fn voter(c: &Ctx, v: &Name, cand: &Name) -> Result<Process, KernelError> {
    let r = &c.r;
    let mut branches = Vec::new();
    for l in &c.u.lists {
        let i = crate::fact::find(cand, l.as_list().unwrap())? as u32;
        for s in &c.u.serials {
            let b = c.ballot(l, s);
            let mut steps = vec![c.sc(&r.podclient, v, b.clone())];
            if c.booth {
                steps.push(Event::control_with(ControlName::EnterBooth, Fact::Agent(v.clone())));
            }
            steps.push(c.sc(v, &r.ebm, b));
            steps.push(c.nsb(v, &r.ebm, Fact::Index(i)));
            if c.booth {
                steps.push(Event::control_with(ControlName::LeaveBooth, Fact::Agent(v.clone())));
            }
            steps.push(c.nsb(&r.printer, v, c.receipt(s, i)));
            steps.push(Ctx::close());
            branches.push(Process::seq(steps, Process::stop()));
        }
    }
    Ok(Process::seq(
        [Ctx::open(), c.nsb(v, &r.tom, Fact::Agent(v.clone()))],
        Process::ext(branches),
    ))
}

/// A built scenario: universe, rules, initial knowledge and process
/// definitions, ready to produce models and systems.
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub universe: SharedUniverse,
    pub rules: Arc<[Deduction]>,
    pub ik: BTreeSet<Fact>,
    pub defs: Arc<Definitions>,
    roles: Roles,
}

impl Scenario {
    pub fn build(cfg: &ScenarioConfig) -> Result<Scenario, ConfigError> {
        cfg.validate()?;
        let universe = Arc::new(Universe::build(&cfg.atoms())?);
        for f in &cfg.banned {
            if !universe.in_fact_space(f) {
                return Err(ConfigError::for_key("banned", format!("{f} is not a fact of this scenario")));
            }
        }
        let rules: Arc<[Deduction]> = instantiate_rules(&universe).into();
        let leaked: Vec<Name> = cfg
            .corrupt
            .iter()
            .filter_map(|a| corrupt_key(a.as_str()))
            .map(Name::new)
            .collect();
        let ik = default_initial_knowledge(&universe, &leaked, cfg.ik_serials);
        let n = Name::new;
        let ctx = Arc::new(Ctx {
            u: universe.clone(),
            r: Roles::new(),
            booth: cfg.booth_events,
            canonical: cfg.canonical_fresh && !banned_mentions_fresh(&cfg.banned),
            ps: n("PS"),
            pc: n("PC"),
            ea: n("EA"),
            w: n("W"),
            t: n("T"),
            bm: n("BM"),
        });
        let mut defs = Definitions::new();
        register(&mut defs, ctx);
        Ok(Scenario {
            cfg: cfg.clone(),
            universe,
            rules,
            ik,
            defs: Arc::new(defs),
            roles: Roles::new(),
        })
    }

    pub fn dishonest(&self) -> Arc<BTreeSet<Name>> {
        Arc::new(self.cfg.dishonest.clone())
    }

    pub fn comm_sets(&self) -> CommSets {
        CommSets::new(
            self.universe.clone(),
            self.cfg.dishonest.clone(),
            self.cfg.threat,
            self.cfg.receipts_insecure,
        )
    }

    /// Voter behaviour in one of the two worlds.
    pub fn voters(&self, world: World) -> Result<Vec<VoterSpec>, ConfigError> {
        let (a, b) = self.cfg.honest_pair()?;
        let c0 = self.cfg.candidates[0].clone();
        let c1 = self.cfg.candidates[1].clone();
        let (ca, cb) = match world {
            World::Prime => (c0, c1),
            World::Doubleprime => (c1, c0),
        };
        Ok(self
            .cfg
            .voters
            .iter()
            .map(|v| {
                let choices = if *v == a {
                    vec![ca.clone()]
                } else if *v == b {
                    vec![cb.clone()]
                } else {
                    self.cfg.candidates.clone()
                };
                VoterSpec {
                    name: v.clone(),
                    choices,
                    dishonest: self.cfg.dishonest.contains(v),
                }
            })
            .collect())
    }

    fn service_components(&self, wired: bool) -> Vec<Component> {
        let r = &self.roles;
        let u = &self.universe;
        let dishonest = self.dishonest();
        let ctrl = |xs: &[ControlName]| xs.iter().copied().collect::<BTreeSet<_>>();
        use ControlName::*;
        let open = Event::control(OpenElection);
        let raw = [
            (
                &r.tom,
                Process::call(
                    "Pollworker",
                    vec![set_of(&u.voters, Fact::Agent), set_of(&u.nonces, Fact::Nonce)],
                ),
                ctrl(&[CloseElection]),
                false,
            ),
            (
                &r.authority,
                Process::prefix(open.clone(), Process::call("Authority", vec![set_of(&u.serials, Fact::Serial)])),
                ctrl(&[OpenElection, CloseElection]),
                false,
            ),
            (
                &r.wbb,
                Process::prefix(open.clone(), Process::call("WBB1", vec![Arg::facts([])])),
                ctrl(&[OpenElection, CloseElection, Bagempty, Done]),
                true,
            ),
            (
                &r.teller,
                Process::prefix(
                    open.clone(),
                    Process::call("Teller1", vec![Arg::Nats(vec![0; u.candidates.len()].into())]),
                ),
                ctrl(&[OpenElection, Bagempty]),
                true,
            ),
            (&r.podservice, Process::call("Podservice", vec![]), ctrl(&[CloseElection]), false),
            (&r.podclient, Process::call("Podclient", vec![]), ctrl(&[CloseElection]), false),
            (
                &r.ballotmngr,
                Process::prefix(open, Process::call("Ballotmanager", vec![set_of(&u.serials, Fact::Serial)])),
                ctrl(&[OpenElection, CloseElection]),
                false,
            ),
            (&r.ebm, Process::call("EBM", vec![]), ctrl(&[CloseElection]), false),
            (&r.printer, Process::call("Printer", vec![]), ctrl(&[CloseElection]), false),
        ];
        raw.into_iter()
            .map(|(agent, p, controls, announces)| Component {
                process: if wired { wire_agent(p, agent, &dishonest) } else { p },
                agents: vec![agent.clone()],
                controls,
                announces,
            })
            .collect()
    }

    fn voter_component(&self, spec: &VoterSpec, wired: bool) -> Component {
        let bodies: Vec<Process> = spec
            .choices
            .iter()
            .map(|c| Process::call("Voter", vec![Arg::Fact(Fact::Agent(spec.name.clone())), Arg::Fact(Fact::Candidate(c.clone()))]))
            .collect();
        let mut p = Process::int(bodies);
        if wired && spec.dishonest {
            p = wire_agent(p, &spec.name, &self.dishonest());
        }
        Component {
            process: p,
            agents: vec![spec.name.clone()],
            controls: [ControlName::OpenElection, ControlName::CloseElection].into_iter().collect(),
            announces: false,
        }
    }

    /// The model for the given voters. With `wired`, service agents and
    /// dishonest voters are renamed so the intruder can reach them.
    pub fn model_for(&self, voters: &[VoterSpec], wired: bool) -> Process {
        let mut comps: Vec<Component> = voters.iter().map(|v| self.voter_component(v, wired)).collect();
        comps.extend(self.service_components(wired));
        compose(&comps).process
    }

    pub fn model(&self, world: World) -> Result<Process, ConfigError> {
        Ok(self.model_for(&self.voters(world)?, true))
    }

    /// The native intruder over this scenario's knowledge.
    pub fn intruder(&self, banned: &BTreeSet<Fact>) -> Result<Process, ConfigError> {
        let u = self.universe.clone();
        let ctx = SpyContext::new(u.fact_space(), &self.rules, |f| u.is_message(f), banned)?;
        Ok(Process::spy(ctx.initial_state(&self.ik)?))
    }

    /// The model of `world` composed with the wired intruder.
    pub fn system(&self, world: World, banned: &BTreeSet<Fact>) -> Result<Process, ConfigError> {
        Ok(wire_system(self.model(world)?, self.intruder(banned)?, &self.comm_sets()))
    }
}

fn compose(comps: &[Component]) -> Component {
    match comps {
        [] => unreachable!("a model has components"),
        [one] => one.clone(),
        _ => {
            let mid = comps.len() / 2;
            let l = compose(&comps[..mid]);
            let r = compose(&comps[mid..]);
            let mut patterns = Vec::new();
            let between = EventSet::between(KindMask::NSBCOMM | KindMask::SCOMM, &l.agents, &r.agents);
            let (incl, _) = between.patterns();
            patterns.extend(incl.iter().cloned());
            for c in l.controls.intersection(&r.controls) {
                patterns.push(Pattern::Control(*c));
            }
            if l.announces && r.announces {
                patterns.push(Pattern::Kinds(KindMask::ANNOUNCE));
            }
            let mut agents = l.agents.clone();
            agents.extend(r.agents.iter().cloned());
            Component {
                process: Process::par(l.process, r.process, EventSet::new(patterns)),
                agents,
                controls: l.controls.union(&r.controls).copied().collect(),
                announces: l.announces || r.announces,
            }
        }
    }
}

/// Canonical allocation relies on nonces and serials being interchangeable,
/// which a banned fact naming one of them breaks.
fn banned_mentions_fresh(banned: &[Fact]) -> bool {
    fn walk(f: &Fact) -> bool {
        match f {
            Fact::Nonce(_) | Fact::Serial(_) | Fact::SignPair { .. } => true,
            Fact::Enc { body, .. } | Fact::Sign { body, .. } => walk(body),
            Fact::SymEnc { key, body } => walk(key) || walk(body),
            Fact::Ballot { list, signed, index } => walk(list) || walk(signed) || walk(index),
            Fact::Rhs { signed, index } => walk(signed) || walk(index),
            Fact::Receipt { rhs, .. } => walk(rhs),
            Fact::Vote { index, enc } => walk(index) || walk(enc),
            Fact::DigBallot { signed, enc } => walk(signed) || walk(enc),
            Fact::Raw { serial, enc } => walk(serial) || walk(enc),
            _ => false,
        }
    }
    banned.iter().any(walk)
}

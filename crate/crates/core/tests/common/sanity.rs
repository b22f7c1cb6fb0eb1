//! Exhaustive invariant checks over an intruder-free election.

use std::collections::{BTreeMap, HashSet, VecDeque};

use votecheck_core::explore::{explore, Bounds};
use votecheck_core::fact::nth;
use votecheck_core::protocol::{Scenario, World};
use votecheck_core::{ControlName, Event, Fact, Name};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
struct Monitor {
    rhs_posted: u32,
    serials: Vec<Name>,
    decrypted: Vec<Name>,
    announced: Vec<(Name, u32)>,
    bagempty: u32,
    done: u32,
}

fn observe(m: &mut Monitor, e: &Event) -> Result<(), String> {
    match e {
        Event::Comm { from, to, payload, .. } => match (from.as_str(), to.as_str(), payload) {
            ("ebm", "wbb", Fact::Rhs { .. }) => m.rhs_posted += 1,
            ("ballotmngr", "wbb", Fact::SignPair { serial, .. }) => {
                if m.serials.contains(serial) {
                    return Err(format!("serial {serial} issued twice"));
                }
                m.serials.push(serial.clone());
            }
            ("wbb", "teller", Fact::Vote { index, enc }) => {
                let (Fact::Index(i), Fact::Enc { body, .. }) = (&**index, &**enc) else {
                    return Err(format!("malformed vote {payload}"));
                };
                let winner = nth(*i as usize, body.as_list().unwrap()).map_err(|e| e.to_string())?;
                m.decrypted.push(winner);
                m.decrypted.sort();
            }
            _ => {}
        },
        Event::Announce { candidate, count } => m.announced.push((candidate.clone(), *count)),
        Event::Control { name: ControlName::Bagempty, .. } => m.bagempty += 1,
        Event::Control { name: ControlName::Done, .. } => {
            m.done += 1;
            if m.done > 1 || m.bagempty != 1 {
                return Err("endgame repeated".into());
            }
            let votes = m.decrypted.len() as u32;
            if m.rhs_posted != votes {
                return Err(format!("{} rhs posted but {votes} votes tallied", m.rhs_posted));
            }
            let total: u32 = m.announced.iter().map(|(_, c)| c).sum();
            if total != votes {
                return Err(format!("announced {total} for {votes} votes"));
            }
            let mut tally: BTreeMap<Name, u32> = BTreeMap::new();
            for c in &m.decrypted {
                *tally.entry(c.clone()).or_default() += 1;
            }
            for (c, k) in &m.announced {
                if tally.get(c).copied().unwrap_or(0) != *k {
                    return Err(format!("announced {c}.{k} against tally {tally:?}"));
                }
            }
        }
        _ => {}
    }
    Ok(())
}

/// Walk the explored intruder-free model of `world` together with a monitor
/// of tally conservation, serial uniqueness, vote faithfulness and the
/// endgame. Returns the number of finished runs.
pub fn check(sc: &Scenario, world: World) -> Result<usize, String> {
    let voters = sc.voters(world).map_err(|e| e.to_string())?;
    let mut expected: Vec<Name> = voters.iter().map(|v| v.choices[0].clone()).collect();
    expected.sort();
    let model = sc.model_for(&voters, false);
    let lts = explore(sc.defs.clone(), &model, Bounds::new(5_000_000, 1000, None)).map_err(|e| e.to_string())?;
    let mut seen: HashSet<(u32, Monitor)> = HashSet::new();
    let mut queue = VecDeque::from([(0u32, Monitor::default())]);
    seen.insert((0, Monitor::default()));
    let mut finished = 0;
    let mut can_finish: HashSet<u32> = HashSet::new();
    while let Some((s, m)) = queue.pop_front() {
        if m.done == 1 {
            finished += 1;
            if m.decrypted != expected {
                return Err(format!("tallied {:?}, cast {expected:?}", m.decrypted));
            }
            can_finish.insert(s);
        }
        for &(e, t) in &lts.transitions[s as usize] {
            let mut m2 = m.clone();
            observe(&mut m2, &lts.events[e as usize])?;
            if seen.insert((t, m2.clone())) {
                queue.push_back((t, m2));
            }
        }
    }
    // termination stays reachable from every reachable state
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); lts.state_count()];
    for (s, ts) in lts.transitions.iter().enumerate() {
        for &(_, t) in ts {
            preds[t as usize].push(s as u32);
        }
    }
    let mut back: Vec<u32> = can_finish.iter().copied().collect();
    let mut reach: HashSet<u32> = back.iter().copied().collect();
    while let Some(x) = back.pop() {
        for &p in &preds[x as usize] {
            if reach.insert(p) {
                back.push(p);
            }
        }
    }
    if reach.len() != lts.state_count() {
        return Err(format!("{} states cannot reach done", lts.state_count() - reach.len()));
    }
    if finished == 0 {
        return Err("no run finishes".into());
    }
    Ok(finished)
}

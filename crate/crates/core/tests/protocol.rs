mod common;

use std::collections::BTreeSet;

use votecheck_core::kernel::Kernel;
use votecheck_core::process::Arg;
use votecheck_core::protocol::{Scenario, ScenarioConfig, World};
use votecheck_core::{ControlName, Event, Fact, Name, Process};

fn n(s: &str) -> Name {
    Name::new(s)
}

fn scenario(c: usize, v: usize) -> Scenario {
    let mut cfg = ScenarioConfig::defaults(c, v);
    cfg.dishonest.clear();
    Scenario::build(&cfg).unwrap()
}

fn list(xs: &[&str]) -> Fact {
    Fact::list(xs.iter().copied())
}

#[test]
fn voter_opens_then_identifies_to_pollworker() {
    let sc = scenario(2, 2);
    let mut k = Kernel::new(sc.defs.clone());
    let p = Process::call(
        "Voter",
        vec![Arg::Fact(Fact::agent("Alice")), Arg::Fact(Fact::Candidate(n("Archimedes")))],
    );
    let traces = k.traces_bruteforce(&p, 2).unwrap();
    let rendered: BTreeSet<Vec<String>> = traces
        .iter()
        .map(|t| t.iter().map(ToString::to_string).collect())
        .collect();
    let expected: BTreeSet<Vec<String>> = [
        vec![],
        vec!["openElection".to_string()],
        vec!["openElection".to_string(), "nsbcomm.Alice.Tom.Alice".to_string()],
    ]
    .into_iter()
    .collect();
    assert_eq!(rendered, expected);
}

#[test]
fn voter_marks_the_box_of_their_candidate() {
    let sc = scenario(2, 2);
    let mut k = Kernel::new(sc.defs.clone());
    let p = Process::call(
        "Voter",
        vec![Arg::Fact(Fact::agent("Alice")), Arg::Fact(Fact::Candidate(n("Babbage")))],
    );
    let traces = k.traces_bruteforce(&p, 5).unwrap();
    let marks: BTreeSet<String> = traces
        .iter()
        .filter(|t| t.len() == 5)
        .map(|t| {
            let ballot = t[2].to_string();
            let mark = t[4].to_string();
            format!("{ballot} {mark}")
        })
        .collect();
    assert!(!marks.is_empty());
    for m in &marks {
        let babbage_first = m.contains("<Babbage,Archimedes>");
        let want = if babbage_first { "ind1" } else { "ind2" };
        assert!(m.ends_with(&format!("nsbcomm.Alice.ebm.{want}")), "{m}");
    }
}

#[test]
fn teller_counts_a_vote_and_announces() {
    let sc = scenario(2, 2);
    let mut k = Kernel::new(sc.defs.clone());
    let p = Process::call("Teller1", vec![Arg::Nats(vec![0, 0].into())]);
    let vote = Fact::vote(
        Fact::Index(1),
        Fact::enc(&n("EA"), list(&["Archimedes", "Babbage"])).unwrap(),
    )
    .unwrap();
    let deliver = Event::nsb(&n("wbb"), &n("teller"), vote);
    let trace = vec![
        deliver,
        Event::control(ControlName::Bagempty),
        Event::Announce {
            candidate: n("Archimedes"),
            count: 1,
        },
        Event::Announce {
            candidate: n("Babbage"),
            count: 0,
        },
        Event::Tick,
    ];
    let traces = k.traces_bruteforce(&p, 5).unwrap();
    assert!(traces.contains(&trace));
    let wrong = vec![
        trace[0].clone(),
        trace[1].clone(),
        Event::Announce {
            candidate: n("Archimedes"),
            count: 0,
        },
    ];
    assert!(!traces.contains(&wrong));
}

#[test]
fn teller_stops_on_an_unmarked_vote() {
    let sc = scenario(2, 2);
    let mut k = Kernel::new(sc.defs.clone());
    let p = Process::call("Teller1", vec![Arg::Nats(vec![0, 0].into())]);
    let vote = Fact::vote(
        Fact::Index(0),
        Fact::enc(&n("EA"), list(&["Archimedes", "Babbage"])).unwrap(),
    )
    .unwrap();
    let after = k.after(&p, &Event::nsb(&n("wbb"), &n("teller"), vote)).unwrap();
    for q in after {
        assert!(k.initials(&q).unwrap().is_empty());
    }
}

#[test]
fn empty_board_runs_the_endgame() {
    let sc = scenario(2, 2);
    let mut k = Kernel::new(sc.defs.clone());
    let p = Process::call("WBB2", vec![Arg::Facts(Vec::new().into())]);
    let traces = k.traces_bruteforce(&p, 5).unwrap();
    let full: Vec<&Vec<Event>> = traces.iter().filter(|t| t.len() == 4).collect();
    // counts 0..=2 for each of two candidates
    assert_eq!(full.len(), 9);
    for t in full {
        assert_eq!(t[0], Event::control(ControlName::Bagempty));
        assert!(matches!(&t[1], Event::Announce { candidate, .. } if candidate.as_str() == "Archimedes"));
        assert!(matches!(&t[2], Event::Announce { candidate, .. } if candidate.as_str() == "Babbage"));
        assert_eq!(t[3], Event::control(ControlName::Done));
    }
    assert!(traces.iter().all(|t| t.len() <= 4));
}

#[test]
fn worlds_swap_the_honest_pair() {
    let sc = scenario(2, 3);
    let prime = sc.voters(World::Prime).unwrap();
    let other = sc.voters(World::Doubleprime).unwrap();
    assert_eq!(World::Prime.other(), World::Doubleprime);
    assert_eq!(prime[0].choices, vec![n("Archimedes")]);
    assert_eq!(prime[1].choices, vec![n("Babbage")]);
    assert_eq!(other[0].choices, vec![n("Babbage")]);
    assert_eq!(other[1].choices, vec![n("Archimedes")]);
    assert_eq!(prime[2].choices, other[2].choices);
    assert_eq!(prime[2].choices.len(), 2);
}

#[test]
fn intruder_free_two_voters_prime() {
    let sc = scenario(2, 2);
    assert!(common::sanity::check(&sc, World::Prime).unwrap() > 0);
}

#[test]
fn intruder_free_two_voters_doubleprime() {
    let sc = scenario(2, 2);
    assert!(common::sanity::check(&sc, World::Doubleprime).unwrap() > 0);
}
#[test]
fn wired_system_starts_by_opening_the_election() {
    let sc = scenario(2, 2);
    let sys = sc.system(World::Prime, &BTreeSet::new()).unwrap();
    let mut k = Kernel::new(sc.defs.clone());
    let first: Vec<String> = k
        .initials(&sys)
        .unwrap()
        .into_iter()
        .filter(|(e, _)| !e.is_tau())
        .map(|(e, _)| e.to_string())
        .collect();
    assert!(first.contains(&"openElection".to_string()), "{first:?}");
}

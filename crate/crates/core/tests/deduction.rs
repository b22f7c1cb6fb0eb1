use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use votecheck_core::deduction::{
    close, default_initial_knowledge, instantiate_rules, intruder_process, Deduction, KnowledgeState, RuleName,
    SpyContext,
};
use votecheck_core::kernel::{Definitions, Kernel};
use votecheck_core::universe::{Atoms, Universe};
use votecheck_core::{ControlName, Event, Fact, KindMask, Name};

struct Setup {
    u: Universe,
    rules: Arc<[Deduction]>,
}

fn setup() -> Setup {
    let u = Universe::build(&Atoms::defaults(2, 2)).unwrap();
    let rules: Arc<[Deduction]> = instantiate_rules(&u).into();
    Setup { u, rules }
}

fn ab() -> Fact {
    Fact::list(["Archimedes", "Babbage"])
}

fn raw_ps() -> Fact {
    Fact::raw(Fact::serial("s1"), Fact::enc(&Name::new("PS"), ab()).unwrap()).unwrap()
}

/// Say-enabled facts of the cell intruder after the given learns, with
/// every pending deduction fired.
fn lazy_sayable(s: &Setup, initial: &BTreeSet<Fact>, banned: &BTreeSet<Fact>, learns: &[Fact]) -> (BTreeSet<Fact>, Vec<Event>) {
    let ks = KnowledgeState::new(&s.u, s.rules.clone(), initial.clone(), banned.clone()).unwrap();
    let sayable: BTreeSet<Fact> = s.u.messages().iter().cloned().collect();
    let mut defs = Definitions::new();
    let p = intruder_process(&s.u, &ks, &sayable, &mut defs).unwrap();
    let mut k = Kernel::new(Arc::new(defs));
    let limit = s.u.fact_space().len() + 1;
    let (mut p, _) = k.chase(&p, KindMask::INFER, limit).unwrap();
    for l in learns {
        let next = k.after(&p, &Event::Learn(l.clone())).unwrap();
        assert_eq!(next.len(), 1, "learning {l} is deterministic");
        p = k.chase(&next[0], KindMask::INFER, limit).unwrap().0;
    }
    let says = k
        .transitions(&p, KindMask::SAY)
        .unwrap()
        .into_iter()
        .map(|(e, _)| match e {
            Event::Say(f) => f,
            other => panic!("unexpected {other}"),
        })
        .collect();
    let controls = k.transitions(&p, KindMask::CONTROL).unwrap().into_iter().map(|(e, _)| e).collect();
    (says, controls)
}

fn messages_in(s: &Setup, facts: &BTreeSet<Fact>) -> BTreeSet<Fact> {
    facts.iter().filter(|f| s.u.is_message(f)).cloned().collect()
}

#[test]
fn rule_instances_from_the_table() {
    let s = setup();
    let asym = s
        .rules
        .iter()
        .find(|d| d.rule == RuleName::AsymDec && d.conclusion == ab() && d.premises.contains(&Fact::sk("PS")))
        .expect("ASYM-DEC instance");
    assert_eq!(
        asym.premises.iter().cloned().collect::<BTreeSet<_>>(),
        [Fact::sk("PS"), Fact::enc(&Name::new("PS"), ab()).unwrap()].into_iter().collect()
    );
    let signed = Fact::sign(&Name::new("PS"), Fact::serial("s1")).unwrap();
    let ballot = Fact::ballot(ab(), signed.clone(), Fact::Index(0)).unwrap();
    let parts: BTreeSet<Fact> = s
        .rules
        .iter()
        .filter(|d| d.rule == RuleName::BallotDcmp && d.premises == vec![ballot.clone()])
        .map(|d| d.conclusion.clone())
        .collect();
    assert_eq!(parts, [ab(), signed, Fact::Index(0)].into_iter().collect());
    for d in s.rules.iter() {
        if let Fact::Enc { body, .. } = &d.conclusion {
            assert!(!matches!(**body, Fact::Enc { .. }));
        }
    }
}

#[test]
fn closure_examples() {
    let s = setup();
    let start: BTreeSet<Fact> = [Fact::sk("EA"), Fact::raw(Fact::serial("s1"), Fact::enc(&Name::new("EA"), ab()).unwrap()).unwrap()]
        .into_iter()
        .collect();
    let c = close(&s.rules, &start);
    assert!(c.contains(&Fact::serial("s1")));
    assert!(c.contains(&Fact::enc(&Name::new("EA"), ab()).unwrap()));
    assert!(c.contains(&ab()));
    assert!(close(&s.rules, &BTreeSet::new()).is_empty());
}

#[test]
fn corrupt_pod_reveals_the_list() {
    let s = setup();
    let initial: BTreeSet<Fact> = [Fact::sk("PS")].into_iter().collect();
    let banned: BTreeSet<Fact> = [ab()].into_iter().collect();
    let (_, before) = lazy_sayable(&s, &initial, &banned, &[]);
    assert!(before.is_empty());
    let (says, after) = lazy_sayable(&s, &initial, &banned, &[raw_ps()]);
    assert!(says.contains(&raw_ps()));
    assert_eq!(after, vec![Event::control_with(ControlName::Intruderknows, ab())]);
    let mut start = initial.clone();
    start.insert(raw_ps());
    assert!(close(&s.rules, &start).contains(&ab()));
}

#[test]
fn ignorant_intruder_says_nothing() {
    let s = setup();
    let (says, _) = lazy_sayable(&s, &BTreeSet::new(), &BTreeSet::new(), &[]);
    assert!(says.is_empty());
}

#[test]
fn banned_fact_outside_the_universe_is_rejected() {
    let s = setup();
    let banned: BTreeSet<Fact> = [Fact::list(["Archimedes", "Curie"])].into_iter().collect();
    assert!(KnowledgeState::new(&s.u, s.rules.clone(), BTreeSet::new(), banned.clone()).is_err());
    assert!(SpyContext::new(s.u.fact_space(), &s.rules, |f| s.u.is_message(f), &banned).is_err());
}

#[test]
fn lazy_and_eager_agree_on_random_learns() {
    let s = setup();
    let ik = default_initial_knowledge(&s.u, &[], false);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let msgs = s.u.messages().to_vec();
    let keys = [Name::new("PS"), Name::new("EA"), Name::new("W")];
    for round in 0..100 {
        let mut initial = ik.clone();
        if round % 3 == 0 {
            initial.insert(Fact::SecKey(keys.choose(&mut rng).unwrap().clone()));
        }
        let n = round % 6;
        let learns: Vec<Fact> = (0..n).map(|_| msgs.choose(&mut rng).unwrap().clone()).collect();
        let (lazy, _) = lazy_sayable(&s, &initial, &BTreeSet::new(), &learns);
        let mut start = initial.clone();
        start.extend(learns.iter().cloned());
        let eager = messages_in(&s, &close(&s.rules, &start));
        assert_eq!(lazy, eager, "round {round} with learns {learns:?}");

        let ctx = SpyContext::new(s.u.fact_space(), &s.rules, |f| s.u.is_message(f), &BTreeSet::new()).unwrap();
        let mut spy = ctx.initial_state(&initial).unwrap();
        for l in &learns {
            spy = spy.learn(l).unwrap();
        }
        assert_eq!(spy.sayable_now(), eager);
    }
}

fn any_subset() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (
        proptest::collection::vec(0usize..10_000, 0..8),
        proptest::collection::vec(0usize..10_000, 0..4),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closure_is_monotone_idempotent_and_sound((xs, extra) in any_subset()) {
        let s = setup();
        let space = s.u.fact_space();
        let a: BTreeSet<Fact> = xs.iter().map(|i| space[i % space.len()].clone()).collect();
        let mut b = a.clone();
        b.extend(extra.iter().map(|i| space[i % space.len()].clone()));
        let ca = close(&s.rules, &a);
        let cb = close(&s.rules, &b);
        prop_assert_eq!(&close(&s.rules, &ca), &ca);
        prop_assert!(ca.is_subset(&cb));
        for f in ca.difference(&a) {
            prop_assert!(s.rules.iter().any(|d| &d.conclusion == f && d.premises.iter().all(|p| ca.contains(p))));
        }
        let has_sk = |set: &BTreeSet<Fact>| set.iter().any(|f| matches!(f, Fact::SecKey(_)));
        if !has_sk(&a) {
            prop_assert!(!has_sk(&ca));
        }
    }
}

#![allow(dead_code)]

pub mod sanity;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use votecheck_core::kernel::Trace;
use votecheck_core::process::{PairRenaming, Renaming};
use votecheck_core::{Event, EventSet, Process};

pub const ALPHABET: [&str; 3] = ["a", "b", "c"];

pub fn ev(s: &str) -> Event {
    Event::plain(s)
}

pub fn pre(s: &str, p: Process) -> Process {
    Process::prefix(ev(s), p)
}

pub fn set(xs: &[&str]) -> EventSet {
    EventSet::exact(xs.iter().map(|s| ev(s)))
}

pub fn tr(xs: &[&str]) -> Trace {
    xs.iter().map(|s| ev(s)).collect()
}

fn subset(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    ALPHABET.iter().copied().filter(|_| rng.random_bool(0.4)).collect()
}

/// A random recursion-free process at most `depth` operators deep with at
/// most `*prefixes` prefix nodes, so every trace has at most that length.
pub fn gen(rng: &mut ChaCha8Rng, depth: usize, prefixes: &mut usize) -> Process {
    if depth == 0 {
        return if rng.random_bool(0.8) { Process::stop() } else { Process::skip() };
    }
    match rng.random_range(0..10) {
        0 => Process::stop(),
        1 => Process::skip(),
        2 | 3 if *prefixes > 0 => {
            *prefixes -= 1;
            let e = ALPHABET[rng.random_range(0..ALPHABET.len())];
            pre(e, gen(rng, depth - 1, prefixes))
        }
        4 => Process::ext(vec![gen(rng, depth - 1, prefixes), gen(rng, depth - 1, prefixes)]),
        5 => Process::int(vec![gen(rng, depth - 1, prefixes), gen(rng, depth - 1, prefixes)]),
        6 => {
            let iface = set(&subset(rng));
            Process::par(gen(rng, depth - 1, prefixes), gen(rng, depth - 1, prefixes), iface)
        }
        7 => Process::interleave(gen(rng, depth - 1, prefixes), gen(rng, depth - 1, prefixes)),
        8 => Process::hide(gen(rng, depth - 1, prefixes), set(&subset(rng))),
        9 => {
            let mut pairs = Vec::new();
            for a in ALPHABET {
                for b in ALPHABET {
                    if rng.random_bool(0.25) {
                        pairs.push((ev(a), ev(b)));
                    }
                }
            }
            Process::rename(gen(rng, depth - 1, prefixes), Renaming::new(PairRenaming::new(pairs)))
        }
        _ => {
            *prefixes = prefixes.saturating_sub(1);
            let e = ALPHABET[rng.random_range(0..ALPHABET.len())];
            pre(e, gen(rng, depth - 1, prefixes))
        }
    }
}

pub fn random_process(seed: u64) -> Process {
    random_process_with(seed, 8)
}

/// Like [`random_process`] with at most `prefixes` prefix nodes.
pub fn random_process_with(seed: u64, prefixes: usize) -> Process {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget = prefixes;
    gen(&mut rng, 6, &mut budget)
}

/// Pairs of random processes for refinement checks: unrelated pairs mixed
/// with pairs built to hold one way or to differ slightly.
pub fn refinement_pairs(count: u64, prefixes: usize) -> Vec<(Process, Process)> {
    (0..count)
        .map(|i| {
            let a = random_process_with(2 * i, prefixes);
            let b = random_process_with(2 * i + 1, prefixes);
            match i % 4 {
                0 => (a, b),
                1 => (Process::ext(vec![a.clone(), b]), a),
                2 => (a.clone(), Process::int(vec![a, b])),
                _ => (Process::hide(a.clone(), set(&["a"])), a),
            }
        })
        .collect()
}

pub fn is_subset(a: &BTreeSet<Trace>, b: &BTreeSet<Trace>) -> bool {
    a.is_subset(b)
}

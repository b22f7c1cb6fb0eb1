//! Running checks and rendering their outcome.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use votecheck_core::check::{anonymity_check, secrecy_check, Outcome, Stats, Verdict};
use votecheck_core::event::parse_event;
use votecheck_core::kernel::Trace;
use votecheck_core::protocol::ScenarioConfig;
use votecheck_core::universe::Universe;
use votecheck_core::{Error, Event};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Anonymity,
    Secrecy,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub check: Check,
    pub config: ScenarioConfig,
    pub verdict: Verdict,
    pub counterexample_rendered: Option<Vec<String>>,
    pub stats: Stats,
    /// Seconds; the only field that varies between identical runs.
    pub wallclock: f64,
}

/// One line per event in the rendering grammar.
pub fn render_trace(t: &[Event]) -> Vec<String> {
    t.iter().map(ToString::to_string).collect()
}

/// Parse rendered lines back into events.
pub fn parse_trace(lines: &[String], u: &Universe) -> Result<Trace, Error> {
    lines
        .iter()
        .map(|l| parse_event(l, u).map_err(Error::from))
        .collect()
}

pub fn run_scenario(check: Check, cfg: &ScenarioConfig) -> Result<Report, Error> {
    let start = Instant::now();
    let verdict = match check {
        Check::Anonymity => anonymity_check(cfg)?,
        Check::Secrecy => secrecy_check(cfg)?,
    };
    let wallclock = start.elapsed().as_secs_f64();
    Ok(Report {
        check,
        config: cfg.clone(),
        counterexample_rendered: verdict.counterexample.as_deref().map(render_trace),
        stats: verdict.stats.clone(),
        verdict,
        wallclock,
    })
}

pub fn exit_code(result: Outcome) -> i32 {
    match result {
        Outcome::Holds => 0,
        Outcome::Fails => 1,
        Outcome::ResourceLimit => 2,
    }
}

/// Configuration errors, and model errors they give rise to, exit with 3.
pub const CONFIG_ERROR_EXIT: i32 = 3;

pub fn to_json(r: &Report) -> String {
    serde_json::to_string_pretty(r).expect("reports always serialize")
}

/// Human-readable summary.
pub fn human(r: &Report) -> String {
    let mut s = String::new();
    let check = match r.check {
        Check::Anonymity => "anonymity",
        Check::Secrecy => "secrecy",
    };
    let result = match r.verdict.result {
        Outcome::Holds => "holds",
        Outcome::Fails => "fails",
        Outcome::ResourceLimit => "resource_limit",
    };
    let _ = writeln!(s, "{check}: {result}");
    if let Some(why) = &r.verdict.limit {
        let _ = writeln!(s, "stopped: {why}");
    }
    if let Some(d) = r.verdict.direction {
        let d = serde_json::to_value(d).expect("direction serializes");
        let _ = writeln!(s, "direction: {}", d.as_str().unwrap_or_default());
    }
    if let Some(lines) = &r.counterexample_rendered {
        let _ = writeln!(s, "counterexample ({} events):", lines.len());
        for l in lines {
            let _ = writeln!(s, "  {l}");
        }
    }
    let st = &r.stats;
    let _ = writeln!(
        s,
        "states: impl {} spec {} automaton {} product {}; transitions {}; depth {}; {:.2}s",
        st.impl_states, st.spec_states, st.dfa_states, st.product_states, st.transitions, st.max_depth_reached, r.wallclock
    );
    s
}

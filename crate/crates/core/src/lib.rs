//! Explicit-state trace checking of the vVote protocol against a lazy
//! Dolev-Yao intruder.

pub mod channels;
pub mod check;
pub mod deduction;
pub mod error;
pub mod event;
pub mod explore;
pub mod fact;
pub mod kernel;
pub mod process;
pub mod protocol;
pub mod universe;

pub use error::{ConfigError, Error, KernelError, Result};
pub use event::{Chan, ControlName, Event, KindMask};
pub use fact::{Fact, Name};
pub use process::{EventSet, Process};

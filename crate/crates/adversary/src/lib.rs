//! Attack harness for the authstore protocol.
//!
//! The pieces model a provider that may be malicious and a network that may
//! be hostile: [`proxy::MitmProxy`] rewrites frames in flight,
//! [`insider::InsiderServer`] exposes its per-session secrets, and
//! [`attack`] holds the offline dictionary attacker, a deliberately broken
//! client and the stolen-verifier impersonation. [`scenarios`] wires them
//! into repeatable runs with JSON reports.
//!
//! Nothing here is used by the shipped client or server.

pub mod attack;
pub mod insider;
pub mod proxy;
pub mod scenarios;
pub mod transcript;

pub use attack::{dictionary_attack, stolen_verifier_attack, StolenVerifier};
pub use proxy::{MitmProxy, TamperRule};
pub use transcript::{Flow, ServerView, Transcript};

pub mod account;
pub mod client;
pub mod crypto;
pub mod group;
pub mod pake;
pub mod stretch;
pub mod wire;
pub mod vault;

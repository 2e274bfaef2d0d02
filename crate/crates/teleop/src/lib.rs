//! Tele-operation front end for `gait-core`: a websocket service with a
//! serialized command queue, JSON-lines session records with bit-exact
//! replay, headless scripted runs and CSV trajectory export.

pub mod cli;
pub mod export;
pub mod harness;
pub mod protocol;
pub mod service;
pub mod session;

pub use protocol::{CommandMessage, Reply};
pub use session::{CommandEntry, Header, SessionRecord};

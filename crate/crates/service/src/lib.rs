//! Web socket service exposing the simulator.
//!
//! One connection is one session. Text messages carry JSON control requests
//! (see [`protocol`]); binary messages carry frames (see [`frame`]). The first
//! byte tells them apart: `{` for text, `0x01` for a frame.

pub mod frame;
pub mod protocol;
pub mod server;
pub mod session;
pub mod worker;

pub use frame::{decode_frame, encode_frame, Frame, FrameError};
pub use protocol::{parse_control, ControlMessage, ErrorKind, ServiceError};
pub use server::{bind, router, serve, AppState, ServeError, ServiceConfig, DEFAULT_PORT};
pub use session::{Mode, Session};
pub use worker::{spawn_session, Inbound, SessionHandle};

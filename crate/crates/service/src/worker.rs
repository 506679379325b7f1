//! Per-session stepping thread.
//!
//! Control text arrives through a mailbox and is handled between steps, in
//! arrival order. Responses and events go out through an unbounded channel
//! (one entry per request plus progress events); frames go through a watch
//! channel that only keeps the latest one.

use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tokio::sync::{mpsc as tmpsc, watch};

use magsim_core::models::ModelLibrary;

use crate::protocol::{command_name, error_response, event, ok_response, parse_control, ControlMessage, ErrorKind, ServiceError};
use crate::session::{Mode, Session};

/// Message from the client side to the worker.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Text(String),
    Binary(usize),
}

pub type FrameBytes = Option<Arc<Vec<u8>>>;

pub struct SessionHandle {
    pub id: String,
    pub mailbox: mpsc::Sender<Inbound>,
    pub outgoing: tmpsc::UnboundedReceiver<String>,
    pub frames: watch::Receiver<FrameBytes>,
    pub thread: JoinHandle<()>,
}

struct Worker {
    session: Session,
    library: Arc<RwLock<ModelLibrary>>,
    inbox: Receiver<Inbound>,
    out: tmpsc::UnboundedSender<String>,
    frames: watch::Sender<FrameBytes>,
}

pub fn spawn_session(id: String, library: Arc<RwLock<ModelLibrary>>, upload_dir: PathBuf) -> SessionHandle {
    let (mailbox, inbox) = mpsc::channel();
    let (out, outgoing) = tmpsc::unbounded_channel();
    let (frames_tx, frames) = watch::channel(None);
    let session = Session::new(id.clone(), library.clone(), upload_dir);
    let thread = std::thread::Builder::new()
        .name(format!("magsim-{id}"))
        .spawn(move || {
            let mut worker = Worker {
                session,
                library,
                inbox,
                out,
                frames: frames_tx,
            };
            worker.run();
        })
        .expect("spawn session thread");
    SessionHandle {
        id,
        mailbox,
        outgoing,
        frames,
        thread,
    }
}

enum Parsed {
    Message(ControlMessage),
    Rejected(Value),
}

fn parse_inbound(inbound: Inbound) -> Parsed {
    match inbound {
        Inbound::Text(text) => match parse_control(&text) {
            Ok(m) => Parsed::Message(m),
            Err(e) => Parsed::Rejected(error_response(command_name(&text).as_deref(), &e)),
        },
        Inbound::Binary(len) => Parsed::Rejected(error_response(
            None,
            &ServiceError::new(
                ErrorKind::MalformedMessage,
                ".",
                format!("binary messages ({len} bytes) are not accepted; send JSON text"),
            ),
        )),
    }
}

impl Worker {
    fn send(&self, value: Value) -> bool {
        self.out.send(value.to_string()).is_ok()
    }

    fn publish_frame(&mut self) {
        if let Some(bytes) = self.session.encoded_frame() {
            self.frames.send_replace(Some(Arc::new(bytes)));
        }
    }

    fn run(&mut self) {
        let _ = self.send(event("hello", json!({ "session": self.session.id() })));
        let mut next_tick = Instant::now();
        loop {
            // Drain the mailbox; block while not running.
            loop {
                let inbound = if self.session.mode() == Mode::Running {
                    match self.inbox.try_recv() {
                        Ok(m) => m,
                        Err(TryRecvError::Empty) => break,
                        Err(TryRecvError::Disconnected) => return,
                    }
                } else {
                    match self.inbox.recv() {
                        Ok(m) => m,
                        Err(_) => return,
                    }
                };
                let was_running = self.session.mode() == Mode::Running;
                if !self.process(inbound) {
                    return;
                }
                if self.session.is_dirty() {
                    self.publish_frame();
                }
                if !was_running && self.session.mode() == Mode::Running {
                    next_tick = Instant::now();
                }
            }

            for _ in 0..self.session.steps_per_frame() {
                if let Err(e) = self.session.step() {
                    let _ = self.send(event("error", json!({ "error": e, "mode": self.session.mode() })));
                    break;
                }
            }
            self.publish_frame();

            next_tick += Duration::from_secs_f64(self.session.frame_interval());
            let now = Instant::now();
            if next_tick > now {
                // Wake early for control messages; they are handled at the next step boundary.
                match self.inbox.recv_timeout(next_tick - now) {
                    Ok(m) => {
                        if !self.process(m) {
                            return;
                        }
                        if self.session.is_dirty() && self.session.mode() != Mode::Running {
                            self.publish_frame();
                        }
                        let rest = next_tick.saturating_duration_since(Instant::now());
                        std::thread::sleep(rest);
                    }
                    Err(RecvTimeoutError::Timeout) => {}
                    Err(RecvTimeoutError::Disconnected) => return,
                }
            } else {
                // Behind schedule: do not try to catch up.
                next_tick = now;
            }
        }
    }

    /// Handles one inbound message. Returns `false` when the client is gone.
    fn process(&mut self, inbound: Inbound) -> bool {
        match parse_inbound(inbound) {
            Parsed::Rejected(response) => self.send(response),
            Parsed::Message(ControlMessage::SolveQuasistatic) => self.solve(),
            Parsed::Message(message) => {
                let cmd = message.name();
                let response = match self.session.handle(message) {
                    Ok(v) => v,
                    Err(e) => error_response(Some(cmd), &e),
                };
                self.send(response)
            }
        }
    }

    fn solve(&mut self) -> bool {
        if self.session.model().is_none() {
            return self.send(error_response(Some("solve_quasistatic"), &ServiceError::no_model()));
        }
        if !self.send(ok_response("solve_quasistatic", json!({ "started": true, "mode": Mode::QuasistaticBusy }))) {
            return false;
        }
        let mut deferred: Vec<Inbound> = Vec::new();
        let mut client_gone = false;
        let result = {
            let out = self.out.clone();
            let inbox = &self.inbox;
            let library = &self.library;
            let mut progress = |p: &magsim_core::solver::Progress| -> bool {
                let _ = out.send(
                    event(
                        "progress",
                        json!({
                            "stage": p.stage,
                            "stages": p.stages,
                            "iteration": p.iteration,
                            "residual": p.residual,
                            "limit": p.limit,
                        }),
                    )
                    .to_string(),
                );
                loop {
                    let inbound = match inbox.try_recv() {
                        Ok(m) => m,
                        Err(TryRecvError::Empty) => return true,
                        Err(TryRecvError::Disconnected) => {
                            client_gone = true;
                            return false;
                        }
                    };
                    let reply = match parse_inbound(inbound.clone()) {
                        Parsed::Message(ControlMessage::Pause) => {
                            let _ = out.send(ok_response("pause", json!({ "mode": Mode::Paused, "cancelled": true })).to_string());
                            return false;
                        }
                        Parsed::Message(ControlMessage::ListModels) => {
                            let mut body = Session::list_models(library);
                            body["mode"] = json!(Mode::QuasistaticBusy);
                            Some(ok_response("list_models", body))
                        }
                        Parsed::Message(
                            m @ (ControlMessage::SolveQuasistatic
                            | ControlMessage::Start
                            | ControlMessage::Reset
                            | ControlMessage::LoadModel { .. }
                            | ControlMessage::UploadMesh { .. }),
                        ) => Some(error_response(Some(m.name()), &ServiceError::busy())),
                        Parsed::Message(_) => {
                            // Parameter edits apply once the solve has finished.
                            deferred.push(inbound);
                            None
                        }
                        Parsed::Rejected(response) => Some(response),
                    };
                    if let Some(r) = reply {
                        let _ = out.send(r.to_string());
                    }
                }
            };
            self.session.solve_quasistatic(&mut progress)
        };
        if client_gone {
            return false;
        }
        let done = match result {
            Ok(body) => event("quasistatic_done", body),
            Err(e) => event("quasistatic_failed", json!({ "error": e, "mode": self.session.mode() })),
        };
        if !self.send(done) {
            return false;
        }
        self.publish_frame();
        for inbound in deferred {
            if !self.process(inbound) {
                return false;
            }
        }
        true
    }
}

use std::collections::HashSet;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::render::render_png_base64;
use super::{Duel, PreferenceOracle, Verdict};
use crate::error::{Error, Result};
use crate::geom::Pose4;

/// The comparison currently shown to the human. Images are base64 PNG.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingComparison {
    pub request_id: u64,
    pub description: String,
    pub image_a: String,
    pub image_b: String,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionStatus {
    pub iter: usize,
    #[serde(rename = "B")]
    pub total: usize,
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_pose: Option<Pose4>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown request id")]
    NotFound,
    #[error("request already answered")]
    AlreadyAnswered,
    #[error("session closed")]
    Closed,
    #[error("choice must be \"A\" or \"B\"")]
    InvalidChoice,
}

#[derive(Debug, Default)]
struct State {
    pending: Option<PendingComparison>,
    answer: Option<Verdict>,
    answered: HashSet<u64>,
    next_id: u64,
    closed: bool,
    iter: usize,
    total: usize,
    done: bool,
    final_pose: Option<Pose4>,
    error: Option<String>,
}

/// Rendezvous between a refinement worker (`ask`) and the HTTP handlers
/// (`next`, `submit`). At most one comparison is pending at a time.
#[derive(Debug, Default)]
pub struct SessionHub {
    state: Mutex<State>,
    cv: Condvar,
}

impl SessionHub {
    pub fn new(total: usize) -> Self {
        SessionHub {
            state: Mutex::new(State {
                total,
                ..State::default()
            }),
            cv: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Posts a comparison and blocks until it is answered, the deadline
    /// passes, or the session closes. `iteration` is 1-based and becomes the
    /// reported progress once answered.
    pub fn ask(
        &self,
        description: String,
        image_a: String,
        image_b: String,
        iteration: usize,
        deadline: Duration,
    ) -> Result<Verdict> {
        let until = Instant::now() + deadline;
        let mut st = self.lock();
        // another worker's question is still open
        while st.pending.is_some() && !st.closed {
            let left = until.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(Error::Timeout);
            }
            st = self.cv.wait_timeout(st, left).unwrap_or_else(|p| p.into_inner()).0;
        }
        if st.closed {
            return Err(Error::Cancelled);
        }
        let id = st.next_id;
        st.next_id += 1;
        st.answer = None;
        st.pending = Some(PendingComparison {
            request_id: id,
            description,
            image_a,
            image_b,
            iteration,
        });
        loop {
            if let Some(v) = st.answer.take() {
                st.pending = None;
                st.iter = iteration;
                self.cv.notify_all();
                return Ok(v);
            }
            if st.closed {
                st.pending = None;
                return Err(Error::Cancelled);
            }
            let left = until.saturating_duration_since(Instant::now());
            if left.is_zero() {
                st.pending = None;
                // a late answer is rejected rather than silently dropped
                st.answered.insert(id);
                self.cv.notify_all();
                return Err(Error::Timeout);
            }
            st = self.cv.wait_timeout(st, left).unwrap_or_else(|p| p.into_inner()).0;
        }
    }

    pub fn next(&self) -> Option<PendingComparison> {
        let st = self.lock();
        match (&st.pending, st.answer) {
            (Some(p), None) => Some(p.clone()),
            _ => None,
        }
    }

    pub fn submit(&self, request_id: u64, choice: &str) -> std::result::Result<Verdict, SubmitError> {
        let verdict = match choice {
            "A" => Verdict::Incumbent,
            "B" => Verdict::Challenger,
            _ => return Err(SubmitError::InvalidChoice),
        };
        let mut st = self.lock();
        if st.closed {
            return Err(SubmitError::Closed);
        }
        if st.answered.contains(&request_id) {
            return Err(SubmitError::AlreadyAnswered);
        }
        match &st.pending {
            Some(p) if p.request_id == request_id => {
                st.answered.insert(request_id);
                st.answer = Some(verdict);
                self.cv.notify_all();
                Ok(verdict)
            }
            _ => Err(SubmitError::NotFound),
        }
    }

    pub fn status(&self) -> SessionStatus {
        let st = self.lock();
        SessionStatus {
            iter: st.iter,
            total: st.total,
            done: st.done,
            final_pose: st.final_pose,
            error: st.error.clone(),
        }
    }

    pub fn set_total(&self, total: usize) {
        self.lock().total = total;
    }

    /// Marks the session finished. An error message is kept for `status`.
    pub fn finish(&self, final_pose: Option<Pose4>, error: Option<String>) {
        let mut st = self.lock();
        st.done = true;
        st.final_pose = final_pose;
        st.error = error;
        self.cv.notify_all();
    }

    /// Cancels any waiting `ask` and rejects further submissions.
    pub fn close(&self) {
        let mut st = self.lock();
        st.closed = true;
        st.pending = None;
        self.cv.notify_all();
    }
}

/// Oracle that forwards each duel to a human through a [`SessionHub`].
#[derive(Debug, Clone)]
pub struct HumanOracle {
    pub hub: Arc<SessionHub>,
    pub deadline: Duration,
    pub width: u32,
    pub height: u32,
}

impl HumanOracle {
    pub fn new(hub: Arc<SessionHub>, deadline: Duration) -> Self {
        HumanOracle {
            hub,
            deadline,
            width: 320,
            height: 240,
        }
    }
}

impl PreferenceOracle for HumanOracle {
    fn compare(&mut self, duel: &Duel) -> Result<Verdict> {
        let a = render_png_base64(duel.scene, &duel.incumbent, self.width, self.height)?;
        let b = render_png_base64(duel.scene, &duel.challenger, self.width, self.height)?;
        self.hub.ask(duel.description.text.clone(), a, b, duel.iteration, self.deadline)
    }
}

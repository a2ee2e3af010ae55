//! Background jobs with polling.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    FitLayout,
    EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTicket {
    pub job_id: String,
    pub kind: JobKind,
    pub project_id: String,
    pub state: JobState,
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Returned when a project already has a fit job in flight.
#[derive(Debug, Clone)]
pub struct Busy {
    pub job_id: String,
}

#[derive(Debug, Default)]
struct Inner {
    tickets: HashMap<String, JobTicket>,
    /// project id → running fit job id
    fitting: HashMap<String, String>,
    active: HashSet<String>,
}

#[derive(Debug, Default, Clone)]
pub struct Jobs {
    inner: Arc<(Mutex<Inner>, Condvar)>,
}

/// Handle given to the worker; moves the ticket through its states.
#[derive(Debug)]
pub struct JobHandle {
    jobs: Jobs,
    id: String,
}

impl Jobs {
    pub fn new() -> Self {
        Jobs::default()
    }

    /// Queues a job. Fit jobs are exclusive per project.
    pub fn submit(&self, kind: JobKind, project_id: &str) -> Result<JobHandle, Busy> {
        let mut inner = self.inner.0.lock();
        if kind == JobKind::FitLayout {
            if let Some(running) = inner.fitting.get(project_id) {
                return Err(Busy {
                    job_id: running.clone(),
                });
            }
        }
        let id = uuid::Uuid::new_v4().to_string();
        inner.tickets.insert(
            id.clone(),
            JobTicket {
                job_id: id.clone(),
                kind,
                project_id: project_id.to_string(),
                state: JobState::Queued,
                progress: 0.0,
                result_ref: None,
                error: None,
            },
        );
        if kind == JobKind::FitLayout {
            inner.fitting.insert(project_id.to_string(), id.clone());
        }
        inner.active.insert(id.clone());
        Ok(JobHandle {
            jobs: self.clone(),
            id,
        })
    }

    pub fn get(&self, id: &str) -> Option<JobTicket> {
        self.inner.0.lock().tickets.get(id).cloned()
    }

    pub fn active(&self) -> usize {
        self.inner.0.lock().active.len()
    }

    /// Blocks until no job is queued or running, or `timeout` passes.
    /// Returns whether everything finished.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let (lock, cv) = &*self.inner;
        let mut inner = lock.lock();
        let deadline = std::time::Instant::now() + timeout;
        while !inner.active.is_empty() {
            if cv.wait_until(&mut inner, deadline).timed_out() {
                return inner.active.is_empty();
            }
        }
        true
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobTicket)) {
        let (lock, cv) = &*self.inner;
        let mut inner = lock.lock();
        let Some(t) = inner.tickets.get_mut(id) else {
            return;
        };
        if t.state.is_finished() {
            return;
        }
        let before = t.progress;
        f(t);
        t.progress = t.progress.clamp(before, 1.0);
        if t.state.is_finished() {
            let (kind, project) = (t.kind, t.project_id.clone());
            if kind == JobKind::FitLayout && inner.fitting.get(&project).is_some_and(|j| j == id) {
                inner.fitting.remove(&project);
            }
            inner.active.remove(id);
            cv.notify_all();
        }
    }
}

impl JobHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn start(&self) {
        self.jobs.update(&self.id, |t| {
            if t.state == JobState::Queued {
                t.state = JobState::Running;
            }
        });
    }

    pub fn progress(&self, p: f64) {
        self.jobs.update(&self.id, |t| t.progress = p);
    }

    pub fn finish(self, result: Result<String, String>) {
        self.jobs.update(&self.id, |t| match result {
            Ok(r) => {
                t.state = JobState::Done;
                t.progress = 1.0;
                t.result_ref = Some(r);
            }
            Err(e) => {
                t.state = JobState::Failed;
                t.error = Some(e);
            }
        });
    }
}

impl Drop for JobHandle {
    /// A worker that panicked still releases its project.
    fn drop(&mut self) {
        self.jobs.update(&self.id, |t| {
            t.state = JobState::Failed;
            t.error.get_or_insert_with(|| "job aborted".into());
        });
    }
}

use std::time::{SystemTime, UNIX_EPOCH};

use acc_core::engine::{ActiveLoop, RunConfig};
use acc_core::metrics::{ami, ari};
use acc_core::simcore::all_pairs;
use acc_core::{Clustering, Pair, SimilarityStore};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

/// Display payload for one object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Item {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSimilarity {
    pub u: usize,
    pub v: usize,
    pub value: f64,
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub items: Vec<Item>,
    /// Loop hyperparameters. Dataset, oracle and seed-list keys are ignored.
    #[serde(default)]
    pub config: RunConfig,
    #[serde(default)]
    pub seed: u64,
    /// Prior similarities, recorded as one pseudo-query each.
    #[serde(default)]
    pub initial: Vec<InitialSimilarity>,
    /// Known labels for calibration sessions; enables live ARI/AMI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgement {
    Similar,
    Dissimilar,
    Unsure,
}

impl Judgement {
    pub fn value(self) -> f64 {
        match self {
            Judgement::Similar => 1.0,
            Judgement::Dissimilar => -1.0,
            Judgement::Unsure => 0.0,
        }
    }
}

/// A judgement word or a slider value in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Judgement(Judgement),
    Value(f64),
}

impl AnswerValue {
    pub fn value(self) -> f64 {
        match self {
            AnswerValue::Judgement(j) => j.value(),
            AnswerValue::Value(x) => x,
        }
    }
}

/// Body of `POST /sessions/{id}/answers`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitAnswer {
    pub u: usize,
    pub v: usize,
    pub answer: AnswerValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub u: usize,
    pub v: usize,
    /// 1-based index of the batch this task belongs to.
    pub batch: usize,
    pub items: [Item; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    pub batch_size: usize,
    /// Completed batches.
    pub iteration: usize,
    pub k: usize,
    pub queried_pairs: usize,
    pub total_queries: u64,
}

/// Metrics after each completed batch; only kept when truth is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub queries: u64,
    pub ari: f64,
    pub ami: f64,
    pub k: usize,
    pub requeried: usize,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCount {
    pub u: usize,
    pub v: usize,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub n: usize,
    pub iteration: usize,
    pub labels: Vec<usize>,
    pub k: usize,
    pub answered: Vec<PairCount>,
    pub total_queries: u64,
    pub pending: usize,
    pub batch_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ami: Option<f64>,
    pub trace: Vec<TraceRow>,
}

/// One line of a session's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Created { at_ms: u64, id: String, request: CreateSession },
    Answer { at_ms: u64, u: usize, v: usize, value: f64 },
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// A labelling session: the active loop with answers coming from outside.
#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    request: CreateSession,
    lp: ActiveLoop,
    pending: Vec<Pair>,
    answered: Vec<bool>,
    truth: Option<Clustering>,
    trace: Vec<TraceRow>,
    degraded: bool,
}

impl Session {
    /// Builds the session, clusters the prior and materialises batch 1.
    pub fn create(id: String, request: CreateSession) -> ServiceResult<Session> {
        if !valid_id(&id) {
            return Err(ServiceError::BadRequest(format!(
                "session id `{id}` must be 1-64 characters of [A-Za-z0-9_-]"
            )));
        }
        let n = request.items.len();
        if n < 2 {
            return Err(ServiceError::BadRequest("a session needs at least 2 items".into()));
        }
        let truth = match &request.truth {
            Some(labels) if labels.len() != n => {
                return Err(ServiceError::BadRequest(format!(
                    "truth has {} labels for {n} items",
                    labels.len()
                )))
            }
            Some(labels) => Some(Clustering::from_labels(labels.clone())?),
            None => None,
        };
        let settings = request.config.loop_settings(n)?;
        let mut store = SimilarityStore::new(n)?;
        for s in &request.initial {
            store.set_initial(s.u, s.v, s.value)?;
        }
        let (lp, _) = ActiveLoop::new(settings, store, request.seed)?;
        let mut session = Session {
            id,
            request,
            lp,
            pending: Vec::new(),
            answered: Vec::new(),
            truth,
            trace: Vec::new(),
            degraded: false,
        };
        session.push_trace(0)?;
        session.materialise()?;
        Ok(session)
    }

    /// Rebuilds a session from its event log.
    pub fn replay(events: &[Event]) -> ServiceResult<Session> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| ServiceError::Internal("empty event log".into()))?;
        let Event::Created { id, request, .. } = first else {
            return Err(ServiceError::Internal("event log must start with creation".into()));
        };
        let mut session = Session::create(id.clone(), request.clone())?;
        for e in rest {
            match *e {
                Event::Answer { u, v, value, .. } => {
                    session.submit(u, v, value)?;
                }
                Event::Created { .. } => {
                    return Err(ServiceError::Internal("duplicate creation event".into()))
                }
            }
        }
        Ok(session)
    }

    fn materialise(&mut self) -> ServiceResult<()> {
        let proposal = self.lp.propose()?;
        self.answered = vec![false; proposal.pairs.len()];
        self.pending = proposal.pairs;
        self.degraded = proposal.degraded;
        Ok(())
    }

    fn push_trace(&mut self, requeried: usize) -> ServiceResult<()> {
        if let Some(truth) = &self.truth {
            let c = self.lp.clustering();
            self.trace.push(TraceRow {
                iter: self.lp.iteration(),
                queries: self.lp.total_queries(),
                ari: ari(c, truth)?,
                ami: ami(c, truth)?,
                k: c.k(),
                requeried,
                degraded: self.iteration_degraded(),
            });
        }
        Ok(())
    }

    fn iteration_degraded(&self) -> bool {
        self.lp.iteration() > 0 && self.degraded
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn request(&self) -> &CreateSession {
        &self.request
    }

    pub fn n(&self) -> usize {
        self.lp.n()
    }

    pub fn store(&self) -> &SimilarityStore {
        self.lp.store()
    }

    pub fn clustering(&self) -> &Clustering {
        self.lp.clustering()
    }

    pub fn batch_size(&self) -> usize {
        self.pending.len()
    }

    /// Pending pairs in batch order, answered or not.
    pub fn pending(&self) -> &[Pair] {
        &self.pending
    }

    /// Up to `count` unanswered pairs of the current batch, in batch order.
    pub fn next_tasks(&self, count: usize) -> Vec<Task> {
        let items = &self.request.items;
        self.pending
            .iter()
            .zip(&self.answered)
            .filter(|(_, &done)| !done)
            .take(count)
            .map(|(p, _)| Task {
                u: p.u(),
                v: p.v(),
                batch: self.lp.iteration() + 1,
                items: [items[p.u()].clone(), items[p.v()].clone()],
            })
            .collect()
    }

    /// Index of `(u, v)` in the pending batch if it may be answered now.
    pub fn check_answer(&self, u: usize, v: usize, value: f64) -> ServiceResult<usize> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(ServiceError::BadRequest(format!("answer {value} outside [-1, 1]")));
        }
        let pair = Pair::checked(u, v, self.n())?;
        let slot = self
            .pending
            .iter()
            .position(|&p| p == pair)
            .ok_or_else(|| ServiceError::Conflict(format!("pair ({u}, {v}) is not in the pending batch")))?;
        if self.answered[slot] {
            return Err(ServiceError::Conflict(format!("pair ({u}, {v}) was already answered")));
        }
        Ok(slot)
    }

    /// Records an answer. Completing the batch re-clusters and materialises
    /// the next one.
    pub fn submit(&mut self, u: usize, v: usize, value: f64) -> ServiceResult<Progress> {
        let slot = self.check_answer(u, v, value)?;
        self.lp.record(self.pending[slot], value)?;
        self.answered[slot] = true;
        if self.answered.iter().all(|&a| a) {
            let (_, requeried) = self.lp.finish_batch()?;
            self.push_trace(requeried)?;
            self.materialise()?;
        }
        Ok(self.progress())
    }

    pub fn progress(&self) -> Progress {
        Progress {
            answered: self.answered.iter().filter(|&&a| a).count(),
            batch_size: self.pending.len(),
            iteration: self.lp.iteration(),
            k: self.lp.clustering().k(),
            queried_pairs: self.lp.query_counts().iter().filter(|&&c| c > 0).count(),
            total_queries: self.lp.total_queries(),
        }
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn snapshot(&self) -> ServiceResult<Snapshot> {
        let n = self.n();
        let counts = self.lp.query_counts();
        let answered = all_pairs(n)
            .zip(counts)
            .filter(|(_, &c)| c > 0)
            .map(|(p, &count)| PairCount {
                u: p.u(),
                v: p.v(),
                count,
            })
            .collect();
        let c = self.lp.clustering();
        let (ari, ami) = match &self.truth {
            Some(t) => (Some(ari(c, t)?), Some(ami(c, t)?)),
            None => (None, None),
        };
        Ok(Snapshot {
            id: self.id.clone(),
            n,
            iteration: self.lp.iteration(),
            labels: c.labels().to_vec(),
            k: c.k(),
            answered,
            total_queries: self.lp.total_queries(),
            pending: self.answered.iter().filter(|&&a| !a).count(),
            batch_size: self.pending.len(),
            ari,
            ami,
            trace: self.trace.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use acc_core::acquisition::Strategy;

    use super::*;

    fn request(n: usize, acq: Strategy, batch: usize) -> CreateSession {
        CreateSession {
            id: None,
            items: (0..n)
                .map(|i| Item {
                    text: Some(format!("item {i}")),
                    image: None,
                })
                .collect(),
            config: RunConfig {
                acq,
                batch_size: Some(batch),
                ..RunConfig::default()
            },
            seed: 3,
            initial: Vec::new(),
            truth: None,
        }
    }

    #[test]
    fn first_batch_is_distinct() {
        let s = Session::create("a".into(), request(10, Strategy::Entropy, 5)).unwrap();
        let tasks = s.next_tasks(5);
        assert_eq!(tasks.len(), 5);
        let mut pairs: Vec<_> = tasks.iter().map(|t| (t.u, t.v)).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 5);
        assert_eq!(tasks[0].batch, 1);
        assert_eq!(tasks[0].items[0].text.as_deref(), Some(format!("item {}", tasks[0].u).as_str()));
        assert_eq!(s.snapshot().unwrap().k, 10);
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(matches!(
            Session::create("a".into(), request(1, Strategy::Uniform, 1)),
            Err(ServiceError::BadRequest(_))
        ));
        assert!(matches!(
            Session::create("../x".into(), request(4, Strategy::Uniform, 1)),
            Err(ServiceError::BadRequest(_))
        ));
        let mut r = request(4, Strategy::Uniform, 1);
        r.truth = Some(vec![0, 1]);
        assert!(matches!(Session::create("a".into(), r), Err(ServiceError::BadRequest(_))));
        let r = request(4, Strategy::Uniform, 7);
        assert!(matches!(Session::create("a".into(), r), Err(ServiceError::BadRequest(_))));
    }

    #[test]
    fn mid_batch_and_conflicts() {
        let mut s = Session::create("a".into(), request(10, Strategy::Uniform, 5)).unwrap();
        let tasks = s.next_tasks(100);
        s.submit(tasks[0].u, tasks[0].v, 1.0).unwrap();
        let p = s.submit(tasks[1].u, tasks[1].v, -1.0).unwrap();
        assert_eq!((p.answered, p.total_queries), (2, 2));
        assert_eq!(s.next_tasks(100).len(), 3);
        assert!(matches!(s.submit(tasks[0].u, tasks[0].v, 1.0), Err(ServiceError::Conflict(_))));
        assert!(matches!(s.submit(tasks[2].u, tasks[2].v, 1.5), Err(ServiceError::BadRequest(_))));
        assert_eq!(s.snapshot().unwrap().total_queries, 2);
    }

    #[test]
    fn batch_rolls_over() {
        let mut s = Session::create("a".into(), request(6, Strategy::Uniform, 15)).unwrap();
        for t in s.next_tasks(15) {
            s.submit(t.u, t.v, 1.0).unwrap();
        }
        assert_eq!(s.progress().iteration, 1);
        assert_eq!(s.next_tasks(15).len(), 15);
        assert_eq!(s.next_tasks(15)[0].batch, 2);
        assert_eq!(s.clustering().k(), 1);
    }

    #[test]
    fn requery_averages() {
        // One pair, so every batch re-queries it.
        let mut s = Session::create("a".into(), request(2, Strategy::Uniform, 1)).unwrap();
        s.submit(0, 1, 1.0).unwrap();
        s.submit(0, 1, -1.0).unwrap();
        assert_eq!(s.store().estimate(0, 1), 0.0);
        assert_eq!(s.snapshot().unwrap().answered, vec![PairCount { u: 0, v: 1, count: 2 }]);
    }

    #[test]
    fn answer_vocabulary() {
        let parse = |s: &str| serde_json::from_str::<AnswerValue>(s).unwrap().value();
        assert_eq!(parse("\"similar\""), 1.0);
        assert_eq!(parse("\"dissimilar\""), -1.0);
        assert_eq!(parse("\"unsure\""), 0.0);
        assert_eq!(parse("0.25"), 0.25);
        assert!(serde_json::from_str::<AnswerValue>("\"maybe\"").is_err());
    }

    #[test]
    fn replay_matches_live_session() {
        let mut req = request(8, Strategy::Entropy, 4);
        req.initial = vec![InitialSimilarity { u: 0, v: 1, value: 1.0 }];
        let mut live = Session::create("a".into(), req.clone()).unwrap();
        let mut events = vec![Event::Created {
            at_ms: 0,
            id: "a".into(),
            request: req,
        }];
        for i in 0..10 {
            let t = live.next_tasks(1).remove(0);
            let value = if i % 3 == 0 { 0.0 } else { -1.0 };
            live.submit(t.u, t.v, value).unwrap();
            events.push(Event::Answer {
                at_ms: 0,
                u: t.u,
                v: t.v,
                value,
            });
        }
        let replayed = Session::replay(&events).unwrap();
        assert_eq!(replayed.store(), live.store());
        assert_eq!(replayed.clustering(), live.clustering());
        assert_eq!(replayed.pending(), live.pending());
        assert_eq!(replayed.snapshot().unwrap(), live.snapshot().unwrap());
    }
}

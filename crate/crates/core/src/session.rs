//! State of an interactive rating session.
//!
//! A session walks through rounds of `batch` simulated episodes. Each episode
//! is rated once with one of the five reward values; when the round is
//! closed the rated episodes feed one refinement update and the next round
//! opens. Episodes themselves are not stored: they are re-simulated from the
//! session seed, the round and their index.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{from_json, read_text, write_atomic, IoError};
use crate::refine::{is_valid_reward, REWARD_VALUES};
use crate::sim::{Metrics, RoundReport};

pub const SESSION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown episode `{0}`")]
    UnknownEpisode(String),
    #[error("episode `{id}` is already rated {reward}")]
    AlreadyRated { id: String, reward: f64 },
    #[error("reward {0} is not one of {REWARD_VALUES:?}")]
    InvalidReward(f64),
    #[error("session is {0:?}, not collecting ratings")]
    NotCollecting(SessionState),
    #[error("session is {0:?}, not refining")]
    NotRefining(SessionState),
    #[error("no episode of round {0} has been rated")]
    NoRatings(usize),
    #[error("invalid session: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Collecting,
    /// The round is closed and its update is being computed.
    Refining,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub seed: u64,
    pub batch: usize,
    pub rounds: usize,
    pub temperature: f64,
    /// Held-out balls evaluated after every round.
    #[serde(default = "default_eval_balls")]
    pub eval_balls: usize,
}

fn default_eval_balls() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rating {
    #[serde(serialize_with = "crate::refine::serialize_reward")]
    pub reward: f64,
    /// Client-chosen key that makes a retried submission harmless.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

/// What [`Session::rate`] did with a submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateOutcome {
    Stored,
    /// Same episode, reward and idempotency key as an earlier submission.
    Replayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub schema_version: u32,
    pub id: String,
    pub config: SessionConfig,
    /// Current round, 1-based. Stays at the last round once done.
    pub round: usize,
    pub state: SessionState,
    /// Episode ids of the current round in presentation order.
    pub episodes: Vec<String>,
    pub ratings: BTreeMap<String, Rating>,
    /// Held-out metrics of the primitive the session started from.
    #[serde(default)]
    pub base: Option<Metrics>,
    #[serde(default)]
    pub history: Vec<RoundReport>,
}

/// Id of episode `index` (0-based) of `round`.
pub fn episode_id(round: usize, index: usize) -> String {
    format!("r{round}-{index:03}")
}

impl Session {
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Result<Self, SessionError> {
        if config.batch == 0 || config.rounds == 0 || config.eval_balls == 0 {
            return Err(SessionError::Invalid("batch, rounds and eval_balls must be at least 1".into()));
        }
        if !(config.temperature.is_finite() && config.temperature > 0.0) {
            return Err(SessionError::Invalid(format!("temperature {} must be positive", config.temperature)));
        }
        let episodes = (0..config.batch).map(|i| episode_id(1, i)).collect();
        Ok(Self {
            schema_version: SESSION_SCHEMA_VERSION,
            id: id.into(),
            config,
            round: 1,
            state: SessionState::Collecting,
            episodes,
            ratings: BTreeMap::new(),
            base: None,
            history: Vec::new(),
        })
    }

    /// Position of `id` within the current round.
    pub fn episode_index(&self, id: &str) -> Option<usize> {
        self.episodes.iter().position(|e| e == id)
    }

    /// Unrated episodes of the current round, in order.
    pub fn pending(&self) -> Vec<&str> {
        self.episodes
            .iter()
            .filter(|e| !self.ratings.contains_key(*e))
            .map(String::as_str)
            .collect()
    }

    pub fn next_unrated(&self) -> Option<&str> {
        self.episodes
            .iter()
            .find(|e| !self.ratings.contains_key(*e))
            .map(String::as_str)
    }

    pub fn is_complete(&self) -> bool {
        self.ratings.len() == self.episodes.len()
    }

    pub fn rate(&mut self, id: &str, reward: f64, idempotency_key: Option<&str>) -> Result<RateOutcome, SessionError> {
        if !is_valid_reward(reward) {
            return Err(SessionError::InvalidReward(reward));
        }
        if self.state != SessionState::Collecting {
            return Err(SessionError::NotCollecting(self.state));
        }
        if self.episode_index(id).is_none() {
            return Err(SessionError::UnknownEpisode(id.to_owned()));
        }
        if let Some(existing) = self.ratings.get(id) {
            let replay = idempotency_key.is_some()
                && existing.idempotency_key.as_deref() == idempotency_key
                && existing.reward == reward;
            if replay {
                return Ok(RateOutcome::Replayed);
            }
            return Err(SessionError::AlreadyRated {
                id: id.to_owned(),
                reward: existing.reward,
            });
        }
        self.ratings.insert(
            id.to_owned(),
            Rating {
                reward,
                idempotency_key: idempotency_key.map(str::to_owned),
            },
        );
        Ok(RateOutcome::Stored)
    }

    /// Rated episodes of the current round as `(indices, rewards)` in
    /// episode order.
    pub fn rated(&self) -> (Vec<usize>, Vec<f64>) {
        self.episodes
            .iter()
            .enumerate()
            .filter_map(|(i, e)| self.ratings.get(e).map(|r| (i, r.reward)))
            .unzip()
    }

    /// Stops collecting for the current round. Unrated episodes are left
    /// out of its update.
    pub fn close_round(&mut self) -> Result<(Vec<usize>, Vec<f64>), SessionError> {
        if self.state != SessionState::Collecting {
            return Err(SessionError::NotCollecting(self.state));
        }
        if self.ratings.is_empty() {
            return Err(SessionError::NoRatings(self.round));
        }
        self.state = SessionState::Refining;
        Ok(self.rated())
    }

    /// Records the update of a closed round and opens the next one, or
    /// finishes the session after the last round.
    pub fn finish_round(&mut self, report: RoundReport) -> Result<(), SessionError> {
        if self.state != SessionState::Refining {
            return Err(SessionError::NotRefining(self.state));
        }
        self.history.push(report);
        self.ratings.clear();
        if self.round >= self.config.rounds {
            self.state = SessionState::Done;
            self.episodes.clear();
        } else {
            self.round += 1;
            self.state = SessionState::Collecting;
            self.episodes = (0..self.config.batch).map(|i| episode_id(self.round, i)).collect();
        }
        Ok(())
    }

    /// Checks the invariants a loaded session must satisfy.
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Invalid(m));
        if self.schema_version != SESSION_SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        let c = &self.config;
        if c.batch == 0 || c.rounds == 0 || c.eval_balls == 0 || !(c.temperature > 0.0) {
            return bad("config needs batch, rounds and eval_balls ≥ 1 and temperature > 0".into());
        }
        if self.round == 0 || self.round > self.config.rounds {
            return bad(format!("round {} outside 1..={}", self.round, self.config.rounds));
        }
        let expected: Vec<String> = match self.state {
            SessionState::Done => Vec::new(),
            _ => (0..self.config.batch).map(|i| episode_id(self.round, i)).collect(),
        };
        if self.episodes != expected {
            return bad(format!("episode list does not match round {}", self.round));
        }
        if let Some((id, _)) = self.ratings.iter().find(|(id, _)| !self.episodes.contains(id)) {
            return bad(format!("rating for `{id}`, which is not an episode of the current round"));
        }
        if let Some((id, r)) = self.ratings.iter().find(|(_, r)| !is_valid_reward(r.reward)) {
            return bad(format!("rating {} for `{id}` is not a reward value", r.reward));
        }
        let finished = self.round - usize::from(self.state != SessionState::Done);
        if self.history.len() != finished {
            return bad(format!("{} round reports for {finished} finished rounds", self.history.len()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("session serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let session: Session = from_json(text)?;
        session.validate()?;
        Ok(session)
    }

    /// Writes the session atomically; on return the state is durable.
    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        Ok(write_atomic(path, self.to_json().as_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = read_text(path)?;
        Self::from_json(&text).map_err(|e| match e {
            SessionError::Io(io) => SessionError::Io(io.in_file(path)),
            other => other,
        })
    }
}

//! Master-side training lifecycle: initialization, training loop, wrap-up.
//!
//! A [`Pipeline`] is a state machine the engine drives one communication round at a time.
//! Each stage callback receives the responses to the round it emitted last (an empty slice
//! on the first call of a stage) and returns the next round or [`Round::Done`].

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Stage};
use crate::phase::PhaseId;
use crate::transport::{broadcast, Transport};
use crate::wire::{encode_message, Message};

pub enum Round {
    Send(Vec<Message>),
    Done,
}

pub trait Pipeline {
    fn init(&mut self, responses: &[Message]) -> Result<Round>;
    fn step(&mut self, responses: &[Message]) -> Result<Round>;
    fn finish(&mut self, responses: &[Message]) -> Result<Round>;
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    /// Hard cap on rounds per stage.
    pub max_rounds: usize,
    /// Keep every exchanged message in the report (needed for transcript audits).
    pub keep_messages: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            max_rounds: 100_000,
            keep_messages: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub stage: Stage,
    /// 1-based index within the stage.
    pub index: usize,
    pub phase_ids: Vec<PhaseId>,
    pub messages: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Exchange {
    pub stage: Stage,
    pub round: usize,
    pub request: Message,
    pub response: Message,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub rounds: Vec<RoundRecord>,
    pub exchanges: Vec<Exchange>,
    /// SHA-256 over the encoded loop-stage requests and responses, in round order and
    /// request order within a round.
    pub transcript_hash: [u8; 32],
}

impl TrainingReport {
    pub fn rounds_in(&self, stage: Stage) -> usize {
        self.rounds.iter().filter(|r| r.stage == stage).count()
    }

    pub fn loop_rounds(&self) -> usize {
        self.rounds_in(Stage::Loop)
    }

    pub fn transcript_hex(&self) -> String {
        self.transcript_hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Wall time per phase id; a round is charged to every phase it carried.
    pub fn wall_ms_by_phase(&self) -> BTreeMap<PhaseId, f64> {
        let mut out = BTreeMap::new();
        for r in &self.rounds {
            let mut phases = r.phase_ids.clone();
            phases.dedup();
            for p in phases {
                *out.entry(p).or_insert(0.0) += r.elapsed.as_secs_f64() * 1e3;
            }
        }
        out
    }

    /// Request/response pairs exchanged in the training loop.
    pub fn loop_exchanges(&self) -> impl Iterator<Item = &Exchange> {
        self.exchanges.iter().filter(|e| e.stage == Stage::Loop)
    }
}

/// Fails with [`Error::Remote`] if any response carries an error body.
pub fn check_responses(responses: &[Message]) -> Result<()> {
    for r in responses {
        if let Some(message) = r.error() {
            return Err(Error::Remote {
                party: r.sender.clone(),
                phase: r.phase_id,
                message: message.to_owned(),
            });
        }
    }
    Ok(())
}

pub fn run_pipeline<P, T>(
    pipeline: &mut P,
    transport: &T,
    options: &EngineOptions,
) -> Result<TrainingReport>
where
    P: Pipeline + ?Sized,
    T: Transport + ?Sized,
{
    let mut report = TrainingReport {
        rounds: Vec::new(),
        exchanges: Vec::new(),
        transcript_hash: [0; 32],
    };
    let mut hasher = Sha256::new();
    for stage in [Stage::Init, Stage::Loop, Stage::Finish] {
        let mut responses: Vec<Message> = Vec::new();
        let mut index = 0usize;
        loop {
            index += 1;
            let abort = |source: Error| Error::Aborted {
                stage,
                round: index,
                source: Box::new(source),
            };
            let next = match stage {
                Stage::Init => pipeline.init(&responses),
                Stage::Loop => pipeline.step(&responses),
                Stage::Finish => pipeline.finish(&responses),
            }
            .map_err(abort)?;
            let requests = match next {
                Round::Done => break,
                Round::Send(requests) => requests,
            };
            if index > options.max_rounds {
                return Err(abort(Error::IterationCap(options.max_rounds)));
            }
            let started = Instant::now();
            responses = broadcast(transport, &requests).map_err(|e| abort(e.into()))?;
            let elapsed = started.elapsed();
            check_responses(&responses).map_err(abort)?;
            if stage == Stage::Loop {
                for (req, resp) in requests.iter().zip(&responses) {
                    hasher.update(encode_message(req).map_err(|e| abort(e.into()))?);
                    hasher.update(encode_message(resp).map_err(|e| abort(e.into()))?);
                }
            }
            report.rounds.push(RoundRecord {
                stage,
                index,
                phase_ids: requests.iter().map(|m| m.phase_id).collect(),
                messages: requests.len(),
                elapsed,
            });
            if options.keep_messages {
                report
                    .exchanges
                    .extend(requests.into_iter().zip(responses.iter().cloned()).map(
                        |(request, response)| Exchange {
                            stage,
                            round: index,
                            request,
                            response,
                        },
                    ));
            }
        }
    }
    report.transcript_hash = hasher.finalize().into();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::LoopbackTransport;
    use crate::wire::Body;

    struct Echo {
        parties: Vec<String>,
        rounds: usize,
        fail_at: Option<usize>,
        init_done: bool,
        finish_done: bool,
        steps: usize,
    }

    impl Echo {
        fn new(parties: &[&str], rounds: usize) -> Self {
            Self {
                parties: parties.iter().map(|s| s.to_string()).collect(),
                rounds,
                fail_at: None,
                init_done: false,
                finish_done: false,
                steps: 0,
            }
        }

        fn all(&self, phase: i32) -> Vec<Message> {
            self.parties
                .iter()
                .map(|p| Message::request("master", p, phase, Body::new().with("phase", phase as i64)))
                .collect()
        }
    }

    impl Pipeline for Echo {
        fn init(&mut self, _: &[Message]) -> Result<Round> {
            if self.init_done {
                return Ok(Round::Done);
            }
            self.init_done = true;
            Ok(Round::Send(self.all(0)))
        }

        fn step(&mut self, _: &[Message]) -> Result<Round> {
            self.steps += 1;
            if Some(self.steps) == self.fail_at {
                return Err(Error::Protocol("boom".into()));
            }
            if self.steps > self.rounds {
                return Ok(Round::Done);
            }
            Ok(Round::Send(self.all(1)))
        }

        fn finish(&mut self, _: &[Message]) -> Result<Round> {
            if self.finish_done {
                return Ok(Round::Done);
            }
            self.finish_done = true;
            Ok(Round::Send(self.all(2)))
        }
    }

    fn transport() -> LoopbackTransport {
        let mut t = LoopbackTransport::new();
        for p in ["a", "b"] {
            t.register(p, |req: Message| req.reply(req.body.clone())).unwrap();
        }
        t
    }

    fn opts() -> EngineOptions {
        EngineOptions {
            max_rounds: 100,
            keep_messages: true,
        }
    }

    #[test]
    fn immediate_done_runs_init_and_finish_once() {
        let mut p = Echo::new(&["a", "b"], 0);
        let report = run_pipeline(&mut p, &transport(), &opts()).unwrap();
        assert_eq!(report.rounds_in(Stage::Init), 1);
        assert_eq!(report.loop_rounds(), 0);
        assert_eq!(report.rounds_in(Stage::Finish), 1);
    }

    #[test]
    fn five_rounds_two_parties_ten_loop_exchanges() {
        let mut p = Echo::new(&["a", "b"], 5);
        let report = run_pipeline(&mut p, &transport(), &opts()).unwrap();
        assert_eq!(report.loop_exchanges().count(), 10);
        // lifecycle order: init+, loop*, finish+
        let stages: Vec<Stage> = report.rounds.iter().map(|r| r.stage).collect();
        let mut sorted = stages.clone();
        sorted.sort_by_key(|s| *s as u8);
        assert_eq!(stages, sorted);
    }

    #[test]
    fn failure_names_the_round() {
        let mut p = Echo::new(&["a", "b"], 10);
        p.fail_at = Some(3);
        match run_pipeline(&mut p, &transport(), &opts()) {
            Err(Error::Aborted { stage, round, .. }) => {
                assert_eq!(stage, Stage::Loop);
                assert_eq!(round, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn replays_hash_identically() {
        let a = run_pipeline(&mut Echo::new(&["a", "b"], 4), &transport(), &opts()).unwrap();
        let b = run_pipeline(&mut Echo::new(&["a", "b"], 4), &transport(), &opts()).unwrap();
        assert_eq!(a.transcript_hash, b.transcript_hash);
        let c = run_pipeline(&mut Echo::new(&["a", "b"], 5), &transport(), &opts()).unwrap();
        assert_ne!(a.transcript_hash, c.transcript_hash);
    }

    #[test]
    fn round_cap_is_enforced() {
        let mut p = Echo::new(&["a"], 1000);
        let options = EngineOptions {
            max_rounds: 3,
            keep_messages: false,
        };
        let err = run_pipeline(&mut p, &transport(), &options).unwrap_err();
        assert!(matches!(err.root(), Error::IterationCap(3)));
    }

    #[test]
    fn remote_errors_abort() {
        let mut t = LoopbackTransport::new();
        t.register("a", |req: Message| req.error_reply("nope")).unwrap();
        let mut p = Echo::new(&["a"], 1);
        let err = run_pipeline(&mut p, &t, &opts()).unwrap_err();
        assert!(matches!(
            err,
            Error::Aborted {
                stage: Stage::Init,
                round: 1,
                ..
            }
        ));
        assert!(matches!(err.root(), Error::Remote { .. }));
    }
}

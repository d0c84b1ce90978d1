use nalgebra::DVector;

use super::{master_aggregate, KernelConfig, KernelModel};
use crate::error::{Error, Result};
use crate::party::MASTER;
use crate::phase::{KERNEL_FINALIZE, KERNEL_PREDICT, KERNEL_SETUP, KERNEL_UPDATE};
use crate::pipeline::{check_responses, Pipeline, Round};
use crate::prediction::Predictions;
use crate::transport::{broadcast, Transport};
use crate::wire::{ids_to_floats, Body, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    IterationCap,
    Converged,
}

#[derive(Debug, Clone, Default)]
pub struct KernelHistory {
    /// `|v|^2 / N` after initialization (index 0) and after every iteration.
    pub objective: Vec<f64>,
    /// `max |v(t) - v(t-1)|` per iteration.
    pub delta: Vec<f64>,
    /// Party index updated in each iteration.
    pub selected: Vec<usize>,
    /// `v(t)` for every `t`, when requested.
    pub residuals: Vec<Vec<f64>>,
}

/// Coordinator side of kernel training. Iteration `t` updates party `(t - 1) mod P`.
pub struct KernelTrainer {
    parties: Vec<String>,
    config: KernelConfig,
    n: usize,
    cache: Vec<DVector<f64>>,
    v: DVector<f64>,
    t: usize,
    pending: Option<usize>,
    init_sent: bool,
    finish_sent: bool,
    record_residuals: bool,
    history: KernelHistory,
    stop: Option<StopReason>,
}

impl KernelTrainer {
    pub fn new(parties: Vec<String>, config: KernelConfig) -> Result<Self> {
        config.validate()?;
        if parties.is_empty() {
            return Err(Error::Config("parties: at least one party is required".into()));
        }
        Ok(Self {
            parties,
            config,
            n: 0,
            cache: Vec::new(),
            v: DVector::zeros(0),
            t: 0,
            pending: None,
            init_sent: false,
            finish_sent: false,
            record_residuals: false,
            history: KernelHistory::default(),
            stop: None,
        })
    }

    pub fn record_residuals(mut self, on: bool) -> Self {
        self.record_residuals = on;
        self
    }

    pub fn iterations(&self) -> usize {
        self.t
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.v
    }

    /// Last contribution received from each party, in party order.
    pub fn cached_contributions(&self) -> &[DVector<f64>] {
        &self.cache
    }

    pub fn history(&self) -> &KernelHistory {
        &self.history
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn model(&self) -> KernelModel {
        KernelModel {
            algorithm: "kernel".into(),
            parties: self.parties.clone(),
            features: self.config.features,
            gamma: self.config.gamma,
            seed: self.config.seed,
            normalization: self.config.normalization,
            lambda: self.config.lambda,
            iterations: self.t,
        }
    }

    fn to_all(&self, phase: i32, body: impl Fn(usize) -> Body) -> Vec<Message> {
        self.parties
            .iter()
            .enumerate()
            .map(|(p, name)| Message::request(MASTER, name, phase, body(p)))
            .collect()
    }

    fn record(&mut self) {
        self.history.objective.push(self.v.norm_squared() / self.n.max(1) as f64);
        if self.record_residuals {
            self.history.residuals.push(self.v.as_slice().to_vec());
        }
    }

    fn absorb_setup(&mut self, responses: &[Message]) -> Result<()> {
        let mut active = 0;
        for (p, r) in responses.iter().enumerate() {
            let n = r.body.index("N")?;
            if p == 0 {
                self.n = n;
            } else if n != self.n {
                return Err(Error::Protocol(format!(
                    "{} has {n} samples, {} has {}",
                    r.sender, responses[0].sender, self.n
                )));
            }
            active += usize::from(r.body.int("active")? != 0);
            let u = r.body.float_vec("u")?;
            if u.len() != n {
                return Err(Error::Protocol(format!("{} sent a contribution of the wrong length", r.sender)));
            }
            self.cache.push(DVector::from_column_slice(u));
        }
        if active != 1 {
            return Err(Error::Protocol(format!(
                "exactly one party must hold labels, found {active}"
            )));
        }
        self.v = master_aggregate(&self.cache)?;
        self.record();
        Ok(())
    }

    fn absorb_update(&mut self, cp: usize, responses: &[Message]) -> Result<f64> {
        for (p, r) in responses.iter().enumerate() {
            if p == cp {
                let u = r.body.float_vec("u")?;
                if u.len() != self.n {
                    return Err(Error::Protocol(format!("{} sent a contribution of the wrong length", r.sender)));
                }
                self.cache[p] = DVector::from_column_slice(u);
            } else if r.body.int("unchanged")? != 1 {
                return Err(Error::Protocol(format!("{} was not selected but changed", r.sender)));
            }
        }
        let v = master_aggregate(&self.cache)?;
        let delta = (&v - &self.v).amax();
        self.v = v;
        self.t += 1;
        self.history.selected.push(cp);
        self.history.delta.push(delta);
        self.record();
        Ok(delta)
    }
}

impl Pipeline for KernelTrainer {
    fn init(&mut self, responses: &[Message]) -> Result<Round> {
        if self.init_sent {
            self.absorb_setup(responses)?;
            return Ok(Round::Done);
        }
        self.init_sent = true;
        Ok(Round::Send(self.to_all(KERNEL_SETUP, |p| {
            let mut body = Body::new().with("party", p as i64);
            self.config.write_to(&mut body);
            body
        })))
    }

    fn step(&mut self, responses: &[Message]) -> Result<Round> {
        if let Some(cp) = self.pending.take() {
            let delta = self.absorb_update(cp, responses)?;
            if delta < self.config.tol {
                self.stop = Some(StopReason::Converged);
                return Ok(Round::Done);
            }
        }
        if self.t >= self.config.t_max {
            self.stop = Some(StopReason::IterationCap);
            return Ok(Round::Done);
        }
        let cp = self.t % self.parties.len();
        self.pending = Some(cp);
        let v = self.v.as_slice().to_vec();
        let t = self.t as i64 + 1;
        Ok(Round::Send(self.to_all(KERNEL_UPDATE, |p| {
            Body::new()
                .with("t", t)
                .with("v", v.clone())
                .with("selected", i64::from(p == cp))
        })))
    }

    fn finish(&mut self, _responses: &[Message]) -> Result<Round> {
        if self.finish_sent {
            return Ok(Round::Done);
        }
        self.finish_sent = true;
        let iterations = self.t as i64;
        Ok(Round::Send(self.to_all(KERNEL_FINALIZE, |_| {
            Body::new().with("iterations", iterations)
        })))
    }
}

/// Sums the parties' partial scores; label is the sign with ties going to `+1`.
pub fn predict_kernel<T: Transport + ?Sized>(
    transport: &T,
    model: &KernelModel,
    ids: &[u64],
) -> Result<Predictions> {
    if ids.is_empty() {
        return Ok(Predictions {
            ids: Vec::new(),
            scores: Vec::new(),
            labels: Vec::new(),
        });
    }
    let config = model.config();
    let requests: Vec<Message> = model
        .parties
        .iter()
        .enumerate()
        .map(|(p, name)| {
            let mut body = Body::new().with("party", p as i64);
            config.write_to(&mut body);
            body.insert("ids", ids_to_floats(ids));
            Message::request(MASTER, name, KERNEL_PREDICT, body)
        })
        .collect();
    let responses = broadcast(transport, &requests)?;
    check_responses(&responses)?;
    let mut scores = vec![0.0; ids.len()];
    for r in &responses {
        let partial = r.body.float_vec("scores")?;
        if partial.len() != ids.len() {
            return Err(Error::Protocol(format!("{} returned {} scores for {} ids", r.sender, partial.len(), ids.len())));
        }
        for (s, x) in scores.iter_mut().zip(partial) {
            *s += x;
        }
    }
    let labels = scores.iter().map(|&s| if s >= 0.0 { 1.0 } else { -1.0 }).collect();
    Ok(Predictions {
        ids: ids.to_vec(),
        scores,
        labels,
    })
}

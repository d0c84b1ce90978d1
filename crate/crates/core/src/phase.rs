//! Phase identifiers and per-party dispatch.
//!
//! Phase namespaces: kernel training 0–9, forest training 10–19, prediction 20–29,
//! control 90–99.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::transport::Handler;
use crate::wire::{Body, Message};

pub type PhaseId = i32;

pub const KERNEL_SETUP: PhaseId = 0;
pub const KERNEL_UPDATE: PhaseId = 1;
pub const KERNEL_FINALIZE: PhaseId = 2;

pub const RF_SETUP: PhaseId = 10;
pub const RF_STATS: PhaseId = 11;
pub const RF_SPLIT: PhaseId = 12;
pub const RF_SAMPLE: PhaseId = 13;
pub const RF_FIND: PhaseId = 14;
pub const RF_FINALIZE: PhaseId = 15;

pub const KERNEL_PREDICT: PhaseId = 20;
pub const RF_STEP: PhaseId = 21;

pub const SHUTDOWN: PhaseId = 90;
pub const PING: PhaseId = 91;

pub fn phase_name(id: PhaseId) -> Option<&'static str> {
    Some(match id {
        KERNEL_SETUP => "KERNEL_SETUP",
        KERNEL_UPDATE => "KERNEL_UPDATE",
        KERNEL_FINALIZE => "KERNEL_FINALIZE",
        RF_SETUP => "RF_SETUP",
        RF_STATS => "RF_STATS",
        RF_SPLIT => "RF_SPLIT",
        RF_SAMPLE => "RF_SAMPLE",
        RF_FIND => "RF_FIND",
        RF_FINALIZE => "RF_FINALIZE",
        KERNEL_PREDICT => "KERNEL_PREDICT",
        RF_STEP => "RF_STEP",
        SHUTDOWN => "SHUTDOWN",
        PING => "PING",
        _ => return None,
    })
}

pub type PhaseHandler<S> = Box<dyn FnMut(&mut S, &Message) -> Result<Body> + Send>;

/// Maps phase ids to the operation a party runs for them.
pub struct PhaseRegistry<S> {
    handlers: BTreeMap<PhaseId, PhaseHandler<S>>,
}

impl<S> Default for PhaseRegistry<S> {
    fn default() -> Self {
        Self {
            handlers: BTreeMap::new(),
        }
    }
}

impl<S> PhaseRegistry<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, id: PhaseId, handler: F) -> Result<()>
    where
        F: FnMut(&mut S, &Message) -> Result<Body> + Send + 'static,
    {
        if self.handlers.contains_key(&id) {
            return Err(Error::DuplicatePhase(id));
        }
        self.handlers.insert(id, Box::new(handler));
        Ok(())
    }

    pub fn is_registered(&self, id: PhaseId) -> bool {
        self.handlers.contains_key(&id)
    }

    pub fn phases(&self) -> impl Iterator<Item = PhaseId> + '_ {
        self.handlers.keys().copied()
    }

    /// Runs the handler for `request.phase_id`. Unknown phases and handler failures come
    /// back as error responses, never as silent no-ops.
    pub fn dispatch(&mut self, state: &mut S, request: &Message) -> Message {
        match self.handlers.get_mut(&request.phase_id) {
            Some(handler) => match handler(state, request) {
                Ok(body) => request.reply(body),
                Err(e) => request.error_reply(e.to_string()),
            },
            None => request.error_reply(format!("unknown phase {}", request.phase_id)),
        }
    }
}

/// A party: its state plus the registry that operates on it.
pub struct Service<S> {
    state: S,
    registry: PhaseRegistry<S>,
}

impl<S> Service<S> {
    pub fn new(state: S, registry: PhaseRegistry<S>) -> Self {
        Self { state, registry }
    }

    pub fn state(&self) -> &S {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut S {
        &mut self.state
    }

    pub fn into_state(self) -> S {
        self.state
    }
}

impl<S: Send> Handler for Service<S> {
    fn handle(&mut self, request: Message) -> Message {
        match request.phase_id {
            SHUTDOWN | PING if !self.registry.is_registered(request.phase_id) => {
                request.reply(Body::new())
            }
            _ => self.registry.dispatch(&mut self.state, &request),
        }
    }
}

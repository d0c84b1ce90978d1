use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{Handler, Transport, TransportError};
use crate::wire::{decode_message, encode_message, Message};

type SharedHandler = Arc<Mutex<dyn Handler>>;

/// In-process transport. Messages still pass through the wire codec in both directions
/// so that a loopback run exchanges exactly the bytes a TCP run would.
#[derive(Default, Clone)]
pub struct LoopbackTransport {
    parties: HashMap<String, SharedHandler>,
}

impl LoopbackTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<H: Handler + 'static>(
        &mut self,
        name: impl Into<String>,
        handler: H,
    ) -> Result<(), TransportError> {
        self.register_shared(name, Arc::new(Mutex::new(handler)))
    }

    /// Registers a handler the caller keeps a handle to (for inspecting party state).
    pub fn register_shared<H: Handler + 'static>(
        &mut self,
        name: impl Into<String>,
        handler: Arc<Mutex<H>>,
    ) -> Result<(), TransportError> {
        let name = name.into();
        if self.parties.contains_key(&name) {
            return Err(TransportError::DuplicateParty(name));
        }
        self.parties.insert(name, handler);
        Ok(())
    }

    pub fn parties(&self) -> impl Iterator<Item = &str> {
        self.parties.keys().map(String::as_str)
    }
}

impl Transport for LoopbackTransport {
    fn deliver(&self, request: &Message) -> Result<Message, TransportError> {
        let receiver = &request.receiver;
        let handler = self
            .parties
            .get(receiver)
            .ok_or_else(|| TransportError::UnknownReceiver(receiver.clone()))?;
        let frame = encode_message(request).map_err(|source| TransportError::Encode {
            receiver: receiver.clone(),
            source,
        })?;
        let inbound = decode_message(&frame).map_err(|source| TransportError::Decode {
            receiver: receiver.clone(),
            source,
        })?;
        let response = {
            let mut guard = handler
                .lock()
                .map_err(|_| TransportError::HandlerPanicked(receiver.clone()))?;
            guard.handle(inbound)
        };
        let frame = encode_message(&response).map_err(|source| TransportError::Encode {
            receiver: receiver.clone(),
            source,
        })?;
        decode_message(&frame).map_err(|source| TransportError::Decode {
            receiver: receiver.clone(),
            source,
        })
    }
}

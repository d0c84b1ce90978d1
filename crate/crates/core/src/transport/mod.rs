//! Request/response delivery between named parties.
//!
//! Every exchange is synchronous: a request goes to exactly one receiver and the caller
//! blocks until that receiver's handler has produced the response. Handlers of one party
//! never run concurrently; fan-out across distinct parties goes through [`broadcast`].

mod loopback;
mod tcp;

use std::collections::HashSet;

use crate::wire::{Message, MessageKind, WireError};

pub use loopback::LoopbackTransport;
pub use tcp::{serve_tcp, ServeOutcome, TcpTransport, DEFAULT_TIMEOUT};

/// Something that turns a request into a response.
pub trait Handler: Send {
    fn handle(&mut self, request: Message) -> Message;
}

impl<F> Handler for F
where
    F: FnMut(Message) -> Message + Send,
{
    fn handle(&mut self, request: Message) -> Message {
        self(request)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("unknown receiver {0:?}")]
    UnknownReceiver(String),
    #[error("party {0:?} is already registered")]
    DuplicateParty(String),
    #[error("receiver {0:?} appears more than once in a broadcast")]
    DuplicateReceiver(String),
    #[error("connection to {receiver:?} failed: {reason}")]
    ConnectionFailed { receiver: String, reason: String },
    #[error("timed out waiting for {receiver:?}")]
    Timeout { receiver: String },
    #[error("malformed frame from {receiver:?}: {source}")]
    Decode { receiver: String, source: WireError },
    #[error("cannot encode message for {receiver:?}: {source}")]
    Encode { receiver: String, source: WireError },
    #[error("message to {0:?} is not a request")]
    NotARequest(String),
    #[error("invalid response from {receiver:?}: {reason}")]
    Protocol { receiver: String, reason: String },
    #[error("handler of {0:?} panicked")]
    HandlerPanicked(String),
}

impl TransportError {
    /// The party the failed exchange was addressed to.
    pub fn receiver(&self) -> &str {
        match self {
            TransportError::UnknownReceiver(r)
            | TransportError::DuplicateParty(r)
            | TransportError::DuplicateReceiver(r)
            | TransportError::NotARequest(r)
            | TransportError::HandlerPanicked(r) => r,
            TransportError::ConnectionFailed { receiver, .. }
            | TransportError::Timeout { receiver }
            | TransportError::Decode { receiver, .. }
            | TransportError::Encode { receiver, .. }
            | TransportError::Protocol { receiver, .. } => receiver,
        }
    }
}

/// Raw delivery of one request. Use [`send_message`] to get response validation.
pub trait Transport: Send + Sync {
    fn deliver(&self, request: &Message) -> Result<Message, TransportError>;
}

/// Delivers `request` and returns the receiver's response, checking that the response
/// comes from the receiver and echoes the request's phase.
pub fn send_message<T: Transport + ?Sized>(
    transport: &T,
    request: &Message,
) -> Result<Message, TransportError> {
    if request.kind != MessageKind::Request {
        return Err(TransportError::NotARequest(request.receiver.clone()));
    }
    let response = transport.deliver(request)?;
    let violation = if response.kind != MessageKind::Response {
        Some("expected a response message".to_owned())
    } else if response.sender != request.receiver {
        Some(format!("response sent by {:?}", response.sender))
    } else if response.receiver != request.sender {
        Some(format!("response addressed to {:?}", response.receiver))
    } else if response.phase_id != request.phase_id {
        Some(format!(
            "phase {} does not echo request phase {}",
            response.phase_id, request.phase_id
        ))
    } else {
        None
    };
    match violation {
        Some(reason) => Err(TransportError::Protocol {
            receiver: request.receiver.clone(),
            reason,
        }),
        None => Ok(response),
    }
}

/// Sends all requests concurrently and waits for every response. Responses are aligned
/// with `requests`; the first failure in request order is returned if any send fails.
pub fn broadcast<T: Transport + ?Sized>(
    transport: &T,
    requests: &[Message],
) -> Result<Vec<Message>, TransportError> {
    let mut seen = HashSet::new();
    for r in requests {
        if !seen.insert(r.receiver.as_str()) {
            return Err(TransportError::DuplicateReceiver(r.receiver.clone()));
        }
    }
    match requests {
        [] => Ok(Vec::new()),
        [single] => Ok(vec![send_message(transport, single)?]),
        _ => {
            let results: Vec<Result<Message, TransportError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = requests
                    .iter()
                    .map(|req| scope.spawn(move || send_message(transport, req)))
                    .collect();
                handles
                    .into_iter()
                    .zip(requests)
                    .map(|(h, req)| {
                        h.join()
                            .unwrap_or_else(|_| Err(TransportError::HandlerPanicked(req.receiver.clone())))
                    })
                    .collect()
            });
            results.into_iter().collect()
        }
    }
}

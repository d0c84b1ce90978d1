use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use tracing::{debug, warn};

use super::{Handler, Transport, TransportError};
use crate::phase::SHUTDOWN;
use crate::wire::{read_message, write_message, FrameIoError, Message};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// One TCP connection per request: connect, write one frame, read one frame, close.
#[derive(Debug, Clone)]
pub struct TcpTransport {
    endpoints: HashMap<String, String>,
    timeout: Duration,
}

impl TcpTransport {
    pub fn new(timeout: Duration) -> Self {
        Self {
            endpoints: HashMap::new(),
            timeout,
        }
    }

    pub fn with_endpoints<I, N, A>(endpoints: I, timeout: Duration) -> Self
    where
        I: IntoIterator<Item = (N, A)>,
        N: Into<String>,
        A: Into<String>,
    {
        let mut t = Self::new(timeout);
        for (name, addr) in endpoints {
            t.add_endpoint(name, addr);
        }
        t
    }

    pub fn add_endpoint(&mut self, name: impl Into<String>, address: impl Into<String>) {
        self.endpoints.insert(name.into(), address.into());
    }

    fn resolve(&self, receiver: &str) -> Result<SocketAddr, TransportError> {
        let address = self
            .endpoints
            .get(receiver)
            .ok_or_else(|| TransportError::UnknownReceiver(receiver.to_owned()))?;
        address
            .to_socket_addrs()
            .map_err(|e| TransportError::ConnectionFailed {
                receiver: receiver.to_owned(),
                reason: format!("cannot resolve {address}: {e}"),
            })?
            .next()
            .ok_or_else(|| TransportError::ConnectionFailed {
                receiver: receiver.to_owned(),
                reason: format!("{address} resolves to no address"),
            })
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock)
}

impl Transport for TcpTransport {
    fn deliver(&self, request: &Message) -> Result<Message, TransportError> {
        let receiver = request.receiver.clone();
        let addr = self.resolve(&receiver)?;
        let io_err = |e: io::Error| {
            if is_timeout(&e) {
                TransportError::Timeout {
                    receiver: receiver.clone(),
                }
            } else {
                TransportError::ConnectionFailed {
                    receiver: receiver.clone(),
                    reason: e.to_string(),
                }
            }
        };
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(io_err)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(io_err)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(io_err)?;
        stream.set_nodelay(true).map_err(io_err)?;
        write_message(&mut stream, request).map_err(|e| match e {
            FrameIoError::Io(e) => io_err(e),
            FrameIoError::Wire(source) => TransportError::Encode {
                receiver: receiver.clone(),
                source,
            },
        })?;
        read_message(&mut stream).map_err(|e| match e {
            FrameIoError::Io(e) => io_err(e),
            FrameIoError::Wire(source) => TransportError::Decode {
                receiver: receiver.clone(),
                source,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeOutcome {
    pub requests_served: u64,
}

/// Serves requests addressed to `name` until a shutdown request arrives. Connections are
/// handled one at a time, so the handler never sees concurrent requests.
pub fn serve_tcp(
    listener: &TcpListener,
    name: &str,
    handler: &mut dyn Handler,
    timeout: Duration,
) -> io::Result<ServeOutcome> {
    let mut served = 0u64;
    loop {
        let (mut stream, peer) = listener.accept()?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        let request = match read_message(&mut stream) {
            Ok(m) => m,
            Err(e) => {
                warn!(%peer, error = %e, "dropping malformed request");
                continue;
            }
        };
        let response = if request.receiver != name {
            request.error_reply(format!("this is {name:?}, not {:?}", request.receiver))
        } else {
            handler.handle(request.clone())
        };
        if let Err(e) = write_message(&mut stream, &response) {
            warn!(%peer, error = %e, "failed to send response");
        }
        served += 1;
        debug!(phase = request.phase_id, %peer, "served request");
        if request.phase_id == SHUTDOWN && request.receiver == name {
            return Ok(ServeOutcome {
                requests_served: served,
            });
        }
    }
}

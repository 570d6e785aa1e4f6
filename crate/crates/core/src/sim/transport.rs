//! Message transports: in-process channel pairs, TCP streams, and a fault
//! decorator that drops or delays frames for the refresh-vulnerability
//! demonstration.

use std::io::{BufReader, BufWriter};
use std::net::TcpStream;
use std::sync::mpsc::{Receiver, Sender};
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::proto::{ProtoError, WireMessage};

pub trait Transport: Send {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtoError>;
    fn recv(&mut self) -> Result<WireMessage, ProtoError>;
}

/// One end of an in-process duplex channel.
pub struct InprocTransport {
    tx: Sender<WireMessage>,
    rx: Receiver<WireMessage>,
}

impl InprocTransport {
    /// A connected pair of endpoints.
    pub fn pair() -> (InprocTransport, InprocTransport) {
        let (tx_a, rx_b) = std::sync::mpsc::channel();
        let (tx_b, rx_a) = std::sync::mpsc::channel();
        (InprocTransport { tx: tx_a, rx: rx_a }, InprocTransport { tx: tx_b, rx: rx_b })
    }
}

impl Transport for InprocTransport {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtoError> {
        self.tx
            .send(msg.clone())
            .map_err(|_| ProtoError::Io(std::io::Error::other("peer hung up")))
    }

    fn recv(&mut self) -> Result<WireMessage, ProtoError> {
        self.rx
            .recv()
            .map_err(|_| ProtoError::Io(std::io::Error::other("peer hung up")))
    }
}

/// Framed TCP transport with buffered reads and writes.
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self, ProtoError> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self { reader, writer: BufWriter::new(stream) })
    }

    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, ProtoError> {
        let sock_addr: std::net::SocketAddr = addr
            .parse()
            .map_err(|e| ProtoError::Io(std::io::Error::other(format!("bad address: {e}"))))?;
        let stream = TcpStream::connect_timeout(&sock_addr, timeout)?;
        Self::new(stream)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtoError> {
        msg.write_to(&mut self.writer)
    }

    fn recv(&mut self) -> Result<WireMessage, ProtoError> {
        WireMessage::read_from(&mut self.reader)
    }
}

/// Fault-injection decorator: drops outgoing frames with a configured
/// probability and adds a fixed delay, emulating a lossy or slow link.
pub struct FaultyTransport<T: Transport> {
    inner: T,
    drop_probability: f64,
    delay: Duration,
    rng: ChaCha8Rng,
    /// Restrict drops to specific message types (e.g. only refresh frames).
    drop_only: Option<super::proto::MsgType>,
}

impl<T: Transport> FaultyTransport<T> {
    pub fn new(inner: T, drop_probability: f64, delay: Duration, rng: ChaCha8Rng) -> Self {
        Self { inner, drop_probability, delay, rng, drop_only: None }
    }

    pub fn dropping_only(mut self, msg_type: super::proto::MsgType) -> Self {
        self.drop_only = Some(msg_type);
        self
    }
}

impl<T: Transport> Transport for FaultyTransport<T> {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ProtoError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let eligible = self.drop_only.map_or(true, |t| t == msg.msg_type);
        if eligible && self.rng.random::<f64>() < self.drop_probability {
            return Ok(()); // silently lost
        }
        self.inner.send(msg)
    }

    fn recv(&mut self) -> Result<WireMessage, ProtoError> {
        self.inner.recv()
    }
}

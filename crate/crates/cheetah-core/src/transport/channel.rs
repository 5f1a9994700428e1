//! Duplex channels: an in-process loopback pair for tests and a blocking
//! TCP stream for real deployments, both behind the same counting wrapper.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{Receiver, Sender};

use super::{frame_decode, ByteCounters, Message, WireError, MAX_PAYLOAD};

/// One full frame in, one full frame out, over any byte-stream transport.
pub trait Duplex: Send {
    fn send_bytes(&mut self, bytes: &[u8]) -> std::io::Result<()>;
    /// Receive exactly one frame (header-delimited).
    fn recv_frame_bytes(&mut self) -> std::io::Result<Vec<u8>>;
}

fn read_frame<S: Read>(stream: &mut S) -> std::io::Result<Vec<u8>> {
    let mut head = [0u8; 10];
    stream.read_exact(&mut head)?;
    let len = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "oversized frame",
        ));
    }
    let mut rest = vec![0u8; len + 4];
    stream.read_exact(&mut rest)?;
    let mut out = head.to_vec();
    out.append(&mut rest);
    Ok(out)
}

/// Blocking stream transport (TCP in production).
pub struct StreamDuplex<S: Read + Write + Send> {
    stream: S,
}

impl<S: Read + Write + Send> StreamDuplex<S> {
    pub fn new(stream: S) -> Self {
        StreamDuplex { stream }
    }
}

impl<S: Read + Write + Send> Duplex for StreamDuplex<S> {
    fn send_bytes(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.stream.write_all(bytes)?;
        self.stream.flush()
    }

    fn recv_frame_bytes(&mut self) -> std::io::Result<Vec<u8>> {
        read_frame(&mut self.stream)
    }
}

/// In-process loopback endpoint.
pub struct LoopbackDuplex {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl Duplex for LoopbackDuplex {
    fn send_bytes(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.tx
            .send(bytes.to_vec())
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "peer closed"))
    }

    fn recv_frame_bytes(&mut self) -> std::io::Result<Vec<u8>> {
        self.rx
            .recv()
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "peer closed"))
    }
}

/// Connected pair of in-process endpoints.
pub fn loopback() -> (LoopbackDuplex, LoopbackDuplex) {
    let (atx, brx) = std::sync::mpsc::channel();
    let (btx, arx) = std::sync::mpsc::channel();
    (
        LoopbackDuplex { tx: atx, rx: arx },
        LoopbackDuplex { tx: btx, rx: brx },
    )
}

/// Message channel with byte accounting. At most one in-flight message per
/// direction: the protocol is strictly request/response.
pub struct Channel {
    duplex: Box<dyn Duplex>,
    ct_len: usize,
    counters: ByteCounters,
}

impl Channel {
    pub fn new(duplex: impl Duplex + 'static, ct_len: usize) -> Self {
        Channel {
            duplex: Box::new(duplex),
            ct_len,
            counters: ByteCounters::default(),
        }
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), WireError> {
        let bytes = super::frame_encode(msg);
        self.counters.note_sent(msg.msg_type(), bytes.len());
        self.duplex.send_bytes(&bytes)?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message, WireError> {
        let bytes = self.duplex.recv_frame_bytes()?;
        let (msg, used) = frame_decode(&bytes, self.ct_len)?;
        debug_assert_eq!(used, bytes.len());
        self.counters.note_received(msg.msg_type(), bytes.len());
        Ok(msg)
    }

    pub fn counters(&self) -> ByteCounters {
        self.counters
    }

    /// Frame overhead for a message carrying one ciphertext payload.
    pub fn ct_len(&self) -> usize {
        self.ct_len
    }
}

/// Connect to a serving peer.
pub fn connect(addr: impl ToSocketAddrs, ct_len: usize) -> std::io::Result<Channel> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true).ok();
    Ok(Channel::new(StreamDuplex::new(stream), ct_len))
}

/// Accept sessions forever, one handler thread per connection. Returns
/// only on listener failure. Tests and the CLI use `serve_once` /
/// their own accept loops when they need to stop.
pub fn serve<F>(addr: impl ToSocketAddrs, ct_len: usize, handler: F) -> std::io::Result<()>
where
    F: Fn(Channel) + Send + Sync + 'static,
{
    let listener = TcpListener::bind(addr)?;
    let handler = std::sync::Arc::new(handler);
    for stream in listener.incoming() {
        let stream = stream?;
        stream.set_nodelay(true).ok();
        let h = handler.clone();
        std::thread::spawn(move || h(Channel::new(StreamDuplex::new(stream), ct_len)));
    }
    Ok(())
}

/// Accept exactly one session.
pub fn serve_once(listener: &TcpListener, ct_len: usize) -> std::io::Result<Channel> {
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true).ok();
    Ok(Channel::new(StreamDuplex::new(stream), ct_len))
}

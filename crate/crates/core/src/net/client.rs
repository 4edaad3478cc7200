use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::codec::{encode_frame, read_frame, ErrorCode, Message, INFINITE_TIMEOUT};
use super::{NetError, NodeAddress, PROTOCOL_VERSION};
use crate::space::{Notify, SpaceError, SpaceResult, TupleSpace, Watch};
use crate::tuple::{Template, Tuple};

type Callback = Box<dyn FnOnce(SpaceResult<Message>) + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectOptions {
    pub attempts: u32,
    pub interval: Duration,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        ConnectOptions { attempts: 5, interval: Duration::from_millis(200) }
    }
}

struct Writer {
    out: BufWriter<TcpStream>,
    next_id: u64,
}

struct Inner {
    stream: TcpStream,
    writer: Mutex<Writer>,
    pending: Mutex<HashMap<u64, Callback>>,
    lost: AtomicBool,
}

impl Inner {
    /// Sends a request; `cb` receives the correlated reply exactly once.
    fn submit(&self, message: &Message, cb: Callback) -> SpaceResult<u64> {
        let mut w = self.writer.lock().unwrap();
        w.next_id += 1;
        let id = w.next_id;
        self.pending.lock().unwrap().insert(id, cb);
        if self.lost.load(Ordering::SeqCst) {
            return Err(self.fail(id));
        }
        let frame = encode_frame(id, message);
        if w.out.write_all(&frame).and_then(|_| w.out.flush()).is_err() {
            self.lost.store(true, Ordering::SeqCst);
            return Err(self.fail(id));
        }
        Ok(id)
    }

    fn fail(&self, id: u64) -> SpaceError {
        self.pending.lock().unwrap().remove(&id);
        SpaceError::ConnectionLost
    }

    /// Sends a frame that expects no reply.
    fn send_oneway(&self, message: &Message) {
        let mut w = self.writer.lock().unwrap();
        w.next_id += 1;
        let frame = encode_frame(w.next_id, message);
        let _ = w.out.write_all(&frame).and_then(|_| w.out.flush());
    }

    fn call(&self, message: &Message) -> SpaceResult<Message> {
        let (tx, rx) = mpsc::sync_channel(1);
        self.submit(message, Box::new(move |r| {
            let _ = tx.send(r);
        }))?;
        rx.recv().unwrap_or(Err(SpaceError::ConnectionLost))
    }

    fn read_loop(self: Arc<Self>) {
        let mut reader = BufReader::new(self.stream.try_clone().expect("clone stream"));
        while let Ok(Some(frame)) = read_frame(&mut reader) {
            let result = frame.message().map_err(|e| SpaceError::Malformed(e.to_string()));
            let cb = self.pending.lock().unwrap().remove(&frame.request_id);
            // Replies to unknown ids (e.g. request 0 after a framing error) are dropped.
            if let Some(cb) = cb {
                cb(result);
            }
        }
        self.lost.store(true, Ordering::SeqCst);
        let orphans: Vec<Callback> = self.pending.lock().unwrap().drain().map(|(_, cb)| cb).collect();
        for cb in orphans {
            cb(Err(SpaceError::ConnectionLost));
        }
    }
}

fn remote_error(code: u16, message: String) -> SpaceError {
    match code {
        c if c == ErrorCode::Timeout as u16 => SpaceError::Timeout,
        c if c == ErrorCode::ShuttingDown as u16 => SpaceError::ShuttingDown,
        c if c == ErrorCode::Malformed as u16 => SpaceError::Malformed(message),
        code => SpaceError::Remote { code, message },
    }
}

fn unexpected(m: Message) -> SpaceError {
    match m {
        Message::ReplyErr { code, message } => remote_error(code, message),
        other => SpaceError::Malformed(format!("unexpected reply type {}", other.msg_type())),
    }
}

fn timeout_ms(timeout: Option<Duration>) -> u64 {
    match timeout {
        None => INFINITE_TIMEOUT,
        Some(d) if d.is_zero() => 0,
        // Round up so a sub-millisecond wait is not turned into a probe.
        Some(d) => u64::try_from(d.as_nanos().div_ceil(1_000_000)).unwrap_or(INFINITE_TIMEOUT - 1).min(INFINITE_TIMEOUT - 1),
    }
}

/// Client handle to a remote tuple space. One multiplexed connection;
/// safe to share between threads.
pub struct RemoteSpace {
    address: NodeAddress,
    server_name: String,
    inner: Arc<Inner>,
    reader: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for RemoteSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteSpace").field("address", &self.address).finish()
    }
}

/// Connects with the default retry policy (5 attempts, 200 ms apart).
pub fn connect(address: &NodeAddress, client_name: &str) -> Result<RemoteSpace, NetError> {
    connect_with(address, client_name, ConnectOptions::default())
}

pub fn connect_with(address: &NodeAddress, client_name: &str, opts: ConnectOptions) -> Result<RemoteSpace, NetError> {
    let attempts = opts.attempts.max(1);
    let mut last = String::new();
    let mut stream = None;
    for attempt in 0..attempts {
        if attempt > 0 {
            thread::sleep(opts.interval);
        }
        match TcpStream::connect((address.host.as_str(), address.port)) {
            Ok(s) => {
                stream = Some(s);
                break;
            }
            Err(e) => last = e.to_string(),
        }
    }
    let Some(stream) = stream else {
        return Err(NetError::Unreachable { address: format!("{}:{}", address.host, address.port), attempts, last });
    };
    stream.set_nodelay(true)?;
    let inner = Arc::new(Inner {
        writer: Mutex::new(Writer { out: BufWriter::new(stream.try_clone()?), next_id: 0 }),
        stream,
        pending: Mutex::new(HashMap::new()),
        lost: AtomicBool::new(false),
    });
    let reader = {
        let inner = inner.clone();
        thread::Builder::new().name(format!("{client_name}->{}", address.name)).spawn(move || inner.read_loop())?
    };
    let mut remote = RemoteSpace { address: address.clone(), server_name: String::new(), inner, reader: Some(reader) };
    match remote.inner.call(&Message::Hello { version: PROTOCOL_VERSION, name: client_name.to_owned() })? {
        Message::Hello { version, name } if version == PROTOCOL_VERSION => remote.server_name = name,
        Message::Hello { version, .. } => return Err(NetError::VersionMismatch { server: version }),
        Message::ReplyErr { code, .. } if code == ErrorCode::Unsupported as u16 => {
            return Err(NetError::VersionMismatch { server: 0 })
        }
        other => return Err(NetError::Space(unexpected(other))),
    }
    Ok(remote)
}

impl RemoteSpace {
    pub fn address(&self) -> &NodeAddress {
        &self.address
    }

    /// Name the server announced in its HELLO.
    pub fn server_name(&self) -> &str {
        &self.server_name
    }

    pub fn is_connected(&self) -> bool {
        !self.inner.lost.load(Ordering::SeqCst)
    }

    /// Sends any request and returns the raw reply. Mostly for tests.
    pub fn request(&self, message: &Message) -> SpaceResult<Message> {
        self.inner.call(message)
    }

    fn probe(&self, message: Message) -> SpaceResult<Option<Tuple>> {
        match self.inner.call(&message)? {
            Message::ReplyTuple(t) => Ok(Some(t)),
            Message::ReplyNone => Ok(None),
            other => Err(unexpected(other)),
        }
    }

    fn blocking(&self, message: Message) -> SpaceResult<Tuple> {
        match self.inner.call(&message)? {
            Message::ReplyTuple(t) => Ok(t),
            // A zero-timeout probe that found nothing.
            Message::ReplyNone => Err(SpaceError::Timeout),
            other => Err(unexpected(other)),
        }
    }
}

impl TupleSpace for RemoteSpace {
    fn out(&self, tuple: Tuple) -> SpaceResult<()> {
        match self.inner.call(&Message::Out(tuple))? {
            Message::ReplyNone => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    fn rdp(&self, template: &Template) -> SpaceResult<Option<Tuple>> {
        self.probe(Message::Rdp(template.clone()))
    }

    fn inp(&self, template: &Template) -> SpaceResult<Option<Tuple>> {
        self.probe(Message::Inp(template.clone()))
    }

    fn rd(&self, template: &Template, timeout: Option<Duration>) -> SpaceResult<Tuple> {
        self.blocking(Message::Rd { timeout_ms: timeout_ms(timeout), template: template.clone() })
    }

    fn take(&self, template: &Template, timeout: Option<Duration>) -> SpaceResult<Tuple> {
        self.blocking(Message::In { timeout_ms: timeout_ms(timeout), template: template.clone() })
    }

    fn count(&self, template: &Template) -> SpaceResult<usize> {
        match self.inner.call(&Message::Count(template.clone()))? {
            Message::CountReply(n) => Ok(n as usize),
            other => Err(unexpected(other)),
        }
    }

    fn watch(&self, template: &Template, notify: Notify) -> SpaceResult<Watch> {
        let message = Message::Rd { timeout_ms: INFINITE_TIMEOUT, template: template.clone() };
        let id = self.inner.submit(
            &message,
            Box::new(move |reply| {
                notify(match reply {
                    Ok(Message::ReplyTuple(t)) => Ok(Some(t)),
                    Ok(Message::ReplyNone) => Ok(None),
                    Ok(other) => Err(unexpected(other)),
                    Err(e) => Err(e),
                })
            }),
        )?;
        let inner = Arc::downgrade(&self.inner);
        Ok(Watch::new(move || {
            if let Some(inner) = inner.upgrade() {
                inner.send_oneway(&Message::Cancel { target: id });
            }
        }))
    }
}

impl Drop for RemoteSpace {
    fn drop(&mut self) {
        let _ = self.inner.stream.shutdown(Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timeout_encoding() {
        assert_eq!(timeout_ms(None), INFINITE_TIMEOUT);
        assert_eq!(timeout_ms(Some(Duration::ZERO)), 0);
        assert_eq!(timeout_ms(Some(Duration::from_micros(10))), 1);
        assert_eq!(timeout_ms(Some(Duration::from_millis(50))), 50);
        assert_eq!(timeout_ms(Some(Duration::MAX)), INFINITE_TIMEOUT - 1);
    }
}

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::{BufReader, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex, Weak};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::codec::{encode_frame, read_frame, ErrorCode, Message, ReadError, INFINITE_TIMEOUT};
use super::{NetError, NodeAddress, PROTOCOL_VERSION};
use crate::store::{LocalSpace, Registration, WaiterId};

enum Pending {
    Waiting(WaiterId),
    /// The waiter completed before the reader recorded it.
    Completed,
}

struct Conn {
    stream: TcpStream,
    tx: Mutex<mpsc::Sender<Vec<u8>>>,
    pending: Mutex<HashMap<u64, Pending>>,
}

impl Conn {
    fn send(&self, request_id: u64, message: &Message) {
        let _ = self.tx.lock().unwrap().send(encode_frame(request_id, message));
    }

    /// Removes a parked request if it is still waiting.
    fn unpark(&self, request_id: u64) -> Option<WaiterId> {
        let mut pending = self.pending.lock().unwrap();
        match pending.get(&request_id) {
            Some(Pending::Waiting(id)) => {
                let id = *id;
                pending.remove(&request_id);
                Some(id)
            }
            _ => None,
        }
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Deadline {
    at: Instant,
    seq: u64,
}

type TimerQueue = (BinaryHeap<Reverse<Deadline>>, HashMap<u64, (Weak<Conn>, u64)>);

#[derive(Default)]
struct Timers {
    queue: Mutex<TimerQueue>,
    wake: Condvar,
    seq: AtomicU64,
}

struct Shared {
    space: LocalSpace,
    name: String,
    stopping: AtomicBool,
    conns: Mutex<HashMap<u64, Arc<Conn>>>,
    timers: Timers,
}

impl Shared {
    fn arm(&self, conn: &Arc<Conn>, request_id: u64, after: Duration) {
        let seq = self.timers.seq.fetch_add(1, Ordering::SeqCst);
        let mut q = self.timers.queue.lock().unwrap();
        q.0.push(Reverse(Deadline { at: Instant::now() + after, seq }));
        q.1.insert(seq, (Arc::downgrade(conn), request_id));
        self.timers.wake.notify_one();
    }

    fn run_timers(&self) {
        let mut q = self.timers.queue.lock().unwrap();
        loop {
            if self.stopping.load(Ordering::SeqCst) {
                return;
            }
            let now = Instant::now();
            match q.0.peek() {
                Some(Reverse(d)) if d.at <= now => {
                    let seq = d.seq;
                    q.0.pop();
                    let entry = q.1.remove(&seq);
                    drop(q);
                    if let Some((conn, request_id)) = entry {
                        if let Some(conn) = conn.upgrade() {
                            self.expire(&conn, request_id);
                        }
                    }
                    q = self.timers.queue.lock().unwrap();
                }
                Some(Reverse(d)) => {
                    let wait = d.at - now;
                    q = self.timers.wake.wait_timeout(q, wait).unwrap().0;
                }
                None => q = self.timers.wake.wait(q).unwrap(),
            }
        }
    }

    fn expire(&self, conn: &Conn, request_id: u64) {
        if let Some(id) = conn.unpark(request_id) {
            if self.space.cancel(id) {
                conn.send(request_id, &Message::error(ErrorCode::Timeout, "timed out"));
            }
        }
    }

    fn park(&self, conn: &Arc<Conn>, request_id: u64, timeout_ms: u64, template: &crate::Template, destructive: bool) {
        if timeout_ms == 0 {
            let hit = if destructive { self.space.inp(template) } else { self.space.rdp(template) };
            let reply = hit.map_or(Message::ReplyNone, Message::ReplyTuple);
            conn.send(request_id, &reply);
            return;
        }
        let weak = Arc::downgrade(conn);
        let complete = Box::new(move |t| {
            if let Some(conn) = weak.upgrade() {
                {
                    let mut pending = conn.pending.lock().unwrap();
                    if pending.remove(&request_id).is_none() {
                        pending.insert(request_id, Pending::Completed);
                    }
                }
                conn.send(request_id, &Message::ReplyTuple(t));
            }
        });
        match self.space.register(template, destructive, complete) {
            Registration::Ready(t) => conn.send(request_id, &Message::ReplyTuple(t)),
            Registration::Waiting(id) => {
                {
                    let mut pending = conn.pending.lock().unwrap();
                    if let Some(Pending::Completed) = pending.remove(&request_id) {
                        return;
                    }
                    pending.insert(request_id, Pending::Waiting(id));
                }
                if timeout_ms != INFINITE_TIMEOUT {
                    self.arm(conn, request_id, Duration::from_millis(timeout_ms));
                }
            }
        }
    }

    fn dispatch(&self, conn: &Arc<Conn>, request_id: u64, message: Message) {
        if self.stopping.load(Ordering::SeqCst) {
            conn.send(request_id, &Message::error(ErrorCode::ShuttingDown, "shutting down"));
            return;
        }
        let reply = match message {
            Message::Out(t) => {
                self.space.out(t);
                Message::ReplyNone
            }
            Message::Rdp(t) => self.space.rdp(&t).map_or(Message::ReplyNone, Message::ReplyTuple),
            Message::Inp(t) => self.space.inp(&t).map_or(Message::ReplyNone, Message::ReplyTuple),
            Message::Count(t) => Message::CountReply(self.space.count(&t) as u64),
            Message::Rd { timeout_ms, template } => return self.park(conn, request_id, timeout_ms, &template, false),
            Message::In { timeout_ms, template } => return self.park(conn, request_id, timeout_ms, &template, true),
            Message::Cancel { target } => {
                if let Some(id) = conn.unpark(target) {
                    if self.space.cancel(id) {
                        conn.send(target, &Message::ReplyNone);
                    }
                }
                return;
            }
            Message::Hello { version, .. } if version == PROTOCOL_VERSION => {
                Message::Hello { version: PROTOCOL_VERSION, name: self.name.clone() }
            }
            Message::Hello { version, .. } => {
                Message::error(ErrorCode::Unsupported, format!("unsupported protocol version {version}"))
            }
            other => Message::error(ErrorCode::Unsupported, format!("unexpected message type {}", other.msg_type())),
        };
        conn.send(request_id, &reply);
    }

    /// Cancels every parked request of a connection, optionally telling the client why.
    fn drain(&self, conn: &Conn, reply: Option<&Message>) {
        let parked: Vec<(u64, WaiterId)> = conn
            .pending
            .lock()
            .unwrap()
            .drain()
            .filter_map(|(rid, p)| match p {
                Pending::Waiting(id) => Some((rid, id)),
                Pending::Completed => None,
            })
            .collect();
        for (rid, id) in parked {
            if self.space.cancel(id) {
                if let Some(m) = reply {
                    conn.send(rid, m);
                }
            }
        }
    }
}

fn serve_conn(shared: Arc<Shared>, conn: Arc<Conn>, conn_id: u64) {
    let mut reader = BufReader::new(conn.stream.try_clone().expect("clone stream"));
    loop {
        match read_frame(&mut reader) {
            Ok(Some(frame)) => match frame.message() {
                Ok(m) => shared.dispatch(&conn, frame.request_id, m),
                Err(super::codec::Malformed::UnknownMessage(t)) => conn.send(
                    frame.request_id,
                    &Message::error(ErrorCode::Unsupported, format!("unknown message type {t}")),
                ),
                Err(e) => conn.send(frame.request_id, &Message::error(ErrorCode::Malformed, e.to_string())),
            },
            Ok(None) | Err(ReadError::Io(_)) => break,
            Err(ReadError::Malformed(e)) => {
                // Framing is lost; report and drop the connection.
                conn.send(0, &Message::error(ErrorCode::Malformed, e.to_string()));
                break;
            }
        }
    }
    // Parked requests of a departed client must not consume tuples later.
    shared.drain(&conn, None);
    shared.conns.lock().unwrap().remove(&conn_id);
    let _ = conn.stream.shutdown(Shutdown::Read);
}

fn writer_loop(mut stream: TcpStream, rx: mpsc::Receiver<Vec<u8>>) {
    while let Ok(frame) = rx.recv() {
        if stream.write_all(&frame).is_err() {
            break;
        }
    }
    let _ = stream.shutdown(Shutdown::Write);
}

/// A running tuple-space server. Dropping it shuts it down.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
    timers: Option<JoinHandle<()>>,
}

/// Binds `address` and starts serving `space`. Port 0 picks a free port;
/// see [`Server::local_addr`].
pub fn serve(space: LocalSpace, address: &NodeAddress) -> Result<Server, NetError> {
    let listener = TcpListener::bind((address.host.as_str(), address.port)).map_err(|e| match e.kind() {
        ErrorKind::AddrInUse => NetError::AddressInUse(format!("{}:{}", address.host, address.port)),
        _ => NetError::Io(e),
    })?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        space,
        name: address.name.clone(),
        stopping: AtomicBool::new(false),
        conns: Mutex::new(HashMap::new()),
        timers: Timers::default(),
    });
    let timers = {
        let shared = shared.clone();
        thread::Builder::new().name(format!("{}-timers", address.name)).spawn(move || shared.run_timers())?
    };
    let accept = {
        let shared = shared.clone();
        let name = address.name.clone();
        thread::Builder::new().name(format!("{name}-accept")).spawn(move || {
            let mut next_id = 0u64;
            for stream in listener.incoming() {
                if shared.stopping.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let _ = stream.set_nodelay(true);
                let Ok(write_half) = stream.try_clone() else { continue };
                let (tx, rx) = mpsc::channel();
                let conn = Arc::new(Conn { stream, tx: Mutex::new(tx), pending: Mutex::new(HashMap::new()) });
                next_id += 1;
                shared.conns.lock().unwrap().insert(next_id, conn.clone());
                let _ = thread::Builder::new()
                    .name(format!("{name}-tx{next_id}"))
                    .spawn(move || writer_loop(write_half, rx));
                let shared = shared.clone();
                let id = next_id;
                let _ = thread::Builder::new()
                    .name(format!("{name}-rx{next_id}"))
                    .spawn(move || serve_conn(shared, conn, id));
            }
        })?
    };
    Ok(Server { addr, shared, accept: Some(accept), timers: Some(timers) })
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// The bound address under the server's name, with the actual port.
    pub fn address(&self) -> NodeAddress {
        NodeAddress::new(self.shared.name.clone(), self.addr.ip().to_string(), self.addr.port())
    }

    pub fn space(&self) -> &LocalSpace {
        &self.shared.space
    }

    /// Stops accepting, fails parked requests with `shutting_down` and
    /// closes every connection.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.shared.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        // Unblock accept().
        let _ = TcpStream::connect_timeout(&self.wake_addr(), Duration::from_millis(500));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        {
            let _q = self.shared.timers.queue.lock().unwrap();
            self.shared.timers.wake.notify_all();
        }
        if let Some(h) = self.timers.take() {
            let _ = h.join();
        }
        let conns: Vec<Arc<Conn>> = self.shared.conns.lock().unwrap().values().cloned().collect();
        let bye = Message::error(ErrorCode::ShuttingDown, "shutting down");
        for conn in conns {
            self.shared.drain(&conn, Some(&bye));
            let _ = conn.stream.shutdown(Shutdown::Read);
        }
    }

    fn wake_addr(&self) -> SocketAddr {
        let mut a = self.addr;
        if a.ip().is_unspecified() {
            a.set_ip(match a {
                SocketAddr::V4(_) => std::net::Ipv4Addr::LOCALHOST.into(),
                SocketAddr::V6(_) => std::net::Ipv6Addr::LOCALHOST.into(),
            });
        }
        a
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

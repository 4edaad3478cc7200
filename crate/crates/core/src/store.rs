//! The local tuple space: an indexed, thread-safe multiset with blocking
//! read and take.
//!
//! Tuples live in buckets keyed by arity and, when the first field is a
//! string, that string. Each bucket has its own lock and keeps tuples in
//! insertion order. Blocked requests are kept in a separate waiter list.
//!
//! Wake-up protocol: `out` inserts into the bucket first and only then checks
//! whether any waiter is registered. Registration increments the waiter count
//! before scanning the buckets and holds the waiter lock until the waiter is
//! queued. Either the scan sees the new tuple or `out` sees the count, so a
//! wake-up cannot be lost.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex, RwLock};
use std::time::Duration;

use crate::tuple::{Template, Tuple, Value};

/// Index key of a bucket.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BucketKey {
    pub arity: usize,
    pub head: Option<String>,
}

impl BucketKey {
    pub fn of(tuple: &Tuple) -> BucketKey {
        let head = match &tuple[0] {
            Value::Str(s) => Some(s.clone()),
            _ => None,
        };
        BucketKey { arity: tuple.arity(), head }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("timed out waiting for a matching tuple")]
pub struct Timeout;

/// Identifies a registered waiter so it can be cancelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WaiterId(u64);

/// Callback run exactly once when a waiter is satisfied. It runs while the
/// store's waiter lock is held and must not call back into the store.
pub type Completion = Box<dyn FnOnce(Tuple) + Send>;

/// Outcome of [`LocalSpace::register`].
pub enum Registration {
    /// A matching tuple was already present; the completion was dropped.
    Ready(Tuple),
    Waiting(WaiterId),
}

struct Waiter {
    id: u64,
    template: Template,
    destructive: bool,
    complete: Completion,
}

type Bucket = Mutex<VecDeque<(u64, Tuple)>>;

#[derive(Default)]
struct Index {
    by_arity: HashMap<usize, HashMap<Option<String>, Arc<Bucket>>>,
}

#[derive(Default)]
struct Inner {
    index: RwLock<Index>,
    waiters: Mutex<Vec<Waiter>>,
    waiter_count: AtomicUsize,
    next_stamp: AtomicU64,
    next_waiter: AtomicU64,
}

/// Handle to a local tuple space. Clones share the same space.
#[derive(Clone, Default)]
pub struct LocalSpace {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for LocalSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalSpace")
            .field("len", &self.len())
            .field("waiters", &self.inner.waiter_count.load(Ordering::SeqCst))
            .finish()
    }
}

impl LocalSpace {
    pub fn new() -> LocalSpace {
        LocalSpace::default()
    }

    fn bucket_for(&self, key: &BucketKey) -> Arc<Bucket> {
        if let Some(b) = self
            .inner
            .index
            .read()
            .unwrap()
            .by_arity
            .get(&key.arity)
            .and_then(|m| m.get(&key.head))
        {
            return b.clone();
        }
        let mut index = self.inner.index.write().unwrap();
        index
            .by_arity
            .entry(key.arity)
            .or_default()
            .entry(key.head.clone())
            .or_default()
            .clone()
    }

    /// Buckets that can hold a tuple matching `template`.
    fn candidates(&self, template: &Template) -> Vec<Arc<Bucket>> {
        let index = self.inner.index.read().unwrap();
        let Some(by_head) = index.by_arity.get(&template.arity()) else {
            return Vec::new();
        };
        match template.head_str() {
            Some(head) => by_head.get(&Some(head.to_owned())).cloned().into_iter().collect(),
            None => by_head.values().cloned().collect(),
        }
    }

    /// Oldest matching tuple across the candidate buckets, with its stamp and bucket.
    fn find_oldest(&self, template: &Template) -> Option<(u64, Tuple, Arc<Bucket>)> {
        let mut best: Option<(u64, Tuple, Arc<Bucket>)> = None;
        for bucket in self.candidates(template) {
            let hit = {
                let guard = bucket.lock().unwrap();
                guard.iter().find(|(_, t)| template.matches(t)).cloned()
            };
            if let Some((stamp, t)) = hit {
                if best.as_ref().is_none_or(|(s, _, _)| stamp < *s) {
                    best = Some((stamp, t, bucket));
                }
            }
        }
        best
    }

    fn remove_stamp(bucket: &Bucket, stamp: u64) -> Option<Tuple> {
        let mut guard = bucket.lock().unwrap();
        let pos = guard.binary_search_by_key(&stamp, |(s, _)| *s).ok()?;
        guard.remove(pos).map(|(_, t)| t)
    }

    fn take_oldest(&self, template: &Template) -> Option<Tuple> {
        loop {
            let (stamp, _, bucket) = self.find_oldest(template)?;
            if let Some(t) = Self::remove_stamp(&bucket, stamp) {
                return Some(t);
            }
            // Lost a race with another taker; look again.
        }
    }

    /// Inserts a tuple and wakes the waiters it satisfies.
    pub fn out(&self, tuple: Tuple) {
        let key = BucketKey::of(&tuple);
        let bucket = self.bucket_for(&key);
        let stamp = {
            let mut guard = bucket.lock().unwrap();
            let stamp = self.inner.next_stamp.fetch_add(1, Ordering::SeqCst);
            guard.push_back((stamp, tuple.clone()));
            stamp
        };
        if self.inner.waiter_count.load(Ordering::SeqCst) == 0 {
            return;
        }
        let mut waiters = self.inner.waiters.lock().unwrap();
        let mut i = 0;
        let mut taker = None;
        while i < waiters.len() {
            let w = &waiters[i];
            if !w.template.matches(&tuple) {
                i += 1;
            } else if w.destructive {
                if taker.is_none() {
                    taker = Some(i);
                }
                i += 1;
            } else {
                // Removals happen after any recorded taker, so its index stays valid.
                let w = waiters.remove(i);
                self.inner.waiter_count.fetch_sub(1, Ordering::SeqCst);
                (w.complete)(tuple.clone());
            }
        }
        if let Some(i) = taker {
            // Someone may have taken it through inp in the meantime.
            if let Some(t) = Self::remove_stamp(&bucket, stamp) {
                let w = waiters.remove(i);
                self.inner.waiter_count.fetch_sub(1, Ordering::SeqCst);
                (w.complete)(t);
            }
        }
    }

    /// Copy of the oldest matching tuple, if any.
    pub fn rdp(&self, template: &Template) -> Option<Tuple> {
        self.find_oldest(template).map(|(_, t, _)| t)
    }

    /// Removes and returns the oldest matching tuple, if any.
    pub fn inp(&self, template: &Template) -> Option<Tuple> {
        self.take_oldest(template)
    }

    pub fn count(&self, template: &Template) -> usize {
        self.candidates(template)
            .iter()
            .map(|b| b.lock().unwrap().iter().filter(|(_, t)| template.matches(t)).count())
            .sum()
    }

    /// Number of stored tuples.
    pub fn len(&self) -> usize {
        let index = self.inner.index.read().unwrap();
        index
            .by_arity
            .values()
            .flat_map(|m| m.values())
            .map(|b| b.lock().unwrap().len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of registered waiters.
    pub fn waiting(&self) -> usize {
        self.inner.waiter_count.load(Ordering::SeqCst)
    }

    /// Either satisfies the request immediately or queues `complete` to run
    /// when a matching tuple is written.
    pub fn register(&self, template: &Template, destructive: bool, complete: Completion) -> Registration {
        let mut waiters = self.inner.waiters.lock().unwrap();
        self.inner.waiter_count.fetch_add(1, Ordering::SeqCst);
        let hit = if destructive { self.take_oldest(template) } else { self.rdp(template) };
        if let Some(t) = hit {
            self.inner.waiter_count.fetch_sub(1, Ordering::SeqCst);
            return Registration::Ready(t);
        }
        let id = self.inner.next_waiter.fetch_add(1, Ordering::SeqCst);
        waiters.push(Waiter { id, template: template.clone(), destructive, complete });
        Registration::Waiting(WaiterId(id))
    }

    /// Deregisters a waiter. Returns `false` if it was already completed,
    /// in which case its completion has run.
    pub fn cancel(&self, id: WaiterId) -> bool {
        let mut waiters = self.inner.waiters.lock().unwrap();
        match waiters.iter().position(|w| w.id == id.0) {
            Some(i) => {
                waiters.remove(i);
                self.inner.waiter_count.fetch_sub(1, Ordering::SeqCst);
                true
            }
            None => false,
        }
    }

    fn blocking(&self, template: &Template, destructive: bool, timeout: Option<Duration>) -> Result<Tuple, Timeout> {
        let (tx, rx) = mpsc::sync_channel(1);
        let complete: Completion = Box::new(move |t| {
            let _ = tx.send(t);
        });
        let id = match self.register(template, destructive, complete) {
            Registration::Ready(t) => return Ok(t),
            Registration::Waiting(id) => id,
        };
        let received = match timeout {
            None => rx.recv().ok(),
            Some(d) => rx.recv_timeout(d).ok(),
        };
        match received {
            Some(t) => Ok(t),
            None if self.cancel(id) => Err(Timeout),
            // Completed between the timeout and the cancel.
            None => Ok(rx.recv().expect("completed waiter sends its tuple")),
        }
    }

    /// Blocking read. `None` waits forever.
    pub fn rd(&self, template: &Template, timeout: Option<Duration>) -> Result<Tuple, Timeout> {
        self.blocking(template, false, timeout)
    }

    /// Blocking take (Linda `in`). `None` waits forever.
    pub fn take(&self, template: &Template, timeout: Option<Duration>) -> Result<Tuple, Timeout> {
        self.blocking(template, true, timeout)
    }

    /// Stored tuples in stamp order. Diagnostic only.
    pub fn snapshot(&self) -> Vec<Tuple> {
        let index = self.inner.index.read().unwrap();
        let mut all: Vec<(u64, Tuple)> = index
            .by_arity
            .values()
            .flat_map(|m| m.values())
            .flat_map(|b| b.lock().unwrap().iter().cloned().collect::<Vec<_>>())
            .collect();
        all.sort_by_key(|(s, _)| *s);
        all.into_iter().map(|(_, t)| t).collect()
    }
}

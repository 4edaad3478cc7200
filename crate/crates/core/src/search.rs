//! Finding a tuple across the local space and a set of peer spaces.
//!
//! Three strategies are provided:
//!
//! * sequential polling: each round probes the local space, then every peer
//!   in directory order, and sleeps between rounds;
//! * success-factor polling: like sequential, but peers are probed in
//!   descending order of a per-peer success factor learned from previous
//!   probes;
//! * broadcast notify: a blocking read is registered at every space at once
//!   and the first reply wins.
//!
//! Every probe is counted in [`SearchOutcome::visited_nodes`]; probes of the
//! first round are also counted in `visited_nodes_first_round`.

use std::fmt;
use std::str::FromStr;
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::space::{SpaceError, TupleSpace, Watch};
use crate::store::LocalSpace;
use crate::tuple::{Template, Tuple};

pub const DEFAULT_ALPHA: f64 = 0.25;
pub const INITIAL_FACTOR: f64 = 0.5;
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Sequential,
    SuccessFactor,
    Notify,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Sequential => "sequential",
            Strategy::SuccessFactor => "success_factor",
            Strategy::Notify => "notify",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Strategy::Sequential),
            "success_factor" => Ok(Strategy::SuccessFactor),
            "notify" => Ok(Strategy::Notify),
            other => Err(format!("unknown strategy {other:?} (expected sequential, success_factor or notify)")),
        }
    }
}

/// The local space plus the peers to search, in fixed order.
#[derive(Clone)]
pub struct PeerDirectory {
    local: LocalSpace,
    peers: Vec<Arc<dyn TupleSpace>>,
}

impl PeerDirectory {
    pub fn new(local: LocalSpace, peers: Vec<Arc<dyn TupleSpace>>) -> PeerDirectory {
        PeerDirectory { local, peers }
    }

    pub fn local(&self) -> &LocalSpace {
        &self.local
    }

    pub fn peers(&self) -> &[Arc<dyn TupleSpace>] {
        &self.peers
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }
}

/// One step of the success-factor update: an exponential moving average
/// towards 1 on a hit and towards 0 on a miss.
pub fn update_factor(factor: f64, alpha: f64, hit: bool) -> f64 {
    if hit {
        factor + alpha * (1.0 - factor)
    } else {
        (1.0 - alpha) * factor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("smoothing weight {0} is outside (0, 1)")]
pub struct InvalidAlpha(pub f64);

/// Per-peer success factors in `[0, 1]`, owned by one worker.
#[derive(Debug)]
pub struct SuccessStats {
    factors: Mutex<Vec<f64>>,
    alpha: f64,
}

impl SuccessStats {
    pub fn new(peers: usize) -> SuccessStats {
        SuccessStats::with_alpha(peers, DEFAULT_ALPHA).expect("default alpha is valid")
    }

    pub fn with_alpha(peers: usize, alpha: f64) -> Result<SuccessStats, InvalidAlpha> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(InvalidAlpha(alpha));
        }
        Ok(SuccessStats { factors: Mutex::new(vec![INITIAL_FACTOR; peers]), alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn factor(&self, peer: usize) -> f64 {
        self.factors.lock().unwrap()[peer]
    }

    pub fn factors(&self) -> Vec<f64> {
        self.factors.lock().unwrap().clone()
    }

    /// Peer indices by descending factor, ties by ascending index.
    pub fn order(&self) -> Vec<usize> {
        let f = self.factors.lock().unwrap();
        let mut idx: Vec<usize> = (0..f.len()).collect();
        idx.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
        idx
    }

    pub fn record(&self, peer: usize, hit: bool) {
        let mut f = self.factors.lock().unwrap();
        f[peer] = update_factor(f[peer], self.alpha, hit);
    }

    /// Sets every factor back to 0.5.
    pub fn reset(&self) {
        self.factors.lock().unwrap().iter_mut().for_each(|f| *f = INITIAL_FACTOR);
    }
}

/// Resets all factors to their initial value.
pub fn decay_reset(stats: &SuccessStats) {
    stats.reset();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Local,
    Peer(usize),
}

/// A single probe, reported to a [`ProbeObserver`] after it completes.
#[derive(Debug, Clone, Copy)]
pub struct Probe {
    pub round: u32,
    pub node: Node,
    pub hit: bool,
    pub elapsed: Duration,
}

pub trait ProbeObserver {
    fn probe(&self, probe: &Probe);
}

impl ProbeObserver for () {
    fn probe(&self, _: &Probe) {}
}

impl<F: Fn(&Probe)> ProbeObserver for F {
    fn probe(&self, probe: &Probe) {
        self(probe)
    }
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Take the tuple instead of copying it.
    pub destructive: bool,
    pub poll_interval: Duration,
    /// `None` searches forever.
    pub deadline: Option<Duration>,
    /// A template checked in the local space between polling rounds; a
    /// match ends the search with [`SearchError::Stopped`].
    pub stop: Option<Template>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { destructive: false, poll_interval: DEFAULT_POLL_INTERVAL, deadline: None, stop: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub tuple: Tuple,
    /// Every probe issued, including re-probes in later rounds.
    pub visited_nodes: u64,
    /// Probes issued during the first round only.
    pub visited_nodes_first_round: u64,
    pub elapsed: Duration,
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("no matching tuple before the deadline ({visited_nodes} probes)")]
    Deadline { visited_nodes: u64 },
    #[error("search stopped by a stop tuple")]
    Stopped,
    #[error("broadcast search cannot take tuples")]
    DestructiveBroadcast,
    #[error(transparent)]
    Space(#[from] SpaceError),
}

struct Tally {
    start: Instant,
    visited: u64,
    first_round: u64,
    round: u32,
}

impl Tally {
    fn count(&mut self) {
        self.visited += 1;
        if self.round == 1 {
            self.first_round += 1;
        }
    }

    fn done(&self, tuple: Tuple) -> SearchOutcome {
        SearchOutcome {
            tuple,
            visited_nodes: self.visited,
            visited_nodes_first_round: self.first_round,
            elapsed: self.start.elapsed(),
            rounds: self.round,
        }
    }
}

fn probe_space(space: &dyn TupleSpace, template: &Template, destructive: bool) -> Result<Option<Tuple>, SpaceError> {
    if destructive {
        space.inp(template)
    } else {
        space.rdp(template)
    }
}

/// Shared polling loop; `order` yields the peer order for the next round and
/// `learn` sees each peer probe's outcome.
fn poll(
    dir: &PeerDirectory,
    template: &Template,
    opts: &SearchOptions,
    observer: &dyn ProbeObserver,
    order: impl Fn() -> Vec<usize>,
    learn: impl Fn(usize, bool),
) -> Result<SearchOutcome, SearchError> {
    let mut tally = Tally { start: Instant::now(), visited: 0, first_round: 0, round: 1 };
    loop {
        let t0 = Instant::now();
        let hit = probe_space(&dir.local, template, opts.destructive)?;
        tally.count();
        observer.probe(&Probe { round: tally.round, node: Node::Local, hit: hit.is_some(), elapsed: t0.elapsed() });
        if let Some(t) = hit {
            return Ok(tally.done(t));
        }
        for p in order() {
            let t0 = Instant::now();
            let hit = probe_space(dir.peers[p].as_ref(), template, opts.destructive)?;
            tally.count();
            learn(p, hit.is_some());
            observer.probe(&Probe { round: tally.round, node: Node::Peer(p), hit: hit.is_some(), elapsed: t0.elapsed() });
            if let Some(t) = hit {
                return Ok(tally.done(t));
            }
        }
        if let Some(stop) = &opts.stop {
            if dir.local.rdp(stop).is_some() {
                return Err(SearchError::Stopped);
            }
        }
        let mut pause = opts.poll_interval;
        if let Some(limit) = opts.deadline {
            let spent = tally.start.elapsed();
            if spent >= limit {
                return Err(SearchError::Deadline { visited_nodes: tally.visited });
            }
            pause = pause.min(limit - spent);
        }
        thread::sleep(pause);
        tally.round += 1;
    }
}

/// Polls the local space, then every peer in directory order, until a match
/// is found.
pub fn search_sequential(
    dir: &PeerDirectory,
    template: &Template,
    opts: &SearchOptions,
    observer: &dyn ProbeObserver,
) -> Result<SearchOutcome, SearchError> {
    let n = dir.peers.len();
    poll(dir, template, opts, observer, || (0..n).collect(), |_, _| {})
}

/// Polls like [`search_sequential`] but orders peers by success factor and
/// updates the factor after every peer probe.
pub fn search_success_factor(
    dir: &PeerDirectory,
    stats: &SuccessStats,
    template: &Template,
    opts: &SearchOptions,
    observer: &dyn ProbeObserver,
) -> Result<SearchOutcome, SearchError> {
    poll(dir, template, opts, observer, || stats.order(), |p, hit| stats.record(p, hit))
}

/// Registers a blocking read at the local space and at every peer at once;
/// the first tuple wins and the other reads are cancelled.
pub fn search_notify(
    dir: &PeerDirectory,
    template: &Template,
    deadline: Option<Duration>,
    observer: &dyn ProbeObserver,
) -> Result<SearchOutcome, SearchError> {
    let start = Instant::now();
    let legs = 1 + dir.peers.len();
    let (tx, rx) = mpsc::channel();
    let mut watches: Vec<Option<Watch>> = Vec::with_capacity(legs);
    let mut failed = 0;
    let spaces = std::iter::once(&dir.local as &dyn TupleSpace).chain(dir.peers.iter().map(|p| p.as_ref()));
    for (leg, space) in spaces.enumerate() {
        let tx = tx.clone();
        match space.watch(template, Box::new(move |r| drop(tx.send((leg, r))))) {
            Ok(w) => watches.push(Some(w)),
            Err(SpaceError::ConnectionLost) => {
                failed += 1;
                watches.push(None);
            }
            Err(e) => {
                watches.into_iter().flatten().for_each(Watch::cancel);
                return Err(e.into());
            }
        }
    }
    drop(tx);
    let cancel_all = |watches: Vec<Option<Watch>>| watches.into_iter().flatten().for_each(Watch::cancel);
    let mut last_err = SpaceError::ConnectionLost;
    loop {
        if failed == legs {
            cancel_all(watches);
            return Err(last_err.into());
        }
        let received = match deadline {
            None => rx.recv().map_err(|_| mpsc::RecvTimeoutError::Disconnected),
            Some(limit) => rx.recv_timeout(limit.saturating_sub(start.elapsed())),
        };
        match received {
            Ok((leg, Ok(Some(tuple)))) => {
                watches[leg] = None;
                cancel_all(watches);
                let node = if leg == 0 { Node::Local } else { Node::Peer(leg - 1) };
                observer.probe(&Probe { round: 1, node, hit: true, elapsed: start.elapsed() });
                return Ok(SearchOutcome {
                    tuple,
                    visited_nodes: legs as u64,
                    visited_nodes_first_round: legs as u64,
                    elapsed: start.elapsed(),
                    rounds: 1,
                });
            }
            Ok((leg, Ok(None))) => {
                // Cancelled elsewhere; this leg is finished.
                watches[leg] = None;
                failed += 1;
            }
            Ok((leg, Err(e))) => {
                watches[leg] = None;
                failed += 1;
                last_err = e;
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {
                cancel_all(watches);
                return Err(SearchError::Deadline { visited_nodes: legs as u64 });
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                cancel_all(watches);
                return Err(last_err.into());
            }
        }
    }
}

/// A directory bound to a strategy and its success statistics.
pub struct Searcher {
    dir: PeerDirectory,
    strategy: Strategy,
    stats: SuccessStats,
    poll_interval: Duration,
    deadline: Option<Duration>,
}

impl Searcher {
    pub fn new(dir: PeerDirectory, strategy: Strategy) -> Searcher {
        let stats = SuccessStats::new(dir.len());
        Searcher { dir, strategy, stats, poll_interval: DEFAULT_POLL_INTERVAL, deadline: None }
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Searcher {
        self.poll_interval = interval;
        self
    }

    pub fn with_deadline(mut self, deadline: Option<Duration>) -> Searcher {
        self.deadline = deadline;
        self
    }

    pub fn directory(&self) -> &PeerDirectory {
        &self.dir
    }

    pub fn stats(&self) -> &SuccessStats {
        &self.stats
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Searches with the configured strategy. `stop` is only honoured by
    /// the polling strategies.
    pub fn find(
        &self,
        template: &Template,
        destructive: bool,
        stop: Option<&Template>,
        observer: &dyn ProbeObserver,
    ) -> Result<SearchOutcome, SearchError> {
        let opts = SearchOptions {
            destructive,
            poll_interval: self.poll_interval,
            deadline: self.deadline,
            stop: stop.cloned(),
        };
        match self.strategy {
            Strategy::Sequential => search_sequential(&self.dir, template, &opts, observer),
            Strategy::SuccessFactor => search_success_factor(&self.dir, &self.stats, template, &opts, observer),
            Strategy::Notify if destructive => Err(SearchError::DestructiveBroadcast),
            Strategy::Notify => search_notify(&self.dir, template, self.deadline, observer),
        }
    }
}

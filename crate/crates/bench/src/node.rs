//! A role's view of the cluster: its own space, connections to the other
//! roles, and instrumented tuple operations.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tuplespace::net::{connect, NetError};
use tuplespace::profiler::ProfilerError;
use tuplespace::search::{self, Node as ProbeNode, Probe, SearchError, SearchOptions, SuccessStats};
use tuplespace::{LocalSpace, NodeAddress, PeerDirectory, Profiler, RemoteSpace, SpaceError, Strategy, Template, Tuple, TupleSpace};

use crate::config::BenchConfig;
use crate::protocol::*;

pub const MASTER: usize = 0;

/// `master` for index 0, `worker<k>` otherwise.
pub fn role_name(index: usize) -> String {
    if index == MASTER {
        "master".to_owned()
    } else {
        format!("worker{index}")
    }
}

/// Role index of the worker with zero-based id `id`.
pub fn worker_role(id: usize) -> usize {
    id + 1
}

#[derive(Debug, thiserror::Error)]
pub enum RoleError {
    #[error("deadline exceeded while {0}")]
    Deadline(String),
    #[error("{context}: {source}")]
    Space { context: String, source: SpaceError },
    #[error("connecting: {0}")]
    Net(#[from] NetError),
    #[error(transparent)]
    Profiler(#[from] ProfilerError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("injected fault")]
    Fault,
}

impl RoleError {
    fn from_space(context: impl Into<String>, e: SpaceError) -> RoleError {
        match e {
            SpaceError::Timeout => RoleError::Deadline(context.into()),
            source => RoleError::Space { context: context.into(), source },
        }
    }
}

pub type RoleResult<T> = Result<T, RoleError>;

pub struct Node {
    pub index: usize,
    pub name: String,
    pub cfg: BenchConfig,
    prof: Arc<Profiler>,
    local: LocalSpace,
    /// Connections by role index; `None` for this role.
    remotes: Vec<Option<Arc<RemoteSpace>>>,
    dir: PeerDirectory,
    stats: SuccessStats,
    deadline: Instant,
}

impl Node {
    /// Connects role `index` to every other role. Search peers are the other
    /// workers in index order.
    pub fn connect(
        index: usize,
        cfg: BenchConfig,
        addrs: &[NodeAddress],
        local: LocalSpace,
        deadline: Instant,
    ) -> RoleResult<Node> {
        let name = role_name(index);
        let mut remotes = Vec::with_capacity(addrs.len());
        for (i, addr) in addrs.iter().enumerate() {
            remotes.push(if i == index { None } else { Some(Arc::new(connect(addr, &name)?)) });
        }
        let peer_roles: Vec<usize> = (1..addrs.len()).filter(|&i| i != index).collect();
        let peers = peer_roles.iter().map(|&i| remotes[i].clone().unwrap() as Arc<dyn TupleSpace>).collect();
        let dir = PeerDirectory::new(local.clone(), peers);
        let stats = SuccessStats::new(peer_roles.len());
        Ok(Node { index, prof: Arc::new(Profiler::new(name.clone())), name, cfg, local, remotes, dir, stats, deadline })
    }

    pub fn worker_id(&self) -> usize {
        self.index - 1
    }

    pub fn local(&self) -> &LocalSpace {
        &self.local
    }

    pub fn profiler(&self) -> &Profiler {
        &self.prof
    }

    pub fn roles(&self) -> usize {
        self.remotes.len()
    }

    fn remaining(&self, what: &str) -> RoleResult<Duration> {
        let left = self.deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            Err(RoleError::Deadline(what.to_owned()))
        } else {
            Ok(left)
        }
    }

    fn space(&self, role: usize) -> (&dyn TupleSpace, bool) {
        match &self.remotes[role] {
            None => (&self.local, true),
            Some(r) => (r.as_ref(), false),
        }
    }

    fn read_label(local: bool) -> &'static str {
        if local {
            LABEL_READ_LOCAL
        } else {
            LABEL_READ_REMOTE
        }
    }

    /// Writes `tuple` into the space of role `to`.
    pub fn write(&self, to: usize, tuple: Tuple) -> RoleResult<()> {
        let (space, local) = self.space(to);
        let label = if local { LABEL_WRITE_LOCAL } else { LABEL_WRITE_REMOTE };
        self.prof.time(label, || space.out(tuple)).map_err(|e| RoleError::from_space(format!("writing to {}", role_name(to)), e))
    }

    /// Blocking read from role `from`, bounded by the role deadline.
    pub fn read(&self, from: usize, template: &Template) -> RoleResult<Tuple> {
        let what = format!("reading {template:?} from {}", role_name(from));
        let timeout = self.remaining(&what)?;
        let (space, local) = self.space(from);
        self.prof.time(Self::read_label(local), || space.rd(template, Some(timeout))).map_err(|e| RoleError::from_space(what, e))
    }

    /// Blocking take from role `from`, bounded by the role deadline.
    pub fn take(&self, from: usize, template: &Template) -> RoleResult<Tuple> {
        self.take_within(from, template, Duration::MAX)?
            .ok_or_else(|| RoleError::Deadline(format!("taking {template:?} from {}", role_name(from))))
    }

    /// Blocking take that gives up after `wait` (or at the deadline).
    pub fn take_within(&self, from: usize, template: &Template, wait: Duration) -> RoleResult<Option<Tuple>> {
        let what = format!("taking {template:?} from {}", role_name(from));
        let remaining = self.remaining(&what)?;
        let (space, local) = self.space(from);
        match self.prof.time(Self::read_label(local), || space.take(template, Some(wait.min(remaining)))) {
            Ok(t) => Ok(Some(t)),
            Err(SpaceError::Timeout) if wait < remaining => Ok(None),
            Err(e) => Err(RoleError::from_space(what, e)),
        }
    }

    /// Non-blocking take from role `from`.
    pub fn take_probe(&self, from: usize, template: &Template) -> RoleResult<Option<Tuple>> {
        let (space, local) = self.space(from);
        self.prof
            .time(Self::read_label(local), || space.inp(template))
            .map_err(|e| RoleError::from_space(format!("probing {}", role_name(from)), e))
    }

    /// Locates a tuple in this role's space or a peer worker's with the
    /// configured strategy. Returns `None` when `stop` appears locally first.
    pub fn search(&self, template: &Template, destructive: bool, stop: Option<&Template>) -> RoleResult<Option<Tuple>> {
        let what = format!("searching for {template:?}");
        let deadline = Some(self.remaining(&what)?);
        let observer = |p: &Probe| {
            self.prof.record_interval(Self::read_label(p.node == ProbeNode::Local), p.elapsed);
        };
        let opts = SearchOptions { destructive, poll_interval: self.cfg.poll_interval, deadline, stop: stop.cloned() };
        let start = Instant::now();
        let result = match self.cfg.strategy {
            Strategy::Sequential => search::search_sequential(&self.dir, template, &opts, &observer),
            Strategy::SuccessFactor => search::search_success_factor(&self.dir, &self.stats, template, &opts, &observer),
            Strategy::Notify if destructive => Err(SearchError::DestructiveBroadcast),
            Strategy::Notify => search::search_notify(&self.dir, template, deadline, &observer),
        };
        match result {
            Ok(found) => {
                self.prof.record_interval(LABEL_SEARCH, start.elapsed());
                self.prof.record_count(LABEL_VISITED, found.visited_nodes_first_round);
                Ok(Some(found.tuple))
            }
            Err(SearchError::Stopped) => Ok(None),
            Err(SearchError::Deadline { .. }) => Err(RoleError::Deadline(what)),
            Err(SearchError::DestructiveBroadcast) => {
                Err(RoleError::Protocol("the notify strategy cannot take tuples".into()))
            }
            Err(SearchError::Space(e)) => Err(RoleError::from_space(what, e)),
        }
    }

    pub fn dump(&self, path: &Path) -> RoleResult<()> {
        Ok(self.prof.dump(path)?)
    }
}

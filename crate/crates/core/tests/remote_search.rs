use std::sync::Arc;
use std::time::Duration;

use tuplespace::search::SearchError;
use tuplespace::{connect, serve, template, tuple, LocalSpace, NodeAddress, PatternField, PeerDirectory, Searcher, Strategy, TupleSpace};

struct Cluster {
    servers: Vec<tuplespace::Server>,
}

impl Cluster {
    fn new(n: usize) -> Cluster {
        let servers = (0..n).map(|i| serve(LocalSpace::new(), &NodeAddress::new(format!("worker{i}"), "127.0.0.1", 0)).unwrap()).collect();
        Cluster { servers }
    }

    /// Searcher for node `me`, whose peers are every other node in order.
    fn searcher(&self, me: usize, strategy: Strategy) -> Searcher {
        let peers = self
            .servers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != me)
            .map(|(_, s)| Arc::new(connect(&s.address(), &format!("worker{me}")).unwrap()) as Arc<dyn TupleSpace>)
            .collect();
        let dir = PeerDirectory::new(self.servers[me].space().clone(), peers);
        Searcher::new(dir, strategy).with_deadline(Some(Duration::from_secs(5)))
    }
}

#[test]
fn every_strategy_finds_a_remote_tuple() {
    let cluster = Cluster::new(4);
    cluster.servers[3].space().out(tuple!["hashSet", "h", "p"]);
    let t = template!["hashSet", "h", PatternField::Any];
    for strategy in [Strategy::Sequential, Strategy::SuccessFactor, Strategy::Notify] {
        let found = cluster.searcher(0, strategy).find(&t, false, None, &()).unwrap();
        assert_eq!(found.tuple, tuple!["hashSet", "h", "p"], "{strategy}");
        assert_eq!(found.visited_nodes_first_round, 4, "{strategy}");
    }
    assert_eq!(cluster.servers[3].space().len(), 1);
    assert_eq!(cluster.servers[3].space().waiting(), 0);
}

#[test]
fn destructive_search_takes_remotely() {
    let cluster = Cluster::new(3);
    cluster.servers[1].space().out(tuple!["unsorted", vec![3i64, 1, 2]]);
    let s = cluster.searcher(0, Strategy::Sequential);
    let found = s.find(&template!["unsorted", PatternField::Type(tuplespace::ValueKind::IntArray)], true, None, &()).unwrap();
    assert_eq!(found.visited_nodes, 2);
    assert!(cluster.servers[1].space().is_empty());
}

#[test]
fn success_factor_learns_the_productive_peer() {
    let cluster = Cluster::new(5);
    let s = cluster.searcher(0, Strategy::SuccessFactor);
    let mut visits = Vec::new();
    for i in 0..6i64 {
        cluster.servers[4].space().out(tuple!["B_row", i]);
        visits.push(s.find(&template!["B_row", i], false, None, &()).unwrap().visited_nodes_first_round);
    }
    assert_eq!(visits[0], 5);
    assert_eq!(*visits.last().unwrap(), 2);
}

#[test]
fn stop_tuple_ends_polling() {
    let cluster = Cluster::new(2);
    cluster.servers[0].space().out(tuple!["sort_complete"]);
    let s = cluster.searcher(0, Strategy::Sequential);
    let r = s.find(&template!["unsorted", PatternField::Any], true, Some(&template!["sort_complete"]), &());
    assert_eq!(r, Err(SearchError::Stopped));
}

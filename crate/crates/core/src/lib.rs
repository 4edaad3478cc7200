//! Linda-style tuple spaces.
//!
//! * [`tuple`]: values, tuples, templates and the matching relation.
//! * [`store`]: [`LocalSpace`], an indexed concurrent multiset with blocking
//!   `rd` and `in` (here [`LocalSpace::take`]).
//! * [`net`]: a multiplexed binary protocol exposing a space over TCP, and
//!   [`RemoteSpace`], the matching client.
//! * [`search`]: locating a tuple across a local space and its peers.
//! * [`profiler`]: interval timers and counters with CSV dumps and
//!   aggregation.
//!
//! ```
//! use tuplespace::{template, tuple, LocalSpace, PatternField};
//!
//! let space = LocalSpace::new();
//! space.out(tuple!["goofy", 4i64, 10.4]);
//! let hit = space.rdp(&template!["goofy", PatternField::Any, PatternField::Any]);
//! assert_eq!(hit, Some(tuple!["goofy", 4i64, 10.4]));
//! ```

pub mod net;
pub mod profiler;
pub mod rng;
pub mod search;
pub mod space;
pub mod store;
#[cfg(any(test, feature = "testing"))]
pub mod testing;
pub mod tuple;

pub use net::{connect, serve, NodeAddress, RemoteSpace, Server};
pub use profiler::Profiler;
pub use search::{PeerDirectory, SearchOutcome, Searcher, Strategy, SuccessStats};
pub use space::{SpaceError, SpaceResult, TupleSpace};
pub use store::LocalSpace;
pub use tuple::{matches, template_of, PatternField, Template, Tuple, Value, ValueKind};

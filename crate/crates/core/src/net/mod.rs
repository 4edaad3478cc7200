//! Wire protocol, server loop and client handle for remote tuple spaces.

mod client;
pub mod codec;
mod server;

use std::fmt;
use std::net::{SocketAddr, ToSocketAddrs};

pub use client::{connect, connect_with, ConnectOptions, RemoteSpace};
pub use codec::{ErrorCode, Message, MAX_FRAME};
pub use server::{serve, Server};

use crate::space::SpaceError;

pub const PROTOCOL_VERSION: u16 = 1;

/// Where a tuple space listens, plus a role label such as `worker3`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeAddress {
    pub host: String,
    pub port: u16,
    pub name: String,
}

impl NodeAddress {
    pub fn new(name: impl Into<String>, host: impl Into<String>, port: u16) -> NodeAddress {
        NodeAddress { host: host.into(), port, name: name.into() }
    }

    pub fn socket_addrs(&self) -> std::io::Result<Vec<SocketAddr>> {
        Ok((self.host.as_str(), self.port).to_socket_addrs()?.collect())
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}:{}", self.name, self.host, self.port)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("address {0} already in use")]
    AddressInUse(String),
    #[error("{address} unreachable after {attempts} attempts: {last}")]
    Unreachable { address: String, attempts: u32, last: String },
    #[error("protocol version mismatch (server speaks {server})")]
    VersionMismatch { server: u16 },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

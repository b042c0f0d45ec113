use std::fmt;
use std::io;
use std::net::{IpAddr, SocketAddr};
use std::time::Duration;

use tokio::net::{TcpSocket, TcpStream};

/// Vantage point a probe connects from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceBinding {
    /// An outside party. Binds the given local address when one is configured.
    External(Option<IpAddr>),
    /// A source the deployment claims to allow into restricted services.
    Allowlisted(IpAddr),
}

impl SourceBinding {
    pub fn bind_addr(&self) -> Option<IpAddr> {
        match *self {
            SourceBinding::External(a) => a,
            SourceBinding::Allowlisted(a) => Some(a),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SourceBinding::External(_) => "external".to_string(),
            SourceBinding::Allowlisted(a) => format!("allowlisted:{a}"),
        }
    }
}

impl fmt::Display for SourceBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConnectError {
    #[error("cannot bind local source {addr}: {source}")]
    LocalBind {
        addr: IpAddr,
        #[source]
        source: io::Error,
    },
    #[error("cannot resolve {0}")]
    Resolve(String),
    #[error("connection refused")]
    Refused,
    #[error("connect timed out")]
    Timeout,
    #[error("connect failed: {0}")]
    Other(#[source] io::Error),
}

impl ConnectError {
    /// True when the failure happened on the auditor's side.
    pub fn is_local(&self) -> bool {
        matches!(self, ConnectError::LocalBind { .. } | ConnectError::Resolve(_))
    }
}

pub(crate) async fn resolve(host: &str, port: u16) -> Result<SocketAddr, ConnectError> {
    if let Ok(ip) = host.parse::<IpAddr>() {
        return Ok(SocketAddr::new(ip, port));
    }
    tokio::net::lookup_host((host, port))
        .await
        .ok()
        .and_then(|mut it| it.next())
        .ok_or_else(|| ConnectError::Resolve(format!("{host}:{port}")))
}

pub(crate) async fn connect_from(
    target: SocketAddr,
    bind: Option<IpAddr>,
    timeout: Duration,
) -> Result<TcpStream, ConnectError> {
    let socket = if target.is_ipv4() {
        TcpSocket::new_v4()
    } else {
        TcpSocket::new_v6()
    }
    .map_err(ConnectError::Other)?;
    if let Some(addr) = bind {
        socket
            .bind(SocketAddr::new(addr, 0))
            .map_err(|source| ConnectError::LocalBind { addr, source })?;
    }
    match tokio::time::timeout(timeout, socket.connect(target)).await {
        Err(_) => Err(ConnectError::Timeout),
        Ok(Ok(stream)) => {
            let _ = stream.set_nodelay(true);
            Ok(stream)
        }
        Ok(Err(e)) if e.kind() == io::ErrorKind::ConnectionRefused => Err(ConnectError::Refused),
        Ok(Err(e)) if e.kind() == io::ErrorKind::TimedOut => Err(ConnectError::Timeout),
        Ok(Err(e)) => Err(ConnectError::Other(e)),
    }
}

/// Waits briefly after connecting to catch services that accept and then
/// immediately reset connections from disallowed sources (TCP-wrapper style
/// filtering). Returns true if the connection was reset or closed.
pub(crate) async fn reset_after_accept(stream: &TcpStream, window: Duration) -> bool {
    let mut buf = [0u8; 1];
    match tokio::time::timeout(window, stream.peek(&mut buf)).await {
        Err(_) => false,
        Ok(Ok(0)) => true,
        Ok(Ok(_)) => false,
        Ok(Err(_)) => true,
    }
}

//! Accept loops shared by every service: optional TLS, source filtering
//! and cooperative shutdown.

use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use hyper::body::Incoming;
use hyper::Request;
use hyper_util::rt::TokioIo;
use hyper_util::service::TowerToHyperService;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;
use tokio::task::JoinSet;
use tokio_rustls::TlsAcceptor;
use tower::ServiceExt;

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const IDLE_TIMEOUT: Duration = Duration::from_secs(30);

/// Connection facts handlers can extract.
#[derive(Debug, Clone)]
pub(crate) struct Peer {
    #[allow(dead_code)]
    pub addr: SocketAddr,
    /// DER of the client certificate presented in the TLS handshake.
    pub cert: Option<Vec<u8>>,
}

/// `None` admits everyone.
pub(crate) type Allowlist = Option<Arc<Vec<IpAddr>>>;

fn admitted(allow: &Allowlist, ip: IpAddr) -> bool {
    allow.as_ref().map_or(true, |a| a.contains(&ip))
}

/// Turns a connection away with a TCP reset, the way address-filtering
/// wrappers do.
fn reset(stream: TcpStream) {
    let _ = socket2::SockRef::from(&stream).set_linger(Some(Duration::ZERO));
    drop(stream);
}

async fn accept_loop<F, Fut>(listener: TcpListener, allow: Allowlist, mut stop: watch::Receiver<bool>, handle: F)
where
    F: Fn(TcpStream, SocketAddr) -> Fut,
    Fut: std::future::Future<Output = ()> + Send + 'static,
{
    let mut conns = JoinSet::new();
    loop {
        tokio::select! {
            _ = stop.changed() => break,
            accepted = listener.accept() => {
                let Ok((stream, addr)) = accepted else { continue };
                if !admitted(&allow, addr.ip()) {
                    reset(stream);
                    continue;
                }
                let _ = stream.set_nodelay(true);
                conns.spawn(handle(stream, addr));
            }
            Some(_) = conns.join_next(), if !conns.is_empty() => {}
        }
    }
    // Dropping the set aborts connections still open.
}

pub(crate) async fn serve_http(
    listener: TcpListener,
    tls: Option<TlsAcceptor>,
    allow: Allowlist,
    router: Router,
    stop: watch::Receiver<bool>,
) {
    accept_loop(listener, allow, stop, move |stream, addr| {
        let tls = tls.clone();
        let router = router.clone();
        async move {
            match tls {
                None => serve_conn(TokioIo::new(stream), Peer { addr, cert: None }, router).await,
                Some(acceptor) => {
                    let Ok(Ok(s)) = tokio::time::timeout(HANDSHAKE_TIMEOUT, acceptor.accept(stream)).await else {
                        return;
                    };
                    let cert = s
                        .get_ref()
                        .1
                        .peer_certificates()
                        .and_then(|c| c.first())
                        .map(|c| c.to_vec());
                    serve_conn(TokioIo::new(s), Peer { addr, cert }, router).await
                }
            }
        }
    })
    .await
}

async fn serve_conn<I>(io: I, peer: Peer, router: Router)
where
    I: hyper::rt::Read + hyper::rt::Write + Unpin + Send + 'static,
{
    let svc = router.map_request(move |mut req: Request<Incoming>| {
        req.extensions_mut().insert(peer.clone());
        req
    });
    let _ = hyper::server::conn::http1::Builder::new()
        .serve_connection(io, TowerToHyperService::new(svc))
        .await;
}

/// A line-oriented placeholder protocol: greets with `banner` and answers
/// every line with an error. Enough for transport probing.
pub(crate) async fn serve_raw(
    listener: TcpListener,
    tls: Option<TlsAcceptor>,
    allow: Allowlist,
    banner: &'static str,
    stop: watch::Receiver<bool>,
) {
    accept_loop(listener, allow, stop, move |stream, _addr| {
        let tls = tls.clone();
        async move {
            match tls {
                None => chat(stream, banner).await,
                Some(acceptor) => {
                    if let Ok(Ok(s)) = tokio::time::timeout(HANDSHAKE_TIMEOUT, acceptor.accept(stream)).await {
                        chat(s, banner).await
                    }
                }
            }
        }
    })
    .await
}

async fn chat<S: AsyncRead + AsyncWrite + Unpin>(mut s: S, banner: &str) {
    if s.write_all(banner.as_bytes()).await.is_err() || s.flush().await.is_err() {
        return;
    }
    let mut buf = [0u8; 1024];
    loop {
        match tokio::time::timeout(IDLE_TIMEOUT, s.read(&mut buf)).await {
            Ok(Ok(n)) if n > 0 => {
                if buf[..n].contains(&b'\n') && s.write_all(b"ERR unsupported command\n").await.is_err() {
                    return;
                }
            }
            _ => return,
        }
    }
}

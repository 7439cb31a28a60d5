use std::collections::HashMap;

use futures::{SinkExt, StreamExt};
use infnote_core::peernet::{SeedResolver, SessionId};
use infnote_core::wire::{decode_message, encode_message, NetAddress, WireMessage, MAX_FRAME_BYTES, SUBPROTOCOL};
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::TcpStream;
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::{HeaderValue, StatusCode};
use tokio_tungstenite::tungstenite::protocol::WebSocketConfig;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;
use tracing::debug;

use crate::runtime::Command;
use crate::NodeError;

const PROTOCOL_HEADER: &str = "sec-websocket-protocol";

pub trait Io: AsyncRead + AsyncWrite + Unpin + Send {}

impl<T: AsyncRead + AsyncWrite + Unpin + Send> Io for T {}

pub type Connection = WebSocketStream<Box<dyn Io>>;

fn ws_config() -> WebSocketConfig {
    WebSocketConfig::default()
        .max_message_size(Some(MAX_FRAME_BYTES))
        .max_frame_size(Some(MAX_FRAME_BYTES))
}

fn offers_subprotocol(req: &Request) -> bool {
    req.headers()
        .get_all(PROTOCOL_HEADER)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .any(|p| p.trim() == SUBPROTOCOL)
}

/// Completes the server side of the WebSocket upgrade. Clients must offer
/// the `infnote/1` subprotocol.
#[allow(clippy::result_large_err)]
pub(crate) async fn accept(stream: TcpStream) -> Result<Connection, NodeError> {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let boxed: Box<dyn Io> = Box::new(stream);
    let callback = |req: &Request, mut resp: Response| {
        if !offers_subprotocol(req) {
            let mut err = ErrorResponse::new(Some(format!("subprotocol {SUBPROTOCOL} required")));
            *err.status_mut() = StatusCode::BAD_REQUEST;
            return Err(err);
        }
        resp.headers_mut()
            .insert(PROTOCOL_HEADER, HeaderValue::from_static(SUBPROTOCOL));
        Ok(resp)
    };
    tokio_tungstenite::accept_hdr_async_with_config(boxed, callback, Some(ws_config()))
        .await
        .map_err(|e| NodeError::dial(peer, e))
}

/// Opens a WebSocket to `addr`, through a SOCKS5 proxy when one is given.
pub async fn dial(addr: &NetAddress, socks_proxy: Option<&str>) -> Result<Connection, NodeError> {
    let stream: Box<dyn Io> = match socks_proxy {
        Some(proxy) => Box::new(
            tokio_socks::tcp::Socks5Stream::connect(proxy, (addr.host.as_str(), addr.port))
                .await
                .map_err(|e| NodeError::dial(addr, e))?,
        ),
        None => Box::new(
            TcpStream::connect((addr.host.as_str(), addr.port))
                .await
                .map_err(|e| NodeError::dial(addr, e))?,
        ),
    };
    let mut req = format!("ws://{addr}/")
        .into_client_request()
        .map_err(|e| NodeError::dial(addr, e))?;
    req.headers_mut()
        .insert(PROTOCOL_HEADER, HeaderValue::from_static(SUBPROTOCOL));
    let (ws, resp) = tokio_tungstenite::client_async_with_config(req, stream, Some(ws_config()))
        .await
        .map_err(|e| NodeError::dial(addr, e))?;
    let agreed = resp
        .headers()
        .get(PROTOCOL_HEADER)
        .is_some_and(|v| v.as_bytes() == SUBPROTOCOL.as_bytes());
    if !agreed {
        return Err(NodeError::dial(addr, "peer did not agree to the infnote/1 subprotocol"));
    }
    Ok(ws)
}

/// Pumps frames between one connection and the coordinator until either
/// side closes. The coordinator closes a session by dropping its sender.
pub(crate) async fn run_session(
    ws: Connection,
    session: SessionId,
    outbound: bool,
    peer: Option<NetAddress>,
    cmd: mpsc::Sender<Command>,
) {
    let (mut sink, mut stream) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<WireMessage>();
    let replies = tx.downgrade();
    let opened = Command::Opened {
        session,
        outbound,
        peer,
        tx,
    };
    if cmd.send(opened).await.is_err() {
        return;
    }
    let writer = async {
        while let Some(msg) = rx.recv().await {
            if sink.send(Message::text(encode_message(&msg))).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    };
    let reader = async {
        while let Some(frame) = stream.next().await {
            let bytes = match frame {
                Ok(Message::Text(t)) => t,
                Ok(Message::Binary(_)) => {
                    if let Some(r) = replies.upgrade() {
                        let _ = r.send(WireMessage::error("bad-json", "binary frames are not accepted"));
                    }
                    continue;
                }
                Ok(Message::Close(_)) | Err(_) => break,
                Ok(_) => continue,
            };
            match decode_message(bytes.as_bytes()) {
                Ok(msg) => {
                    if cmd.send(Command::Frame { session, msg }).await.is_err() {
                        break;
                    }
                }
                Err(e) => {
                    debug!(session, error = %e, "undecodable frame");
                    if let Some(r) = replies.upgrade() {
                        let _ = r.send(e.to_message());
                    }
                }
            }
        }
    };
    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
    let _ = cmd.send(Command::Closed { session }).await;
}

/// DNS seed answers collected up front so that dial planning never blocks.
#[derive(Debug, Default, Clone)]
pub struct DnsResolver {
    answers: HashMap<String, Vec<NetAddress>>,
}

impl DnsResolver {
    pub async fn lookup(hosts: &[String], port: u16) -> Self {
        let mut answers = HashMap::new();
        for host in hosts {
            let found = match tokio::net::lookup_host((host.as_str(), port)).await {
                Ok(addrs) => addrs
                    .filter_map(|a| NetAddress::new(a.ip().to_string(), a.port()).ok())
                    .collect(),
                Err(e) => {
                    debug!(host, error = %e, "dns seed lookup failed");
                    Vec::new()
                }
            };
            answers.insert(host.clone(), found);
        }
        Self { answers }
    }
}

impl SeedResolver for DnsResolver {
    fn resolve(&self, host: &str, _port: u16) -> Vec<NetAddress> {
        self.answers.get(host).cloned().unwrap_or_default()
    }
}

//! Network side: line-delimited JSON over TCP, HTTP endpoints, and a router
//! that forwards to remote backends.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader as AsyncBufReader};
use tokio::sync::watch;

use super::{ServiceConfig, TranslationRequest, TranslationResponse, Translator};
use crate::error::{Error, Result};
use crate::model::LanguageTag;

struct Conn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Conn {
    fn open(address: &str, timeout: Duration) -> std::io::Result<Self> {
        let mut last = None;
        for addr in address.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(timeout))?;
                    stream.set_write_timeout(Some(timeout))?;
                    stream.set_nodelay(true)?;
                    return Ok(Conn {
                        reader: BufReader::new(stream.try_clone()?),
                        writer: stream,
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "no address")))
    }

    fn exchange(&mut self, line: &str) -> std::io::Result<String> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "connection closed",
            ));
        }
        Ok(reply)
    }
}

/// Client for the line-delimited protocol, pooling connections per address.
pub struct RemoteTranslator {
    pool: Mutex<HashMap<String, Vec<Conn>>>,
    timeout: Duration,
    requests: AtomicUsize,
}

impl Default for RemoteTranslator {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl RemoteTranslator {
    pub fn new(timeout: Duration) -> Self {
        RemoteTranslator {
            pool: Mutex::new(HashMap::new()),
            timeout,
            requests: AtomicUsize::new(0),
        }
    }

    /// Requests sent so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn request(
        &self,
        address: &str,
        request: &TranslationRequest,
    ) -> Result<TranslationResponse> {
        let upstream = |message: String| Error::Upstream {
            address: address.to_owned(),
            message,
        };
        let line = serde_json::to_string(request)?;
        self.requests.fetch_add(1, Ordering::SeqCst);
        let pooled = self
            .pool
            .lock()
            .expect("pool lock")
            .get_mut(address)
            .and_then(Vec::pop);
        let (reply, conn) = match pooled.map(|mut c| c.exchange(&line).map(|r| (r, c))) {
            Some(Ok(done)) => done,
            _ => {
                let mut conn =
                    Conn::open(address, self.timeout).map_err(|e| upstream(e.to_string()))?;
                let reply = conn.exchange(&line).map_err(|e| upstream(e.to_string()))?;
                (reply, conn)
            }
        };
        self.pool
            .lock()
            .expect("pool lock")
            .entry(address.to_owned())
            .or_default()
            .push(conn);
        let value: serde_json::Value = serde_json::from_str(&reply)
            .map_err(|e| Error::Protocol(format!("reply from {address}: {e}")))?;
        if let Some(message) = value.get("error") {
            return Err(upstream(message.as_str().unwrap_or_default().to_owned()));
        }
        let response: TranslationResponse = serde_json::from_value(value)
            .map_err(|e| Error::Protocol(format!("reply from {address}: {e}")))?;
        response.check_alignment()?;
        Ok(response)
    }
}

/// Forwards each request to the backend its language pair is routed to.
pub struct Router {
    config: ServiceConfig,
    remote: RemoteTranslator,
}

impl Router {
    pub fn new(config: ServiceConfig, remote: RemoteTranslator) -> Self {
        Router { config, remote }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn remote(&self) -> &RemoteTranslator {
        &self.remote
    }
}

impl Translator for Router {
    fn translate(&self, request: &TranslationRequest) -> Result<TranslationResponse> {
        if request.text.trim().is_empty() {
            return Err(Error::Invalid("empty translation request".into()));
        }
        let route = self.config.route(&request.source, &request.target)?;
        self.remote.request(&route.address(), request)
    }

    fn routes(&self) -> Vec<(LanguageTag, LanguageTag)> {
        self.config.pairs()
    }
}

fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.to_string() }).to_string()
}

type Shared = Arc<dyn Translator>;

async fn handle_connection(
    stream: tokio::net::TcpStream,
    translator: Shared,
    mut stop: watch::Receiver<bool>,
) {
    let (read, mut write) = stream.into_split();
    let mut lines = AsyncBufReader::new(read).lines();
    loop {
        let line = tokio::select! {
            line = lines.next_line() => line,
            _ = stop.changed() => break,
        };
        let line = match line {
            Ok(Some(line)) => line,
            Ok(None) => break,
            Err(e) => {
                log::debug!("connection closed: {e}");
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<TranslationRequest>(&line) {
            Err(e) => error_line(&Error::Protocol(e.to_string())),
            Ok(request) => {
                let t = translator.clone();
                match tokio::task::spawn_blocking(move || t.translate(&request)).await {
                    Ok(Ok(response)) => response.to_line(),
                    Ok(Err(e)) => error_line(&e),
                    Err(e) => error_line(&Error::Protocol(format!("worker failed: {e}"))),
                }
            }
        };
        let mut bytes = reply.into_bytes();
        bytes.push(b'\n');
        if write.write_all(&bytes).await.is_err() {
            break;
        }
    }
}

async fn serve_duplex(
    listener: tokio::net::TcpListener,
    translator: Shared,
    mut stop: watch::Receiver<bool>,
) {
    loop {
        let accepted = tokio::select! {
            a = listener.accept() => a,
            _ = stop.changed() => return,
        };
        match accepted {
            Ok((stream, peer)) => {
                log::debug!("connection from {peer}");
                let _ = stream.set_nodelay(true);
                tokio::spawn(handle_connection(stream, translator.clone(), stop.clone()));
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}

fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Invalid(_) | Error::Protocol(_) => StatusCode::BAD_REQUEST,
        Error::UnsupportedPair { .. } => StatusCode::NOT_FOUND,
        Error::Upstream { .. } => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn http_translate(State(translator): State<Shared>, body: axum::body::Bytes) -> Response {
    let request: TranslationRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return json_response(
                StatusCode::BAD_REQUEST,
                error_line(&Error::Protocol(e.to_string())),
            )
        }
    };
    match tokio::task::spawn_blocking(move || translator.translate(&request)).await {
        Ok(Ok(response)) => json_response(StatusCode::OK, response.to_pretty_json()),
        Ok(Err(e)) => json_response(status_for(&e), error_line(&e)),
        Err(e) => json_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            error_line(&Error::Protocol(e.to_string())),
        ),
    }
}

async fn http_health(State(translator): State<Shared>) -> Response {
    let routes: Vec<String> = translator
        .routes()
        .iter()
        .map(|(s, t)| format!("{s}-{t}"))
        .collect();
    json_response(
        StatusCode::OK,
        serde_json::json!({ "status": "ok", "routes": routes }).to_string(),
    )
}

/// Serves a translator over the duplex protocol and/or HTTP.
pub struct Server {
    translator: Shared,
}

/// A running server; stops when dropped.
pub struct ServerHandle {
    pub duplex_addr: Option<SocketAddr>,
    pub http_addr: Option<SocketAddr>,
    stop: watch::Sender<bool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_and_join(&mut self) {
        let _ = self.stop.send(true);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

fn bind(addr: SocketAddr) -> Result<std::net::TcpListener> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

impl Server {
    pub fn new(translator: impl Translator + 'static) -> Self {
        Server {
            translator: Arc::new(translator),
        }
    }

    /// Binds the given addresses and serves on a background thread.
    pub fn start(
        self,
        duplex: Option<SocketAddr>,
        http: Option<SocketAddr>,
    ) -> Result<ServerHandle> {
        if duplex.is_none() && http.is_none() {
            return Err(Error::Config(
                "server needs a duplex or HTTP address".into(),
            ));
        }
        let duplex = duplex.map(bind).transpose()?;
        let http = http.map(bind).transpose()?;
        let duplex_addr = duplex.as_ref().map(|l| l.local_addr()).transpose()?;
        let http_addr = http.as_ref().map(|l| l.local_addr()).transpose()?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .thread_name("bitextkit-serve")
            .build()?;
        let (stop, stop_rx) = watch::channel(false);
        let translator = self.translator;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let mut tasks = Vec::new();
                if let Some(l) = duplex {
                    match tokio::net::TcpListener::from_std(l) {
                        Ok(l) => tasks.push(tokio::spawn(serve_duplex(
                            l,
                            translator.clone(),
                            stop_rx.clone(),
                        ))),
                        Err(e) => log::error!("duplex listener: {e}"),
                    }
                }
                if let Some(l) = http {
                    let app = axum::Router::new()
                        .route("/translate", post(http_translate))
                        .route("/health", get(http_health))
                        .with_state(translator.clone());
                    let mut rx = stop_rx.clone();
                    match tokio::net::TcpListener::from_std(l) {
                        Ok(l) => tasks.push(tokio::spawn(async move {
                            let shutdown = async move {
                                let _ = rx.changed().await;
                            };
                            if let Err(e) =
                                axum::serve(l, app).with_graceful_shutdown(shutdown).await
                            {
                                log::error!("http server: {e}");
                            }
                        })),
                        Err(e) => log::error!("http listener: {e}"),
                    }
                }
                for t in tasks {
                    let _ = t.await;
                }
            });
            runtime.shutdown_timeout(Duration::from_secs(1));
        });
        Ok(ServerHandle {
            duplex_addr,
            http_addr,
            stop,
            thread: Some(thread),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serve::{DictionaryBackend, IdentityBackend, LocalService};
    use std::io::Read;

    fn tag(s: &str) -> LanguageTag {
        s.parse().unwrap()
    }

    fn local() -> SocketAddr {
        "127.0.0.1:0".parse().unwrap()
    }

    #[test]
    fn duplex_round_trip_and_pooling() {
        let backend = Server::new(LocalService::new(IdentityBackend, "backend"))
            .start(Some(local()), None)
            .unwrap();
        let addr = backend.duplex_addr.unwrap().to_string();
        let remote = RemoteTranslator::new(Duration::from_secs(5));
        for i in 0..5 {
            let r = remote
                .request(
                    &addr,
                    &TranslationRequest::new(format!("hello {i}"), tag("en"), tag("en")),
                )
                .unwrap();
            assert_eq!(r.result, format!("hello {i}"));
        }
        assert_eq!(remote.pool.lock().unwrap()[&addr].len(), 1);
        let err = remote
            .request(&addr, &TranslationRequest::new(" ", tag("en"), tag("en")))
            .unwrap_err();
        assert!(matches!(err, Error::Upstream { .. }));
    }

    #[test]
    fn responses_keep_request_order() {
        let backend = Server::new(LocalService::new(IdentityBackend, "b"))
            .start(Some(local()), None)
            .unwrap();
        let mut stream = TcpStream::connect(backend.duplex_addr.unwrap()).unwrap();
        let mut batch = String::new();
        for i in 0..20 {
            batch.push_str(
                &serde_json::to_string(&TranslationRequest::new(
                    format!("w{i}"),
                    tag("en"),
                    tag("en"),
                ))
                .unwrap(),
            );
            batch.push('\n');
        }
        stream.write_all(batch.as_bytes()).unwrap();
        let mut reader = BufReader::new(stream);
        for i in 0..20 {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let r: TranslationResponse = serde_json::from_str(&line).unwrap();
            assert_eq!(r.result, format!("w{i}"));
        }
    }

    #[test]
    fn router_forwards_by_pair() {
        let fi = Server::new(LocalService::new(
            DictionaryBackend::new(tag("en"), tag("fi"), [("hello", "hei")]),
            "fi-backend",
        ))
        .start(Some(local()), None)
        .unwrap();
        let port = fi.duplex_addr.unwrap().port();
        let config = ServiceConfig::from_json(&format!(
            r#"{{"en": {{"fi": {{"host": "127.0.0.1", "port": "{port}"}}}}}}"#
        ))
        .unwrap();
        let router = Router::new(config, RemoteTranslator::default());
        let r = router
            .translate(&TranslationRequest::new("hello", tag("en"), tag("fi")))
            .unwrap();
        assert_eq!(
            (r.result.as_str(), r.server.as_str()),
            ("hei", "fi-backend")
        );
        assert!(matches!(
            router.translate(&TranslationRequest::new("hello", tag("en"), tag("de"))),
            Err(Error::UnsupportedPair { .. })
        ));
        assert_eq!(router.remote().requests(), 1);
    }

    #[test]
    fn dead_backend_is_upstream_error() {
        let port = std::net::TcpListener::bind(local())
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let config = ServiceConfig::from_json(&format!(
            r#"{{"en": {{"fi": {{"host": "127.0.0.1", "port": {port}}}}}}}"#
        ))
        .unwrap();
        let router = Router::new(config, RemoteTranslator::new(Duration::from_secs(2)));
        match router.translate(&TranslationRequest::new("x", tag("en"), tag("fi"))) {
            Err(Error::Upstream { address, .. }) => {
                assert_eq!(address, format!("127.0.0.1:{port}"))
            }
            other => panic!("{other:?}"),
        }
    }

    fn http(addr: SocketAddr, request: &str) -> String {
        let mut s = TcpStream::connect(addr).unwrap();
        s.write_all(request.as_bytes()).unwrap();
        let mut out = String::new();
        s.read_to_string(&mut out).unwrap();
        out
    }

    #[test]
    fn http_endpoints() {
        let server = Server::new(LocalService::new(IdentityBackend, "h"))
            .start(None, Some(local()))
            .unwrap();
        let addr = server.http_addr.unwrap();
        let body = r#"{"text": "hi there", "source": "en", "target": "en"}"#;
        let reply = http(
            addr,
            &format!(
                "POST /translate HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            ),
        );
        assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
        assert!(reply.contains("\"result\": \"hi there\""));
        let reply = http(
            addr,
            "GET /health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n",
        );
        assert!(
            reply.starts_with("HTTP/1.1 200") && reply.contains("\"status\":\"ok\""),
            "{reply}"
        );
        let bad = "{\"text\": 1}";
        let reply = http(
            addr,
            &format!(
                "POST /translate HTTP/1.1\r\nHost: x\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{bad}",
                bad.len()
            ),
        );
        assert!(reply.starts_with("HTTP/1.1 400"), "{reply}");
    }
}

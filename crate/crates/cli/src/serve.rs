//! Live reverse proxy: every request is evaluated by the gateway; allowed
//! ones are forwarded to the upstream, the rest get a warning page.

use std::convert::Infallible;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use bytes::Bytes;
use chrono::{DateTime, Utc};
use http_body_util::{BodyExt, Full, Limited};
use hostguard::gateway::multipart::parse_multipart;
use hostguard::gateway::request::split_params;
use hostguard::gateway::warning::status_code;
use hostguard::gateway::{
    render_warning, Blacklist, Decision, FileStore, Gateway, HttpRequestRecord, LoginOutcome, Method, Mode, Verdict,
};
use hyper::body::Incoming;
use hyper::header::{HeaderName, HeaderValue, CONTENT_TYPE};
use hyper::server::conn::http1;
use hyper::service::service_fn;
use hyper::{Request, Response, StatusCode};
use hyper_util::client::legacy::connect::HttpConnector;
use hyper_util::client::legacy::Client;
use hyper_util::rt::{TokioExecutor, TokioIo};
use tokio::net::TcpListener;

use crate::config::{Config, ConfigError};
use crate::replay::{base_gateway, open_append};
use crate::{failed, CliError, CmdResult, Status};

const UPSTREAM_TIMEOUT: Duration = Duration::from_secs(60);

const HOP_BY_HOP: [&str; 8] = [
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

type Body = Full<Bytes>;

struct Proxy {
    gw: Arc<Gateway>,
    upstream: SocketAddr,
    client: Client<HttpConnector, Body>,
    verdict_log: Mutex<BufWriter<File>>,
    max_body: usize,
}

/// Builds the live gateway: persistent blacklist, block log and random ids.
pub fn live_gateway(cfg: &Config, mode: Mode) -> Result<Gateway, CliError> {
    if let Some(dir) = cfg.blacklist_store.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    }
    let store = FileStore::open(&cfg.blacklist_store).map_err(failed)?;
    let blacklist =
        Blacklist::new(Box::new(store), cfg.gateway.bloom_expected, cfg.gateway.bloom_fp_rate).map_err(failed)?;
    Ok(base_gateway(cfg, mode)?
        .with_blacklist(blacklist)
        .with_block_log(Box::new(open_append(&cfg.logs.block_log)?)))
}

fn plain(status: StatusCode, text: &str) -> Response<Body> {
    let mut r = Response::new(Full::new(Bytes::from(format!("{text}\n"))));
    *r.status_mut() = status;
    r.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static("text/plain; charset=utf-8"));
    r
}

fn warning_page(v: &Verdict) -> Response<Body> {
    let html = render_warning(v).expect("only non-allow verdicts reach the page");
    let mut r = Response::new(Full::new(Bytes::from(html)));
    *r.status_mut() = StatusCode::from_u16(status_code(v)).unwrap_or(StatusCode::FORBIDDEN);
    let h = r.headers_mut();
    h.insert(CONTENT_TYPE, HeaderValue::from_static("text/html; charset=utf-8"));
    h.insert("cache-control", HeaderValue::from_static("no-store"));
    r
}

fn is_hop_by_hop(name: &HeaderName) -> bool {
    HOP_BY_HOP.contains(&name.as_str())
}

impl Proxy {
    fn log_verdict(&self, v: &Verdict) {
        let mut w = self.verdict_log.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = writeln!(w, "{}", v.to_json_line()).and_then(|_| w.flush()) {
            log::error!("verdict log write failed: {e}");
        }
    }

    fn record(&self, peer: SocketAddr, parts: &hyper::http::request::Parts, body: &[u8], at: DateTime<Utc>) -> Result<HttpRequestRecord, Response<Body>> {
        let method: Method = parts
            .method
            .as_str()
            .parse()
            .map_err(|_| plain(StatusCode::METHOD_NOT_ALLOWED, "method not allowed"))?;
        let target = parts.uri.path_and_query().map_or("/", |p| p.as_str());
        let mut rec = HttpRequestRecord::new(peer.ip(), method, target, at);
        for (name, value) in &parts.headers {
            rec.headers
                .push((name.as_str().to_string(), String::from_utf8_lossy(value.as_bytes()).into_owned()));
        }
        let ct = rec.header("content-type").unwrap_or("").to_ascii_lowercase();
        if ct.starts_with("application/x-www-form-urlencoded") {
            rec.body_params = split_params(&String::from_utf8_lossy(body));
        } else if ct.starts_with("multipart/form-data") {
            let ct = rec.header("content-type").unwrap_or("").to_string();
            let (params, uploads) =
                parse_multipart(&ct, body).map_err(|e| plain(StatusCode::BAD_REQUEST, &format!("bad multipart body: {e}")))?;
            rec.body_params = params;
            rec.upload_parts = uploads;
        }
        Ok(rec)
    }

    async fn forward(&self, peer: SocketAddr, parts: hyper::http::request::Parts, body: Bytes) -> Result<Response<Body>, String> {
        let target = parts.uri.path_and_query().map_or("/", |p| p.as_str());
        let uri: hyper::Uri = format!("http://{}{target}", self.upstream).parse().map_err(|e| format!("{e}"))?;
        let mut req = Request::builder().method(parts.method).uri(uri);
        for (name, value) in &parts.headers {
            if !is_hop_by_hop(name) {
                req = req.header(name, value);
            }
        }
        let req = req
            .header("x-forwarded-for", peer.ip().to_string())
            .header("x-forwarded-proto", "http")
            .body(Full::new(body))
            .map_err(|e| e.to_string())?;
        let resp = tokio::time::timeout(UPSTREAM_TIMEOUT, self.client.request(req))
            .await
            .map_err(|_| "upstream timed out".to_string())?
            .map_err(|e| e.to_string())?;
        let (parts, body) = resp.into_parts();
        let bytes = body.collect().await.map_err(|e| e.to_string())?.to_bytes();
        let mut out = Response::new(Full::new(bytes));
        *out.status_mut() = parts.status;
        for (name, value) in &parts.headers {
            if !is_hop_by_hop(name) {
                out.headers_mut().append(name, value.clone());
            }
        }
        Ok(out)
    }

    async fn handle(self: Arc<Self>, peer: SocketAddr, req: Request<Incoming>) -> Result<Response<Body>, Infallible> {
        let at = Utc::now();
        let (parts, body) = req.into_parts();
        let body = match Limited::new(body, self.max_body).collect().await {
            Ok(c) => c.to_bytes(),
            Err(_) => return Ok(plain(StatusCode::PAYLOAD_TOO_LARGE, "request body too large")),
        };
        let rec = match self.record(peer, &parts, &body, at) {
            Ok(r) => r,
            Err(resp) => return Ok(resp),
        };
        let gw = Arc::clone(&self.gw);
        let (verdict, rec) = match tokio::task::spawn_blocking(move || (gw.evaluate(&rec), rec)).await {
            Ok(x) => x,
            Err(e) => {
                log::error!("gateway task failed: {e}");
                return Ok(plain(StatusCode::INTERNAL_SERVER_ERROR, "internal error"));
            }
        };
        self.log_verdict(&verdict);
        if verdict.decision != Decision::Allow {
            return Ok(warning_page(&verdict));
        }
        match self.forward(peer, parts, body).await {
            Ok(resp) => {
                if self.gw.is_login_request(&rec) && rec.login_outcome.is_none() {
                    // A redirect is how most CMS login forms report success.
                    let outcome = match resp.status().as_u16() {
                        302 | 303 => LoginOutcome::Success,
                        _ => LoginOutcome::Failure,
                    };
                    self.gw.record_login_outcome(rec.source_ip, outcome, at);
                }
                Ok(resp)
            }
            Err(e) => {
                log::warn!("upstream {}: {e}", self.upstream);
                Ok(plain(StatusCode::BAD_GATEWAY, "upstream unavailable"))
            }
        }
    }
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

pub fn run(cfg: &Config, mode: Mode, listen: Option<SocketAddr>, upstream: Option<SocketAddr>) -> CmdResult {
    let listen = listen.or(cfg.listen).ok_or(ConfigError::Missing("[gateway] listen"))?;
    let upstream = upstream.or(cfg.upstream).ok_or(ConfigError::Missing("[gateway] upstream"))?;
    let gw = live_gateway(cfg, mode)?;
    let verdict_log = open_append(&cfg.logs.verdict_log)?;
    let proxy = Arc::new(Proxy {
        gw: Arc::new(gw),
        upstream,
        client: Client::builder(TokioExecutor::new()).build_http(),
        verdict_log: Mutex::new(BufWriter::new(verdict_log)),
        max_body: cfg.max_body_bytes,
    });
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::io("starting runtime"))?;
    rt.block_on(serve(Arc::clone(&proxy), listen, mode))?;
    let mut w = proxy.verdict_log.lock().unwrap_or_else(|e| e.into_inner());
    w.flush().map_err(CliError::io("flushing verdict log"))?;
    w.get_ref().sync_all().map_err(CliError::io("syncing verdict log"))?;
    Ok(Status::Clean)
}

async fn serve(proxy: Arc<Proxy>, listen: SocketAddr, mode: Mode) -> Result<(), CliError> {
    let listener = TcpListener::bind(listen)
        .await
        .map_err(CliError::io(format!("binding {listen}")))?;
    let local = listener.local_addr().map_err(CliError::io("reading bound address"))?;
    println!("listening on {local} in {} mode, upstream {}", mode_name(mode), proxy.upstream);
    let _ = std::io::stdout().flush();
    let shutdown = shutdown_signal();
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => {
                eprintln!("shutting down");
                return Ok(());
            }
            accepted = listener.accept() => {
                let (stream, peer) = match accepted {
                    Ok(x) => x,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        continue;
                    }
                };
                let proxy = Arc::clone(&proxy);
                tokio::spawn(async move {
                    let svc = service_fn(move |req| Arc::clone(&proxy).handle(peer, req));
                    if let Err(e) = http1::Builder::new().serve_connection(TokioIo::new(stream), svc).await {
                        log::debug!("connection from {peer}: {e}");
                    }
                });
            }
        }
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Production => "production",
        Mode::Maintenance => "maintenance",
    }
}

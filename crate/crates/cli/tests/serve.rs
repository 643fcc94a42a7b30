mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::process::{Child, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use common::*;

/// Loopback upstream: answers 302 to POST /wp-login.php when the body
/// carries the right password, 200 otherwise, and records request lines.
fn upstream() -> (SocketAddr, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut s) = stream else { continue };
            let mut r = BufReader::new(s.try_clone().unwrap());
            let mut first = String::new();
            if r.read_line(&mut first).is_err() {
                continue;
            }
            let mut len = 0usize;
            loop {
                let mut h = String::new();
                if r.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = r.read_exact(&mut body);
            log.lock().unwrap().push(first.trim_end().to_string());
            let ok_login = first.starts_with("POST /wp-login.php") && String::from_utf8_lossy(&body).contains("pwd=right");
            let resp = if ok_login {
                "HTTP/1.1 302 Found\r\nLocation: /wp-admin/\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_string()
            } else {
                "HTTP/1.1 200 OK\r\nContent-Type: text/plain\r\nContent-Length: 11\r\nConnection: close\r\n\r\nupstream-ok".to_string()
            };
            let _ = s.write_all(resp.as_bytes());
        }
    });
    (addr, seen)
}

struct Server {
    child: Child,
    addr: SocketAddr,
}

impl Server {
    fn start(cfg: &std::path::Path, upstream: SocketAddr, mode: &str) -> Server {
        let mut child = hostguard(cfg)
            .args(["serve", "--mode", mode, "--listen", "127.0.0.1:0", "--upstream", &upstream.to_string()])
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .strip_prefix("listening on ")
            .and_then(|r| r.split_whitespace().next())
            .unwrap_or_else(|| {
                let mut err = String::new();
                child.stderr.take().unwrap().read_to_string(&mut err).unwrap();
                panic!("serve did not start: {line:?} {err}")
            })
            .parse()
            .unwrap();
        Server { child, addr }
    }

    fn request(&self, method: &str, target: &str, headers: &[(&str, &str)], body: &str) -> (u16, String) {
        let mut s = TcpStream::connect(self.addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        let mut req = format!("{method} {target} HTTP/1.1\r\nHost: site.example\r\nConnection: close\r\n");
        for (k, v) in headers {
            req.push_str(&format!("{k}: {v}\r\n"));
        }
        req.push_str(&format!("Content-Length: {}\r\n\r\n{body}", body.len()));
        s.write_all(req.as_bytes()).unwrap();
        let mut resp = String::new();
        s.read_to_string(&mut resp).unwrap();
        let status = resp.split_whitespace().nth(1).unwrap().parse().unwrap();
        let body = resp.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
        (status, body)
    }

    fn get(&self, target: &str) -> (u16, String) {
        self.request("GET", target, &[("User-Agent", BROWSER)], "")
    }

    /// SIGTERM, then wait for a clean exit.
    fn stop(mut self) -> i32 {
        unsafe { libc::kill(self.child.id() as i32, libc::SIGTERM) };
        self.child.wait().unwrap().code().unwrap_or(-1)
    }
}

const BROWSER: &str = "Mozilla/5.0 (X11; Linux x86_64; rv:123.0) Gecko/20100101 Firefox/123.0";

#[test]
fn proxy_forwards_blocks_and_flushes_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (up, seen) = upstream();
    let server = Server::start(&cfg, up, "production");

    let (status, body) = server.get("/index.php?p=12");
    assert_eq!((status, body.as_str()), (200, "upstream-ok"));

    let (status, body) = server.get("/index.php?controller=../../../etc/passwd");
    assert_eq!(status, 403);
    assert!(body.contains("local file inclusion"), "{body}");
    let (status, _) = server.request("GET", "/", &[("User-Agent", "curl/7.68.0")], "");
    assert_eq!(status, 403);

    // Three failed logins pass through; the fourth is challenged.
    let login = |pwd: &str| {
        server.request(
            "POST",
            "/wp-login.php",
            &[("User-Agent", BROWSER), ("Content-Type", "application/x-www-form-urlencoded")],
            &format!("log=editor&pwd={pwd}"),
        )
    };
    for _ in 0..3 {
        assert_eq!(login("wrong").0, 200);
    }
    let (status, body) = login("wrong");
    assert_eq!(status, 403);
    assert!(body.contains("data-challenge-id"), "{body}");

    // A multipart upload of a script is refused.
    let mp = "--XyZ\r\nContent-Disposition: form-data; name=\"async-upload\"; filename=\"shell.php\"\r\nContent-Type: application/octet-stream\r\n\r\n<?php system($_GET['c']); ?>\r\n--XyZ--\r\n";
    let (status, _) = server.request(
        "POST",
        "/wp-admin/async-upload.php",
        &[("User-Agent", BROWSER), ("Content-Type", "multipart/form-data; boundary=XyZ")],
        mp,
    );
    assert_eq!(status, 403);

    let forwarded = seen.lock().unwrap().clone();
    assert!(forwarded.iter().all(|l| !l.contains("etc/passwd") && !l.contains("async-upload")), "{forwarded:?}");
    assert_eq!(server.stop(), 0);

    let verdicts = fs::read_to_string(dir.path().join("state/logs/verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 8);
    let blocks = fs::read_to_string(dir.path().join("state/logs/blocks.jsonl")).unwrap();
    assert!(blocks.lines().any(|l| l.contains("\"reason_code\":\"LFI\"")), "{blocks}");
    assert!(blocks.lines().any(|l| l.contains("\"reason_code\":\"FAILED_LOGINS\"")), "{blocks}");
    // Auto-marked keys persist for the next run.
    let store = fs::read_to_string(dir.path().join("state/blacklist.jsonl")).unwrap();
    assert!(store.contains("127.0.0.1|GET|/index.php"), "{store}");
}

#[test]
fn successful_login_resets_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (up, _) = upstream();
    let server = Server::start(&cfg, up, "production");
    let login = |pwd: &str| {
        server
            .request(
                "POST",
                "/wp-login.php",
                &[("User-Agent", BROWSER), ("Content-Type", "application/x-www-form-urlencoded")],
                &format!("log=editor&pwd={pwd}"),
            )
            .0
    };
    assert_eq!(login("wrong"), 200);
    assert_eq!(login("wrong"), 200);
    assert_eq!(login("right"), 302);
    assert_eq!(login("wrong"), 200);
    assert_eq!(login("wrong"), 200);
    assert_eq!(login("wrong"), 200);
    assert_eq!(login("wrong"), 403);
    assert_eq!(server.stop(), 0);
}

#[test]
fn maintenance_mode_needs_the_token() {
    let dir = tempfile::tempdir().unwrap();
    let (up, _) = upstream();
    let cfg = write_config(dir.path(), "");
    let o = run(&cfg, &["serve", "--mode", "maintenance", "--listen", "127.0.0.1:0", "--upstream", &up.to_string()]);
    assert_eq!(code(&o), 2, "maintenance without a token must not start");

    let cfg = write_config(dir.path(), "[gateway]\nmaintenance_token = s3cret-Token\n");
    let server = Server::start(&cfg, up, "maintenance");
    let (status, body) = server.get("/");
    assert_eq!(status, 503);
    assert!(body.contains("maintenance"), "{body}");
    assert_eq!(server.get("/?access=wrong").0, 503);
    assert_eq!(server.get("/?access=s3cret-Token"), (200, "upstream-ok".into()));
    assert_eq!(server.stop(), 0);
}

#[test]
fn serve_validates_config_eagerly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "geo_table = nowhere.csv\n");
    let o = run(&cfg, &["serve", "--listen", "127.0.0.1:0", "--upstream", "127.0.0.1:9"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
    let cfg = write_config(dir.path(), "");
    let o = run(&cfg, &["serve", "--listen", "127.0.0.1:0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("upstream"), "{}", stderr(&o));
}

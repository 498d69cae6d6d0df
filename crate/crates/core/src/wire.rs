//! Newline-delimited JSON request/response protocol for the central store.
//!
//! Requests: `{"op":"submit",<instruction fields>}`, `{"op":"poll","cursor":N,"max":K}`,
//! `{"op":"snapshot"}`. Responses are canonical JSON: `{"ok":...}` or
//! `{"err":"<ErrorCode>"}`. Integers in requests may be JSON numbers or
//! decimal strings; responses always carry them as strings.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use serde_json::{json, Value};

use crate::canonical::{self, u64_str};
use crate::central::{Cursor, EventSource, SharedCentralAds, SubmissionInstruction};

fn int_field(req: &Value, key: &str) -> Option<u64> {
    match req.get(key)? {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => u64_str::parse_u64(s),
        _ => None,
    }
}

fn err(code: &str) -> Value {
    json!({ "err": code })
}

/// Handles one request line and returns the canonical response line (without newline).
pub fn handle_line(ads: &SharedCentralAds, line: &[u8]) -> Vec<u8> {
    canonical::to_bytes(&dispatch(ads, line))
}

fn dispatch(ads: &SharedCentralAds, line: &[u8]) -> Value {
    let Ok(mut req) = serde_json::from_slice::<Value>(line) else {
        return err("BadRequest");
    };
    let op = req.get("op").and_then(Value::as_str).map(str::to_owned);
    match op.as_deref() {
        Some("submit") => {
            if let Some(obj) = req.as_object_mut() {
                obj.remove("op");
            }
            let Ok(instruction) = serde_json::from_value::<SubmissionInstruction>(req) else {
                return err("BadRequest");
            };
            match ads.submit(&instruction) {
                Ok(event) => json!({ "ok": event }),
                Err(e) => err(e.code()),
            }
        }
        Some("poll") => {
            let (Some(cursor), Some(max)) = (int_field(&req, "cursor"), int_field(&req, "max")) else {
                return err("BadRequest");
            };
            match ads.poll(Cursor(cursor), max as usize) {
                Ok((events, next)) => json!({ "ok": { "events": events, "next": next.0.to_string() } }),
                Err(e) => err(e.code()),
            }
        }
        Some("snapshot") => json!({ "ok": ads.snapshot() }),
        _ => err("BadRequest"),
    }
}

/// Serves requests from `reader` until EOF, one response line per request line.
pub fn serve<R: BufRead, W: Write>(ads: &SharedCentralAds, reader: R, mut writer: W) -> io::Result<()> {
    for line in reader.split(b'\n') {
        let line = line?;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let mut resp = handle_line(ads, &line);
        resp.push(b'\n');
        writer.write_all(&resp)?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp(ads: SharedCentralAds, listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let ads = ads.clone();
        std::thread::spawn(move || {
            let _ = serve_connection(&ads, stream);
        });
    }
    Ok(())
}

fn serve_connection(ads: &SharedCentralAds, stream: TcpStream) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve(ads, reader, stream)
}

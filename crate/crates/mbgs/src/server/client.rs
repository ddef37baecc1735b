//! A blocking protocol client.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};

use serde_json::{json, Value};

use super::protocol::{read_message, write_message, PROTOCOL_VERSION};

pub struct Client {
    stream: TcpStream,
    reader: BufReader<TcpStream>,
    next_id: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Client { stream, reader, next_id: 1 })
    }

    /// Send raw bytes as one frame and return the raw response frame.
    pub fn exchange_raw(&mut self, payload: &[u8]) -> std::io::Result<Vec<u8>> {
        write_message(&mut self.stream, payload)?;
        read_message(&mut self.reader)?.ok_or_else(|| std::io::ErrorKind::UnexpectedEof.into())
    }

    /// Send `body` (a JSON object with a `type`) stamped with the protocol
    /// version and a fresh id, and return the parsed response.
    pub fn request(&mut self, mut body: Value) -> std::io::Result<Value> {
        let id = self.next_id;
        self.next_id += 1;
        let obj = body
            .as_object_mut()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "request must be an object"))?;
        obj.insert("protocol".into(), json!(PROTOCOL_VERSION));
        obj.insert("id".into(), json!(id));
        let bytes = serde_json::to_vec(&body).map_err(std::io::Error::other)?;
        let out = self.exchange_raw(&bytes)?;
        serde_json::from_slice(&out).map_err(std::io::Error::other)
    }
}

/// Plain HTTP GET returning status code and body.
pub fn http_get(addr: impl ToSocketAddrs, path: &str) -> std::io::Result<(u16, Vec<u8>)> {
    let mut s = TcpStream::connect(addr)?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")?;
    let mut r = BufReader::new(s);
    let mut status = String::new();
    r.read_line(&mut status)?;
    let code = status
        .split_whitespace()
        .nth(1)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad status line"))?;
    loop {
        let mut h = String::new();
        if r.read_line(&mut h)? == 0 || h == "\r\n" {
            break;
        }
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    Ok((code, body))
}

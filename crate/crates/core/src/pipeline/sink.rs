use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Sender};
use std::thread::JoinHandle;
use std::time::Duration;

use super::DebugSink;
use crate::decoder::Prediction;

/// `t_ns,p1..p5,s1..s5,lag_ns`, where `t_ns` is the newest sample's acquisition time.
pub fn debug_record(p: &Prediction) -> String {
    let mut s = p.newest_sample_ns.to_string();
    for v in p.probs {
        let _ = write!(s, ",{v:.6}");
    }
    for b in p.states {
        s.push_str(if b { ",1" } else { ",0" });
    }
    let _ = write!(s, ",{}", p.latency_ns());
    s
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SinkStats {
    pub written: u64,
    pub failed: u64,
    pub last_error: Option<String>,
}

/// Background writer: the decoding stage hands records over an unbounded
/// channel and never waits on I/O.
pub struct DebugWriter {
    tx: Option<Sender<String>>,
    handle: Option<JoinHandle<SinkStats>>,
}

impl DebugWriter {
    pub fn open(sink: &DebugSink) -> Self {
        let target = match sink {
            DebugSink::None => {
                return Self {
                    tx: None,
                    handle: None,
                }
            }
            t => t.clone(),
        };
        let (tx, rx) = mpsc::channel::<String>();
        let handle = std::thread::spawn(move || {
            let mut stats = SinkStats::default();
            let out: std::io::Result<Box<dyn Write>> = match &target {
                DebugSink::File(p) => File::create(p).map(|f| Box::new(f) as Box<dyn Write>),
                DebugSink::Socket(addr) => connect(addr).map(|s| Box::new(s) as Box<dyn Write>),
                DebugSink::None => unreachable!(),
            };
            let mut out = match out {
                Ok(w) => Some(BufWriter::new(w)),
                Err(e) => {
                    stats.last_error = Some(e.to_string());
                    None
                }
            };
            for line in rx {
                match out.as_mut().map(|w| writeln!(w, "{line}")) {
                    Some(Ok(())) => stats.written += 1,
                    Some(Err(e)) => {
                        stats.failed += 1;
                        stats.last_error = Some(e.to_string());
                        out = None;
                    }
                    None => stats.failed += 1,
                }
            }
            if let Some(Err(e)) = out.as_mut().map(Write::flush) {
                stats.last_error = Some(e.to_string());
            }
            stats
        });
        Self {
            tx: Some(tx),
            handle: Some(handle),
        }
    }

    pub fn send(&self, p: &Prediction) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(debug_record(p));
        }
    }

    /// Closes the channel and waits for the writer to drain it.
    pub fn finish(mut self) -> SinkStats {
        self.tx = None;
        match self.handle.take() {
            Some(h) => h.join().unwrap_or_else(|_| SinkStats {
                last_error: Some("debug writer panicked".into()),
                ..SinkStats::default()
            }),
            None => SinkStats::default(),
        }
    }
}

fn connect(addr: &str) -> std::io::Result<TcpStream> {
    let mut last = None;
    for a in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&a, Duration::from_secs(1)) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| std::io::Error::other(format!("no address for {addr}"))))
}

//! Plain-text timestamp lists, one file per channel.
//!
//! ```text
//! # timebin-stream v1
//! # channel = signal
//! # scenario_sha256 = 3f9a…
//! # seed = 42
//! # count = 3
//! 1000
//! 2500
//! 90000
//! ```

use std::io::{BufRead, Write};

use super::{Channel, EventStream};
use crate::error::{Error, Result};

const MAGIC: &str = "# timebin-stream v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub channel: Channel,
    pub scenario_sha256: String,
    pub seed: u64,
    pub count: usize,
}

pub fn write_stream_text<W: Write>(
    mut w: W,
    stream: &EventStream,
    scenario_sha256: &str,
    seed: u64,
) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "# channel = {}", stream.channel().name())?;
    writeln!(w, "# scenario_sha256 = {scenario_sha256}")?;
    writeln!(w, "# seed = {seed}")?;
    writeln!(w, "# count = {}", stream.len())?;
    for t in stream.timestamps() {
        writeln!(w, "{t}")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_err(reason: impl Into<String>) -> Error {
    Error::Parse {
        what: "stream file".to_string(),
        reason: reason.into(),
    }
}

pub fn read_stream_text<R: BufRead>(r: R) -> Result<(StreamHeader, EventStream)> {
    let mut lines = r.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != MAGIC {
        return Err(parse_err(format!("missing header line, found {first:?}")));
    }
    let mut channel = None;
    let mut hash = None;
    let mut seed = None;
    let mut count = None;
    let mut timestamps = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let Some((key, value)) = rest.split_once('=') else {
                continue;
            };
            let value = value.trim();
            match key.trim() {
                "channel" => {
                    channel = Some(match value {
                        "signal" => Channel::Signal,
                        "idler" => Channel::Idler,
                        other => return Err(parse_err(format!("unknown channel {other}"))),
                    })
                }
                "scenario_sha256" => hash = Some(value.to_string()),
                "seed" => seed = Some(value.parse().map_err(|_| parse_err("bad seed"))?),
                "count" => count = Some(value.parse().map_err(|_| parse_err("bad count"))?),
                _ => {}
            }
            continue;
        }
        let t: i64 = line
            .parse()
            .map_err(|_| parse_err(format!("line {}: not a timestamp: {line}", lineno + 2)))?;
        timestamps.push(t);
    }
    let header = StreamHeader {
        channel: channel.ok_or_else(|| parse_err("missing channel"))?,
        scenario_sha256: hash.ok_or_else(|| parse_err("missing scenario_sha256"))?,
        seed: seed.ok_or_else(|| parse_err("missing seed"))?,
        count: count.ok_or_else(|| parse_err("missing count"))?,
    };
    if header.count != timestamps.len() {
        return Err(parse_err(format!(
            "header says {} events, file has {}",
            header.count,
            timestamps.len()
        )));
    }
    let stream = EventStream::from_timestamps(header.channel, timestamps)?;
    Ok((header, stream))
}

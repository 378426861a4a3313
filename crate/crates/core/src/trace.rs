//! JSONL trace format.
//!
//! A trace file holds one or more runs. Each run is a `header` line, one
//! `round` line per round and a closing `result` line:
//!
//! ```text
//! {"type":"header","protocol":"multi","n":4,"f":2,"committee_size":null,"inputs":[3,1,4,2],"schedule":{"crashes":[]},"trial":0}
//! {"type":"round","round":1,"awake":[0,1,2,3],"sent":[[0,1,3],...],"delivered":[...],"lost":[[s,r,payload,"RecipientAsleep"]],"crashes":[],"estimates":[3,3,4,2],"activations":[0,0,0,0]}
//! {"type":"result","decisions":[4,4,4,4]}
//! ```
//!
//! Messages are `[sender, recipient, payload]`; the round is implied by the
//! enclosing line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::check::CheckContext;
use crate::engine::RoundTrace;
use crate::schedule::CrashSchedule;
use crate::{Error, LossReason, Message, PlayerId, ProtocolKind, Result, Round, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub protocol: ProtocolKind,
    pub n: u32,
    pub f: u32,
    pub committee_size: Option<u32>,
    pub inputs: Vec<Value>,
    pub schedule: CrashSchedule,
    #[serde(default)]
    pub trial: Option<u64>,
}

impl TraceHeader {
    pub fn check_context(&self) -> CheckContext {
        CheckContext::new(self.protocol, self.n, self.f, self.inputs.clone())
            .with_committee_size(self.committee_size)
    }
}

type WireMessage = (u32, u32, Value);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RoundLine {
    round: Round,
    awake: Vec<u32>,
    sent: Vec<WireMessage>,
    delivered: Vec<WireMessage>,
    lost: Vec<(u32, u32, Value, LossReason)>,
    crashes: Vec<u32>,
    estimates: Vec<Option<Value>>,
    activations: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(TraceHeader),
    Round(RoundLine),
    Result { decisions: Vec<Option<Value>> },
}

fn to_wire(m: &Message) -> WireMessage {
    (m.sender.0, m.recipient.0, m.payload)
}

fn from_wire((s, r, p): WireMessage, round: Round) -> Message {
    Message {
        sender: PlayerId(s),
        recipient: PlayerId(r),
        round,
        payload: p,
    }
}

impl From<&RoundTrace> for RoundLine {
    fn from(t: &RoundTrace) -> Self {
        RoundLine {
            round: t.round,
            awake: t.awake.iter().map(|p| p.0).collect(),
            sent: t.sent.iter().map(to_wire).collect(),
            delivered: t.delivered.iter().map(to_wire).collect(),
            lost: t
                .lost
                .iter()
                .map(|(m, r)| (m.sender.0, m.recipient.0, m.payload, *r))
                .collect(),
            crashes: t.crashes.iter().map(|p| p.0).collect(),
            estimates: t.estimates.clone(),
            activations: t.activations.clone(),
        }
    }
}

impl From<RoundLine> for RoundTrace {
    fn from(l: RoundLine) -> Self {
        let round = l.round;
        RoundTrace {
            round,
            awake: l.awake.into_iter().map(PlayerId).collect(),
            sent: l.sent.into_iter().map(|w| from_wire(w, round)).collect(),
            delivered: l
                .delivered
                .into_iter()
                .map(|w| from_wire(w, round))
                .collect(),
            lost: l
                .lost
                .into_iter()
                .map(|(s, r, p, why)| (from_wire((s, r, p), round), why))
                .collect(),
            crashes: l.crashes.into_iter().map(PlayerId).collect(),
            estimates: l.estimates,
            activations: l.activations,
        }
    }
}

/// Streams runs to a JSONL sink.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    fn line(&mut self, line: &Line) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")
    }

    pub fn header(&mut self, header: &TraceHeader) -> std::io::Result<()> {
        self.line(&Line::Header(header.clone()))
    }

    pub fn round(&mut self, t: &RoundTrace) -> std::io::Result<()> {
        self.line(&Line::Round(t.into()))
    }

    pub fn result(&mut self, decisions: &[Option<Value>]) -> std::io::Result<()> {
        self.line(&Line::Result {
            decisions: decisions.to_vec(),
        })
    }

    pub fn run(
        &mut self,
        header: &TraceHeader,
        rounds: &[RoundTrace],
        decisions: &[Option<Value>],
    ) -> std::io::Result<()> {
        self.header(header)?;
        for t in rounds {
            self.round(t)?;
        }
        self.result(decisions)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// One run read back from a trace file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRun {
    pub header: TraceHeader,
    pub rounds: Vec<RoundTrace>,
    pub decisions: Vec<Option<Value>>,
}

/// Serializes a single run to a JSONL string.
pub fn to_jsonl(
    header: &TraceHeader,
    rounds: &[RoundTrace],
    decisions: &[Option<Value>],
) -> String {
    let mut w = TraceWriter::new(Vec::new());
    w.run(header, rounds, decisions)
        .expect("writing to a Vec cannot fail");
    String::from_utf8(w.into_inner()).expect("serde_json emits UTF-8")
}

/// Parses every run in a JSONL trace.
pub fn read_runs(input: impl BufRead) -> Result<Vec<RecordedRun>> {
    let mut runs = Vec::new();
    let mut current: Option<RecordedRun> = None;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let err = |reason: String| Error::Parse {
            line: lineno,
            reason,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        match parsed {
            Line::Header(header) => {
                if current.is_some() {
                    return Err(err("header before previous run's result".into()));
                }
                current = Some(RecordedRun {
                    header,
                    rounds: Vec::new(),
                    decisions: Vec::new(),
                });
            }
            Line::Round(r) => current
                .as_mut()
                .ok_or_else(|| err("round line outside a run".into()))?
                .rounds
                .push(r.into()),
            Line::Result { decisions } => {
                let mut run = current
                    .take()
                    .ok_or_else(|| err("result line outside a run".into()))?;
                run.decisions = decisions;
                runs.push(run);
            }
        }
    }
    if current.is_some() {
        return Err(Error::Parse {
            line: 0,
            reason: "trace ends inside a run".into(),
        });
    }
    Ok(runs)
}

//! Append-only door event log with JSON Lines persistence and live
//! subscription.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use tokio::sync::broadcast;

use crate::clock::Clock;
use crate::model::{DoorEvent, EventKind, EventPayload};

/// Position of the last issued event. Hands out gapless sequence numbers and
/// non-decreasing timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCursor {
    last_seq: u64,
    last_ts: u64,
}

impl EventCursor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn next_event(
        &mut self,
        kind: EventKind,
        payload: EventPayload,
        clock: &dyn Clock,
    ) -> DoorEvent {
        self.last_seq += 1;
        self.last_ts = self.last_ts.max(clock.now_ms());
        DoorEvent {
            seq: self.last_seq,
            ts_ms: self.last_ts,
            kind,
            payload,
        }
    }
}

struct LogInner {
    cursor: EventCursor,
    events: Vec<DoorEvent>,
    sink: Option<BufWriter<File>>,
}

pub struct EventLog {
    inner: Mutex<LogInner>,
    live: broadcast::Sender<DoorEvent>,
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new()
    }
}

impl EventLog {
    pub fn new() -> Self {
        let (live, _) = broadcast::channel(1024);
        Self {
            inner: Mutex::new(LogInner {
                cursor: EventCursor::new(),
                events: Vec::new(),
                sink: None,
            }),
            live,
        }
    }

    /// Log that also appends every event to `path` as one JSON line.
    pub fn with_file(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let log = Self::new();
        log.inner.lock().unwrap().sink = Some(BufWriter::new(file));
        Ok(log)
    }

    pub fn append(&self, kind: EventKind, payload: EventPayload, clock: &dyn Clock) -> DoorEvent {
        let mut inner = self.inner.lock().unwrap();
        let event = inner.cursor.next_event(kind, payload, clock);
        if let Some(sink) = inner.sink.as_mut() {
            let line = serde_json::to_string(&event).expect("event serializes");
            if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                tracing::error!("event log write failed: {e}");
            }
        }
        inner.events.push(event.clone());
        // Held under the lock so subscribers observe sequence order.
        let _ = self.live.send(event.clone());
        event
    }

    pub fn snapshot(&self) -> Vec<DoorEvent> {
        self.inner.lock().unwrap().events.clone()
    }

    /// Events with `seq > since`.
    pub fn since(&self, since: u64) -> Vec<DoorEvent> {
        let inner = self.inner.lock().unwrap();
        // seq n lives at index n-1
        let start = (since as usize).min(inner.events.len());
        inner.events[start..].to_vec()
    }

    pub fn last_seq(&self) -> u64 {
        self.inner.lock().unwrap().cursor.last_seq()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Backlog after `since` plus a receiver for everything appended later.
    /// Events may appear in both; callers skip by sequence number.
    pub fn subscribe_from(&self, since: u64) -> (Vec<DoorEvent>, broadcast::Receiver<DoorEvent>) {
        let inner = self.inner.lock().unwrap();
        let rx = self.live.subscribe();
        let start = (since as usize).min(inner.events.len());
        (inner.events[start..].to_vec(), rx)
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.snapshot())
    }
}

pub fn to_jsonl(events: &[DoorEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(path: &Path) -> io::Result<Vec<DoorEvent>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
        );
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    #[test]
    fn first_event_is_seq_one() {
        let clock = ManualClock::new(0);
        let mut cur = EventCursor::new();
        let e = cur.next_event(EventKind::DoorbellPressed, EventPayload::default(), &clock);
        assert_eq!(e.seq, 1);
        let e2 = cur.next_event(EventKind::FrameCaptured, EventPayload::default(), &clock);
        assert_eq!(e2.seq, 2);
    }

    #[test]
    fn equal_timestamps_keep_sequence_order() {
        let clock = ManualClock::new(100);
        let log = EventLog::new();
        let a = log.append(EventKind::DoorbellPressed, Default::default(), &clock);
        let b = log.append(EventKind::FrameCaptured, Default::default(), &clock);
        assert_eq!((a.ts_ms, b.ts_ms), (100, 100));
        assert!(a.seq < b.seq);
        assert_eq!(log.since(1), vec![b]);
        assert!(log.since(5).is_empty());
    }

    #[test]
    fn file_sink_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let clock = ManualClock::new(7);
        let log = EventLog::with_file(&path).unwrap();
        log.append(EventKind::DoorbellPressed, Default::default(), &clock);
        clock.advance(3);
        log.append(EventKind::NoFaceFound, Default::default(), &clock);
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, log.snapshot());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), log.to_jsonl());
    }

    #[test]
    fn subscribers_see_new_events() {
        let clock = ManualClock::new(0);
        let log = EventLog::new();
        log.append(EventKind::DoorbellPressed, Default::default(), &clock);
        let (backlog, mut rx) = log.subscribe_from(0);
        assert_eq!(backlog.len(), 1);
        log.append(EventKind::FrameCaptured, Default::default(), &clock);
        assert_eq!(rx.try_recv().unwrap().seq, 2);
    }
}

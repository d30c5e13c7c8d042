//! Deterministic discrete-event kernel: integer-millisecond clock, a
//! cancellable event queue with insertion-order tie breaking, and named
//! random streams.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Simulation time in whole milliseconds since the start of the run.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1000)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Elapsed time since `earlier`, saturating at zero.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, ms: u64) -> SimTime {
        SimTime(self.0 + ms)
    }
}

impl Sub for SimTime {
    type Output = u64;
    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

/// Handle returned by [`EventQueue::schedule`]; the insertion sequence number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

/// An event popped from the queue.
#[derive(Clone, Debug, PartialEq)]
pub struct Scheduled<E> {
    pub time: SimTime,
    pub sequence: u64,
    pub event: E,
}

struct Entry<E> {
    time: SimTime,
    sequence: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.sequence) == (other.time, other.sequence)
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.sequence).cmp(&(other.time, other.sequence))
    }
}

/// Time-ordered event queue. Events at equal times pop in insertion order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: BTreeSet<u64>,
    next_sequence: u64,
    now: SimTime,
    processed: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            cancelled: BTreeSet::new(),
            next_sequence: 0,
            now: SimTime::ZERO,
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events popped so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Number of live (not cancelled) pending events.
    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    /// Enqueues `event` at `time`.
    ///
    /// Scheduling before the current clock is a simulator bug and panics.
    pub fn schedule(&mut self, time: SimTime, event: E) -> EventHandle {
        assert!(
            time >= self.now,
            "event scheduled in the past: {} < {}",
            time,
            self.now
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Reverse(Entry {
            time,
            sequence,
            event,
        }));
        EventHandle(sequence)
    }

    pub fn schedule_in(&mut self, delay_ms: u64, event: E) -> EventHandle {
        self.schedule(self.now + delay_ms, event)
    }

    /// Cancels a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_sequence {
            return false;
        }
        let live = self.heap.iter().any(|Reverse(e)| e.sequence == handle.0);
        live && self.cancelled.insert(handle.0)
    }

    fn drop_cancelled_head(&mut self) {
        while let Some(Reverse(head)) = self.heap.peek() {
            if self.cancelled.remove(&head.sequence) {
                self.heap.pop();
            } else {
                break;
            }
        }
    }

    /// Time of the next live event.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.drop_cancelled_head();
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    /// Pops the next live event if it fires at or before `limit`, advancing
    /// the clock to its time.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<Scheduled<E>> {
        self.drop_cancelled_head();
        match self.heap.peek() {
            Some(Reverse(head)) if head.time <= limit => {}
            _ => return None,
        }
        let Reverse(entry) = self.heap.pop()?;
        self.now = entry.time;
        self.processed += 1;
        Some(Scheduled {
            time: entry.time,
            sequence: entry.sequence,
            event: entry.event,
        })
    }

    /// Moves the clock forward without processing anything.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now, "clock cannot move backwards");
        self.now = t;
    }

    /// Processes every event with `time <= t_end` in total order, handing each
    /// to `handler` together with the queue so handlers can schedule more
    /// work. Leaves the clock at `t_end` and returns the number processed.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Scheduled<E>),
    {
        assert!(t_end >= self.now, "run_until target lies in the past");
        let mut count = 0;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
            count += 1;
        }
        self.now = t_end;
        count
    }
}

/// Seed material for one named consumer of randomness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub label: String,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        RngStream {
            seed,
            label: label.into(),
        }
    }

    /// Builds the generator. The 256-bit key is a SHA-256 of the seed and the
    /// label, so streams are independent and platform-stable.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(self.label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(key)
    }
}

/// Stream labels used by the simulator.
pub mod streams {
    pub const DEMAND: &str = "demand";
    pub const TRAFFIC: &str = "traffic";
    pub const CHANNEL_LOSS: &str = "channel-loss";
    pub const CHANNEL_JITTER: &str = "channel-jitter";
    pub const JUNCTION_SELECT: &str = "junction-select";
}

/// Running SHA-256 over the processed event sequence.
#[derive(Clone, Default)]
pub struct EventLogDigest {
    hasher: Sha256,
    count: u64,
}

impl EventLogDigest {
    pub fn record(&mut self, time: SimTime, sequence: u64, encoded_kind: &[u8]) {
        self.hasher.update(time.0.to_le_bytes());
        self.hasher.update(sequence.to_le_bytes());
        self.hasher.update(encoded_kind);
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn hex(&self) -> String {
        self.hasher
            .clone()
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

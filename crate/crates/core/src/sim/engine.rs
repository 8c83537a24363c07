//! Event queue ordered by `(timestamp, sequence)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::SimError;

/// Simulated time in seconds.
pub type SimTime = f64;

/// A scheduled event. Events at the same timestamp run in the order they were scheduled.
#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub timestamp: SimTime,
    pub sequence_number: u64,
    pub payload: P,
}

impl<P> PartialEq for SimEvent<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for SimEvent<P> {}

impl<P> PartialOrd for SimEvent<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for SimEvent<P> {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .timestamp
            .total_cmp(&self.timestamp)
            .then_with(|| other.sequence_number.cmp(&self.sequence_number))
    }
}

#[derive(Debug)]
pub struct Engine<P> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<SimEvent<P>>,
    executed: u64,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            clock: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            executed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// Enqueues `payload` at `timestamp`, returning the assigned sequence number.
    pub fn schedule(&mut self, timestamp: SimTime, payload: P) -> Result<u64, SimError> {
        if !timestamp.is_finite() || timestamp < self.clock {
            return Err(SimError::CausalityViolation {
                requested: timestamp,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(SimEvent {
            timestamp,
            sequence_number: seq,
            payload,
        });
        Ok(seq)
    }

    /// Schedules `delay` seconds from now. Negative delays are clamped to zero.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> u64 {
        let at = self.clock + delay.max(0.0);
        self.schedule(at, payload)
            .expect("relative scheduling never moves backwards")
    }

    /// Removes and returns the next event with `timestamp <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<SimEvent<P>> {
        match self.queue.peek() {
            Some(ev) if ev.timestamp <= t_end => {
                let ev = self.queue.pop().expect("peeked");
                self.clock = ev.timestamp;
                self.executed += 1;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Moves the clock forward to `t_end` once every due event has been popped.
    pub fn finish_at(&mut self, t_end: SimTime) {
        if t_end > self.clock {
            self.clock = t_end;
        }
    }

    /// Runs every event with `timestamp <= t_end` through `handler`, then sets the clock to
    /// `t_end`. The handler may schedule further events through the engine it is given.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Self, SimEvent<P>),
    {
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
        }
        self.finish_at(t_end);
    }
}

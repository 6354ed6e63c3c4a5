use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::domain::{ActuatorId, CommandOrigin, GreenhouseId, MoteId, SimTime, ValveAction};

use super::link::Message;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    SampleDue(MoteId),
    /// `msg` has just crossed hop `msg.hop`.
    MsgArrival(Message),
    ValveApply {
        actuator: ActuatorId,
        action: ValveAction,
        origin: CommandOrigin,
    },
    PhysicsTick(GreenhouseId),
    /// A valve-side schedule (programmer or farmer) may need to act.
    ScheduleDue(GreenhouseId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue ordered by `(fire_at, seq)`; `seq` is the insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Time of the most recently popped event.
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, fire_at: SimTime, kind: EventKind) {
        assert!(fire_at >= self.now, "event scheduled in the past: {fire_at} < {}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(SimEvent { fire_at, seq, kind }));
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.fire_at)
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let Reverse(ev) = self.heap.pop()?;
        self.now = ev.fire_at;
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

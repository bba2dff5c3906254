use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

/// Bounded queue that evicts its oldest element instead of blocking the
/// producer.
#[derive(Debug)]
pub struct StageQueue<T> {
    capacity: usize,
    inner: Mutex<Inner<T>>,
    ready: Condvar,
}

#[derive(Debug)]
struct Inner<T> {
    items: VecDeque<T>,
    closed: bool,
    dropped: u64,
    pushed: u64,
    max_occupancy: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub capacity: usize,
    pub pushed: u64,
    pub dropped: u64,
    pub max_occupancy: usize,
}

pub const DEFAULT_QUEUE_CAPACITY: usize = 2;

impl<T> StageQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            capacity,
            inner: Mutex::new(Inner {
                items: VecDeque::with_capacity(capacity),
                closed: false,
                dropped: 0,
                pushed: 0,
                max_occupancy: 0,
            }),
            ready: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Enqueues `item`, returning the evicted oldest element when full.
    /// Items pushed after `close` are handed straight back.
    pub fn push(&self, item: T) -> Option<T> {
        let mut g = self.inner.lock().unwrap();
        if g.closed {
            return Some(item);
        }
        let evicted = if g.items.len() == self.capacity {
            g.dropped += 1;
            g.items.pop_front()
        } else {
            None
        };
        g.items.push_back(item);
        g.pushed += 1;
        g.max_occupancy = g.max_occupancy.max(g.items.len());
        drop(g);
        self.ready.notify_one();
        evicted
    }

    /// Blocks until an item is available; `None` once closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut g = self.inner.lock().unwrap();
        loop {
            if let Some(item) = g.items.pop_front() {
                return Some(item);
            }
            if g.closed {
                return None;
            }
            g = self.ready.wait(g).unwrap();
        }
    }

    pub fn try_pop(&self) -> Option<T> {
        self.inner.lock().unwrap().items.pop_front()
    }

    pub fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped_count(&self) -> u64 {
        self.inner.lock().unwrap().dropped
    }

    pub fn stats(&self) -> QueueStats {
        let g = self.inner.lock().unwrap();
        QueueStats {
            capacity: self.capacity,
            pushed: g.pushed,
            dropped: g.dropped,
            max_occupancy: g.max_occupancy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn drops_oldest_when_full() {
        let q = StageQueue::new(2);
        assert_eq!(q.push(1), None);
        assert_eq!(q.push(2), None);
        assert_eq!(q.push(3), Some(1));
        assert_eq!(q.dropped_count(), 1);
        assert_eq!(q.pop(), Some(2));
        assert_eq!(q.pop(), Some(3));
        assert_eq!(q.stats().max_occupancy, 2);
    }

    #[test]
    fn close_drains_then_ends() {
        let q = StageQueue::new(2);
        q.push(7);
        q.close();
        assert_eq!(q.push(8), Some(8));
        assert_eq!(q.pop(), Some(7));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn pop_wakes_on_push() {
        let q = Arc::new(StageQueue::new(2));
        let q2 = Arc::clone(&q);
        let h = std::thread::spawn(move || q2.pop());
        std::thread::sleep(std::time::Duration::from_millis(20));
        q.push(5);
        assert_eq!(h.join().unwrap(), Some(5));
    }
}

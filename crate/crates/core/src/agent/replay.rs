use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::{Action, SemanticFrame, SubGoalPolar};

/// One replay-buffer element. Frames are shared between consecutive
/// transitions.
#[derive(Debug, Clone)]
pub struct Transition {
    pub frame: Arc<SemanticFrame>,
    pub subgoal: SubGoalPolar,
    pub action: Action,
    pub reward: f32,
    pub next_frame: Arc<SemanticFrame>,
    pub next_subgoal: SubGoalPolar,
    pub done: bool,
}

#[derive(Debug, Clone, Copy)]
struct Meta {
    subgoal: SubGoalPolar,
    action: Action,
    reward: f32,
    next_subgoal: SubGoalPolar,
    done: bool,
}

/// Fixed-capacity FIFO ring of transitions. Frames are copied into one
/// slab allocated on the first push, so a long run does not scatter small
/// long-lived allocations across the heap.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    meta: Vec<Meta>,
    frames: Vec<u8>,
    dims: Option<(usize, usize)>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be > 0".into()));
        }
        Ok(Self {
            capacity,
            meta: Vec::new(),
            frames: Vec::new(),
            dims: None,
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    fn frame_len(&self) -> usize {
        self.dims.map_or(0, |(w, h)| w * h)
    }

    /// Appends, overwriting the oldest transition once full. All frames
    /// must share the size of the first one.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        let dims = (t.frame.width(), t.frame.height());
        if (t.next_frame.width(), t.next_frame.height()) != dims {
            return Err(Error::InvalidArgument("frame and next frame differ in size".into()));
        }
        match self.dims {
            None => {
                self.dims = Some(dims);
                self.frames = vec![0; self.capacity * 2 * dims.0 * dims.1];
                self.meta.reserve_exact(self.capacity);
            }
            Some(d) if d != dims => {
                return Err(Error::InvalidArgument(format!(
                    "frame {}x{} in a buffer of {}x{} frames",
                    dims.0, dims.1, d.0, d.1
                )))
            }
            Some(_) => {}
        }
        let len = self.frame_len();
        let slot = &mut self.frames[self.next * 2 * len..(self.next + 1) * 2 * len];
        slot[..len].copy_from_slice(t.frame.classes());
        slot[len..].copy_from_slice(t.next_frame.classes());
        let m = Meta {
            subgoal: t.subgoal,
            action: t.action,
            reward: t.reward,
            next_subgoal: t.next_subgoal,
            done: t.done,
        };
        if self.meta.len() < self.capacity {
            self.meta.push(m);
        } else {
            self.meta[self.next] = m;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// The transition in slot `i` (slots are not in insertion order once
    /// the ring wraps).
    pub fn get(&self, i: usize) -> Option<Transition> {
        let m = self.meta.get(i)?;
        let (w, h) = self.dims?;
        let len = w * h;
        let slot = &self.frames[i * 2 * len..(i + 1) * 2 * len];
        let frame = |bytes: &[u8]| Arc::new(SemanticFrame::from_classes(w, h, bytes.to_vec()).expect("stored frame"));
        Some(Transition {
            frame: frame(&slot[..len]),
            subgoal: m.subgoal,
            action: m.action,
            reward: m.reward,
            next_frame: frame(&slot[len..]),
            next_subgoal: m.next_subgoal,
            done: m.done,
        })
    }

    /// Uniform batch without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if batch > self.len() {
            return Err(Error::InvalidArgument(format!("batch of {batch} from a buffer of {}", self.len())));
        }
        Ok(sample(rng, self.len(), batch)
            .into_iter()
            .map(|i| self.get(i).expect("index in range"))
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len()).map(|i| self.get(i).expect("index in range"))
    }
}

//! Bounded time-varying delay channels.
//!
//! A channel stores step-stamped values and hands back the value stamped
//! `k - d_k` for a delay `d_k` drawn uniformly from `[h1, h2]` or read from a
//! replayed trace. Lookup is by index, so consecutive deliveries may come out
//! of order when the delay shrinks by more than one step.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-count bounds for the input (controller to actuator) and output
/// (sensor to controller) delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayBounds {
    pub h1_i: usize,
    pub h2_i: usize,
    pub h1_o: usize,
    pub h2_o: usize,
}

impl DelayBounds {
    pub fn new(input: (usize, usize), output: (usize, usize)) -> Result<Self> {
        let b = Self {
            h1_i: input.0,
            h2_i: input.1,
            h1_o: output.0,
            h2_o: output.1,
        };
        if b.h1_i > b.h2_i || b.h1_o > b.h2_o {
            return Err(Error::InvalidParameter(format!(
                "delay bounds must satisfy h1 <= h2, got input [{}, {}], output [{}, {}]",
                b.h1_i, b.h2_i, b.h1_o, b.h2_o
            )));
        }
        Ok(b)
    }

    pub const fn zero() -> Self {
        Self {
            h1_i: 0,
            h2_i: 0,
            h1_o: 0,
            h2_o: 0,
        }
    }

    /// Width of the input-delay interval, `h2_I - h1_I`.
    pub fn tau(&self) -> usize {
        self.h2_i - self.h1_i
    }

    pub fn contains_output(&self, d: usize) -> bool {
        (self.h1_o..=self.h2_o).contains(&d)
    }

    pub fn output_range(&self) -> std::ops::RangeInclusive<usize> {
        self.h1_o..=self.h2_o
    }
}

/// A delivered value together with the step it was produced at.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampedMeasurement<T> {
    pub value: T,
    pub origin_step: i64,
}

impl<T> TimestampedMeasurement<T> {
    /// Age of the value when delivered at step `k`.
    pub fn age_at(&self, k: i64) -> i64 {
        k - self.origin_step
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DelaySource {
    Uniform,
    Replay { trace: Vec<usize>, pos: usize },
}

#[derive(Debug, Clone)]
pub struct DelayChannel<T> {
    lo: usize,
    hi: usize,
    buf: VecDeque<(i64, T)>,
    next_step: i64,
    source: DelaySource,
    drawn: Vec<usize>,
}

impl<T: Clone> DelayChannel<T> {
    /// Creates a channel whose history for steps `-h2..-1` holds `fill`.
    pub fn new(lo: usize, hi: usize, fill: T) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidParameter(format!(
                "channel bounds [{lo}, {hi}] are reversed"
            )));
        }
        let mut buf = VecDeque::with_capacity(hi + 1);
        for s in -(hi as i64)..0 {
            buf.push_back((s, fill.clone()));
        }
        Ok(Self {
            lo,
            hi,
            buf,
            next_step: 0,
            source: DelaySource::Uniform,
            drawn: Vec::new(),
        })
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn capacity(&self) -> usize {
        self.hi + 1
    }

    /// Stores `value` with stamp `k`; `k` must follow the previous push.
    pub fn push(&mut self, k: i64, value: T) -> Result<()> {
        if k != self.next_step {
            return Err(Error::NonMonotoneStep {
                expected: self.next_step,
                got: k,
            });
        }
        self.buf.push_back((k, value));
        while self.buf.len() > self.capacity() {
            self.buf.pop_front();
        }
        self.next_step += 1;
        Ok(())
    }

    /// Value stamped `stamp`, if it is still held.
    pub fn value_at(&self, stamp: i64) -> Result<&T> {
        let (first, _) = self
            .buf
            .front()
            .ok_or_else(|| Error::InsufficientHistory("channel is empty".into()))?;
        let idx = stamp - first;
        if idx < 0 || idx as usize >= self.buf.len() {
            return Err(Error::InsufficientHistory(format!(
                "stamp {stamp} not held (window starts at {first}, {} entries)",
                self.buf.len()
            )));
        }
        Ok(&self.buf[idx as usize].1)
    }

    /// Switches the channel to consume `trace` in order.
    pub fn replay_trace(&mut self, trace: Vec<usize>) -> Result<()> {
        if let Some(&bad) = trace.iter().find(|d| !(self.lo..=self.hi).contains(*d)) {
            return Err(Error::DelayOutOfBounds {
                delay: bad,
                lo: self.lo,
                hi: self.hi,
            });
        }
        self.source = DelaySource::Replay { trace, pos: 0 };
        Ok(())
    }

    fn next_delay<R: Rng + ?Sized>(&mut self, k: i64, rng: &mut R) -> Result<usize> {
        let d = match &mut self.source {
            DelaySource::Uniform => rng.random_range(self.lo..=self.hi),
            DelaySource::Replay { trace, pos } => {
                let d = *trace.get(*pos).ok_or(Error::TraceExhausted(k))?;
                *pos += 1;
                d
            }
        };
        assert!(
            (self.lo..=self.hi).contains(&d),
            "delay {d} escaped [{}, {}]",
            self.lo,
            self.hi
        );
        Ok(d)
    }

    /// Draws `d_k` and returns the value stamped `k - d_k`. `k` must be the
    /// most recently pushed step.
    pub fn sample_delayed<R: Rng + ?Sized>(&mut self, k: i64, rng: &mut R) -> Result<TimestampedMeasurement<T>> {
        if k != self.next_step - 1 {
            return Err(Error::InsufficientHistory(format!(
                "sampling at step {k} but the latest push is {}",
                self.next_step - 1
            )));
        }
        let d = self.next_delay(k, rng)?;
        let origin = k - d as i64;
        let value = self.value_at(origin)?.clone();
        self.drawn.push(d);
        Ok(TimestampedMeasurement {
            value,
            origin_step: origin,
        })
    }

    /// Every delay sampled so far, in order.
    pub fn drawn_delays(&self) -> &[usize] {
        &self.drawn
    }
}

pub fn format_trace(trace: &[usize]) -> String {
    let mut s = String::with_capacity(trace.len() * 3);
    for d in trace {
        let _ = writeln!(s, "{d}");
    }
    s
}

pub fn parse_trace(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<usize>()
                .map_err(|e| Error::Config(format!("delay trace line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_trace(path: &Path, trace: &[usize]) -> Result<()> {
    std::fs::write(path, format_trace(trace))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<usize>> {
    parse_trace(&std::fs::read_to_string(path)?)
}

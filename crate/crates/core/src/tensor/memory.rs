//! Allocation accounting for tensor buffers.
//!
//! Every tensor buffer registers its byte size on creation and releases it on
//! drop. Counters are thread-local, so measurements are deterministic for a
//! single-threaded computation.

use std::cell::Cell;
use std::ops::{Deref, DerefMut};

thread_local! {
    static CURRENT: Cell<usize> = const { Cell::new(0) };
    static PEAK: Cell<usize> = const { Cell::new(0) };
}

fn acquire(bytes: usize) {
    CURRENT.with(|c| {
        let now = c.get() + bytes;
        c.set(now);
        PEAK.with(|p| {
            if now > p.get() {
                p.set(now);
            }
        });
    });
}

fn release(bytes: usize) {
    CURRENT.with(|c| c.set(c.get().saturating_sub(bytes)));
}

/// Bytes currently held by live tensor buffers on this thread.
pub fn current_bytes() -> usize {
    CURRENT.with(|c| c.get())
}

/// High-water mark since the last [`reset_peak`].
pub fn peak_bytes() -> usize {
    PEAK.with(|p| p.get())
}

/// Reset the high-water mark to the current usage.
pub fn reset_peak() {
    let now = current_bytes();
    PEAK.with(|p| p.set(now));
}

/// Owned element storage whose size is tracked by the accounting counters.
#[derive(Debug)]
pub struct Buffer<T> {
    data: Vec<T>,
}

impl<T> Buffer<T> {
    pub fn new(data: Vec<T>) -> Self {
        acquire(std::mem::size_of_val(data.as_slice()));
        Buffer { data }
    }

    pub fn into_vec(mut self) -> Vec<T> {
        let data = std::mem::take(&mut self.data);
        release(std::mem::size_of_val(data.as_slice()));
        data
    }
}

impl<T: Clone> Clone for Buffer<T> {
    fn clone(&self) -> Self {
        Buffer::new(self.data.clone())
    }
}

impl<T> Drop for Buffer<T> {
    fn drop(&mut self) {
        release(std::mem::size_of_val(self.data.as_slice()));
    }
}

impl<T> Deref for Buffer<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for Buffer<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

impl<T: PartialEq> PartialEq for Buffer<T> {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accounting_tracks_live_buffers() {
        let base = current_bytes();
        reset_peak();
        let a = Buffer::new(vec![0.0f64; 100]);
        assert_eq!(current_bytes(), base + 800);
        {
            let _b = a.clone();
            assert_eq!(current_bytes(), base + 1600);
        }
        assert_eq!(current_bytes(), base + 800);
        assert_eq!(peak_bytes(), base + 1600);
        let v = a.into_vec();
        assert_eq!(v.len(), 100);
        assert_eq!(current_bytes(), base);
    }
}

//! Time-tag streams: sorted integer timestamps per detector channel.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Signal-arm detector, first HBT output.
pub const APD1: u8 = 0;
/// Signal-arm detector, second HBT output.
pub const APD2: u8 = 1;
/// Idler-arm (herald) detector.
pub const APD3: u8 = 2;

/// A single detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub timestamp: u64,
    pub channel: u8,
}

/// Detection times of one channel, in ticks of `resolution_ps` picoseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeTagStream {
    channel: u8,
    resolution_ps: u64,
    timestamps: Vec<u64>,
}

impl TimeTagStream {
    /// Wraps already-sorted timestamps. Unsorted input is a data error.
    pub fn new(channel: u8, resolution_ps: u64, timestamps: Vec<u64>) -> Result<Self> {
        if resolution_ps == 0 {
            return Err(param("resolution must be >= 1 ps"));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Data(format!(
                "channel {channel}: timestamp {} at index {} precedes {}",
                timestamps[i + 1],
                i + 1,
                timestamps[i]
            )));
        }
        Ok(Self { channel, resolution_ps, timestamps })
    }

    /// Sorts the timestamps first.
    pub fn from_unsorted(channel: u8, resolution_ps: u64, mut timestamps: Vec<u64>) -> Result<Self> {
        timestamps.sort_unstable();
        Self::new(channel, resolution_ps, timestamps)
    }

    pub fn channel(&self) -> u8 {
        self.channel
    }

    pub fn resolution_ps(&self) -> u64 {
        self.resolution_ps
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn into_timestamps(self) -> Vec<u64> {
        self.timestamps
    }

    /// Merges several same-resolution streams into one, relabelled as `channel`.
    pub fn merge(channel: u8, streams: &[&TimeTagStream]) -> Result<Self> {
        let resolution_ps = streams.first().map_or(1, |s| s.resolution_ps);
        if streams.iter().any(|s| s.resolution_ps != resolution_ps) {
            return Err(param("cannot merge streams with different resolutions"));
        }
        let mut all: Vec<u64> = streams.iter().flat_map(|s| s.timestamps.iter().copied()).collect();
        all.sort_unstable();
        Ok(Self { channel, resolution_ps, timestamps: all })
    }
}

/// The streams of channels `0..channel_count` recorded over a common time span.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSet {
    resolution_ps: u64,
    duration_s: f64,
    streams: Vec<TimeTagStream>,
}

impl StreamSet {
    /// Builds a set from per-channel sorted timestamps; channel `i` is `channels[i]`.
    pub fn new(resolution_ps: u64, duration_s: f64, channels: Vec<Vec<u64>>) -> Result<Self> {
        if channels.is_empty() || channels.len() > usize::from(u8::MAX) + 1 {
            return Err(param(format!("channel count must be in 1..=256, got {}", channels.len())));
        }
        if !(duration_s.is_finite() && duration_s >= 0.0) {
            return Err(param(format!("duration must be finite and >= 0, got {duration_s}")));
        }
        let streams = channels
            .into_iter()
            .enumerate()
            .map(|(ch, ts)| TimeTagStream::new(ch as u8, resolution_ps, ts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { resolution_ps, duration_s, streams })
    }

    /// Assembles a set from streams whose channel numbers are `0..n` in order.
    pub fn from_streams(duration_s: f64, streams: Vec<TimeTagStream>) -> Result<Self> {
        let resolution_ps = streams.first().map_or(1, |s| s.resolution_ps);
        if streams.iter().any(|s| s.resolution_ps != resolution_ps) {
            return Err(param("streams have different resolutions"));
        }
        if let Some((i, s)) = streams.iter().enumerate().find(|(i, s)| usize::from(s.channel) != *i) {
            return Err(param(format!("stream {i} carries channel {}", s.channel)));
        }
        Self::new(resolution_ps, duration_s, streams.into_iter().map(TimeTagStream::into_timestamps).collect())
    }

    /// Splits a merged, time-ordered tag list into per-channel streams.
    pub fn from_tags(resolution_ps: u64, duration_s: f64, channel_count: usize, tags: &[Tag]) -> Result<Self> {
        let mut channels = vec![Vec::new(); channel_count];
        for (i, tag) in tags.iter().enumerate() {
            let slot = channels
                .get_mut(usize::from(tag.channel))
                .ok_or_else(|| Error::Data(format!("tag {i}: channel {} >= channel count {channel_count}", tag.channel)))?;
            slot.push(tag.timestamp);
        }
        Self::new(resolution_ps, duration_s, channels)
    }

    pub fn resolution_ps(&self) -> u64 {
        self.resolution_ps
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn channel_count(&self) -> usize {
        self.streams.len()
    }

    pub fn streams(&self) -> &[TimeTagStream] {
        &self.streams
    }

    pub fn channel(&self, channel: u8) -> Result<&TimeTagStream> {
        self.streams
            .get(usize::from(channel))
            .ok_or_else(|| param(format!("channel {channel} not present (have {})", self.streams.len())))
    }

    pub fn total_tags(&self) -> usize {
        self.streams.iter().map(TimeTagStream::len).sum()
    }

    /// All tags in `(timestamp, channel)` order.
    pub fn merged(&self) -> Vec<Tag> {
        let mut tags: Vec<Tag> = self
            .streams
            .iter()
            .flat_map(|s| s.timestamps.iter().map(move |&timestamp| Tag { timestamp, channel: s.channel }))
            .collect();
        tags.sort_unstable();
        tags
    }

    /// Singles rate of one channel in counts/s.
    pub fn rate(&self, channel: u8) -> Result<f64> {
        if self.duration_s <= 0.0 {
            return Err(Error::Undefined("stream set has zero duration".into()));
        }
        Ok(self.channel(channel)?.len() as f64 / self.duration_s)
    }
}

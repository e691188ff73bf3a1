use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraView;

pub const OVERLAP_RANGE: (f64, f64) = (0.30, 0.90);

/// Reference dropout regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropMode {
    /// 10% of pairs lose the whole reference, otherwise each reference
    /// frame is dropped with probability 0.3.
    Training,
    /// 10% drop every reference frame, 10% keep all, otherwise each frame
    /// is dropped with probability 0.4.
    Benchmark,
}

impl DropMode {
    pub fn per_frame_drop(self) -> f64 {
        match self {
            DropMode::Training => 0.30,
            DropMode::Benchmark => 0.40,
        }
    }
}

/// Two pose-annotated clips of the same scene with equal frame counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPair {
    pub target: Vec<CameraView>,
    pub reference: Vec<CameraView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub mode: DropMode,
    /// Window length in frames; half the clip when unset.
    pub window: Option<usize>,
    /// Overlap draws per clip visit before the clip is skipped.
    pub attempts: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            mode: DropMode::Training,
            window: None,
            attempts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmSample {
    pub clip: usize,
    /// Target window, frame indices into the target clip.
    pub target_frames: Vec<usize>,
    /// Surviving reference frames (indices into the reference clip), in
    /// shuffled order.
    pub reference_frames: Vec<usize>,
    /// First frame of the reference window, before dropout.
    pub reference_start: usize,
    /// Window length shared by target and reference.
    pub window: usize,
    /// Measured temporal overlap of the two windows.
    pub overlap: f64,
    /// Whole reference omitted.
    pub omitted: bool,
    /// Frames removed by per-frame dropout (0 when omitted).
    pub dropped: usize,
}

/// Endless stream of training pairs, cycling over the clips.
pub struct SsmPairSampler<'a> {
    clips: &'a [ClipPair],
    opts: SamplerOptions,
    rng: ChaCha8Rng,
    next_clip: usize,
}

pub fn ssm_pair_sampler(
    clips: &[ClipPair],
    opts: SamplerOptions,
    seed: u64,
) -> Result<SsmPairSampler<'_>> {
    for (i, c) in clips.iter().enumerate() {
        if c.target.len() != c.reference.len() {
            return Err(Error::invalid(format!(
                "clip pair {i} has {} target and {} reference frames",
                c.target.len(),
                c.reference.len()
            )));
        }
    }
    Ok(SsmPairSampler {
        clips,
        opts,
        rng: ChaCha8Rng::seed_from_u64(seed),
        next_clip: 0,
    })
}

impl SsmPairSampler<'_> {
    fn try_clip(&mut self, ci: usize) -> Option<SsmSample> {
        let n = self.clips[ci].target.len();
        let l = self.opts.window.unwrap_or(n / 2).min(n);
        if l == 0 {
            return None;
        }
        for _ in 0..self.opts.attempts.max(1) {
            let o = self.rng.gen_range(OVERLAP_RANGE.0..=OVERLAP_RANGE.1);
            let shift = ((1.0 - o) * l as f64).round() as usize;
            if shift + l > n {
                continue;
            }
            let measured = (l - shift) as f64 / l as f64;
            if !(OVERLAP_RANGE.0..=OVERLAP_RANGE.1).contains(&measured) {
                continue;
            }
            let start = self.rng.gen_range(0..=n - l - shift);
            // either clip may lead
            let (ts, rs) = if self.rng.gen_bool(0.5) {
                (start, start + shift)
            } else {
                (start + shift, start)
            };
            let (kept, omitted, dropped) = self.dropout(rs..rs + l);
            return Some(SsmSample {
                clip: ci,
                target_frames: (ts..ts + l).collect(),
                reference_frames: kept,
                reference_start: rs,
                window: l,
                overlap: measured,
                omitted,
                dropped,
            });
        }
        None
    }

    fn dropout(&mut self, frames: std::ops::Range<usize>) -> (Vec<usize>, bool, usize) {
        let all: Vec<usize> = frames.collect();
        let n = all.len();
        let p = match self.opts.mode {
            DropMode::Training => {
                if self.rng.gen_bool(0.10) {
                    return (Vec::new(), true, 0);
                }
                0.30
            }
            DropMode::Benchmark => {
                let u: f64 = self.rng.gen();
                if u < 0.10 {
                    return (Vec::new(), true, 0);
                } else if u < 0.20 {
                    0.0
                } else {
                    0.40
                }
            }
        };
        let mut kept: Vec<usize> = all.into_iter().filter(|_| !self.rng.gen_bool(p)).collect();
        kept.shuffle(&mut self.rng);
        let dropped = n - kept.len();
        (kept, false, dropped)
    }
}

impl Iterator for SsmPairSampler<'_> {
    type Item = SsmSample;

    fn next(&mut self) -> Option<SsmSample> {
        for _ in 0..self.clips.len() {
            let ci = self.next_clip;
            self.next_clip = (self.next_clip + 1) % self.clips.len();
            match self.try_clip(ci) {
                Some(s) => return Some(s),
                None => log::warn!("clip pair {ci}: no window with overlap in [0.3, 0.9], skipped"),
            }
        }
        None
    }
}

//! Frame sampling: one feature row per segment.
//!
//! A video of `T` frames is divided into `N` equal segments; segment `s`
//! spans frames `[floor(s·T/N), floor((s+1)·T/N))`. Training draws one
//! uniformly random frame per segment; evaluation takes `k` evenly spaced
//! positions per segment, grouped into `k` index lists (list `j` holds the
//! `j`-th position of every segment).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SegmentSampler {
    num_segments: usize,
    rng: ChaCha20Rng,
}

/// Bounds of segment `s` for a `frames`-long video.
pub fn segment_bounds(s: usize, frames: usize, num_segments: usize) -> (usize, usize) {
    (s * frames / num_segments, (s + 1) * frames / num_segments)
}

impl SegmentSampler {
    pub fn new(num_segments: usize, seed: u64) -> Self {
        Self {
            num_segments,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    fn check_frames(&self, frames: usize) -> Result<()> {
        if frames < self.num_segments {
            return Err(Error::VideoTooShort {
                frames,
                segments: self.num_segments,
            });
        }
        Ok(())
    }

    /// One uniformly random frame index per segment, strictly increasing
    /// across segments. Deterministic for a fixed seed and call sequence.
    pub fn sample_train(&mut self, frames: usize) -> Result<Vec<usize>> {
        self.check_frames(frames)?;
        let mut indices = Vec::with_capacity(self.num_segments);
        for s in 0..self.num_segments {
            let (lo, hi) = segment_bounds(s, frames, self.num_segments);
            indices.push(self.rng.gen_range(lo..hi));
        }
        Ok(indices)
    }

    /// `k` index lists of length `num_segments`. Within a segment of
    /// length `L`, position `j` is `floor(j·L/k)` clamped to `L−1`.
    pub fn sample_eval(&self, frames: usize, k: usize) -> Result<Vec<Vec<usize>>> {
        self.check_frames(frames)?;
        if k == 0 {
            return Err(Error::Config("eval sample count must be at least 1".into()));
        }
        let mut lists = vec![Vec::with_capacity(self.num_segments); k];
        for s in 0..self.num_segments {
            let (lo, hi) = segment_bounds(s, frames, self.num_segments);
            let len = hi - lo;
            for (j, list) in lists.iter_mut().enumerate() {
                list.push(lo + (j * len / k).min(len - 1));
            }
        }
        Ok(lists)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_frame_per_segment_when_t_equals_n() {
        let mut s = SegmentSampler::new(5, 1);
        assert_eq!(s.sample_train(5).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn train_indices_stay_in_segment_bounds() {
        let mut s = SegmentSampler::new(5, 2);
        for _ in 0..200 {
            let idx = s.sample_train(10).unwrap();
            for (seg, &i) in idx.iter().enumerate() {
                assert!(i == 2 * seg || i == 2 * seg + 1, "segment {seg} drew {i}");
            }
        }
    }

    #[test]
    fn train_bounds_exhaustive_over_small_videos() {
        for n in 1..=9usize {
            for t in n..=50usize {
                let mut s = SegmentSampler::new(n, 3);
                for _ in 0..5 {
                    let idx = s.sample_train(t).unwrap();
                    assert_eq!(idx.len(), n);
                    for (seg, &i) in idx.iter().enumerate() {
                        let (lo, hi) = segment_bounds(seg, t, n);
                        assert!(lo <= i && i < hi, "N={n} T={t} seg={seg} idx={i}");
                    }
                    assert!(idx.windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
    }

    #[test]
    fn too_short_video_rejected() {
        let mut s = SegmentSampler::new(5, 4);
        assert!(matches!(
            s.sample_train(4),
            Err(Error::VideoTooShort { frames: 4, segments: 5 })
        ));
        assert!(s.sample_eval(4, 5).is_err());
    }

    #[test]
    fn train_draws_are_uniform_within_segments() {
        // Chi-square test per segment over 10^4 draws; segment length 5,
        // so expected count per position is 2000.
        let mut s = SegmentSampler::new(2, 5);
        let draws = 10_000;
        let mut counts = [[0usize; 5]; 2];
        for _ in 0..draws {
            let idx = s.sample_train(10).unwrap();
            counts[0][idx[0]] += 1;
            counts[1][idx[1] - 5] += 1;
        }
        for (seg, seg_counts) in counts.iter().enumerate() {
            let expected = draws as f64 / 5.0;
            let chi2: f64 = seg_counts
                .iter()
                .map(|&c| {
                    let d = c as f64 - expected;
                    d * d / expected
                })
                .sum();
            // 4 degrees of freedom; chi2 of 13.28 corresponds to p = 0.01.
            assert!(chi2 < 13.28, "segment {seg} chi2 {chi2}");
        }
    }

    #[test]
    fn identical_seeds_reproduce_draw_sequences() {
        let mut a = SegmentSampler::new(3, 42);
        let mut b = SegmentSampler::new(3, 42);
        for _ in 0..10 {
            assert_eq!(a.sample_train(17).unwrap(), b.sample_train(17).unwrap());
        }
    }

    #[test]
    fn eval_lists_are_identical_when_segments_have_one_frame() {
        let s = SegmentSampler::new(5, 6);
        let lists = s.sample_eval(5, 5).unwrap();
        assert_eq!(lists.len(), 5);
        for l in &lists {
            assert_eq!(l, &vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn eval_positions_are_evenly_spaced() {
        let s = SegmentSampler::new(2, 7);
        let lists = s.sample_eval(10, 5).unwrap();
        for (j, l) in lists.iter().enumerate() {
            assert_eq!(l, &vec![j, 5 + j]);
        }
    }

    #[test]
    fn eval_is_deterministic() {
        let s = SegmentSampler::new(4, 8);
        assert_eq!(s.sample_eval(23, 5).unwrap(), s.sample_eval(23, 5).unwrap());
    }
}

//! Bidirectional mapping between metric ego-frame trajectories and discrete
//! waypoint tokens.
//!
//! One composite token per waypoint: uniform quantization of (x, y) over the
//! square +/-range with `bins_per_axis` bins per axis,
//! `token = iy * bins_per_axis + ix`. Decoding returns bin centers, so
//! `encode(decode(token)) == token` and the worst-case reconstruction error
//! is half a bin per axis. Out-of-range coordinates clamp to the edge bins
//! and set a flag on the result.

use serde::{Deserialize, Serialize};

use crate::scene::{Point2, Trajectory};
use crate::{Error, Result};

/// Token vocabulary geometry. Default: 400 bins per axis over +/-50 m
/// (0.25 m bins, 160 000 tokens).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenVocab {
    pub bins_per_axis: u32,
    pub range_m: f64,
}

impl Default for TokenVocab {
    fn default() -> Self {
        Self {
            bins_per_axis: 400,
            range_m: 50.0,
        }
    }
}

impl TokenVocab {
    pub fn new(bins_per_axis: u32, range_m: f64) -> Result<Self> {
        if bins_per_axis < 2 {
            return Err(Error::InvalidParameter(
                "vocab needs at least 2 bins per axis".into(),
            ));
        }
        if !(range_m.is_finite() && range_m > 0.0) {
            return Err(Error::InvalidParameter("vocab range must be > 0".into()));
        }
        Ok(Self {
            bins_per_axis,
            range_m,
        })
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * self.range_m / self.bins_per_axis as f64
    }

    pub fn vocab_size(&self) -> u32 {
        self.bins_per_axis * self.bins_per_axis
    }
}

/// A discrete waypoint token sequence; `clamped` records whether any encoded
/// coordinate fell outside the vocabulary range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaypointTokens {
    pub tokens: Vec<u32>,
    pub clamped: bool,
}

impl WaypointTokens {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self {
            tokens,
            clamped: false,
        }
    }
}

fn axis_bin(v: f64, vocab: &TokenVocab) -> (u32, bool) {
    let raw = ((v + vocab.range_m) / vocab.bin_width()).floor();
    let max = (vocab.bins_per_axis - 1) as f64;
    if raw < 0.0 {
        (0, true)
    } else if raw > max {
        (vocab.bins_per_axis - 1, true)
    } else {
        (raw as u32, false)
    }
}

/// Quantize a trajectory into waypoint tokens. Out-of-range coordinates
/// clamp to the edge bins (flagged on the result).
pub fn encode(traj: &Trajectory, vocab: &TokenVocab) -> WaypointTokens {
    let mut clamped = false;
    let tokens = traj
        .waypoints
        .iter()
        .map(|w| {
            let (ix, cx) = axis_bin(w[0], vocab);
            let (iy, cy) = axis_bin(w[1], vocab);
            clamped |= cx | cy;
            iy * vocab.bins_per_axis + ix
        })
        .collect();
    WaypointTokens { tokens, clamped }
}

/// Reconstruct a trajectory from tokens: each waypoint is the center of its
/// bin. Rejects tokens outside the vocabulary, naming the offending index.
pub fn decode(tokens: &WaypointTokens, vocab: &TokenVocab) -> Result<Trajectory> {
    let mut waypoints: Vec<Point2> = Vec::with_capacity(tokens.tokens.len());
    for (index, &token) in tokens.tokens.iter().enumerate() {
        if token >= vocab.vocab_size() {
            return Err(Error::TokenOutOfVocab {
                token,
                index,
                vocab_size: vocab.vocab_size(),
            });
        }
        let ix = token % vocab.bins_per_axis;
        let iy = token / vocab.bins_per_axis;
        waypoints.push([
            -vocab.range_m + (ix as f64 + 0.5) * vocab.bin_width(),
            -vocab.range_m + (iy as f64 + 0.5) * vocab.bin_width(),
        ]);
    }
    Ok(Trajectory::new(waypoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::splitmix64;

    #[test]
    fn default_vocab_geometry() {
        let v = TokenVocab::default();
        assert_eq!(v.bin_width(), 0.25);
        assert_eq!(v.vocab_size(), 160_000);
    }

    #[test]
    fn encode_examples() {
        let v = TokenVocab::default();
        let t = encode(&Trajectory::new(vec![[0.0, 0.0]]), &v);
        assert_eq!(t.tokens, vec![80_200]);
        assert!(!t.clamped);

        let t = encode(&Trajectory::new(vec![[10.0, -5.0]]), &v);
        assert_eq!(t.tokens, vec![72_240]);

        let t = encode(&Trajectory::new(vec![[1000.0, 0.0]]), &v);
        assert_eq!(t.tokens[0] % 400, 399);
        assert!(t.clamped);
    }

    #[test]
    fn decode_examples() {
        let v = TokenVocab::default();
        let t = decode(&WaypointTokens::new(vec![72_240]), &v).unwrap();
        assert_eq!(t.waypoints[0], [10.125, -4.875]);

        let t = decode(&WaypointTokens::new(vec![80_200]), &v).unwrap();
        assert_eq!(t.waypoints[0], [0.125, 0.125]);

        let err = decode(&WaypointTokens::new(vec![80_200, 160_000]), &v).unwrap_err();
        match err {
            crate::Error::TokenOutOfVocab { token, index, .. } => {
                assert_eq!(token, 160_000);
                assert_eq!(index, 1);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    fn uniform(state: &mut u64, lo: f64, hi: f64) -> f64 {
        let u = (splitmix64(state) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + u * (hi - lo)
    }

    #[test]
    fn roundtrip_error_bounded_10k() {
        let v = TokenVocab::default();
        let half_bin = v.bin_width() / 2.0;
        let mut state = 0xB0DEu64;
        for _ in 0..10_000 {
            let wps: Vec<Point2> = (0..6)
                .map(|_| [uniform(&mut state, -50.0, 49.999), uniform(&mut state, -50.0, 49.999)])
                .collect();
            let traj = Trajectory::new(wps);
            let back = decode(&encode(&traj, &v), &v).unwrap();
            for (a, b) in traj.waypoints.iter().zip(&back.waypoints) {
                assert!((a[0] - b[0]).abs() <= half_bin);
                assert!((a[1] - b[1]).abs() <= half_bin);
            }
        }
    }

    #[test]
    fn encode_decode_identity_10k() {
        let v = TokenVocab::default();
        let mut state = 0xCAFEu64;
        for _ in 0..10_000 {
            let tok = (splitmix64(&mut state) % v.vocab_size() as u64) as u32;
            let tokens = WaypointTokens::new(vec![tok]);
            let traj = decode(&tokens, &v).unwrap();
            assert_eq!(encode(&traj, &v).tokens, tokens.tokens);
        }
    }

    #[test]
    fn encode_monotone_per_axis() {
        let v = TokenVocab::default();
        let mut state = 7u64;
        let mut xs: Vec<f64> = (0..200).map(|_| uniform(&mut state, -60.0, 60.0)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let bins: Vec<u32> = xs.iter().map(|&x| axis_bin(x, &v).0).collect();
        for w in bins.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }
}

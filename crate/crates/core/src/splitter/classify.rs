//! Empty-tile classification.
//!
//! Two detectors, each suited to one imaging regime:
//!
//! * **Intensity** (dark/fluorescent backgrounds): a tile is empty when its
//!   mean luminance is below `dark_threshold` *and* fewer than
//!   `min_signal_fraction` of its pixels reach `signal_threshold`.
//! * **Compression** (white/brightfield backgrounds): the tile is JPEG
//!   encoded with pinned settings; a compressed size below
//!   `ratio_threshold` of the raw size means the tile is mostly flat
//!   background.
//!
//! Verdicts are pure functions of the pixels and the policy, and can be
//! recomputed from the logged measurements alone ([`verdict_for`]).

use std::fmt;
use std::str::FromStr;

use crate::codec;
use crate::raster::{luminance, RasterTile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    None,
    Intensity,
    Compression,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::None => "none",
            Algorithm::Intensity => "intensity",
            Algorithm::Compression => "compression",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Algorithm::None),
            "intensity" => Ok(Algorithm::Intensity),
            "compression" => Ok(Algorithm::Compression),
            other => Err(format!("unknown empty filter {other:?} (none|intensity|compression)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmptinessPolicy {
    pub algorithm: Algorithm,
    pub dark_threshold: u8,
    pub signal_threshold: u8,
    pub min_signal_fraction: f64,
    pub jpeg_quality: u8,
    pub ratio_threshold: f64,
}

impl Default for EmptinessPolicy {
    fn default() -> Self {
        EmptinessPolicy {
            algorithm: Algorithm::None,
            dark_threshold: 20,
            signal_threshold: 60,
            min_signal_fraction: 0.005,
            jpeg_quality: 75,
            ratio_threshold: 0.02,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("dark_threshold {dark} must be below signal_threshold {signal}")]
    Thresholds { dark: u8, signal: u8 },
    #[error("min_signal_fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("ratio_threshold {0} outside [0, 1)")]
    Ratio(f64),
    #[error("jpeg_quality {0} outside 1..=100")]
    Quality(u8),
}

impl EmptinessPolicy {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        EmptinessPolicy {
            algorithm,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.dark_threshold >= self.signal_threshold {
            return Err(PolicyError::Thresholds {
                dark: self.dark_threshold,
                signal: self.signal_threshold,
            });
        }
        if !(0.0..=1.0).contains(&self.min_signal_fraction) {
            return Err(PolicyError::Fraction(self.min_signal_fraction));
        }
        // Zero is allowed and disables the compression filter.
        if !(0.0..1.0).contains(&self.ratio_threshold) {
            return Err(PolicyError::Ratio(self.ratio_threshold));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return Err(PolicyError::Quality(self.jpeg_quality));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Kept,
    Empty,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Kept => "kept",
            Verdict::Empty => "empty",
        })
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kept" => Ok(Verdict::Kept),
            "empty" => Ok(Verdict::Empty),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

/// The measurement a verdict was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    None,
    Intensity { mean_luminance: f64, signal_fraction: f64 },
    Compression { ratio: f64, encoded_bytes: u64 },
}

impl Score {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Score::None => Algorithm::None,
            Score::Intensity { .. } => Algorithm::Intensity,
            Score::Compression { .. } => Algorithm::Compression,
        }
    }

    /// `key=value` pairs joined with `;`. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_log_field(&self) -> String {
        match self {
            Score::None => "-".to_string(),
            Score::Intensity {
                mean_luminance,
                signal_fraction,
            } => format!("mean_lum={mean_luminance};signal_fraction={signal_fraction}"),
            Score::Compression { ratio, encoded_bytes } => {
                format!("ratio={ratio};encoded_bytes={encoded_bytes}")
            }
        }
    }

    pub fn parse_log_field(algorithm: Algorithm, field: &str) -> Result<Score, String> {
        let get = |key: &str| -> Result<&str, String> {
            field
                .split(';')
                .filter_map(|kv| kv.split_once('='))
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v)
                .ok_or_else(|| format!("measurement {key} missing in {field:?}"))
        };
        let num = |key: &str| -> Result<f64, String> {
            get(key)?.parse::<f64>().map_err(|e| format!("{key}: {e}"))
        };
        match algorithm {
            Algorithm::None => Ok(Score::None),
            Algorithm::Intensity => Ok(Score::Intensity {
                mean_luminance: num("mean_lum")?,
                signal_fraction: num("signal_fraction")?,
            }),
            Algorithm::Compression => Ok(Score::Compression {
                ratio: num("ratio")?,
                encoded_bytes: get("encoded_bytes")?
                    .parse()
                    .map_err(|e| format!("encoded_bytes: {e}"))?,
            }),
        }
    }
}

/// Decide from a measurement alone.
pub fn verdict_for(score: &Score, policy: &EmptinessPolicy) -> Verdict {
    let empty = match *score {
        Score::None => false,
        Score::Intensity {
            mean_luminance,
            signal_fraction,
        } => mean_luminance < policy.dark_threshold as f64 && signal_fraction < policy.min_signal_fraction,
        Score::Compression { ratio, .. } => ratio < policy.ratio_threshold,
    };
    if empty {
        Verdict::Empty
    } else {
        Verdict::Kept
    }
}

pub fn intensity_score(tile: &RasterTile, signal_threshold: u8) -> Score {
    let n = tile.pixel_count().max(1) as f64;
    let mut sum = 0u64;
    let mut signal = 0u64;
    for p in tile.pixels() {
        let l = luminance(p);
        sum += l as u64;
        if l >= signal_threshold {
            signal += 1;
        }
    }
    Score::Intensity {
        mean_luminance: sum as f64 / n,
        signal_fraction: signal as f64 / n,
    }
}

pub fn classify_intensity(tile: &RasterTile, policy: &EmptinessPolicy) -> (Verdict, Score) {
    let score = intensity_score(tile, policy.signal_threshold);
    (verdict_for(&score, policy), score)
}

pub fn compression_score(tile: &RasterTile, jpeg_quality: u8) -> Result<Score, codec::CodecError> {
    let encoded = codec::encode_jpeg(tile, jpeg_quality)?;
    let raw = tile.pixel_count().max(1) as f64 * 3.0;
    Ok(Score::Compression {
        ratio: encoded.len() as f64 / raw,
        encoded_bytes: encoded.len() as u64,
    })
}

pub fn classify_compression(tile: &RasterTile, policy: &EmptinessPolicy) -> Result<(Verdict, Score), codec::CodecError> {
    let score = compression_score(tile, policy.jpeg_quality)?;
    Ok((verdict_for(&score, policy), score))
}

/// Dispatch on `policy.algorithm`.
pub fn classify(tile: &RasterTile, policy: &EmptinessPolicy) -> Result<(Verdict, Score), codec::CodecError> {
    match policy.algorithm {
        Algorithm::None => Ok((Verdict::Kept, Score::None)),
        Algorithm::Intensity => Ok(classify_intensity(tile, policy)),
        Algorithm::Compression => classify_compression(tile, policy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intensity() -> EmptinessPolicy {
        EmptinessPolicy::with_algorithm(Algorithm::Intensity)
    }

    fn compression() -> EmptinessPolicy {
        EmptinessPolicy::with_algorithm(Algorithm::Compression)
    }

    #[test]
    fn black_tile_is_empty() {
        let (v, s) = classify_intensity(&RasterTile::black(256, 256), &intensity());
        assert_eq!(v, Verdict::Empty);
        assert_eq!(s, Score::Intensity { mean_luminance: 0.0, signal_fraction: 0.0 });
    }

    #[test]
    fn white_tile_is_kept_by_intensity() {
        let (v, s) = classify_intensity(&RasterTile::filled(64, 64, [255; 3]), &intensity());
        assert_eq!(v, Verdict::Kept);
        assert!(matches!(s, Score::Intensity { mean_luminance, .. } if mean_luminance == 255.0));
    }

    #[test]
    fn one_percent_signal_is_kept() {
        // 100x100 black tile with exactly 100 pixels at L=200.
        let mut t = RasterTile::black(100, 100);
        for i in 0..100 {
            t.set_pixel(i, 50, [200, 200, 200]);
        }
        let (v, s) = classify_intensity(&t, &intensity());
        assert_eq!(v, Verdict::Kept);
        match s {
            Score::Intensity { mean_luminance, signal_fraction } => {
                assert_eq!(signal_fraction, 0.01);
                assert_eq!(mean_luminance, 2.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn mean_above_dark_threshold_keeps_tile() {
        let t = RasterTile::filled(32, 32, [20, 20, 20]);
        assert_eq!(classify_intensity(&t, &intensity()).0, Verdict::Kept);
        let t = RasterTile::filled(32, 32, [19, 19, 19]);
        assert_eq!(classify_intensity(&t, &intensity()).0, Verdict::Empty);
    }

    #[test]
    fn white_tile_compresses_to_empty() {
        let (v, s) = classify_compression(&RasterTile::filled(512, 512, [255; 3]), &compression()).unwrap();
        assert_eq!(v, Verdict::Empty);
        match s {
            Score::Compression { ratio, .. } => assert!(ratio < 0.02, "{ratio}"),
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_ratio_threshold_keeps_everything() {
        let policy = EmptinessPolicy { ratio_threshold: 0.0, ..compression() };
        let (v, _) = classify_compression(&RasterTile::filled(64, 64, [255; 3]), &policy).unwrap();
        assert_eq!(v, Verdict::Kept);
    }

    #[test]
    fn policy_validation() {
        assert!(EmptinessPolicy::default().validate().is_ok());
        let p = EmptinessPolicy { dark_threshold: 60, ..Default::default() };
        assert!(matches!(p.validate(), Err(PolicyError::Thresholds { .. })));
        let p = EmptinessPolicy { ratio_threshold: 1.0, ..Default::default() };
        assert!(matches!(p.validate(), Err(PolicyError::Ratio(_))));
        let p = EmptinessPolicy { jpeg_quality: 0, ..Default::default() };
        assert!(matches!(p.validate(), Err(PolicyError::Quality(0))));
    }

    #[test]
    fn log_field_roundtrip_is_exact() {
        for score in [
            Score::None,
            Score::Intensity { mean_luminance: 1.0 / 3.0, signal_fraction: 0.004999999 },
            Score::Compression { ratio: 0.019_999_999_9, encoded_bytes: 12345 },
        ] {
            let text = score.to_log_field();
            assert_eq!(Score::parse_log_field(score.algorithm(), &text).unwrap(), score);
        }
    }
}

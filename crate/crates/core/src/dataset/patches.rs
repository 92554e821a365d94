use rand::Rng;
use serde::{Deserialize, Serialize};

use super::augment::{stream_rng, warp, warp_mask, AugmentParams, Interpolation, PATCH_DOMAIN};
use crate::channels::{ablation_channels_with, Ablation, ChannelConfig};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage, MultiChannelImage};
use crate::par::Execution;

pub const PATCH_SIZE: usize = 128;

/// Channels and label of one augmented image, ready for cropping.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSource {
    pub source: String,
    pub params: AugmentParams,
    pub channels: MultiChannelImage,
    pub label: BinaryMask,
}

/// One training sample as stored in an ODST container.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: MultiChannelImage,
    pub label: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub params: AugmentParams,
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub sample: Sample,
    pub provenance: Provenance,
}

pub fn augment_pair(raw: &GrayImage, gt: &BinaryMask, params: &AugmentParams, cfg: &ChannelConfig) -> Result<PatchSource> {
    augment_pair_with(raw, gt, params, cfg, Ablation::Full, Execution::default())
}

/// Warp first, then build channels from the warped intensities, so the
/// orientation planes describe the geometry actually present in the patch.
pub fn augment_pair_with(
    raw: &GrayImage,
    gt: &BinaryMask,
    params: &AugmentParams,
    cfg: &ChannelConfig,
    ablation: Ablation,
    exec: Execution,
) -> Result<PatchSource> {
    if (raw.width(), raw.height()) != (gt.width(), gt.height()) {
        return Err(Error::InvalidInput(format!(
            "image is {}x{} but label is {}x{}",
            raw.width(),
            raw.height(),
            gt.width(),
            gt.height()
        )));
    }
    let warped = warp(raw, params, Interpolation::Bilinear).map(|v| v.clamp(0.0, 1.0));
    let label = warp_mask(gt, params);
    let channels = ablation_channels_with(&warped, cfg, ablation, exec)?;
    Ok(PatchSource {
        source: String::new(),
        params: *params,
        channels,
        label,
    })
}

/// `count` congruent image/label crops at seeded uniform origins.
pub fn extract_patches(src: &PatchSource, count: usize, seed: u64) -> Result<Vec<PatchRecord>> {
    let (w, h) = (src.channels.width(), src.channels.height());
    if w < PATCH_SIZE || h < PATCH_SIZE {
        return Err(Error::InvalidInput(format!(
            "source {w}x{h} is smaller than the {PATCH_SIZE}x{PATCH_SIZE} patch"
        )));
    }
    (0..count)
        .map(|k| {
            let mut rng = stream_rng(seed, PATCH_DOMAIN, k as u64);
            let x0 = rng.random_range(0..=w - PATCH_SIZE);
            let y0 = rng.random_range(0..=h - PATCH_SIZE);
            Ok(PatchRecord {
                sample: Sample {
                    image: src.channels.crop(x0, y0, PATCH_SIZE, PATCH_SIZE)?,
                    label: src.label.crop(x0, y0, PATCH_SIZE, PATCH_SIZE)?,
                },
                provenance: Provenance {
                    source: src.source.clone(),
                    params: src.params,
                    origin: (x0, y0),
                },
            })
        })
        .collect()
}

//! Augmented patch datasets: seeded warps, 128×128 crops and the ODST container.

pub mod augment;
pub mod odst;
pub mod patches;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use augment::{draw_params, draw_params_in, warp, warp_affine, warp_mask, Affine, AugmentParams, AugmentRanges, Interpolation};
pub use odst::{decode_dataset, encode_dataset, read_dataset, write_dataset, OdstHeader};
pub use patches::{augment_pair, augment_pair_with, extract_patches, PatchRecord, PatchSource, Provenance, Sample, PATCH_SIZE};

use crate::channels::{Ablation, ChannelConfig};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareConfig {
    pub channels: ChannelConfig,
    pub ablation: Ablation,
    pub seed: u64,
    pub patches_per_image: usize,
    pub augmentations_per_image: usize,
    pub ranges: AugmentRanges,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            channels: ChannelConfig::default(),
            ablation: Ablation::Full,
            seed: 0,
            patches_per_image: 200,
            augmentations_per_image: 8,
            ranges: AugmentRanges::default(),
        }
    }
}

/// One labelled input image.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub name: String,
    pub image: GrayImage,
    pub label: BinaryMask,
}

/// Patches contributed by augmentation `aug` when `total` patches are spread
/// over `augs` augmentations (earlier ones take the remainder).
fn patches_for(aug: usize, augs: usize, total: usize) -> usize {
    total / augs + usize::from(aug < total % augs)
}

fn patch_seed(master: u64, key: u64) -> u64 {
    master ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Augment every image, build channels post-warp and crop patches.
///
/// Records are ordered by (image index, augmentation index, patch index)
/// whatever the execution mode.
pub fn prepare(images: &[LabeledImage], cfg: &PrepareConfig, exec: Execution) -> Result<Vec<PatchRecord>> {
    cfg.channels.validate()?;
    cfg.ranges.validate()?;
    if cfg.augmentations_per_image == 0 {
        return Err(Error::InvalidParameter("augmentations per image must be ≥ 1".into()));
    }
    if images.len() > u32::MAX as usize || cfg.augmentations_per_image > u32::MAX as usize {
        return Err(Error::InvalidParameter("too many images or augmentations".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..images.len())
        .flat_map(|i| (0..cfg.augmentations_per_image).map(move |a| (i, a)))
        .collect();
    let per_job = par::map_ordered(exec, &jobs, |_, &(i, a)| -> Result<Vec<PatchRecord>> {
        let count = patches_for(a, cfg.augmentations_per_image, cfg.patches_per_image);
        if count == 0 {
            return Ok(Vec::new());
        }
        let img = &images[i];
        let key = augment::draw_key(i as u32, a as u32);
        let params = draw_params_in(&cfg.ranges, cfg.seed, key);
        let mut src = augment_pair_with(&img.image, &img.label, &params, &cfg.channels, cfg.ablation, Execution::Sequential)?;
        src.source = img.name.clone();
        extract_patches(&src, count, patch_seed(cfg.seed, key))
    });
    let mut out = Vec::with_capacity(images.len() * cfg.patches_per_image);
    for r in per_job {
        out.extend(r?);
    }
    Ok(out)
}

/// JSON sidecar describing where every record of a container came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub sources: Vec<String>,
    pub config: serde_json::Value,
    pub records: Vec<Provenance>,
}

impl Manifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

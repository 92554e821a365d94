//! Four-channel network input: original intensities, multi-step amplitude,
//! and the orientation field.
//!
//! The composition is a reconstruction: one original plane, one fused
//! amplitude plane, and the two components of the unit orientation vector add
//! up to four channels. `symbols` mode swaps the vector pair for a single
//! orientation-symbol plane plus the reference-spacing `F_max` amplitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{fuse_spacings, sweep_bank, FilterConfig, OrientationSweepResult};
use crate::image::{normalize_minmax, ChannelPolicy, GrayImage, MultiChannelImage};
use crate::par::Execution;
use crate::stick::KernelBank;
use crate::vector::{symbol_encode, vector_components};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VectorMode {
    #[default]
    CosSin,
    Symbols,
}

/// Which inputs of the ablation study to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    OriginalOnly,
    MultistepOnly,
    VectorOnly,
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub filter: FilterConfig,
    #[serde(default)]
    pub vector_mode: VectorMode,
    #[serde(default)]
    pub channel_policy: ChannelPolicy,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()
    }
}

/// Number of planes produced for an ablation mode.
pub fn plane_count(mode: Ablation, vector_mode: VectorMode) -> usize {
    match (mode, vector_mode) {
        (Ablation::OriginalOnly | Ablation::MultistepOnly, _) => 1,
        (Ablation::VectorOnly, VectorMode::CosSin) => 2,
        (Ablation::VectorOnly, VectorMode::Symbols) => 1,
        (Ablation::Full, _) => 4,
    }
}

struct Ingredients {
    amplitude: GrayImage,
    reference: OrientationSweepResult,
}

/// One sweep of the raw image per spacing; its `F_min` feeds the cascade and
/// the reference-spacing sweep doubles as the orientation field.
fn ingredients(raw: &GrayImage, cfg: &FilterConfig, exec: Execution) -> Result<Ingredients> {
    cfg.validate()?;
    let mut reference = None;
    let mut cascades = Vec::with_capacity(cfg.spacings.len());
    for &s in &cfg.spacings {
        let bank = KernelBank::new(cfg.length, s)?;
        let first = sweep_bank(raw, &bank, cfg.kappa, exec);
        cascades.push(sweep_bank(&first.f_min, &bank, cfg.kappa, exec).f_max);
        if reference.is_none() {
            reference = Some(first);
        }
    }
    Ok(Ingredients {
        amplitude: fuse_spacings(&cascades),
        reference: reference.expect("spacing set validated non-empty"),
    })
}

fn check_unit_range(raw: &GrayImage) -> Result<()> {
    let (lo, hi) = raw.min_max();
    if lo < 0.0 || hi > 1.0 {
        return Err(Error::InvalidInput(format!(
            "channel construction expects intensities in [0, 1], got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

pub fn build_channels(raw: &GrayImage, cfg: &ChannelConfig) -> Result<MultiChannelImage> {
    build_channels_with(raw, cfg, Execution::default())
}

pub fn build_channels_with(raw: &GrayImage, cfg: &ChannelConfig, exec: Execution) -> Result<MultiChannelImage> {
    ablation_channels_with(raw, cfg, Ablation::Full, exec)
}

pub fn ablation_channels(raw: &GrayImage, cfg: &ChannelConfig, mode: Ablation) -> Result<MultiChannelImage> {
    ablation_channels_with(raw, cfg, mode, Execution::default())
}

pub fn ablation_channels_with(
    raw: &GrayImage,
    cfg: &ChannelConfig,
    mode: Ablation,
    exec: Execution,
) -> Result<MultiChannelImage> {
    check_unit_range(raw)?;
    if mode == Ablation::OriginalOnly {
        cfg.validate()?;
        return MultiChannelImage::new(vec![raw.clone()]);
    }
    let Ingredients { amplitude, reference } = ingredients(raw, &cfg.filter, exec)?;
    let vector_planes = || match cfg.vector_mode {
        VectorMode::CosSin => {
            let (c, s) = vector_components(&reference.theta);
            vec![c, s]
        }
        VectorMode::Symbols => vec![symbol_encode(&reference.theta)],
    };
    let planes = match mode {
        Ablation::OriginalOnly => unreachable!(),
        Ablation::MultistepOnly => vec![amplitude],
        Ablation::VectorOnly => vector_planes(),
        Ablation::Full => {
            let mut planes = vec![raw.clone(), amplitude];
            planes.extend(vector_planes());
            if cfg.vector_mode == VectorMode::Symbols {
                planes.push(normalize_minmax(&reference.f_max));
            }
            planes
        }
    };
    debug_assert_eq!(planes.len(), plane_count(mode, cfg.vector_mode));
    MultiChannelImage::new(planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::multi_step;
    use crate::vector::theta_map;

    fn small_cfg(mode: VectorMode) -> ChannelConfig {
        ChannelConfig {
            filter: FilterConfig::new(3, vec![1, 2], 0.7).unwrap(),
            vector_mode: mode,
            channel_policy: ChannelPolicy::Green,
        }
    }

    fn scene() -> GrayImage {
        GrayImage::from_fn(24, 24, |x, y| {
            let line = if y == 9 || x == 15 { 0.8 } else { 0.1 };
            line + ((x * 5 + y * 11) % 7) as f64 * 0.01
        })
    }

    #[test]
    fn constant_input() {
        let raw = GrayImage::filled(12, 12, 0.4);
        let ch = build_channels(&raw, &small_cfg(VectorMode::CosSin)).unwrap();
        assert_eq!(ch.channels(), 4);
        assert_eq!(ch.plane(0), &raw);
        assert!(ch.plane(1).data().iter().all(|&v| v == 0.0));
        assert!(ch.plane(2).data().iter().all(|&v| v == 0.5));
        assert!(ch.plane(3).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn horizontal_line_channels() {
        let raw = GrayImage::from_fn(15, 15, |_, y| if y == 7 { 1.0 } else { 0.0 });
        let ch = build_channels(&raw, &small_cfg(VectorMode::CosSin)).unwrap();
        for x in 2..13 {
            assert!(ch.plane(1).get(x, 7) > 0.0);
            assert_eq!((ch.plane(2).get(x, 7), ch.plane(3).get(x, 7)), (1.0, 0.5));
        }
    }

    #[test]
    fn planes_match_direct_calls() {
        let raw = scene();
        let cfg = small_cfg(VectorMode::CosSin);
        let ch = build_channels(&raw, &cfg).unwrap();
        assert_eq!((ch.width(), ch.height()), (24, 24));
        assert_eq!(ch.plane(1), &multi_step(&raw, &cfg.filter).unwrap());
        let (c, s) = vector_components(&theta_map(&raw, &cfg.filter, 1).unwrap());
        assert_eq!(ch.plane(2), &c);
        assert_eq!(ch.plane(3), &s);
        for p in ch.planes() {
            assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn ablation_modes() {
        let raw = scene();
        for vm in [VectorMode::CosSin, VectorMode::Symbols] {
            let cfg = small_cfg(vm);
            let full = build_channels(&raw, &cfg).unwrap();
            assert_eq!(ablation_channels(&raw, &cfg, Ablation::Full).unwrap(), full);
            let orig = ablation_channels(&raw, &cfg, Ablation::OriginalOnly).unwrap();
            assert_eq!(orig.planes(), &full.planes()[..1]);
            let ms = ablation_channels(&raw, &cfg, Ablation::MultistepOnly).unwrap();
            assert_eq!(ms.plane(0), &multi_step(&raw, &cfg.filter).unwrap());
            assert_eq!(ms.plane(0), full.plane(1));
            let vec_only = ablation_channels(&raw, &cfg, Ablation::VectorOnly).unwrap();
            assert_eq!(vec_only.channels(), plane_count(Ablation::VectorOnly, vm));
            assert_eq!(vec_only.planes(), &full.planes()[2..2 + vec_only.channels()]);
        }
    }

    #[test]
    fn symbols_mode_layout() {
        let raw = scene();
        let cfg = small_cfg(VectorMode::Symbols);
        let ch = build_channels(&raw, &cfg).unwrap();
        assert_eq!(ch.channels(), 4);
        let t = theta_map(&raw, &cfg.filter, 1).unwrap();
        assert_eq!(ch.plane(2), &symbol_encode(&t));
        let (_, hi) = ch.plane(3).min_max();
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn deterministic_and_range_checked() {
        let raw = scene();
        let cfg = small_cfg(VectorMode::CosSin);
        assert_eq!(build_channels(&raw, &cfg).unwrap(), build_channels(&raw, &cfg).unwrap());
        let bad = raw.map(|v| v * 2.0);
        assert!(matches!(build_channels(&bad, &cfg), Err(Error::InvalidInput(_))));
    }
}

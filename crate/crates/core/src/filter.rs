//! Oriented derivative-of-stick responses.
//!
//! For each pixel and orientation the three sticks give mean intensities
//! `u_L`, `u_M`, `u_R` and the spread `σ_M` along the middle stick. Two
//! measurements follow:
//!
//! ```text
//! ℓ_max = max(u_M - u_L, u_M - u_R) - κ·σ_M
//! ℓ_min = min(u_M - u_L, u_M - u_R) - κ·σ_M
//! ```
//!
//! A sweep takes the best of each over all orientations, clamped at zero. The
//! cascade chains a min-template sweep and a max-template sweep so that step
//! edges (one-sided contrast) vanish, and the multi-step fusion combines
//! cascades at several spacings so both thin and wide structures respond.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{normalize_minmax, GrayImage};
use crate::par::{self, Execution};
use crate::stick::{KernelBank, StickKernel};
use crate::vector::ThetaMap;

pub const DEFAULT_KAPPA: f64 = 0.7;
pub const DEFAULT_LENGTH: usize = 7;
pub const DEFAULT_SPACINGS: [u32; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    /// Samples outside the image take the value of the nearest border pixel.
    #[default]
    Replicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub length: usize,
    pub spacings: Vec<u32>,
    pub kappa: f64,
    #[serde(default)]
    pub boundary: BoundaryPolicy,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            length: DEFAULT_LENGTH,
            spacings: DEFAULT_SPACINGS.to_vec(),
            kappa: DEFAULT_KAPPA,
            boundary: BoundaryPolicy::Replicate,
        }
    }
}

impl FilterConfig {
    pub fn new(length: usize, spacings: Vec<u32>, kappa: f64) -> Result<Self> {
        let cfg = Self {
            length,
            spacings,
            kappa,
            boundary: BoundaryPolicy::Replicate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        crate::stick::orientation_count(self.length)?;
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be a finite non-negative number, got {}",
                self.kappa
            )));
        }
        if self.spacings.is_empty() {
            return Err(Error::InvalidParameter("spacing set is empty".into()));
        }
        if self.spacings[0] < 1 {
            return Err(Error::InvalidParameter("spacings must be ≥ 1".into()));
        }
        if self.spacings.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "spacings must be strictly increasing, got {:?}",
                self.spacings
            )));
        }
        Ok(())
    }

    /// Spacing used for the orientation field: the smallest one.
    pub fn reference_spacing(&self) -> u32 {
        self.spacings[0]
    }
}

/// Mean intensities along the three sticks and the population standard
/// deviation along the middle one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickStats {
    pub u_left: f64,
    pub u_middle: f64,
    pub u_right: f64,
    pub sigma_middle: f64,
}

impl StickStats {
    /// Assemble from raw stick sums over `n` samples each.
    #[inline]
    pub fn from_sums(sum_left: f64, sum_middle: f64, sum_sq_middle: f64, sum_right: f64, n: usize) -> Self {
        let n = n as f64;
        let u_middle = sum_middle / n;
        let var = sum_sq_middle / n - u_middle * u_middle;
        Self {
            u_left: sum_left / n,
            u_middle,
            u_right: sum_right / n,
            sigma_middle: if var > 0.0 { var.sqrt() } else { 0.0 },
        }
    }
}

/// Stick statistics at `(x, y)` with replicate padding.
pub fn stick_stats(image: &GrayImage, x: usize, y: usize, kernel: &StickKernel) -> StickStats {
    let (x, y) = (x as isize, y as isize);
    let sample = |o: &crate::stick::Offset| image.get_clamped(x + o.dx, y + o.dy);
    let mut sl = 0.0;
    let mut sm = 0.0;
    let mut sq = 0.0;
    let mut sr = 0.0;
    for ((l, m), r) in kernel.left.iter().zip(&kernel.middle).zip(&kernel.right) {
        let vm = sample(m);
        sl += sample(l);
        sm += vm;
        sq += vm * vm;
        sr += sample(r);
    }
    StickStats::from_sums(sl, sm, sq, sr, kernel.length)
}

/// `(ℓ_max, ℓ_min)` for one orientation.
#[inline]
pub fn response_pair(stats: &StickStats, kappa: f64) -> (f64, f64) {
    let dl = stats.u_middle - stats.u_left;
    let dr = stats.u_middle - stats.u_right;
    let penalty = kappa * stats.sigma_middle;
    (dl.max(dr) - penalty, dl.min(dr) - penalty)
}

#[inline]
pub(crate) fn clamp_positive(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Per-pixel outcome of a full orientation sweep at one spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationSweepResult {
    pub f_max: GrayImage,
    pub f_min: GrayImage,
    pub theta: ThetaMap,
    pub spacing: u32,
    pub length: usize,
}

#[derive(Clone, Copy, Default)]
struct PixelResponse {
    f_max: f64,
    f_min: f64,
    theta: u16,
}

/// Kernel bank with offsets pre-flattened for one image width.
struct PreparedBank<'a> {
    bank: &'a KernelBank,
    // per kernel: interleaved (left, middle, right) flat offsets
    flat: Vec<Vec<[isize; 3]>>,
    radius: usize,
}

impl<'a> PreparedBank<'a> {
    fn new(bank: &'a KernelBank, width: usize) -> Self {
        let w = width as isize;
        let flat = bank
            .kernels()
            .iter()
            .map(|k| {
                k.left
                    .iter()
                    .zip(&k.middle)
                    .zip(&k.right)
                    .map(|((l, m), r)| [l.dy * w + l.dx, m.dy * w + m.dx, r.dy * w + r.dx])
                    .collect()
            })
            .collect();
        Self {
            bank,
            flat,
            radius: bank.radius(),
        }
    }
}

#[inline]
fn reduce_orientations(
    kappa: f64,
    n_orient: usize,
    mut stats_for: impl FnMut(usize) -> StickStats,
) -> PixelResponse {
    let mut best_max = f64::NEG_INFINITY;
    let mut best_min = f64::NEG_INFINITY;
    let mut best_idx = 0usize;
    for k in 0..n_orient {
        let (lmax, lmin) = response_pair(&stats_for(k), kappa);
        if lmax > best_max {
            best_max = lmax;
            best_idx = k + 1;
        }
        if lmin > best_min {
            best_min = lmin;
        }
    }
    PixelResponse {
        f_max: clamp_positive(best_max),
        f_min: clamp_positive(best_min),
        theta: if best_max > 0.0 { best_idx as u16 } else { 0 },
    }
}

fn sweep_pixel(image: &GrayImage, prepared: &PreparedBank<'_>, kappa: f64, x: usize, y: usize) -> PixelResponse {
    let (w, h) = (image.width(), image.height());
    let r = prepared.radius;
    let kernels = prepared.bank.kernels();
    let n = prepared.bank.length();
    if x >= r && y >= r && x + r < w && y + r < h {
        let data = image.data();
        let center = (y * w + x) as isize;
        reduce_orientations(kappa, kernels.len(), |k| {
            let mut sl = 0.0;
            let mut sm = 0.0;
            let mut sq = 0.0;
            let mut sr = 0.0;
            for o in &prepared.flat[k] {
                let vm = data[(center + o[1]) as usize];
                sl += data[(center + o[0]) as usize];
                sm += vm;
                sq += vm * vm;
                sr += data[(center + o[2]) as usize];
            }
            StickStats::from_sums(sl, sm, sq, sr, n)
        })
    } else {
        reduce_orientations(kappa, kernels.len(), |k| stick_stats(image, x, y, &kernels[k]))
    }
}

/// Orientation sweep with an explicit kernel bank and scheduling mode.
pub fn sweep_bank(image: &GrayImage, bank: &KernelBank, kappa: f64, exec: Execution) -> OrientationSweepResult {
    let (w, h) = (image.width(), image.height());
    let prepared = PreparedBank::new(bank, w);
    let mut out = vec![PixelResponse::default(); w * h];
    par::for_each_row(exec, &mut out, w, |y, row| {
        for (x, px) in row.iter_mut().enumerate() {
            *px = sweep_pixel(image, &prepared, kappa, x, y);
        }
    });
    let f_max = GrayImage::from_raw_unchecked(w, h, out.iter().map(|p| p.f_max).collect());
    let f_min = GrayImage::from_raw_unchecked(w, h, out.iter().map(|p| p.f_min).collect());
    let theta = ThetaMap::from_raw(w, h, bank.length(), bank.spacing(), out.iter().map(|p| p.theta).collect());
    OrientationSweepResult {
        f_max,
        f_min,
        theta,
        spacing: bank.spacing(),
        length: bank.length(),
    }
}

pub fn sweep(image: &GrayImage, config: &FilterConfig, spacing: u32) -> Result<OrientationSweepResult> {
    sweep_with(image, config, spacing, Execution::default())
}

pub fn sweep_with(
    image: &GrayImage,
    config: &FilterConfig,
    spacing: u32,
    exec: Execution,
) -> Result<OrientationSweepResult> {
    config.validate()?;
    let bank = KernelBank::new(config.length, spacing)?;
    Ok(sweep_bank(image, &bank, config.kappa, exec))
}

/// Max–min cascade at one spacing: the min-template sweep keeps only
/// two-sided (ridge) contrast, and the max-template sweep of that result
/// restores the line response while step edges stay at zero.
pub fn cascade(image: &GrayImage, config: &FilterConfig, spacing: u32) -> Result<GrayImage> {
    cascade_with(image, config, spacing, Execution::default())
}

pub fn cascade_with(
    image: &GrayImage,
    config: &FilterConfig,
    spacing: u32,
    exec: Execution,
) -> Result<GrayImage> {
    config.validate()?;
    let bank = KernelBank::new(config.length, spacing)?;
    Ok(cascade_bank(image, &bank, config.kappa, exec))
}

fn cascade_bank(image: &GrayImage, bank: &KernelBank, kappa: f64, exec: Execution) -> GrayImage {
    let ridges = sweep_bank(image, bank, kappa, exec).f_min;
    sweep_bank(&ridges, bank, kappa, exec).f_max
}

/// Cascade responses for every spacing in `config`, in spacing order.
pub fn cascade_per_spacing(image: &GrayImage, config: &FilterConfig, exec: Execution) -> Result<Vec<GrayImage>> {
    config.validate()?;
    config
        .spacings
        .iter()
        .map(|&s| {
            let bank = KernelBank::new(config.length, s)?;
            Ok(cascade_bank(image, &bank, config.kappa, exec))
        })
        .collect()
}

/// Pixelwise maximum of the per-spacing cascades, min-max normalized.
pub fn multi_step(image: &GrayImage, config: &FilterConfig) -> Result<GrayImage> {
    multi_step_with(image, config, Execution::default())
}

pub fn multi_step_with(image: &GrayImage, config: &FilterConfig, exec: Execution) -> Result<GrayImage> {
    let per_spacing = cascade_per_spacing(image, config, exec)?;
    Ok(fuse_spacings(&per_spacing))
}

/// # Panics
/// Panics on an empty slice or mismatched sizes.
pub fn fuse_spacings(responses: &[GrayImage]) -> GrayImage {
    let first = &responses[0];
    let mut acc = first.data().to_vec();
    for r in &responses[1..] {
        assert_eq!((r.width(), r.height()), (first.width(), first.height()));
        for (a, &v) in acc.iter_mut().zip(r.data()) {
            if v > *a {
                *a = v;
            }
        }
    }
    normalize_minmax(&GrayImage::from_raw_unchecked(first.width(), first.height(), acc))
}

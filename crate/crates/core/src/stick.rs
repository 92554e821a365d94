//! Digital three-stick kernels.
//!
//! A kernel is a middle stick of `L` pixels through the origin plus two copies
//! translated perpendicular to it by the inter-stick spacing `S`. Orientations
//! are quantized uniformly into `2(L - 1)` angles over [0°, 180°).
//!
//! Sticks in [0°, 90°) are rasterized directly; the remaining orientations are
//! exact quarter turns of those, so a 90° rotation of the input permutes the
//! kernel bank without any rounding drift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel offset `(dx, dy)` relative to the kernel center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Offset {
    pub dx: isize,
    pub dy: isize,
}

impl Offset {
    pub const fn new(dx: isize, dy: isize) -> Self {
        Self { dx, dy }
    }

    /// Quarter turn: direction θ maps to θ + 90°.
    pub const fn rotate_quarter(self) -> Self {
        Self {
            dx: -self.dy,
            dy: self.dx,
        }
    }

    pub const fn neg(self) -> Self {
        Self {
            dx: -self.dx,
            dy: -self.dy,
        }
    }

    pub const fn add(self, other: Offset) -> Self {
        Self {
            dx: self.dx + other.dx,
            dy: self.dy + other.dy,
        }
    }
}

impl From<(isize, isize)> for Offset {
    fn from((dx, dy): (isize, isize)) -> Self {
        Self { dx, dy }
    }
}

pub fn orientation_count(length: usize) -> Result<usize> {
    if length < 2 {
        return Err(Error::InvalidParameter(format!(
            "stick length must be at least 2, got {length}"
        )));
    }
    Ok(2 * (length - 1))
}

/// Angle in degrees of the 1-based orientation `index`: (i - 1)·180 / 2(L - 1).
pub fn orientation_angle(index: usize, length: usize) -> Result<f64> {
    let count = orientation_count(length)?;
    check_index(index, count)?;
    Ok((index - 1) as f64 * 180.0 / count as f64)
}

fn check_index(index: usize, count: usize) -> Result<()> {
    if index == 0 || index > count {
        return Err(Error::InvalidParameter(format!(
            "orientation index {index} outside 1..={count}"
        )));
    }
    Ok(())
}

/// Round half away from zero. Products that land within 1e-9 of a half are
/// treated as exact halves, so e.g. sin 30° rounds like 0.5.
pub(crate) fn round_half_away(v: f64) -> isize {
    let mag = v.abs();
    let floor = mag.floor();
    let frac = mag - floor;
    let rounded = if (frac - 0.5).abs() < 1e-9 {
        floor + 1.0
    } else {
        mag.round()
    };
    (rounded.copysign(v)) as isize
}

/// tan of an angle in [0°, 45°], with the 0° and 45° endpoints exact.
fn tan_deg_first_octant(deg: f64) -> f64 {
    debug_assert!((0.0..=45.0).contains(&deg));
    if deg == 0.0 {
        0.0
    } else if deg == 45.0 {
        1.0
    } else {
        deg.to_radians().tan()
    }
}

/// sin and cos for an angle in [0°, 90°), exact at 0°, 30°, 45° and 60°
/// up to the rounding tolerance of [`round_half_away`].
fn sin_cos_first_quadrant(deg: f64) -> (f64, f64) {
    if deg == 0.0 {
        (0.0, 1.0)
    } else {
        deg.to_radians().sin_cos()
    }
}

/// Split a 1-based index into its [0°, 90°) representative and the number of
/// quarter turns applied on top of it.
fn decompose(index: usize, length: usize) -> (usize, usize) {
    let quarter = length - 1;
    let zero_based = index - 1;
    (zero_based % quarter, zero_based / quarter)
}

fn rotate_n(o: Offset, turns: usize) -> Offset {
    (0..turns).fold(o, |acc, _| acc.rotate_quarter())
}

/// Sample positions along the major axis: exactly `length` integers that
/// include 0, centered (odd) or with the extra sample on the positive side (even).
fn major_axis_steps(length: usize) -> impl Iterator<Item = isize> {
    let lo = -(((length - 1) / 2) as isize);
    let hi = (length / 2) as isize;
    lo..=hi
}

fn base_middle(base: usize, length: usize) -> Vec<Offset> {
    let quarter = length - 1;
    let deg = base as f64 * 90.0 / quarter as f64;
    if deg <= 45.0 {
        let slope = tan_deg_first_octant(deg);
        major_axis_steps(length)
            .map(|k| Offset::new(k, round_half_away(k as f64 * slope)))
            .collect()
    } else {
        // mirror of the (90° - deg) stick across the diagonal
        let slope = tan_deg_first_octant(90.0 - deg);
        major_axis_steps(length)
            .map(|k| Offset::new(round_half_away(k as f64 * slope), k))
            .collect()
    }
}

/// Offsets of the digital line of `length` samples through the origin at the
/// orientation `index`, ordered along the stick.
///
/// The major axis is sampled once per pixel and the minor coordinate rounded,
/// which is Bresenham's line forced to exactly `length` samples.
pub fn middle_stick(length: usize, index: usize) -> Result<Vec<Offset>> {
    let count = orientation_count(length)?;
    check_index(index, count)?;
    let (base, turns) = decompose(index, length);
    Ok(base_middle(base, length)
        .into_iter()
        .map(|o| rotate_n(o, turns))
        .collect())
}

/// Perpendicular translation from the middle stick to the right stick,
/// round(S·(-sin θ, cos θ)) componentwise.
pub fn side_displacement(length: usize, spacing: u32, index: usize) -> Result<Offset> {
    let count = orientation_count(length)?;
    check_index(index, count)?;
    let (base, turns) = decompose(index, length);
    let deg = base as f64 * 90.0 / (length - 1) as f64;
    let (sin, cos) = sin_cos_first_quadrant(deg);
    let s = f64::from(spacing);
    let d = Offset::new(round_half_away(-s * sin), round_half_away(s * cos));
    let d = rotate_n(d, turns);
    if d == Offset::new(0, 0) {
        return Err(Error::DegenerateKernel {
            spacing,
            angle: orientation_angle(index, length)?,
        });
    }
    Ok(d)
}

/// Left, middle and right sticks for one (L, S, θᵢ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickKernel {
    pub length: usize,
    pub spacing: u32,
    pub index: usize,
    pub angle: f64,
    pub left: Vec<Offset>,
    pub middle: Vec<Offset>,
    pub right: Vec<Offset>,
}

impl StickKernel {
    /// Largest |dx| or |dy| over all three sticks.
    pub fn radius(&self) -> usize {
        self.left
            .iter()
            .chain(&self.middle)
            .chain(&self.right)
            .map(|o| o.dx.unsigned_abs().max(o.dy.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }
}

pub fn build_kernel(length: usize, spacing: u32, index: usize) -> Result<StickKernel> {
    if spacing < 1 {
        return Err(Error::InvalidParameter("inter-stick spacing must be ≥ 1".into()));
    }
    let middle = middle_stick(length, index)?;
    let d = side_displacement(length, spacing, index)?;
    let left = middle.iter().map(|o| o.add(d.neg())).collect();
    let right = middle.iter().map(|o| o.add(d)).collect();
    Ok(StickKernel {
        length,
        spacing,
        index,
        angle: orientation_angle(index, length)?,
        left,
        middle,
        right,
    })
}

/// All `2(L - 1)` kernels for one spacing, ordered by orientation index.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    length: usize,
    spacing: u32,
    kernels: Vec<StickKernel>,
}

impl KernelBank {
    pub fn new(length: usize, spacing: u32) -> Result<Self> {
        let count = orientation_count(length)?;
        let kernels = (1..=count)
            .map(|i| build_kernel(length, spacing, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            length,
            spacing,
            kernels,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn spacing(&self) -> u32 {
        self.spacing
    }

    pub fn kernels(&self) -> &[StickKernel] {
        &self.kernels
    }

    pub fn radius(&self) -> usize {
        self.kernels.iter().map(StickKernel::radius).max().unwrap_or(0)
    }
}

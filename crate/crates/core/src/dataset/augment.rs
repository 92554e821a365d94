//! Seeded geometric augmentation.
//!
//! Parameters are a pure function of `(seed, index)`: each index selects its
//! own ChaCha stream, so draws can be generated in any order or in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};

// Separates parameter draws from patch-origin draws made with the same seed.
const PARAM_DOMAIN: u64 = 0x5052_4d53_0000_0001;
pub(crate) const PATCH_DOMAIN: u64 = 0x5054_4348_0000_0002;

pub(crate) fn stream_rng(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain);
    rng.set_stream(stream);
    rng
}

/// Key for draw `draw` of image `image` under one master seed.
pub fn draw_key(image: u32, draw: u32) -> u64 {
    (u64::from(image) << 32) | u64::from(draw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Degrees, in [-180, 180].
    pub rotation: f64,
    pub shear: f64,
    pub flip_h: bool,
    pub flip_v: bool,
    /// Translation as a fraction of width and height.
    pub shift: (f64, f64),
    pub zoom: f64,
    pub seed: u64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            shear: 0.0,
            flip_h: false,
            flip_v: false,
            shift: (0.0, 0.0),
            zoom: 1.0,
            seed: 0,
        }
    }

    pub fn rotation(degrees: f64) -> Self {
        Self {
            rotation: degrees,
            ..Self::identity()
        }
    }

    /// Forward map on center-relative coordinates for an image of `width`×`height`.
    pub fn affine(&self, width: usize, height: usize) -> Affine {
        let (c, s) = cos_sin_deg(self.rotation);
        let rot = [[c, -s], [s, c]];
        let shear = [[1.0, self.shear], [0.0, 1.0]];
        let zoom = [[self.zoom, 0.0], [0.0, self.zoom]];
        let flip = [
            [if self.flip_h { -1.0 } else { 1.0 }, 0.0],
            [0.0, if self.flip_v { -1.0 } else { 1.0 }],
        ];
        let t = [self.shift.0 * width as f64, self.shift.1 * height as f64];
        let linear = matmul(flip, matmul(rot, matmul(shear, zoom)));
        Affine {
            m: linear,
            t: matvec(flip, t),
        }
    }
}

/// Ranges the parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentRanges {
    pub rotation: f64,
    pub shear: f64,
    pub shift: f64,
    pub zoom: (f64, f64),
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            rotation: 180.0,
            shear: 0.1,
            shift: 0.1,
            zoom: (0.9, 1.1),
        }
    }
}

impl AugmentRanges {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.rotation) || !ok(self.shear) || !ok(self.shift) {
            return Err(Error::InvalidParameter("rotation, shear and shift ranges must be finite and ≥ 0".into()));
        }
        if !(self.zoom.0.is_finite() && self.zoom.1.is_finite() && self.zoom.0 > 0.0 && self.zoom.0 <= self.zoom.1) {
            return Err(Error::InvalidParameter(format!(
                "zoom range ({}, {}) must satisfy 0 < min ≤ max",
                self.zoom.0, self.zoom.1
            )));
        }
        Ok(())
    }
}

pub fn draw_params(seed: u64, index: u64) -> AugmentParams {
    draw_params_in(&AugmentRanges::default(), seed, index)
}

pub fn draw_params_in(ranges: &AugmentRanges, seed: u64, index: u64) -> AugmentParams {
    let mut rng = stream_rng(seed, PARAM_DOMAIN, index);
    let sym = |rng: &mut ChaCha8Rng, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    let rotation = sym(&mut rng, ranges.rotation);
    let shear = sym(&mut rng, ranges.shear);
    let flip_h = rng.random_bool(0.5);
    let flip_v = rng.random_bool(0.5);
    let shift = (sym(&mut rng, ranges.shift), sym(&mut rng, ranges.shift));
    let zoom = if ranges.zoom.1 > ranges.zoom.0 {
        rng.random_range(ranges.zoom.0..=ranges.zoom.1)
    } else {
        ranges.zoom.0
    };
    AugmentParams {
        rotation,
        shear,
        flip_h,
        flip_v,
        shift,
        zoom,
        seed,
    }
}

/// cos/sin in degrees, exact at multiples of 90°.
fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let (s, c) = deg.to_radians().sin_cos();
        (c, s)
    }
}

type Mat2 = [[f64; 2]; 2];

fn matmul(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn matvec(a: Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// `dst = m · src + t` on coordinates relative to the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub m: Mat2,
    pub t: [f64; 2],
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0], [0.0, 1.0]],
            t: [0.0, 0.0],
        }
    }

    /// # Panics
    /// Panics if the linear part is singular.
    pub fn inverse(&self) -> Affine {
        let [[a, b], [c, d]] = self.m;
        let det = a * d - b * c;
        assert!(det.abs() > 1e-12, "singular affine map");
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let t = matvec(inv, self.t);
        Affine {
            m: inv,
            t: [-t[0], -t[1]],
        }
    }

    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = matvec(self.m, p);
        [v[0] + self.t[0], v[1] + self.t[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

const EDGE_EPS: f64 = 1e-9;

fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if x < -EDGE_EPS || y < -EDGE_EPS || x > w - 1.0 + EDGE_EPS || y > h - 1.0 + EDGE_EPS {
        return 0.0;
    }
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    let v00 = img.get_clamped(xi, yi);
    if fx == 0.0 && fy == 0.0 {
        return v00;
    }
    let v10 = img.get_clamped(xi + 1, yi);
    let v01 = img.get_clamped(xi, yi + 1);
    let v11 = img.get_clamped(xi + 1, yi + 1);
    let top = v00 + (v10 - v00) * fx;
    let bottom = v01 + (v11 - v01) * fx;
    top + (bottom - top) * fy
}

fn sample_nearest(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (xi, yi) = (x.round(), y.round());
    if xi < 0.0 || yi < 0.0 || xi >= img.width() as f64 || yi >= img.height() as f64 {
        return 0.0;
    }
    img.get(xi as usize, yi as usize)
}

/// Resample `image` under the forward map `affine`; uncovered pixels are 0.
pub fn warp_affine(image: &GrayImage, affine: &Affine, interpolation: Interpolation) -> GrayImage {
    let inv = affine.inverse();
    let cx = (image.width() as f64 - 1.0) / 2.0;
    let cy = (image.height() as f64 - 1.0) / 2.0;
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        let [sx, sy] = inv.apply([x as f64 - cx, y as f64 - cy]);
        let (sx, sy) = (sx + cx, sy + cy);
        match interpolation {
            Interpolation::Bilinear => sample_bilinear(image, sx, sy),
            Interpolation::Nearest => sample_nearest(image, sx, sy),
        }
    })
}

pub fn warp(image: &GrayImage, params: &AugmentParams, interpolation: Interpolation) -> GrayImage {
    warp_affine(image, &params.affine(image.width(), image.height()), interpolation)
}

/// Nearest-neighbour warp of a label mask, re-binarized at 0.5.
pub fn warp_mask(mask: &BinaryMask, params: &AugmentParams) -> BinaryMask {
    let warped = warp(&mask.to_gray(), params, Interpolation::Nearest);
    BinaryMask::threshold(&warped, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(n: usize) -> GrayImage {
        GrayImage::from_fn(n, n, |x, y| {
            let (u, v) = (x as f64 / n as f64, y as f64 / n as f64);
            0.5 + 0.25 * (6.0 * u).sin() * (5.0 * v).cos()
        })
    }

    #[test]
    fn draws_are_deterministic_and_distinct() {
        assert_eq!(draw_params(7, 3), draw_params(7, 3));
        assert_ne!(draw_params(7, 3), draw_params(7, 4));
        assert_ne!(draw_params(7, 3), draw_params(8, 3));
    }

    #[test]
    fn draws_stay_in_range() {
        let mut flips = 0usize;
        let n = 10_000u64;
        for i in 0..n {
            let p = draw_params(42, i);
            assert!((-180.0..=180.0).contains(&p.rotation));
            assert!((-0.1..=0.1).contains(&p.shear));
            assert!((-0.1..=0.1).contains(&p.shift.0) && (-0.1..=0.1).contains(&p.shift.1));
            assert!((0.9..=1.1).contains(&p.zoom));
            flips += usize::from(p.flip_h);
        }
        let freq = flips as f64 / n as f64;
        assert!((0.47..=0.53).contains(&freq), "flip_h frequency {freq}");
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = smooth(17);
        assert_eq!(warp(&img, &AugmentParams::identity(), Interpolation::Bilinear), img);
        assert_eq!(warp(&img, &AugmentParams::identity(), Interpolation::Nearest), img);
    }

    #[test]
    fn half_turn_reverses_both_axes() {
        let img = GrayImage::from_fn(16, 10, |x, y| (x * 31 + y * 7) as f64 / 600.0);
        let out = warp(&img, &AugmentParams::rotation(180.0), Interpolation::Bilinear);
        for y in 0..10 {
            for x in 0..16 {
                assert_eq!(out.get(x, y), img.get(15 - x, 9 - y));
            }
        }
    }

    #[test]
    fn quarter_turn_matches_rotate_quarter() {
        let img = GrayImage::from_fn(12, 12, |x, y| (x * 13 + y * 5) as f64 / 300.0);
        let out = warp(&img, &AugmentParams::rotation(90.0), Interpolation::Bilinear);
        assert_eq!(out, img.rotate_quarter().unwrap());
    }

    #[test]
    fn flips_mirror() {
        let img = GrayImage::from_fn(8, 6, |x, y| (x + 10 * y) as f64);
        let p = AugmentParams {
            flip_h: true,
            ..AugmentParams::identity()
        };
        let out = warp(&img, &p, Interpolation::Nearest);
        assert_eq!(out.get(0, 2), img.get(7, 2));
        let p = AugmentParams {
            flip_v: true,
            ..AugmentParams::identity()
        };
        let out = warp(&img, &p, Interpolation::Bilinear);
        assert_eq!(out.get(3, 0), img.get(3, 5));
    }

    #[test]
    fn warp_round_trip_loses_little() {
        let img = smooth(64);
        for i in 0..20 {
            let p = draw_params(11, i);
            let a = p.affine(64, 64);
            let there = warp_affine(&img, &a, Interpolation::Bilinear);
            let back = warp_affine(&there, &a.inverse(), Interpolation::Bilinear);
            // interior: pixels whose forward image stays well inside the frame
            let (mut err, mut n) = (0.0, 0usize);
            for y in 0..64 {
                for x in 0..64 {
                    let [u, v] = a.apply([x as f64 - 31.5, y as f64 - 31.5]);
                    if u.abs() < 24.0 && v.abs() < 24.0 && (x as f64 - 31.5).abs() < 24.0 && (y as f64 - 31.5).abs() < 24.0 {
                        err += (back.get(x, y) - img.get(x, y)).abs();
                        n += 1;
                    }
                }
            }
            assert!(n > 100);
            assert!(err / (n as f64) < 0.02, "draw {i}: mae {}", err / n as f64);
        }
    }

    #[test]
    fn masks_stay_binary() {
        let m = BinaryMask::from_fn(32, 32, |x, y| (x / 3 + y / 5) % 2 == 0);
        for i in 0..10 {
            let w = warp_mask(&m, &draw_params(5, i));
            assert!(w.data().iter().all(|&v| v <= 1));
        }
    }

    #[test]
    fn out_of_frame_is_zero() {
        let img = GrayImage::filled(10, 10, 1.0);
        let p = AugmentParams {
            shift: (0.5, 0.0),
            ..AugmentParams::identity()
        };
        let out = warp(&img, &p, Interpolation::Bilinear);
        assert_eq!(out.get(0, 5), 0.0);
        assert_eq!(out.get(9, 5), 1.0);
    }
}

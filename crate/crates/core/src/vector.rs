//! Winning-orientation map and its channel encodings.

use std::path::Path;

use crate::error::{Error, Result};
use crate::filter::{sweep_with, FilterConfig};
use crate::image::{quantize, GrayImage};
use crate::par::Execution;
use crate::stick::{orientation_angle, orientation_count};

/// Per-pixel orientation index in `1..=2(L-1)`, or absent where no
/// orientation gives a positive ℓ_max.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaMap {
    width: usize,
    height: usize,
    length: usize,
    spacing: u32,
    // 0 encodes absence
    data: Vec<u16>,
}

impl ThetaMap {
    pub(crate) fn from_raw(width: usize, height: usize, length: usize, spacing: u32, data: Vec<u16>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            length,
            spacing,
            data,
        }
    }

    pub fn new(width: usize, height: usize, length: usize, spacing: u32, indices: Vec<Option<usize>>) -> Result<Self> {
        let count = orientation_count(length)?;
        if width == 0 || height == 0 || indices.len() != width * height {
            return Err(Error::InvalidInput("theta map size mismatch".into()));
        }
        let data = indices
            .into_iter()
            .map(|i| match i {
                None => Ok(0),
                Some(i) if (1..=count).contains(&i) => Ok(i as u16),
                Some(i) => Err(Error::InvalidInput(format!("orientation index {i} outside 1..={count}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_raw(width, height, length, spacing, data))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn spacing(&self) -> u32 {
        self.spacing
    }

    pub fn orientation_count(&self) -> usize {
        2 * (self.length - 1)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<usize> {
        match self.data[y * self.width + x] {
            0 => None,
            i => Some(usize::from(i)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        self.data.iter().map(|&i| if i == 0 { None } else { Some(usize::from(i)) })
    }
}

pub fn theta_map(image: &GrayImage, config: &FilterConfig, spacing: u32) -> Result<ThetaMap> {
    theta_map_with(image, config, spacing, Execution::default())
}

pub fn theta_map_with(image: &GrayImage, config: &FilterConfig, spacing: u32, exec: Execution) -> Result<ThetaMap> {
    Ok(sweep_with(image, config, spacing, exec)?.theta)
}

/// Raw unit vector of an orientation index, or the zero vector when absent.
pub fn orientation_vector(index: Option<usize>, length: usize) -> (f64, f64) {
    match index {
        None => (0.0, 0.0),
        Some(i) => {
            let deg = orientation_angle(i, length).expect("index validated by ThetaMap");
            exact_cos_sin(deg)
        }
    }
}

/// cos/sin in degrees with quadrant angles exact.
fn exact_cos_sin(deg: f64) -> (f64, f64) {
    if deg == 0.0 {
        (1.0, 0.0)
    } else if deg == 90.0 {
        (0.0, 1.0)
    } else {
        let (s, c) = deg.to_radians().sin_cos();
        (c, s)
    }
}

/// `(cos θ, sin θ)` planes remapped to [0, 1] by `v ↦ (v + 1) / 2`.
/// Absent pixels hold the zero vector and so store (0.5, 0.5).
pub fn vector_components(tmap: &ThetaMap) -> (GrayImage, GrayImage) {
    let (w, h) = (tmap.width, tmap.height);
    let (mut cx, mut cy) = (Vec::with_capacity(w * h), Vec::with_capacity(w * h));
    for idx in tmap.iter() {
        let (c, s) = orientation_vector(idx, tmap.length);
        cx.push((c + 1.0) / 2.0);
        cy.push((s + 1.0) / 2.0);
    }
    (
        GrayImage::from_raw_unchecked(w, h, cx),
        GrayImage::from_raw_unchecked(w, h, cy),
    )
}

/// One-plane encoding: index `i` becomes `i / 2(L-1)`, absence becomes 0.
pub fn symbol_encode(tmap: &ThetaMap) -> GrayImage {
    let count = tmap.orientation_count() as f64;
    GrayImage::from_raw_unchecked(
        tmap.width,
        tmap.height,
        tmap.data.iter().map(|&i| f64::from(i) / count).collect(),
    )
}

/// Debug rendering: the image in gray with a short green segment along the
/// winning orientation every `step` pixels.
pub fn render_vector_field(image: &GrayImage, tmap: &ThetaMap, step: usize, path: impl AsRef<Path>) -> Result<()> {
    if (image.width(), image.height()) != (tmap.width, tmap.height) {
        return Err(Error::InvalidInput("image and theta map differ in size".into()));
    }
    let step = step.max(2);
    let (w, h) = (image.width(), image.height());
    let mut rgb: Vec<u8> = image.data().iter().flat_map(|&v| {
        let g = quantize(v);
        [g, g, g]
    }).collect();
    let half = step as f64 * 0.45;
    for y in (step / 2..h).step_by(step) {
        for x in (step / 2..w).step_by(step) {
            let Some(i) = tmap.get(x, y) else { continue };
            let (c, s) = orientation_vector(Some(i), tmap.length);
            let n = (2.0 * half).ceil() as i64;
            for t in -n..=n {
                let f = t as f64 / n as f64 * half;
                let px = (x as f64 + f * c).round() as i64;
                let py = (y as f64 + f * s).round() as i64;
                if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    let o = 3 * (py as usize * w + px as usize);
                    rgb[o..o + 3].copy_from_slice(&[0, 255, 0]);
                }
            }
        }
    }
    let path = path.as_ref();
    image::save_buffer_with_format(path, &rgb, w as u32, h as u32, image::ExtendedColorType::Rgb8, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(length: usize, v: Vec<Option<usize>>) -> ThetaMap {
        let n = v.len();
        ThetaMap::new(n, 1, length, 1, v).unwrap()
    }

    #[test]
    fn component_examples() {
        let (a, b) = vector_components(&map(3, vec![Some(1), None, Some(2), Some(3)]));
        assert_eq!((a.get(0, 0), b.get(0, 0)), (1.0, 0.5));
        assert_eq!((a.get(1, 0), b.get(1, 0)), (0.5, 0.5));
        let want = (2f64.sqrt() / 2.0 + 1.0) / 2.0;
        assert!((a.get(2, 0) - want).abs() < 1e-12 && (b.get(2, 0) - want).abs() < 1e-12);
        assert!((a.get(2, 0) - 0.85355).abs() < 1e-5);
        assert_eq!((a.get(3, 0), b.get(3, 0)), (0.5, 1.0));
    }

    #[test]
    fn stored_pairs_are_unit_or_zero() {
        for l in 2..10 {
            let n = 2 * (l - 1);
            let mut idx: Vec<Option<usize>> = (1..=n).map(Some).collect();
            idx.push(None);
            let (a, b) = vector_components(&map(l, idx.clone()));
            for (k, i) in idx.iter().enumerate() {
                let (u, v) = (2.0 * a.get(k, 0) - 1.0, 2.0 * b.get(k, 0) - 1.0);
                match i {
                    Some(_) => assert!((u * u + v * v - 1.0).abs() < 1e-9),
                    None => assert_eq!((u, v), (0.0, 0.0)),
                }
            }
        }
    }

    #[test]
    fn symbol_examples_and_injectivity() {
        let s = symbol_encode(&map(3, vec![None, Some(4)]));
        assert_eq!(s.data(), &[0.0, 1.0]);
        assert_eq!(symbol_encode(&map(7, vec![Some(3)])).get(0, 0), 0.25);
        for l in 2..12 {
            let n = 2 * (l - 1);
            let mut idx: Vec<Option<usize>> = (1..=n).map(Some).collect();
            idx.push(None);
            let s = symbol_encode(&map(l, idx));
            let mut vals: Vec<f64> = s.data().to_vec();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            assert_eq!(vals.len(), n + 1);
        }
    }

    #[test]
    fn rejects_out_of_range_index() {
        assert!(ThetaMap::new(1, 1, 3, 1, vec![Some(5)]).is_err());
        assert!(ThetaMap::new(1, 1, 3, 1, vec![Some(0)]).is_err());
    }

    #[test]
    fn line_orientations() {
        let cfg = FilterConfig::new(3, vec![1], 0.7).unwrap();
        let h = GrayImage::from_fn(9, 9, |_, y| if y == 4 { 1.0 } else { 0.0 });
        let v = GrayImage::from_fn(9, 9, |x, _| if x == 4 { 1.0 } else { 0.0 });
        let th = theta_map(&h, &cfg, 1).unwrap();
        let tv = theta_map(&v, &cfg, 1).unwrap();
        for k in 0..9 {
            assert_eq!(th.get(k, 4), Some(1));
            assert_eq!(tv.get(4, k), Some(3));
        }
        assert!(theta_map(&GrayImage::filled(6, 6, 0.2), &cfg, 1).unwrap().iter().all(|t| t.is_none()));
    }

    #[test]
    fn overlay_renders() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = FilterConfig::new(3, vec![1], 0.7).unwrap();
        let img = GrayImage::from_fn(16, 16, |x, _| if x == 10 { 1.0 } else { 0.0 });
        let t = theta_map(&img, &cfg, 1).unwrap();
        let p = dir.path().join("field.png");
        render_vector_field(&img, &t, 4, &p).unwrap();
        let back = image::open(&p).unwrap().into_rgb8();
        assert_eq!(back.dimensions(), (16, 16));
        assert!(back.pixels().any(|p| p.0 == [0, 255, 0]));
    }
}

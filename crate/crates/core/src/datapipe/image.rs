use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Image, Payload, Tensor};
use crate::mlcore::{id_key, Rng};
use crate::{Error, Result};

/// Resize-then-crop geometry and per-channel normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Target length of the shorter image side after resizing.
    pub resize: usize,
    /// Side of the square center crop.
    pub crop: usize,
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl PreprocessConfig {
    /// ImageNet statistics at a custom scale.
    pub fn imagenet(resize: usize, crop: usize) -> Self {
        PreprocessConfig {
            resize,
            crop,
            mean: vec![0.485, 0.456, 0.406],
            std: vec![0.229, 0.224, 0.225],
        }
    }

    fn validate(&self, channels: usize) -> Result<()> {
        if self.crop == 0 || self.crop > self.resize {
            return Err(Error::Preprocess(format!(
                "crop {} must be positive and at most resize {}",
                self.crop, self.resize
            )));
        }
        if self.mean.len() != channels || self.std.len() != channels {
            return Err(Error::Preprocess(format!(
                "normalization has {} means and {} stds for {channels} channels",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::Preprocess("normalization std must be positive".into()));
        }
        Ok(())
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self::imagenet(256, 224)
    }
}

/// Source coordinate for output index `i` under half-pixel-centre resampling.
fn source_coord(i: usize, out: usize, input: usize) -> f32 {
    ((i as f32 + 0.5) * input as f32 / out as f32 - 0.5).clamp(0.0, (input - 1) as f32)
}

fn lerp_index(t: f32, len: usize) -> (usize, usize, f32) {
    let i0 = (t.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, t - i0 as f32)
}

/// Bilinear resize of a single `h x w` plane.
fn resize_plane(plane: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    if (h, w) == (out_h, out_w) {
        return plane.to_vec();
    }
    let xs: Vec<_> = (0..out_w).map(|x| lerp_index(source_coord(x, out_w, w), w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, ty) = lerp_index(source_coord(y, out_h, h), h);
        let (r0, r1) = (&plane[y0 * w..][..w], &plane[y1 * w..][..w]);
        for &(x0, x1, tx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * tx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * tx;
            out.push(top + (bottom - top) * ty);
        }
    }
    out
}

/// Size after scaling the shorter side to `target`, keeping the aspect ratio.
pub fn resized_dims(height: usize, width: usize, target: usize) -> (usize, usize) {
    if height <= width {
        (target, ((width * target) as f64 / height as f64).round() as usize)
    } else {
        (((height * target) as f64 / width as f64).round() as usize, target)
    }
}

/// Resize shorter side, center crop, scale to [0, 1], normalize per channel.
/// Output is channel-major `[channels, crop, crop]`.
pub fn preprocess(image: &Image, cfg: &PreprocessConfig) -> Result<Tensor> {
    let (h, w, c) = (image.height, image.width, image.channels);
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Preprocess(format!("degenerate image {h}x{w}x{c}")));
    }
    cfg.validate(c)?;
    let (rh, rw) = resized_dims(h, w, cfg.resize);
    if rh < cfg.crop || rw < cfg.crop {
        return Err(Error::Preprocess(format!("resized image {rh}x{rw} smaller than crop {}", cfg.crop)));
    }
    let (top, left) = ((rh - cfg.crop) / 2, (rw - cfg.crop) / 2);
    let mut data = Vec::with_capacity(c * cfg.crop * cfg.crop);
    for ch in 0..c {
        let plane: Vec<f32> = (0..h * w).map(|p| image.data[p * c + ch] as f32).collect();
        let resized = resize_plane(&plane, h, w, rh, rw);
        let (mean, std) = (cfg.mean[ch], cfg.std[ch]);
        for y in top..top + cfg.crop {
            for &v in &resized[y * rw + left..][..cfg.crop] {
                data.push((v / 255.0 - mean) / std);
            }
        }
    }
    Tensor::new(vec![c, cfg.crop, cfg.crop], data)
}

/// Images go through [`preprocess`]; vector payloads pass through as rank-1
/// tensors.
pub fn preprocess_payload(payload: &Payload, cfg: &PreprocessConfig) -> Result<Tensor> {
    match payload {
        Payload::Image(img) => preprocess(img, cfg),
        Payload::Vector(v) => Tensor::new(vec![v.len()], v.clone()),
    }
}

pub const MAX_ROTATION_DEG: f64 = 15.0;

/// One sample's augmentation draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDecision {
    pub flip: bool,
    pub angle_deg: f64,
}

impl AugmentDecision {
    pub fn identity() -> Self {
        AugmentDecision {
            flip: false,
            angle_deg: 0.0,
        }
    }

    /// Deterministic in `(seed, epoch, sample_id)`.
    pub fn draw(seed: u64, epoch: u64, sample_id: &str) -> Self {
        let mut rng = Rng::substream(seed, "augment", &[epoch, id_key(sample_id)]);
        AugmentDecision {
            flip: rng.random_bool(0.5),
            angle_deg: rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
        }
    }
}

/// Horizontal flip (if drawn), then rotation about the image centre with
/// bilinear sampling and edge replication. Rank-1 tensors are returned as is.
pub fn augment(tensor: &Tensor, decision: AugmentDecision) -> Result<Tensor> {
    let shape = tensor.shape();
    if shape.len() == 1 {
        return Ok(tensor.clone());
    }
    let [c, h, w] = shape[..] else {
        return Err(Error::Preprocess(format!("augment expects [C, H, W], got {shape:?}")));
    };
    if !decision.flip && decision.angle_deg == 0.0 {
        return Ok(tensor.clone());
    }
    let src = tensor.data();
    let mut flipped = src.to_vec();
    if decision.flip {
        for row in flipped.chunks_mut(w) {
            row.reverse();
        }
    }
    if decision.angle_deg == 0.0 {
        return Tensor::new(shape.to_vec(), flipped);
    }
    let (sin, cos) = decision.angle_deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut taps = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sx = (cos * dx + sin * dy + cx).clamp(0.0, (w - 1) as f64) as f32;
            let sy = (-sin * dx + cos * dy + cy).clamp(0.0, (h - 1) as f64) as f32;
            taps.push((lerp_index(sy, h), lerp_index(sx, w)));
        }
    }
    let mut out = Vec::with_capacity(flipped.len());
    for plane in flipped.chunks(h * w) {
        for &((y0, y1, ty), (x0, x1, tx)) in &taps {
            let top = plane[y0 * w + x0] + (plane[y0 * w + x1] - plane[y0 * w + x0]) * tx;
            let bottom = plane[y1 * w + x0] + (plane[y1 * w + x1] - plane[y1 * w + x0]) * tx;
            out.push(top + (bottom - top) * ty);
        }
    }
    debug_assert_eq!(out.len(), c * h * w);
    Tensor::new(shape.to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coord_image(h: usize, w: usize) -> Image {
        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend([(x % 256) as u8, (y % 256) as u8, ((x + 2 * y) % 256) as u8]);
            }
        }
        Image::new(h, w, 3, data).unwrap()
    }

    #[test]
    fn constant_image_normalizes_per_channel() {
        let cfg = PreprocessConfig::default();
        for v in [0u8, 37, 128, 255] {
            let t = preprocess(&Image::filled(300, 400, 3, v), &cfg).unwrap();
            assert_eq!(t.shape(), &[3, 224, 224]);
            for ch in 0..3 {
                let want = (v as f32 / 255.0 - cfg.mean[ch]) / cfg.std[ch];
                for &got in &t.data()[ch * 224 * 224..][..224 * 224] {
                    assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn wide_image_is_center_cropped_without_resampling() {
        let cfg = PreprocessConfig::default();
        let img = coord_image(256, 320);
        let t = preprocess(&img, &cfg).unwrap();
        for ch in 0..3 {
            for i in [0usize, 17, 223] {
                for j in [0usize, 100, 223] {
                    let raw = img.pixel(16 + i, 48 + j, ch) as f32;
                    let want = (raw / 255.0 - cfg.mean[ch]) / cfg.std[ch];
                    assert_eq!(t.data()[(ch * 224 + i) * 224 + j], want);
                }
            }
        }
    }

    #[test]
    fn tall_image_resizes_width_to_target() {
        assert_eq!(resized_dims(400, 300, 256), (341, 256));
        assert_eq!(resized_dims(256, 320, 256), (256, 320));
    }

    #[test]
    fn rejects_bad_geometry() {
        let img = Image::filled(10, 10, 3, 0);
        assert!(matches!(preprocess(&img, &PreprocessConfig::imagenet(8, 16)), Err(Error::Preprocess(_))));
        let gray = Image::filled(10, 10, 1, 0);
        assert!(matches!(preprocess(&gray, &PreprocessConfig::imagenet(8, 8)), Err(Error::Preprocess(_))));
    }

    #[test]
    fn augment_draws_are_reproducible_and_bounded() {
        for epoch in 0..20 {
            let a = AugmentDecision::draw(7, epoch, "s000001");
            assert_eq!(a, AugmentDecision::draw(7, epoch, "s000001"));
            assert!(a.angle_deg.abs() <= MAX_ROTATION_DEG);
        }
        let flips = (0..200).filter(|&e| AugmentDecision::draw(7, e, "x").flip).count();
        assert!((60..140).contains(&flips));
    }

    #[test]
    fn flip_reverses_rows() {
        let t = Tensor::new(vec![1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let out = augment(&t, AugmentDecision { flip: true, angle_deg: 0.0 }).unwrap();
        assert_eq!(out.data(), &[3., 2., 1., 6., 5., 4.]);
    }

    #[test]
    fn rotation_keeps_constant_planes_and_centre() {
        let t = Tensor::new(vec![2, 5, 5], (0..50).map(|i| if i < 25 { 3.0 } else { i as f32 }).collect()).unwrap();
        let out = augment(&t, AugmentDecision { flip: false, angle_deg: 12.0 }).unwrap();
        assert!(out.data()[..25].iter().all(|&v| (v - 3.0).abs() < 1e-6));
        assert_eq!(out.data()[25 + 12], t.data()[25 + 12]);
    }

    #[test]
    fn quarter_turn_on_square_permutes_pixels() {
        let t = Tensor::new(vec![1, 3, 3], (0..9).map(|i| i as f32).collect()).unwrap();
        let out = augment(&t, AugmentDecision { flip: false, angle_deg: 90.0 }).unwrap();
        let mut sorted: Vec<f32> = out.data().iter().map(|v| v.round()).collect();
        sorted.sort_by(f32::total_cmp);
        assert_eq!(sorted, (0..9).map(|i| i as f32).collect::<Vec<_>>());
    }

    #[test]
    fn square_input_at_crop_size_passes_through() {
        let cfg = PreprocessConfig::imagenet(64, 64);
        let img = coord_image(64, 64);
        let t = preprocess(&img, &cfg).unwrap();
        for ch in 0..3 {
            for y in 0..64 {
                for x in 0..64 {
                    let want = (img.pixel(y, x, ch) as f32 / 255.0 - cfg.mean[ch]) / cfg.std[ch];
                    assert_eq!(t.data()[(ch * 64 + y) * 64 + x], want);
                }
            }
        }
    }

    #[test]
    fn identity_decision_and_double_flip_leave_tensor_unchanged() {
        let t = preprocess(&coord_image(20, 20), &PreprocessConfig::imagenet(18, 16)).unwrap();
        assert_eq!(augment(&t, AugmentDecision::identity()).unwrap(), t);
        let flip = AugmentDecision { flip: true, angle_deg: 0.0 };
        assert_eq!(augment(&augment(&t, flip).unwrap(), flip).unwrap(), t);
    }

    #[test]
    fn augmented_bytes_depend_only_on_stream_key() {
        let t = preprocess(&coord_image(20, 20), &PreprocessConfig::imagenet(18, 16)).unwrap();
        let run = || -> Vec<Vec<u8>> {
            (0..6)
                .map(|e| augment(&t, AugmentDecision::draw(3, e, "s000042")).unwrap().to_bytes())
                .collect()
        };
        assert_eq!(run(), run());
    }
}

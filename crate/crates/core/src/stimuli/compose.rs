use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{AssetPack, StimuliError};
use crate::task::{Frame, Location, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanvasConfig {
    pub width: u32,
    pub height: u32,
    pub background: [u8; 3],
    /// Inset from every quadrant edge, in pixels.
    pub margin: u32,
    /// Largest sprite side as a fraction of the quadrant's inner box.
    pub max_extent: f64,
}

impl Default for CanvasConfig {
    fn default() -> Self {
        CanvasConfig { width: 256, height: 256, background: [255, 255, 255], margin: 8, max_extent: 0.9 }
    }
}

impl CanvasConfig {
    pub fn validate(&self) -> Result<(), StimuliError> {
        let bad = |m: &str| Err(StimuliError::InvalidCanvas(m.to_string()));
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return bad("width and height must be positive and even");
        }
        if 2 * self.margin >= self.width / 2 || 2 * self.margin >= self.height / 2 {
            return bad("margin leaves no room inside a quadrant");
        }
        if !(self.max_extent > 0.0 && self.max_extent <= 1.0) {
            return bad("max_extent must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }
}

/// The full quadrant rectangle for `location`.
pub fn quadrant_rect(cfg: &CanvasConfig, location: Location) -> Rect {
    let (col, row) = location.grid_cell();
    let (qw, qh) = (cfg.width / 2, cfg.height / 2);
    Rect { x: col * qw, y: row * qh, width: qw, height: qh }
}

/// Composites one frame: background fill, then each object's sprite scaled
/// to fit its quadrant (aspect preserved) and centered there.
pub fn compose_frame(frame: &Frame, pack: &AssetPack, cfg: &CanvasConfig) -> Result<RgbImage, StimuliError> {
    cfg.validate()?;
    let mut canvas = RgbImage::from_pixel(cfg.width, cfg.height, Rgb(cfg.background));
    for obj in &frame.objects {
        let sprite = pack.sprite(&obj.stimulus)?;
        let quad = quadrant_rect(cfg, obj.location);
        let inner_w = quad.width - 2 * cfg.margin;
        let inner_h = quad.height - 2 * cfg.margin;
        let max_w = ((inner_w as f64) * cfg.max_extent).floor().max(1.0);
        let max_h = ((inner_h as f64) * cfg.max_extent).floor().max(1.0);
        let scale = (max_w / sprite.width() as f64).min(max_h / sprite.height() as f64);
        let w = ((sprite.width() as f64 * scale).floor() as u32).clamp(1, max_w as u32);
        let h = ((sprite.height() as f64 * scale).floor() as u32).clamp(1, max_h as u32);
        let scaled = imageops::resize(sprite, w, h, FilterType::Triangle);
        let ox = quad.x + (quad.width - w) / 2;
        let oy = quad.y + (quad.height - h) / 2;
        for (x, y, px) in scaled.enumerate_pixels() {
            let a = u32::from(px[3]);
            if a == 0 {
                continue;
            }
            let dst = canvas.get_pixel_mut(ox + x, oy + y);
            for c in 0..3 {
                let blended = (u32::from(px[c]) * a + u32::from(dst[c]) * (255 - a) + 127) / 255;
                dst[c] = blended as u8;
            }
        }
    }
    Ok(canvas)
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("in-memory png encoding");
    out.into_inner()
}

/// Writes `epoch{i}.png` for every frame into `out_dir` and returns the paths
/// in frame order.
pub fn render_trial(
    scene: &Scene,
    pack: &AssetPack,
    cfg: &CanvasConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, StimuliError> {
    fs::create_dir_all(out_dir).map_err(|source| StimuliError::Io { path: out_dir.to_path_buf(), source })?;
    let mut paths = Vec::with_capacity(scene.len());
    for frame in &scene.frames {
        let img = compose_frame(frame, pack, cfg)?;
        let path = out_dir.join(format!("epoch{}.png", frame.index));
        fs::write(&path, encode_png(&img)).map_err(|source| StimuliError::Io { path: path.clone(), source })?;
        paths.push(path);
    }
    Ok(paths)
}

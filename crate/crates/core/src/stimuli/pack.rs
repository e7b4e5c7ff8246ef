//! Sprite asset packs: `<root>/<category>/<object_index>/<view_index>.png`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::StimuliError;
use crate::task::{Category, StimulusId, OBJECTS_PER_CATEGORY};

pub const PACK_MANIFEST: &str = "pack.json";
const PACK_FORMAT_VERSION: u32 = 1;
const SPRITE_SIZE: u32 = 128;

/// Contents of `pack.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackManifest {
    pub format_version: u32,
    pub categories: usize,
    pub objects_per_category: usize,
    pub image_count: usize,
    /// Views per object, category-major.
    pub views: Vec<usize>,
    pub digest: String,
}

/// A validated, fully decoded asset pack. Immutable after loading.
#[derive(Debug, Clone)]
pub struct AssetPack {
    root: PathBuf,
    files: Vec<Vec<PathBuf>>,
    sprites: Vec<Vec<RgbaImage>>,
    digest: String,
}

fn slot(category: Category, object_index: u8) -> usize {
    category.index() * OBJECTS_PER_CATEGORY as usize + object_index as usize
}

impl AssetPack {
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// SHA-256 over every image's relative path and bytes, in index order.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn views(&self, category: Category, object_index: u8) -> usize {
        self.files.get(slot(category, object_index)).map_or(0, Vec::len)
    }

    /// Smallest view count over all objects.
    pub fn min_views(&self) -> usize {
        self.files.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn image_count(&self) -> usize {
        self.files.iter().map(Vec::len).sum()
    }

    pub fn file(&self, id: &StimulusId) -> Option<&Path> {
        self.files.get(slot(id.category, id.object_index))?.get(id.view_index as usize).map(PathBuf::as_path)
    }

    pub fn sprite(&self, id: &StimulusId) -> Result<&RgbaImage, StimuliError> {
        if id.object_index >= OBJECTS_PER_CATEGORY {
            return Err(StimuliError::UnknownStimulus(*id));
        }
        self.sprites
            .get(slot(id.category, id.object_index))
            .and_then(|v| v.get(id.view_index as usize))
            .ok_or(StimuliError::UnknownStimulus(*id))
    }

    pub fn manifest(&self) -> PackManifest {
        PackManifest {
            format_version: PACK_FORMAT_VERSION,
            categories: Category::ALL.len(),
            objects_per_category: OBJECTS_PER_CATEGORY as usize,
            image_count: self.image_count(),
            views: self.files.iter().map(Vec::len).collect(),
            digest: self.digest.clone(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StimuliError + '_ {
    move |source| StimuliError::Io { path: path.to_path_buf(), source }
}

/// Loads and validates a pack: all 64 (category, object) slots must hold at
/// least one contiguous run of views, and every image must decode.
pub fn load_asset_pack(root: impl AsRef<Path>) -> Result<AssetPack, StimuliError> {
    let root = root.as_ref();
    let mut files = Vec::with_capacity(64);
    let mut sprites = Vec::with_capacity(64);
    let mut hasher = Sha256::new();
    for category in Category::ALL {
        for object_index in 0..OBJECTS_PER_CATEGORY {
            let dir = root.join(category.as_str()).join(object_index.to_string());
            let mut views = Vec::new();
            let mut decoded = Vec::new();
            loop {
                let path = dir.join(format!("{}.png", views.len()));
                if !path.is_file() {
                    break;
                }
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                    .map_err(|e| StimuliError::Decode { path: path.clone(), message: e.to_string() })?;
                let rel = format!("{}/{}/{}.png", category.as_str(), object_index, views.len());
                hasher.update(rel.as_bytes());
                hasher.update((bytes.len() as u64).to_le_bytes());
                hasher.update(&bytes);
                decoded.push(img.to_rgba8());
                views.push(path);
            }
            if views.is_empty() {
                return Err(StimuliError::MissingObject { category, object_index });
            }
            files.push(views);
            sprites.push(decoded);
        }
    }
    let digest = hex::encode(hasher.finalize());
    let manifest_path = root.join(PACK_MANIFEST);
    if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: PackManifest = serde_json::from_str(&text)
            .map_err(|e| StimuliError::Decode { path: manifest_path.clone(), message: e.to_string() })?;
        if manifest.digest != digest {
            return Err(StimuliError::DigestMismatch { expected: manifest.digest, actual: digest });
        }
    }
    Ok(AssetPack { root: root.to_path_buf(), files, sprites, digest })
}

/// Writes a deterministic synthetic pack of glyph sprites and loads it back.
///
/// Each category gets its own silhouette, each object index its own fill
/// pattern, and each view its own rotation; a dark marker disk makes every
/// rotation visible. The seed picks palette hues and rotation offsets.
pub fn synth_asset_pack(seed: u64, out: impl AsRef<Path>, views_per_object: usize) -> Result<AssetPack, StimuliError> {
    let out = out.as_ref();
    if views_per_object == 0 {
        return Err(StimuliError::BadLayout("views_per_object must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hue_base: f64 = rng.gen();
    for category in Category::ALL {
        let hue = (hue_base + category.index() as f64 / 8.0).fract();
        for object_index in 0..OBJECTS_PER_CATEGORY {
            let offset: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let dir = out.join(category.as_str()).join(object_index.to_string());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            for view in 0..views_per_object {
                let angle = offset + std::f64::consts::TAU * view as f64 / views_per_object as f64;
                let sprite = draw_glyph(category.index(), object_index as usize, hue, angle);
                let path = dir.join(format!("{view}.png"));
                sprite
                    .save_with_format(&path, image::ImageFormat::Png)
                    .map_err(|e| StimuliError::Decode { path: path.clone(), message: e.to_string() })?;
            }
        }
    }
    let pack = load_asset_pack(out)?;
    let manifest_path = out.join(PACK_MANIFEST);
    let json = serde_json::to_string_pretty(&pack.manifest()).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;
    Ok(pack)
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let (r, g, b) = match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

fn inside_shape(shape: usize, u: f64, v: f64) -> bool {
    let r = (u * u + v * v).sqrt();
    match shape {
        0 => r <= 0.8,
        1 => u.abs().max(v.abs()) <= 0.65,
        2 => {
            // apex up at (0,-0.8), base at v = 0.6
            if !(-0.8..=0.6).contains(&v) {
                return false;
            }
            u.abs() <= 0.75 * (v + 0.8) / 1.4
        }
        3 => u.abs() + v.abs() <= 0.85,
        4 => (u.abs() <= 0.25 && v.abs() <= 0.8) || (v.abs() <= 0.25 && u.abs() <= 0.8),
        5 => {
            let theta = u.atan2(-v);
            r <= 0.45 + 0.35 * (5.0 * theta).cos()
        }
        6 => (u.abs() * 0.866 + v.abs() * 0.5).max(v.abs()) <= 0.7,
        _ => (0.45..=0.82).contains(&r),
    }
}

fn pattern_on(pattern: usize, u: f64, v: f64) -> bool {
    let even = |x: f64| (x.floor() as i64).rem_euclid(2) == 0;
    match pattern {
        0 => true,
        1 => even(v * 6.0),
        2 => even(u * 6.0),
        3 => even(u * 5.0) ^ even(v * 5.0),
        4 => {
            let (fu, fv) = ((u * 4.0).fract().abs() - 0.5, (v * 4.0).fract().abs() - 0.5);
            fu * fu + fv * fv > 0.09
        }
        5 => even((u + v) * 5.0),
        6 => {
            let near = |x: f64| ((x * 4.0).fract().abs() - 0.5).abs() > 0.38;
            !(near(u) || near(v))
        }
        _ => even((u * u + v * v).sqrt() * 8.0),
    }
}

fn draw_glyph(shape: usize, pattern: usize, hue: f64, angle: f64) -> RgbaImage {
    let primary = hsv(hue, 0.75, 0.8);
    let secondary = hsv((hue + 0.5).fract(), 0.55, 0.45);
    let (sin, cos) = angle.sin_cos();
    let marker = if shape == 7 { -0.63 } else { -0.4 };
    let half = SPRITE_SIZE as f64 / 2.0;
    RgbaImage::from_fn(SPRITE_SIZE, SPRITE_SIZE, |x, y| {
        let px = (x as f64 + 0.5 - half) / half;
        let py = (y as f64 + 0.5 - half) / half;
        // rotate into the glyph frame
        let u = cos * px + sin * py;
        let v = -sin * px + cos * py;
        let mdist = (u * u + (v - marker) * (v - marker)).sqrt();
        if mdist <= 0.12 {
            return Rgba([30, 30, 30, 255]);
        }
        if !inside_shape(shape, u, v) {
            return Rgba([0, 0, 0, 0]);
        }
        let c = if pattern_on(pattern, u, v) { primary } else { secondary };
        Rgba([c[0], c[1], c[2], 255])
    })
}

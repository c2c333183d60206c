//! Seeded synthetic tubes and videos for tests, benchmarks and demos.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::ingest::sources::FrameSource;
use crate::types::{Tube, TubeId, VideoMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub tube_count: usize,
    pub min_length: u32,
    pub max_length: u32,
    pub min_side: u32,
    pub max_side: u32,
    /// Largest per-frame displacement in pixels.
    pub max_speed: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            width: 512,
            height: 512,
            frame_count: 3000,
            tube_count: 50,
            min_length: 30,
            max_length: 200,
            min_side: 16,
            max_side: 64,
            max_speed: 3.0,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_length == 0 || self.min_length > self.max_length || self.max_length > self.frame_count {
            return Err(Error::config("need 0 < min_length <= max_length <= frame_count"));
        }
        if self.min_side == 0 || self.min_side > self.max_side || self.max_side > self.width.min(self.height) {
            return Err(Error::config("need 0 < min_side <= max_side <= frame size"));
        }
        if !(self.max_speed >= 0.0) {
            return Err(Error::config("max_speed must be non-negative"));
        }
        Ok(())
    }

    pub fn meta(&self) -> VideoMeta {
        VideoMeta {
            width: self.width,
            height: self.height,
            frame_count: self.frame_count,
            fps: 25.0,
        }
    }
}

/// One box walking with a drifting velocity, reflected at the frame edges.
pub fn random_walk(
    rng: &mut impl Rng,
    id: TubeId,
    start: u32,
    length: u32,
    (width, height): (u32, u32),
    (w, h): (u32, u32),
    max_speed: f64,
) -> Tube {
    let (max_x, max_y) = ((width - w) as f64, (height - h) as f64);
    let mut x = rng.gen_range(0.0..=max_x);
    let mut y = rng.gen_range(0.0..=max_y);
    let mut vx = rng.gen_range(-max_speed..=max_speed);
    let mut vy = rng.gen_range(-max_speed..=max_speed);
    let mut boxes = Vec::with_capacity(length as usize);
    for k in 0..length {
        boxes.push(BoundingBox::new(start + k, x.round() as u32, y.round() as u32, w, h));
        if max_speed > 0.0 {
            vx = (vx + rng.gen_range(-0.3..=0.3)).clamp(-max_speed, max_speed);
            vy = (vy + rng.gen_range(-0.3..=0.3)).clamp(-max_speed, max_speed);
        }
        x += vx;
        y += vy;
        if x < 0.0 || x > max_x {
            vx = -vx;
            x = x.clamp(0.0, max_x);
        }
        if y < 0.0 || y > max_y {
            vy = -vy;
            y = y.clamp(0.0, max_y);
        }
    }
    Tube::new(id, None, boxes).expect("frames increase")
}

/// `tube_count` random-walk tubes with ids `1..=tube_count`, sorted by start.
pub fn random_tubes(cfg: &SyntheticConfig) -> Result<Vec<Tube>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tubes: Vec<Tube> = (1..=cfg.tube_count as TubeId)
        .map(|id| {
            let length = rng.gen_range(cfg.min_length..=cfg.max_length);
            let start = rng.gen_range(0..=cfg.frame_count - length);
            let w = rng.gen_range(cfg.min_side..=cfg.max_side);
            let h = rng.gen_range(cfg.min_side..=cfg.max_side);
            random_walk(&mut rng, id, start, length, (cfg.width, cfg.height), (w, h), cfg.max_speed)
        })
        .collect();
    tubes.sort_by_key(|t| (t.start(), t.id()));
    Ok(tubes)
}

/// Smooth gradient with seeded low-amplitude noise.
pub fn background_plate(width: u32, height: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(width, height, |x, y| {
        let n: i16 = rng.gen_range(-3..=3);
        let base = |v: u32, span: u32, lo: i16| (lo + (v * 60 / span.max(1)) as i16 + n).clamp(0, 255) as u8;
        Rgb([base(x, width, 70), base(y, height, 90), base(x + y, width + height, 110)])
    })
}

/// Distinct saturated color for a tube.
pub fn tube_color(id: TubeId) -> Rgb<u8> {
    const PALETTE: [[u8; 3]; 8] = [
        [230, 40, 40],
        [40, 200, 60],
        [40, 80, 230],
        [240, 220, 40],
        [220, 60, 220],
        [40, 220, 220],
        [250, 140, 20],
        [250, 250, 250],
    ];
    Rgb(PALETTE[(id % PALETTE.len() as u64) as usize])
}

/// Frames of a static plate with every tube's box painted as a solid block,
/// later tubes in the list painted on top.
pub struct SyntheticVideo {
    pub plate: RgbImage,
    pub tubes: Vec<Tube>,
    frame_count: u32,
}

impl SyntheticVideo {
    pub fn new(plate: RgbImage, tubes: Vec<Tube>, frame_count: u32) -> Self {
        SyntheticVideo {
            plate,
            tubes,
            frame_count,
        }
    }

    /// Tubes shown at `frame`, with their boxes.
    pub fn boxes_at(&self, frame: u32) -> impl Iterator<Item = (TubeId, &BoundingBox)> {
        self.tubes
            .iter()
            .filter_map(move |t| t.box_at(frame).map(|b| (t.id(), b)))
    }
}

impl FrameSource for SyntheticVideo {
    fn frame_count(&self) -> u32 {
        self.frame_count
    }

    fn frame(&self, index: u32) -> Result<RgbImage> {
        if index >= self.frame_count {
            return Err(Error::NoSuchFrame(format!("synthetic[{index}]").into()));
        }
        let mut img = self.plate.clone();
        for (id, b) in self.boxes_at(index) {
            let color = tube_color(id);
            for y in b.top..b.bottom().min(img.height()) {
                for x in b.left..b.right().min(img.width()) {
                    img.put_pixel(x, y, color);
                }
            }
        }
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tubes_are_reproducible_and_in_bounds() {
        let cfg = SyntheticConfig {
            tube_count: 30,
            ..Default::default()
        };
        let a = random_tubes(&cfg).unwrap();
        assert_eq!(a, random_tubes(&cfg).unwrap());
        assert_eq!(a.len(), 30);
        for t in &a {
            assert!(t.is_gapless());
            assert!((cfg.min_length..=cfg.max_length).contains(&t.span()));
            assert!(t.end() < cfg.frame_count);
            assert!(t.boxes().iter().all(|b| b.fits_within(cfg.width, cfg.height)));
        }
        let other = random_tubes(&SyntheticConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn video_paints_boxes() {
        let tube = Tube::new(1, None, vec![BoundingBox::new(2, 3, 4, 5, 6)]).unwrap();
        let video = SyntheticVideo::new(background_plate(20, 20, 0), vec![tube], 4);
        assert_eq!(video.frame(0).unwrap(), video.plate);
        assert_eq!(*video.frame(2).unwrap().get_pixel(5, 6), tube_color(1));
        assert!(video.frame(4).is_err());
    }

    #[test]
    fn invalid_config() {
        let bad = SyntheticConfig {
            max_length: 10_000,
            ..Default::default()
        };
        assert!(random_tubes(&bad).is_err());
    }
}

//! Frame and detection sources consumed by the extraction controller.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::ingest::annotations::DetectionRecord;
use crate::ingest::stride::TrackedBox;
use crate::types::VideoMeta;

/// Random-access source of RGB frames.
pub trait FrameSource {
    fn frame_count(&self) -> u32;
    fn frame(&self, index: u32) -> Result<RgbImage>;
}

/// Per-frame detection callback. Implementations return tracked boxes for the
/// given frame; the image is supplied for live detectors and may be ignored.
pub trait DetectionSource {
    fn detect(&mut self, frame: u32, image: &RgbImage) -> Result<Vec<TrackedBox>>;
}

impl<F> DetectionSource for F
where
    F: FnMut(u32, &RgbImage) -> Result<Vec<TrackedBox>>,
{
    fn detect(&mut self, frame: u32, image: &RgbImage) -> Result<Vec<TrackedBox>> {
        self(frame, image)
    }
}

/// Detections answered from a parsed annotation file.
#[derive(Debug, Clone, Default)]
pub struct RecordedDetections {
    by_frame: BTreeMap<u32, Vec<TrackedBox>>,
}

impl RecordedDetections {
    pub fn from_records(records: &[DetectionRecord], meta: &VideoMeta) -> Result<Self> {
        let mut by_frame: BTreeMap<u32, Vec<TrackedBox>> = BTreeMap::new();
        for r in records {
            let tb = r.to_tracked(meta)?;
            let list = by_frame.entry(tb.bbox.frame).or_default();
            if list.iter().any(|b| b.id == tb.id) {
                return Err(Error::DuplicateRecord {
                    frame: r.frame,
                    id: r.id,
                    first_line: records
                        .iter()
                        .find(|o| o.frame == r.frame && o.id == r.id)
                        .map_or(0, |o| o.line),
                    second_line: r.line,
                });
            }
            list.push(tb);
        }
        for list in by_frame.values_mut() {
            list.sort_by_key(|b| b.id);
        }
        Ok(RecordedDetections { by_frame })
    }

    pub fn from_boxes(boxes: impl IntoIterator<Item = TrackedBox>) -> Self {
        let mut by_frame: BTreeMap<u32, Vec<TrackedBox>> = BTreeMap::new();
        for b in boxes {
            by_frame.entry(b.bbox.frame).or_default().push(b);
        }
        for list in by_frame.values_mut() {
            list.sort_by_key(|b| b.id);
        }
        RecordedDetections { by_frame }
    }

    pub fn at(&self, frame: u32) -> &[TrackedBox] {
        self.by_frame.get(&frame).map_or(&[], Vec::as_slice)
    }
}

impl DetectionSource for RecordedDetections {
    fn detect(&mut self, frame: u32, _image: &RgbImage) -> Result<Vec<TrackedBox>> {
        Ok(self.at(frame).to_vec())
    }
}

/// Frames held in memory.
pub struct MemoryFrames(pub Vec<RgbImage>);

impl FrameSource for MemoryFrames {
    fn frame_count(&self) -> u32 {
        self.0.len() as u32
    }

    fn frame(&self, index: u32) -> Result<RgbImage> {
        self.0
            .get(index as usize)
            .cloned()
            .ok_or_else(|| Error::NoSuchFrame(PathBuf::from(format!("memory[{index}]"))))
    }
}

/// Frames produced on demand by a function of the frame index.
pub struct GeneratedFrames<F> {
    count: u32,
    generate: F,
}

impl<F: Fn(u32) -> RgbImage> GeneratedFrames<F> {
    pub fn new(count: u32, generate: F) -> Self {
        GeneratedFrames { count, generate }
    }
}

impl<F: Fn(u32) -> RgbImage> FrameSource for GeneratedFrames<F> {
    fn frame_count(&self) -> u32 {
        self.count
    }

    fn frame(&self, index: u32) -> Result<RgbImage> {
        if index >= self.count {
            return Err(Error::NoSuchFrame(PathBuf::from(format!("generated[{index}]"))));
        }
        Ok((self.generate)(index))
    }
}

/// Directory of numbered image files; frame `i` is the `i`-th file in
/// ascending order of the number embedded in its name.
pub struct ImageDirFrames {
    files: Vec<PathBuf>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "ppm"];

fn embedded_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

impl ImageDirFrames {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut files: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .filter_map(|p| embedded_number(&p).map(|n| (n, p)))
            .collect();
        files.sort();
        Ok(ImageDirFrames {
            files: files.into_iter().map(|(_, p)| p).collect(),
        })
    }
}

impl FrameSource for ImageDirFrames {
    fn frame_count(&self) -> u32 {
        self.files.len() as u32
    }

    fn frame(&self, index: u32) -> Result<RgbImage> {
        let path = self
            .files
            .get(index as usize)
            .ok_or_else(|| Error::NoSuchFrame(PathBuf::from(format!("#{index}"))))?;
        Ok(image::open(path)?.to_rgb8())
    }
}

/// Headerless stream of packed RGB24 frames of a known size.
pub struct RawRgbFrames {
    file: Mutex<File>,
    path: PathBuf,
    width: u32,
    height: u32,
    count: u32,
}

impl RawRgbFrames {
    pub fn open(path: &Path, width: u32, height: u32) -> Result<Self> {
        let file = File::open(path)?;
        let frame_bytes = width as u64 * height as u64 * 3;
        if frame_bytes == 0 {
            return Err(Error::config("raw video needs positive frame size"));
        }
        let count = (file.metadata()?.len() / frame_bytes) as u32;
        Ok(RawRgbFrames {
            file: Mutex::new(file),
            path: path.to_path_buf(),
            width,
            height,
            count,
        })
    }
}

impl FrameSource for RawRgbFrames {
    fn frame_count(&self) -> u32 {
        self.count
    }

    fn frame(&self, index: u32) -> Result<RgbImage> {
        if index >= self.count {
            return Err(Error::NoSuchFrame(self.path.clone()));
        }
        let size = self.width as usize * self.height as usize * 3;
        let mut buf = vec![0u8; size];
        let mut file = self.file.lock().expect("raw frame file lock poisoned");
        file.seek(SeekFrom::Start(index as u64 * size as u64))?;
        file.read_exact(&mut buf)?;
        Ok(RgbImage::from_raw(self.width, self.height, buf).expect("buffer size matches"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn directory_frames_follow_numeric_order() {
        let dir = tempfile::tempdir().unwrap();
        for (n, v) in [(10, 3u8), (2, 1), (9, 2)] {
            RgbImage::from_pixel(2, 2, image::Rgb([v, 0, 0]))
                .save(dir.path().join(format!("img{n}.png")))
                .unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let src = ImageDirFrames::open(dir.path()).unwrap();
        assert_eq!(src.frame_count(), 3);
        let firsts: Vec<u8> = (0..3).map(|i| src.frame(i).unwrap().get_pixel(0, 0)[0]).collect();
        assert_eq!(firsts, vec![1, 2, 3]);
        assert!(src.frame(3).is_err());
    }

    #[test]
    fn raw_frames_are_sliced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("video.rgb");
        let mut f = File::create(&path).unwrap();
        for v in 0..4u8 {
            f.write_all(&[v; 2 * 2 * 3]).unwrap();
        }
        let src = RawRgbFrames::open(&path, 2, 2).unwrap();
        assert_eq!(src.frame_count(), 4);
        assert_eq!(src.frame(2).unwrap().get_pixel(1, 1)[2], 2);
    }
}

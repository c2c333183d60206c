//! Loading tubes from annotation files and extracting them from frames.

pub mod annotations;
pub mod background;
pub mod empty;
pub mod extraction;
pub mod sources;
pub mod stride;

pub use annotations::{parse_annotations, parse_records, tubes_from_records, write_tubes, DetectionRecord};
pub use background::{median_background, BackgroundSample, BackgroundSampleStore};
pub use empty::{is_frame_empty, EmptyFrameConfig};
pub use extraction::{run_extraction, Extraction, ExtractionConfig, FrameLogEntry, Mode};
pub use sources::{DetectionSource, FrameSource, GeneratedFrames, ImageDirFrames, MemoryFrames, RawRgbFrames, RecordedDetections};
pub use stride::{interpolate_between, interpolate_stride, TrackedBox};

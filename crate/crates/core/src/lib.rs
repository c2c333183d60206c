//! Video synopsis engine: condenses a long static-camera video into a short
//! one by grouping related object tubes, greedily rearranging their start
//! times under a collision budget, and stitching segmented objects onto a
//! median background. Also scores any schedule with the usual condensation
//! and collision metrics.

pub mod error;
pub mod geometry;
pub mod grouping;
pub mod imgops;
pub mod ingest;
pub mod metrics;
pub mod render;
pub mod schedule_file;
pub mod scheduler;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use grouping::{build_groups, GroupingConfig};
pub use geometry::{center_distance, common_frames, intersection_area, iom, BoundingBox};
pub use metrics::{score, MetricsReport};
pub use render::{render_synopsis, RenderConfig, SegmentationConfig};
pub use schedule_file::{read_schedule, write_schedule, ScheduleFile};
pub use scheduler::{rearrange, SchedulerConfig};
pub use types::{GroupMember, Placement, SynopsisSchedule, Tube, TubeGroup, TubeId, VideoMeta};

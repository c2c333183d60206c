use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synopsis_core::ingest::ExtractionConfig;
use synopsis_core::{GroupingConfig, RenderConfig, SchedulerConfig, VideoMeta};

/// Everything a pipeline run needs, read from one TOML document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stages: Stages,
    pub paths: Paths,
    pub extraction: ExtractionConfig,
    pub grouping: GroupingConfig,
    pub scheduler: SchedulerConfig,
    pub render: RenderConfig,
    /// Source video properties. Extraction writes them to `meta.json`;
    /// set them here when starting from an existing tube file.
    pub video: Option<VideoMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub extract: bool,
    pub synopsize: bool,
    pub render: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            extract: true,
            synopsize: true,
            render: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of numbered images, or a headerless RGB24 file.
    pub frames: Option<PathBuf>,
    /// MOT-style detection file.
    pub detections: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> synopsis_core::Result<()> {
        self.extraction.validate()?;
        self.grouping.validate()?;
        self.scheduler.validate()?;
        self.render.segmentation.validate()?;
        if let Some(meta) = &self.video {
            meta.validate()?;
        }
        Ok(())
    }

    /// The full default document written by `init`.
    pub fn default_document() -> String {
        let body = toml::to_string_pretty(&PipelineConfig::default()).expect("defaults serialize");
        format!(
            "{body}\n\
             # [scheduler] first_batch_size is unset by default, meaning max(batch_size, 10).\n\
             # Needed when a stage starts from a tube file instead of `meta.json`.\n\
             # [video]\n\
             # width = 1280\n\
             # height = 720\n\
             # frame_count = 15000\n\
             # fps = 25.0\n"
        )
    }
}

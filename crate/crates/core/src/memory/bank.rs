use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, ColorImage};
use crate::io::CameraRecord;

pub const DEFAULT_BANK_STRIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Initial,
    Panorama,
    Generated,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Initial => "initial",
            SourceTag::Panorama => "panorama",
            SourceTag::Generated => "generated",
        }
    }
}

/// Where a stored frame's pixels live: a file, an in-memory image, or both.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageRef {
    pub path: Option<PathBuf>,
    pub image: Option<Arc<ColorImage>>,
}

impl ImageRef {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn in_memory(image: ColorImage) -> Self {
        ImageRef {
            path: None,
            image: Some(Arc::new(image)),
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        ImageRef {
            path: Some(path.into()),
            image: None,
        }
    }

    /// The in-memory image, or the file loaded as PNG.
    pub fn load(&self) -> Result<Option<ColorImage>> {
        if let Some(img) = &self.image {
            return Ok(Some((**img).clone()));
        }
        match &self.path {
            Some(p) => crate::io::read_png(p).map(Some),
            None => Ok(None),
        }
    }
}

/// A posed frame offered to the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: ImageRef,
    pub view: CameraView,
}

impl Frame {
    pub fn new(image: ImageRef, view: CameraView) -> Self {
        Frame { image, view }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub image: ImageRef,
    pub view: CameraView,
    pub tag: SourceTag,
}

/// Downsampled store of posed frames. Updates return a new bank.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    entries: Vec<BankEntry>,
    stride: usize,
}

impl Default for MemoryBank {
    fn default() -> Self {
        MemoryBank {
            entries: Vec::new(),
            stride: DEFAULT_BANK_STRIDE,
        }
    }
}

impl MemoryBank {
    pub fn new(stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("bank stride must be at least 1"));
        }
        Ok(MemoryBank {
            entries: Vec::new(),
            stride,
        })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn views(&self) -> Vec<CameraView> {
        self.entries.iter().map(|e| e.view).collect()
    }

    pub fn count_tag(&self, tag: SourceTag) -> usize {
        self.entries.iter().filter(|e| e.tag == tag).count()
    }

    /// Appends every `stride`-th frame (indices 0, s, 2s, …). Initial and
    /// panorama frames are always stored in full.
    pub fn insert(&self, frames: &[Frame], tag: SourceTag) -> Result<MemoryBank> {
        let step = match tag {
            SourceTag::Generated => self.stride,
            SourceTag::Initial | SourceTag::Panorama => 1,
        };
        let mut seen: HashSet<(SourceTag, u64)> = self
            .entries
            .iter()
            .map(|e| (e.tag, e.view.frame_id))
            .collect();
        let mut out = self.clone();
        for f in frames.iter().step_by(step) {
            if !seen.insert((tag, f.view.frame_id)) {
                return Err(Error::Duplicate {
                    tag: tag.as_str().to_string(),
                    frame_id: f.view.frame_id,
                });
            }
            out.entries.push(BankEntry {
                image: f.image.clone(),
                view: f.view,
                tag,
            });
        }
        Ok(out)
    }

    pub fn to_manifest(&self) -> BankManifest {
        BankManifest {
            stride: self.stride,
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    tag: e.tag,
                    image: e.image.path.clone(),
                    camera: CameraRecord::from(&e.view),
                })
                .collect(),
        }
    }

    /// Rebuilds a bank from its manifest; images stay as file references.
    pub fn from_manifest(m: &BankManifest) -> Result<Self> {
        let mut bank = MemoryBank::new(m.stride)?;
        let mut seen = HashSet::new();
        for (i, e) in m.entries.iter().enumerate() {
            let view = e.camera.to_view(i as u64)?;
            if !seen.insert((e.tag, view.frame_id)) {
                return Err(Error::Duplicate {
                    tag: e.tag.as_str().to_string(),
                    frame_id: view.frame_id,
                });
            }
            bank.entries.push(BankEntry {
                image: e.image.clone().map(ImageRef::file).unwrap_or_default(),
                view,
                tag: e.tag,
            });
        }
        Ok(bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, &self.to_manifest())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_manifest(&crate::io::read_json(path)?)
    }
}

pub fn bank_insert(bank: &MemoryBank, frames: &[Frame], tag: SourceTag) -> Result<MemoryBank> {
    bank.insert(frames, tag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub tag: SourceTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    pub camera: CameraRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankManifest {
    pub stride: usize,
    pub entries: Vec<ManifestEntry>,
}

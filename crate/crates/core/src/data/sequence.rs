use std::fs;
use std::path::{Path, PathBuf};

use crate::data::ppm::{read_ppm, write_ppm};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::image::Image;

pub const FRAMES_DIR: &str = "frames";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";

/// Frames with one ground-truth box each.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Image>,
    pub gt: Vec<BoundingBox>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, frames: Vec<Image>, gt: Vec<BoundingBox>) -> Result<Self> {
        let seq = Self {
            name: name.into(),
            frames,
            gt,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame numbers in errors are 1-based, like the frame files.
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != self.gt.len() {
            return Err(Error::Degenerate(format!(
                "sequence {}: {} frames but {} ground-truth boxes",
                self.name,
                self.frames.len(),
                self.gt.len()
            )));
        }
        if self.frames.len() < 2 {
            return Err(Error::Degenerate(format!(
                "sequence {} needs at least two frames",
                self.name
            )));
        }
        let dims = self.frames[0].dims();
        for (i, (frame, b)) in self.frames.iter().zip(&self.gt).enumerate() {
            let at = |e: Error| Error::AtFrame {
                sequence: self.name.clone(),
                frame: i + 1,
                source: Box::new(e),
            };
            if frame.dims() != dims {
                return Err(at(Error::ShapeMismatch {
                    expected: dims,
                    actual: frame.dims(),
                }));
            }
            b.validate().map_err(at)?;
            let inside = b.x < frame.width() as f64
                && b.y < frame.height() as f64
                && b.right() > 0.0
                && b.bottom() > 0.0;
            if !inside {
                return Err(at(Error::OutOfBounds {
                    height: frame.height(),
                    width: frame.width(),
                }));
            }
        }
        Ok(())
    }
}

/// Parses one `x,y,w,h` record per line. Line numbers in errors are 1-based.
pub fn parse_groundtruth(text: &str, path: &Path) -> Result<Vec<BoundingBox>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut boxes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.trim().split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 comma-separated values, found {:?}", raw),
            ));
        }
        let mut v = [0.0; 4];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("invalid number {field:?}")))?;
        }
        let b = BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| parse_err(line, e.to_string()))?;
        boxes.push(b);
    }
    Ok(boxes)
}

pub fn format_groundtruth(boxes: &[BoundingBox]) -> String {
    boxes
        .iter()
        .map(|b| format!("{},{},{},{}\n", b.x, b.y, b.w, b.h))
        .collect()
}

fn frame_index(path: &Path) -> Result<u64> {
    let bad = |message: &str| Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    };
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => {}
        _ => return Err(bad("unsupported image format; frames must be .ppm")),
    }
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("frame file name is not a number"))
}

/// Loads `<dir>/frames/*.ppm` (in numeric order) and `<dir>/groundtruth.txt`.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<Sequence> {
    let dir = dir.as_ref();
    let frames_dir = dir.join(FRAMES_DIR);
    let entries = fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&frames_dir, e))?.path();
        if path.is_file() {
            files.push((frame_index(&path)?, path));
        }
    }
    files.sort();

    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let gt = parse_groundtruth(&text, &gt_path)?;
    if gt.len() != files.len() {
        return Err(Error::Format {
            path: gt_path,
            message: format!("{} boxes for {} frames", gt.len(), files.len()),
        });
    }

    let frames = files
        .iter()
        .map(|(_, p)| read_ppm(p))
        .collect::<Result<Vec<_>>>()?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Sequence::new(name, frames, gt)
}

/// Writes `seq` under `<root>/<name>/` and returns that directory.
pub fn save_sequence(seq: &Sequence, root: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = root.as_ref().join(&seq.name);
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        write_ppm(frame, frames_dir.join(format!("{:08}.ppm", i + 1)))?;
    }
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    fs::write(&gt_path, format_groundtruth(&seq.gt)).map_err(|e| Error::io(&gt_path, e))?;
    Ok(dir)
}

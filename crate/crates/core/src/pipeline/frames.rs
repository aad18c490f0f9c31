//! Where video frames come from. Decoding clips is left to external tools;
//! the core only reads pre-extracted images.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::backends::ImagePayload;

pub const DEFAULT_FRAME_BUDGET: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("no frames found for {clip} (looked in {looked_in})")]
    NoFrames { clip: String, looked_in: String },
    #[error("reading frames for {clip}: {message}")]
    Io { clip: String, message: String },
    #[error("frame extractor failed for {clip}: {message}")]
    Extractor { clip: String, message: String },
}

pub trait FrameSource: Send + Sync {
    /// At least one frame for `clip`, in temporal order.
    fn frames(&self, clip: &str) -> Result<Vec<ImagePayload>, FrameError>;
}

/// `budget` indices spread evenly over `0..n`, first and last included.
pub fn uniform_indices(n: usize, budget: usize) -> Vec<usize> {
    if n <= budget {
        return (0..n).collect();
    }
    match budget {
        0 => Vec::new(),
        1 => vec![0],
        b => (0..b).map(|i| i * (n - 1) / (b - 1)).collect(),
    }
}

fn media_type(path: &Path) -> Option<&'static str> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "jpg" | "jpeg" => Some("image/jpeg"),
        "png" => Some("image/png"),
        _ => None,
    }
}

fn frame_number(path: &Path) -> Option<u32> {
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.strip_prefix("frame_")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Read `frame_NNNN.jpg|png` files from `dir`, sample `budget` of them.
fn read_frame_dir(clip: &str, dir: &Path, budget: usize) -> Result<Vec<ImagePayload>, FrameError> {
    let io = |e: std::io::Error| FrameError::Io {
        clip: clip.to_string(),
        message: format!("{}: {e}", dir.display()),
    };
    let none = || FrameError::NoFrames {
        clip: clip.to_string(),
        looked_in: dir.display().to_string(),
    };
    if !dir.is_dir() {
        return Err(none());
    }
    let mut found: Vec<(u32, PathBuf, &'static str)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if let (Some(n), Some(mt)) = (frame_number(&path), media_type(&path)) {
            found.push((n, path, mt));
        }
    }
    if found.is_empty() {
        return Err(none());
    }
    found.sort();
    uniform_indices(found.len(), budget)
        .into_iter()
        .map(|i| {
            let (_, path, mt) = &found[i];
            Ok(ImagePayload::new(*mt, fs::read(path).map_err(io)?))
        })
        .collect()
}

/// Frames pre-extracted next to the clip: `clips/action_620/clip_1.mp4`
/// reads `clips/action_620/clip_1/frame_0001.jpg` and so on.
#[derive(Debug, Clone)]
pub struct DirectoryFrames {
    /// Relative clip paths resolve against this.
    pub root: Option<PathBuf>,
    pub budget: usize,
}

impl DirectoryFrames {
    pub fn new(root: Option<PathBuf>) -> Self {
        Self {
            root,
            budget: DEFAULT_FRAME_BUDGET,
        }
    }

    pub fn frame_dir(&self, clip: &str) -> PathBuf {
        let p = Path::new(clip);
        let full = match &self.root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        };
        full.with_extension("")
    }
}

impl FrameSource for DirectoryFrames {
    fn frames(&self, clip: &str) -> Result<Vec<ImagePayload>, FrameError> {
        read_frame_dir(clip, &self.frame_dir(clip), self.budget)
    }
}

/// Runs a user-supplied extractor, e.g.
/// `ffmpeg -i {input} -vf fps=2 {output_dir}/frame_%04d.jpg`, then samples
/// what it wrote. `{count}` expands to the frame budget.
#[derive(Debug, Clone)]
pub struct CommandFrames {
    pub program: String,
    pub args: Vec<String>,
    pub root: Option<PathBuf>,
    pub budget: usize,
}

impl CommandFrames {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            root: None,
            budget: DEFAULT_FRAME_BUDGET,
        }
    }
}

impl FrameSource for CommandFrames {
    fn frames(&self, clip: &str) -> Result<Vec<ImagePayload>, FrameError> {
        let err = |message: String| FrameError::Extractor {
            clip: clip.to_string(),
            message,
        };
        let input = match &self.root {
            Some(root) if Path::new(clip).is_relative() => root.join(clip),
            _ => PathBuf::from(clip),
        };
        let out = tempfile::tempdir().map_err(|e| err(e.to_string()))?;
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                a.replace("{input}", &input.to_string_lossy())
                    .replace("{output_dir}", &out.path().to_string_lossy())
                    .replace("{count}", &self.budget.to_string())
            })
            .collect();
        let status = Command::new(&self.program)
            .args(&args)
            .output()
            .map_err(|e| err(format!("{}: {e}", self.program)))?;
        if !status.status.success() {
            return Err(err(format!(
                "{} exited with {}: {}",
                self.program,
                status.status,
                String::from_utf8_lossy(&status.stderr).trim()
            )));
        }
        read_frame_dir(clip, out.path(), self.budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_spacing() {
        assert_eq!(uniform_indices(3, 8), vec![0, 1, 2]);
        assert_eq!(uniform_indices(15, 8), vec![0, 2, 4, 6, 8, 10, 12, 14]);
        assert_eq!(uniform_indices(100, 1), vec![0]);
        let idx = uniform_indices(1000, 8);
        assert_eq!((idx[0], idx[7]), (0, 999));
    }

    #[test]
    fn directory_source_reads_sorted_frames() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("action_1/clip_1");
        fs::create_dir_all(&frames).unwrap();
        for i in [3u8, 1, 2] {
            fs::write(frames.join(format!("frame_{i:04}.jpg")), [i]).unwrap();
        }
        fs::write(frames.join("notes.txt"), "ignored").unwrap();
        let src = DirectoryFrames::new(Some(dir.path().to_path_buf()));
        let got = src.frames("action_1/clip_1.mp4").unwrap();
        assert_eq!(got.iter().map(|f| f.bytes[0]).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(got[0].media_type, "image/jpeg");
        assert!(matches!(src.frames("action_2/clip_1.mp4"), Err(FrameError::NoFrames { .. })));
    }

    #[test]
    fn command_source_runs_extractor() {
        let src = CommandFrames::new(
            "sh",
            vec!["-c".into(), "printf x > {output_dir}/frame_0001.png".into()],
        );
        let got = src.frames("clip.mp4").unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].media_type, "image/png");
        let failing = CommandFrames::new("sh", vec!["-c".into(), "exit 3".into()]);
        assert!(matches!(failing.frames("clip.mp4"), Err(FrameError::Extractor { .. })));
    }
}

//! File names inside the output directory.

use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn rig(&self) -> PathBuf {
        self.root.join("rig.json")
    }

    pub fn background(&self, cam: u32) -> PathBuf {
        self.root.join("background").join(format!("c{cam}.png"))
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn image(&self, cam: u32, frame: u32) -> PathBuf {
        self.images_dir().join(format!("c{cam}_f{frame}.png"))
    }

    pub fn masks_dir(&self) -> PathBuf {
        self.root.join("masks")
    }

    pub fn mask(&self, cam: u32, frame: u32) -> PathBuf {
        self.masks_dir().join(format!("c{cam}_f{frame}.png"))
    }

    pub fn volume_dir(&self) -> PathBuf {
        self.root.join("volume")
    }

    pub fn volume(&self, frame: u32) -> PathBuf {
        self.volume_dir().join(format!("f{frame}.vhul"))
    }

    pub fn objects(&self, frame: u32) -> PathBuf {
        self.volume_dir().join(format!("f{frame}_objects.json"))
    }

    pub fn meshes_root(&self) -> PathBuf {
        self.root.join("meshes")
    }

    pub fn meshes_dir(&self, frame: u32) -> PathBuf {
        self.meshes_root().join(format!("f{frame}"))
    }

    pub fn mesh(&self, frame: u32, t: u32) -> PathBuf {
        self.meshes_dir(frame).join(format!("object_{t}.obj"))
    }

    pub fn viewmaps_dir(&self) -> PathBuf {
        self.root.join("viewmaps")
    }

    pub fn depth(&self, cam: u32, frame: u32) -> PathBuf {
        self.viewmaps_dir().join(format!("c{cam}_f{frame}_depth.tiff"))
    }

    pub fn labels(&self, cam: u32, frame: u32) -> PathBuf {
        self.viewmaps_dir().join(format!("c{cam}_f{frame}_labels.png"))
    }

    pub fn billboards_root(&self) -> PathBuf {
        self.root.join("billboards")
    }

    pub fn billboards_dir(&self, frame: u32) -> PathBuf {
        self.billboards_root().join(format!("f{frame}"))
    }

    pub fn fill_report(&self, frame: u32) -> PathBuf {
        self.billboards_dir(frame).join("fill.json")
    }

    pub fn scene_dir(&self) -> PathBuf {
        self.root.join("scene")
    }

    pub fn render(&self, frame: u32) -> PathBuf {
        self.root.join("renders").join(format!("f{frame}.png"))
    }

    pub fn orbit_reference(&self) -> PathBuf {
        self.root.join("orbit_reference.json")
    }

    pub fn run_log(&self) -> PathBuf {
        self.root.join("run.log.jsonl")
    }

    pub fn lock(&self) -> PathBuf {
        self.root.join(".fvv.lock")
    }
}

/// Frame numbers `N` of entries named `<prefix><N><suffix>` in `dir`, ascending.
/// A missing directory yields no frames.
pub(crate) fn scan_frames(dir: &Path, prefix: &str, suffix: &str) -> std::io::Result<Vec<u32>> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut frames = Vec::new();
    for entry in entries {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(mid) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)) else { continue };
        if !mid.is_empty() && mid.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(n) = mid.parse() {
                frames.push(n);
            }
        }
    }
    frames.sort_unstable();
    frames.dedup();
    Ok(frames)
}

/// Every file under `dir`, sorted.
pub(crate) fn walk_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                stack.push(entry.path());
            } else {
                out.push(entry.path());
            }
        }
    }
    out.sort();
    Ok(out)
}

//! On-disk layout: `<root>/<mission_id>/{package.json, events.ndjson, telemetry/*.csv}`.
//!
//! A mission whose log cannot be replayed gets a `quarantine.txt` next to it
//! and is never written to again.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fits_core::engine::{write_ndjson_line, EventRecord};

pub const PACKAGE_FILE: &str = "package.json";
pub const EVENTS_FILE: &str = "events.ndjson";
pub const TELEMETRY_DIR: &str = "telemetry";
pub const QUARANTINE_FILE: &str = "quarantine.txt";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (creating if needed) a store directory.
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        // Fail early on read-only stores.
        let probe = root.join(".write-probe");
        File::create(&probe)?;
        fs::remove_file(&probe)?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mission_dir(&self, mission_id: &str) -> PathBuf {
        self.root.join(mission_id)
    }

    pub fn package_path(&self, mission_id: &str) -> PathBuf {
        self.mission_dir(mission_id).join(PACKAGE_FILE)
    }

    pub fn events_path(&self, mission_id: &str) -> PathBuf {
        self.mission_dir(mission_id).join(EVENTS_FILE)
    }

    pub fn telemetry_dir(&self, mission_id: &str) -> PathBuf {
        self.mission_dir(mission_id).join(TELEMETRY_DIR)
    }

    /// Mission directories that hold a package, sorted by name.
    pub fn mission_ids(&self) -> io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() && entry.path().join(PACKAGE_FILE).is_file() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Creates the mission directory with its package and first events.
    /// Fails if the mission already exists.
    pub fn create(&self, mission_id: &str, package_json: &str, events: &[EventRecord]) -> io::Result<()> {
        let dir = self.mission_dir(mission_id);
        fs::create_dir(&dir)?;
        fs::create_dir(dir.join(TELEMETRY_DIR))?;
        write_synced(&dir.join(PACKAGE_FILE), package_json.as_bytes())?;
        File::create(dir.join(EVENTS_FILE))?.sync_all()?;
        self.append(mission_id, events)
    }

    /// Appends events and syncs them to disk before returning.
    pub fn append(&self, mission_id: &str, events: &[EventRecord]) -> io::Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in events {
            buf.push_str(&write_ndjson_line(e));
            buf.push('\n');
        }
        let mut file = OpenOptions::new().append(true).open(self.events_path(mission_id))?;
        file.write_all(buf.as_bytes())?;
        file.sync_data()
    }

    pub fn read_package(&self, mission_id: &str) -> io::Result<String> {
        fs::read_to_string(self.package_path(mission_id))
    }

    pub fn read_events(&self, mission_id: &str) -> io::Result<String> {
        match fs::read_to_string(self.events_path(mission_id)) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
            other => other,
        }
    }

    /// Stores an uploaded telemetry file under a sanitized name; returns it.
    pub fn save_telemetry(&self, mission_id: &str, name: &str, content: &str) -> io::Result<String> {
        let dir = self.telemetry_dir(mission_id);
        fs::create_dir_all(&dir)?;
        let mut stem: String =
            name.trim_end_matches(".csv").chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
        if stem.is_empty() {
            stem = "telemetry".into();
        }
        let mut file_name = format!("{stem}.csv");
        let mut n = 2;
        while dir.join(&file_name).exists() {
            file_name = format!("{stem}-{n}.csv");
            n += 1;
        }
        write_synced(&dir.join(&file_name), content.as_bytes())?;
        Ok(file_name)
    }

    /// `(file name, content)` of every telemetry file, sorted by name.
    pub fn telemetry_files(&self, mission_id: &str) -> io::Result<Vec<(String, String)>> {
        let dir = self.telemetry_dir(mission_id);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                out.push((name, fs::read_to_string(&path)?));
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn quarantine(&self, mission_id: &str, reason: &str) -> io::Result<()> {
        write_synced(&self.mission_dir(mission_id).join(QUARANTINE_FILE), format!("{reason}\n").as_bytes())
    }

    pub fn quarantine_reason(&self, mission_id: &str) -> Option<String> {
        fs::read_to_string(self.mission_dir(mission_id).join(QUARANTINE_FILE)).ok().map(|s| s.trim().to_string())
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

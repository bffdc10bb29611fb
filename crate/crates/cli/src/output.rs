use std::fs;
use std::path::{Path, PathBuf};

use relshare::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Version written into every resolved config.
pub const CONFIG_VERSION: u32 = 1;

/// `--out` if given, else `$RELSHARE_OUT/<command>`, else `runs/<command>`.
pub fn out_dir(flag: Option<PathBuf>, command: &str) -> PathBuf {
    flag.unwrap_or_else(|| {
        let root = std::env::var_os("RELSHARE_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(command)
    })
}

/// Reads a JSON config file; missing fields keep their defaults.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
}

/// Collects written files so they can be printed at the end.
pub struct Writer {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn text(&mut self, rel: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        self.text(rel, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    /// Records a file produced by other code.
    pub fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    /// `sha256  path` for every file written so far, sorted by path.
    pub fn checksums(&mut self) -> Result<PathBuf> {
        let mut lines = Vec::new();
        for p in &self.written {
            let digest = Sha256::digest(fs::read(p)?);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            let rel = p.strip_prefix(&self.root).unwrap_or(p);
            lines.push(format!("{hex}  {}", rel.display()));
        }
        lines.sort_by(|a, b| a[66..].cmp(&b[66..]));
        self.text("checksums.txt", &(lines.join("\n") + "\n"))
    }

    pub fn finish(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Parses `a,b,c` into numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} value {v:?}")))
        })
        .collect()
}

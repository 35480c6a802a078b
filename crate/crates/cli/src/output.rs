use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::failure::Failure;

/// Output directory; all writes are single-threaded and in a fixed order.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(root)
            .map_err(|e| Failure::config(format!("output directory {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        std::fs::write(self.root.join(name), contents).map_err(Failure::io)
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, &text)
    }
}

/// CSV text from a header and rows of already formatted cells.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Self { text: format!("{header}\n") }
    }

    pub fn row<I>(&mut self, cells: I)
    where
        I: IntoIterator,
        I::Item: Display,
    {
        let line: Vec<String> = cells.into_iter().map(|c| c.to_string()).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

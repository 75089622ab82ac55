use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mobcast::output::Table;

/// Files of one command, written only once all of them are ready.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        self.files.push((name.to_string(), table.to_csv_string()?.into_bytes()));
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) {
        self.files.push((name.to_string(), text.as_bytes().to_vec()));
    }

    /// Stage every file next to its destination, then rename them all. A
    /// failure removes whatever was staged or already renamed, so the set is
    /// never left half written.
    pub fn commit(self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let mut renamed = 0;
        let result = (|| -> Result<()> {
            for (name, bytes) in &self.files {
                let target = dir.join(name);
                let tmp = dir.join(format!(".{name}.partial"));
                staged.push((tmp.clone(), target));
                fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
            }
            for (tmp, target) in &staged {
                fs::rename(tmp, target).with_context(|| format!("cannot write {}", target.display()))?;
                renamed += 1;
            }
            Ok(())
        })();
        if result.is_err() {
            for (i, (tmp, target)) in staged.iter().enumerate() {
                let _ = fs::remove_file(if i < renamed { target } else { tmp });
            }
        }
        result
    }
}

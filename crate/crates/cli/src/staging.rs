use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// A scratch directory next to the final output. Outputs are written here
/// and moved into place by `commit`; dropping without committing deletes
/// everything written so far.
pub struct Staged {
    temp: PathBuf,
    target: PathBuf,
    committed: bool,
}

fn is_nonempty_dir(path: &Path) -> Result<bool, CliError> {
    match fs::read_dir(path) {
        Ok(mut entries) => Ok(entries.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(CliError::io(path, e)),
    }
}

impl Staged {
    pub fn new(target: PathBuf, force: bool) -> Result<Self, CliError> {
        if target.exists() && !target.is_dir() {
            return Err(CliError::Usage(format!("{} exists and is not a directory", target.display())));
        }
        if !force && is_nonempty_dir(&target)? {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty (use --force to replace it)",
                target.display()
            )));
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
        let temp = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if temp.exists() {
            fs::remove_dir_all(&temp).map_err(|e| CliError::io(&temp, e))?;
        }
        fs::create_dir(&temp).map_err(|e| CliError::io(&temp, e))?;
        Ok(Self { temp, target, committed: false })
    }

    pub fn path(&self) -> &Path {
        &self.temp
    }

    pub fn commit(mut self) -> Result<PathBuf, CliError> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| CliError::io(&self.target, e))?;
        }
        fs::rename(&self.temp, &self.target).map_err(|e| CliError::io(&self.target, e))?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.temp);
        }
    }
}

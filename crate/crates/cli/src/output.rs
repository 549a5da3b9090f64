use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::CliError;

/// Writes `name` inside `dir` through a temporary file that is renamed into
/// place only after `fill` succeeds, so a failed write leaves nothing behind.
pub fn write_atomic<F>(dir: &Path, name: &str, fill: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let io = |what: &str, e: std::io::Error| CliError::Io(format!("{what} {}: {e}", dir.join(name).display()));
    fs::create_dir_all(dir).map_err(|e| io("cannot create directory for", e))?;
    let tmp = NamedTempFile::new_in(dir).map_err(|e| io("cannot open temporary file for", e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| io("cannot write", e))?;
        w.flush().map_err(|e| io("cannot write", e))?;
    }
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| io("cannot move into place", e.error))?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_fill_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_atomic(dir.path(), "a.csv", |w| {
            w.write_all(b"half")?;
            Err(std::io::Error::other("boom"))
        });
        assert!(matches!(err, Err(CliError::Io(_))));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn successful_fill_lands_in_place() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_atomic(&dir.path().join("nested"), "a.csv", |w| w.write_all(b"x,y\n")).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "x,y\n");
    }
}

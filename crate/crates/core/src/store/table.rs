//! Low-level CSV table IO: torn-tail tolerant reads, flushed appends and
//! atomic rewrites.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;

use csv::{StringRecord, Terminator};

use crate::error::{Error, Result};

/// Length of the prefix that ends with a complete line.
pub(crate) fn complete_prefix_len(bytes: &[u8]) -> usize {
    bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1)
}

pub(crate) fn read_rows(path: &Path, table: &str, header: &[&str]) -> Result<Vec<StringRecord>> {
    let bytes = fs::read(path)?;
    let end = complete_prefix_len(&bytes);
    if end < bytes.len() {
        log::warn!(
            "{table}: ignoring {} trailing bytes of an incomplete row",
            bytes.len() - end
        );
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(&bytes[..end]);
    let found = reader.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Corrupt {
            table: table.into(),
            message: format!("unexpected header {:?}", found.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for row in reader.records() {
        rows.push(row.map_err(|e| Error::Corrupt {
            table: table.into(),
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub(crate) fn encode_rows<R, S>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>>
where
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(Terminator::CRLF)
        .from_writer(Vec::new());
    for row in rows {
        writer.write_record(row)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Appends `bytes` in a single write and syncs; on failure the file is cut
/// back to its previous length.
pub(crate) fn append(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = OpenOptions::new().append(true).open(path)?;
    let before = file.metadata()?.len();
    if let Err(e) = file.write_all(bytes).and_then(|_| file.sync_data()) {
        let _ = file.set_len(before);
        return Err(e.into());
    }
    Ok(())
}

/// Replaces the file contents via write-to-temp and rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        // Persist the rename; not supported on every platform.
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

/// Drops an incomplete final line left behind by an interrupted append.
pub(crate) fn truncate_torn_tail(path: &Path) -> Result<()> {
    let bytes = fs::read(path)?;
    let end = complete_prefix_len(&bytes);
    if end < bytes.len() {
        log::warn!("{}: truncating incomplete final row", path.display());
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(end as u64)?;
        f.sync_all()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_is_ignored_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "a,b\r\n1,2\r\n3,").unwrap();
        let rows = read_rows(&path, "t", &["a", "b"]).unwrap();
        assert_eq!(rows.len(), 1);
        truncate_torn_tail(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\r\n1,2\r\n");
    }

    #[test]
    fn header_mismatch_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "x,y\r\n").unwrap();
        assert!(matches!(read_rows(&path, "t", &["a", "b"]), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn quoting_round_trips() {
        let bytes = encode_rows([["with, comma", "line\nbreak", "\"q\""]]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text, "\"with, comma\",\"line\nbreak\",\"\"\"q\"\"\"\r\n");
    }
}

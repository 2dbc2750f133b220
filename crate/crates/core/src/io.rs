//! File plumbing: gzip sniffing on read, gzip-by-extension on write, and
//! atomic (temp file + rename) outputs.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::bufread::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Wraps `reader` in a gzip decoder when the stream starts with the gzip magic bytes.
pub fn decompress<'a, R: BufRead + 'a>(mut reader: R) -> io::Result<Box<dyn BufRead + 'a>> {
    let head = reader.fill_buf()?;
    if head.len() >= 2 && head[..2] == GZIP_MAGIC {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

pub fn open(path: impl AsRef<Path>) -> io::Result<Box<dyn BufRead>> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    decompress(BufReader::with_capacity(1 << 16, file))
}

/// Reads all lines of a (possibly gzipped) text file, without line terminators.
pub fn read_lines(path: impl AsRef<Path>) -> io::Result<Vec<String>> {
    lines(open(path)?).collect()
}

/// Line iterator that strips `\n` and a trailing `\r`.
pub fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = io::Result<String>> {
    reader.lines().map(|line| {
        line.map(|mut l| {
            if l.ends_with('\r') {
                l.pop();
            }
            l
        })
    })
}

pub fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// An output file that only appears under its final name once committed.
pub struct AtomicFile {
    target: PathBuf,
    temp: PathBuf,
    writer: Option<Sink>,
}

enum Sink {
    Plain(BufWriter<File>),
    Gz(GzEncoder<BufWriter<File>>),
}

impl Sink {
    fn as_write(&mut self) -> &mut dyn Write {
        match self {
            Sink::Plain(w) => w,
            Sink::Gz(w) => w,
        }
    }

    fn finish(self) -> io::Result<()> {
        let mut inner = match self {
            Sink::Plain(w) => w,
            Sink::Gz(w) => w.finish()?,
        };
        inner.flush()?;
        inner.into_inner().map_err(|e| e.into_error())?.sync_all()
    }
}

impl AtomicFile {
    pub fn create(target: impl AsRef<Path>) -> io::Result<Self> {
        let target = target.as_ref().to_path_buf();
        if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let name = target
            .file_name()
            .ok_or_else(|| {
                io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name")
            })?
            .to_string_lossy()
            .into_owned();
        let temp = target.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
        let file = BufWriter::with_capacity(1 << 16, File::create(&temp)?);
        let writer = if is_gz(&target) {
            Sink::Gz(GzEncoder::new(file, Compression::default()))
        } else {
            Sink::Plain(file)
        };
        Ok(AtomicFile {
            target,
            temp,
            writer: Some(writer),
        })
    }

    pub fn commit(mut self) -> io::Result<()> {
        if let Some(writer) = self.writer.take() {
            writer.finish()?;
        }
        fs::rename(&self.temp, &self.target)
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer
            .as_mut()
            .expect("writer present until commit")
            .as_write()
            .write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer
            .as_mut()
            .expect("writer present until commit")
            .as_write()
            .flush()
    }
}

impl Drop for AtomicFile {
    fn drop(&mut self) {
        if self.writer.is_some() {
            self.writer = None;
            let _ = fs::remove_file(&self.temp);
        }
    }
}

/// Reads everything from a (possibly gzipped) stream into a byte vector.
pub fn read_all<R: BufRead>(reader: R) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    decompress(reader)?.read_to_end(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gzip_is_detected_by_magic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        // deliberately misleading extension
        let path = dir.path().join("plain.txt");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(b"one\r\ntwo\n").unwrap();
        fs::write(&path, enc.finish().unwrap()).unwrap();
        assert_eq!(read_lines(&path).unwrap(), vec!["one", "two"]);
    }

    #[test]
    fn atomic_file_appears_on_commit_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt.gz");
        let mut out = AtomicFile::create(&path).unwrap();
        writeln!(out, "hello").unwrap();
        assert!(!path.exists());
        out.commit().unwrap();
        assert_eq!(read_lines(&path).unwrap(), vec!["hello"]);

        let dropped = dir.path().join("dropped.txt");
        let mut out = AtomicFile::create(&dropped).unwrap();
        writeln!(out, "x").unwrap();
        drop(out);
        assert!(!dropped.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

//! Append-only on-disk response store.
//!
//! Each entry is `[16-byte key][u32 LE length][u32 LE crc32][payload]`. A
//! later entry for the same key supersedes earlier ones. The index lives in
//! memory; payloads are read from disk on every hit and checked.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::model::LanguageTag;
use crate::text;

pub type Key = [u8; 16];

const HEADER: usize = 24;

/// First 128 bits of SHA-256 over `source \0 target \0 NFC(trim(text))`.
pub fn cache_key(source: &LanguageTag, target: &LanguageTag, text: &str) -> Key {
    let mut h = Sha256::new();
    h.update(source.as_str().as_bytes());
    h.update([0]);
    h.update(target.as_str().as_bytes());
    h.update([0]);
    h.update(text::nfc(text.trim()).as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 16];
    key.copy_from_slice(&digest[..16]);
    key
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

#[derive(Debug)]
struct Entry {
    offset: u64,
    len: u32,
    crc: u32,
    used: AtomicU64,
}

#[derive(Debug, Default)]
struct State {
    index: HashMap<Key, Entry>,
    end: u64,
    dead: usize,
}

#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    capacity: Option<usize>,
    state: RwLock<State>,
    clock: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
    write: Mutex<()>,
}

impl ResponseCache {
    /// Opens or creates the store at `path`, without eviction.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with_capacity(path, None)
    }

    /// With `capacity`, the least recently used entries beyond it are dropped.
    pub fn open_with_capacity(path: impl Into<PathBuf>, capacity: Option<usize>) -> Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let cache = ResponseCache {
            state: RwLock::new(load(&path)?),
            path,
            capacity: capacity.map(|c| c.max(1)),
            clock: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            write: Mutex::new(()),
        };
        {
            let mut state = cache.state.write().expect("cache lock");
            cache.enforce_capacity(&mut state);
        }
        Ok(cache)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.state.read().expect("cache lock").index.len(),
        }
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    fn miss(&self) -> Option<Vec<u8>> {
        self.misses.fetch_add(1, Ordering::Relaxed);
        None
    }

    pub fn get(&self, key: &Key) -> Option<Vec<u8>> {
        let found = {
            let state = self.state.read().expect("cache lock");
            match state.index.get(key) {
                None => None,
                Some(entry) => match read_payload(&self.path, entry) {
                    Ok(Some(bytes)) => {
                        entry.used.store(self.tick(), Ordering::Relaxed);
                        self.hits.fetch_add(1, Ordering::Relaxed);
                        return Some(bytes);
                    }
                    Ok(None) => Some(false),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Some(true),
                    Err(e) => {
                        log::warn!("cache read failed: {e}");
                        return self.miss();
                    }
                },
            }
        };
        match found {
            None => {}
            Some(true) => {
                log::warn!(
                    "cache file {} disappeared; starting empty",
                    self.path.display()
                );
                let _guard = self.write.lock().expect("cache write lock");
                if !self.path.exists() {
                    *self.state.write().expect("cache lock") = State::default();
                }
            }
            Some(false) => {
                log::warn!("discarding corrupt cache entry in {}", self.path.display());
                let mut state = self.state.write().expect("cache lock");
                if state.index.remove(key).is_some() {
                    state.dead += 1;
                }
            }
        }
        self.miss()
    }

    pub fn put(&self, key: &Key, payload: &[u8]) -> Result<()> {
        let _guard = self.write.lock().expect("cache write lock");
        let mut state = self.state.write().expect("cache lock");
        if !self.path.exists() {
            *state = State::default();
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        let offset = file.metadata()?.len();
        let len = u32::try_from(payload.len())
            .map_err(|_| crate::Error::Invalid("cache payload exceeds 4 GiB".into()))?;
        let crc = crc32fast::hash(payload);
        let mut record = Vec::with_capacity(HEADER + payload.len());
        record.extend_from_slice(key);
        record.extend_from_slice(&len.to_le_bytes());
        record.extend_from_slice(&crc.to_le_bytes());
        record.extend_from_slice(payload);
        file.write_all(&record)?;
        file.flush()?;
        state.end = offset + record.len() as u64;
        let entry = Entry {
            offset: offset + HEADER as u64,
            len,
            crc,
            used: AtomicU64::new(self.tick()),
        };
        if state.index.insert(*key, entry).is_some() {
            state.dead += 1;
        }
        self.enforce_capacity(&mut state);
        if state.dead > 64 && state.dead > state.index.len() {
            self.compact(&mut state)?;
        }
        Ok(())
    }

    fn enforce_capacity(&self, state: &mut State) {
        let Some(cap) = self.capacity else { return };
        while state.index.len() > cap {
            let oldest = state
                .index
                .iter()
                .min_by_key(|(_, e)| e.used.load(Ordering::Relaxed))
                .map(|(k, _)| *k)
                .expect("non-empty index");
            state.index.remove(&oldest);
            state.dead += 1;
        }
    }

    /// Rewrites the file with live entries only.
    fn compact(&self, state: &mut State) -> Result<()> {
        let tmp = self.path.with_extension("compact");
        let mut out = File::create(&tmp)?;
        let mut src = File::open(&self.path)?;
        let mut offset = 0u64;
        let mut entries: Vec<(&Key, &mut Entry)> = state.index.iter_mut().collect();
        entries.sort_by_key(|(_, e)| e.offset);
        for (key, entry) in entries {
            let mut payload = vec![0; entry.len as usize];
            src.seek(SeekFrom::Start(entry.offset))?;
            src.read_exact(&mut payload)?;
            out.write_all(key)?;
            out.write_all(&entry.len.to_le_bytes())?;
            out.write_all(&entry.crc.to_le_bytes())?;
            out.write_all(&payload)?;
            entry.offset = offset + HEADER as u64;
            offset += (HEADER + payload.len()) as u64;
        }
        out.sync_all()?;
        fs::rename(&tmp, &self.path)?;
        state.end = offset;
        state.dead = 0;
        Ok(())
    }
}

fn read_payload(path: &Path, entry: &Entry) -> std::io::Result<Option<Vec<u8>>> {
    let mut file = File::open(path)?;
    file.seek(SeekFrom::Start(entry.offset))?;
    let mut payload = vec![0; entry.len as usize];
    match file.read_exact(&mut payload) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    Ok((crc32fast::hash(&payload) == entry.crc).then_some(payload))
}

fn load(path: &Path) -> Result<State> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(State::default()),
        Err(e) => return Err(e.into()),
    };
    let mut state = State::default();
    let mut pos = 0usize;
    while pos + HEADER <= bytes.len() {
        let mut key = [0u8; 16];
        key.copy_from_slice(&bytes[pos..pos + 16]);
        let len = u32::from_le_bytes(bytes[pos + 16..pos + 20].try_into().expect("4 bytes"));
        let crc = u32::from_le_bytes(bytes[pos + 20..pos + 24].try_into().expect("4 bytes"));
        let start = pos + HEADER;
        let Some(end) = start
            .checked_add(len as usize)
            .filter(|&e| e <= bytes.len())
        else {
            break;
        };
        if crc32fast::hash(&bytes[start..end]) == crc {
            let entry = Entry {
                offset: start as u64,
                len,
                crc,
                used: AtomicU64::new(0),
            };
            if state.index.insert(key, entry).is_some() {
                state.dead += 1;
            }
        } else {
            log::warn!(
                "skipping corrupt cache entry at byte {pos} of {}",
                path.display()
            );
            state.dead += 1;
        }
        pos = end;
    }
    if pos < bytes.len() {
        log::warn!(
            "truncating {} trailing bytes of incomplete cache entry in {}",
            bytes.len() - pos,
            path.display()
        );
        OpenOptions::new()
            .write(true)
            .open(path)?
            .set_len(pos as u64)?;
    }
    state.end = pos as u64;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(n: u8) -> Key {
        [n; 16]
    }

    #[test]
    fn key_normalizes_whitespace_and_nfc() {
        let en: LanguageTag = "en".parse().unwrap();
        let fi: LanguageTag = "fi".parse().unwrap();
        assert_eq!(
            cache_key(&en, &fi, " caf\u{e9}\n"),
            cache_key(&en, &fi, "cafe\u{301}")
        );
        assert_ne!(cache_key(&en, &fi, "x"), cache_key(&fi, &en, "x"));
        assert_ne!(cache_key(&en, &fi, "a b"), cache_key(&en, &fi, "a  b"));
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(&key(1)), None);
        c.put(&key(1), b"one").unwrap();
        c.put(&key(2), b"two").unwrap();
        c.put(&key(1), b"uno").unwrap();
        drop(c);
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(&key(1)).as_deref(), Some(&b"uno"[..]));
        assert_eq!(c.get(&key(2)).as_deref(), Some(&b"two"[..]));
        assert_eq!(
            c.stats(),
            CacheStats {
                hits: 2,
                misses: 0,
                entries: 2
            }
        );
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let c = ResponseCache::open(&path).unwrap();
        c.put(&key(1), b"payload").unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        fs::write(&path, &bytes).unwrap();
        assert_eq!(c.get(&key(1)), None);
        assert_eq!(c.stats().entries, 0);
        c.put(&key(1), b"fresh").unwrap();
        assert_eq!(c.get(&key(1)).as_deref(), Some(&b"fresh"[..]));

        fs::write(&path, &bytes).unwrap();
        let reopened = ResponseCache::open(&path).unwrap();
        assert_eq!(reopened.get(&key(1)), None);
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let c = ResponseCache::open(&path).unwrap();
        c.put(&key(1), b"first").unwrap();
        c.put(&key(2), b"second").unwrap();
        drop(c);
        let len = fs::metadata(&path).unwrap().len();
        OpenOptions::new()
            .write(true)
            .open(&path)
            .unwrap()
            .set_len(len - 3)
            .unwrap();
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(&key(1)).as_deref(), Some(&b"first"[..]));
        assert_eq!(c.get(&key(2)), None);
        c.put(&key(3), b"third").unwrap();
        drop(c);
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(&key(3)).as_deref(), Some(&b"third"[..]));
    }

    #[test]
    fn deleted_file_then_restore() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let c = ResponseCache::open(&path).unwrap();
        c.put(&key(1), b"x").unwrap();
        fs::remove_file(&path).unwrap();
        assert_eq!(c.get(&key(1)), None);
        c.put(&key(1), b"y").unwrap();
        assert_eq!(c.get(&key(1)).as_deref(), Some(&b"y"[..]));
    }

    #[test]
    fn lru_capacity() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::open_with_capacity(dir.path().join("c.bin"), Some(2)).unwrap();
        c.put(&key(1), b"1").unwrap();
        c.put(&key(2), b"2").unwrap();
        assert!(c.get(&key(1)).is_some());
        c.put(&key(3), b"3").unwrap();
        assert!(c.get(&key(2)).is_none());
        assert!(c.get(&key(1)).is_some());
        assert!(c.get(&key(3)).is_some());
    }

    #[test]
    fn compaction_keeps_live_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let c = ResponseCache::open(&path).unwrap();
        for round in 0..100u8 {
            c.put(&key(1), &[round]).unwrap();
            c.put(&key(2), &[round, round]).unwrap();
        }
        assert!(fs::metadata(&path).unwrap().len() < 100 * 2 * 26);
        assert_eq!(c.get(&key(1)).as_deref(), Some(&[99u8][..]));
        drop(c);
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(&key(2)).as_deref(), Some(&[99u8, 99][..]));
    }

    #[test]
    fn concurrent_readers_and_writers() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::open(dir.path().join("c.bin")).unwrap();
        std::thread::scope(|s| {
            for t in 0..4u8 {
                let c = &c;
                s.spawn(move || {
                    for i in 0..50u8 {
                        let k = key(t * 50 + i);
                        c.put(&k, &[t, i]).unwrap();
                        assert_eq!(c.get(&k).as_deref(), Some(&[t, i][..]));
                    }
                });
            }
        });
        assert_eq!(c.stats().entries, 200);
    }

    proptest! {
        #[test]
        fn last_write_wins(ops in proptest::collection::vec((0u8..8, proptest::collection::vec(any::<u8>(), 0..20)), 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.bin");
            let c = ResponseCache::open(&path).unwrap();
            let mut model = HashMap::new();
            for (k, v) in &ops {
                c.put(&key(*k), v).unwrap();
                model.insert(*k, v.clone());
            }
            drop(c);
            let c = ResponseCache::open(&path).unwrap();
            for (k, v) in &model {
                prop_assert_eq!(c.get(&key(*k)), Some(v.clone()));
            }
        }
    }
}

//! Write-through file cache for embeddings.
//!
//! Layout (all integers little-endian):
//!
//! - `vectors.bin` — concatenated records, each `[dim: u32][dim x f32]`.
//! - `index.bin` — fixed-width entries `[key: 16 bytes][offset: u64]`
//!   mapping a 128-bit content hash to the record offset in `vectors.bin`.
//!
//! Keys hash `(text, adapter, target_dim, max_input_tokens)`; truncated
//! inputs embed differently, so the input-length control is part of the
//! key. A corrupt record is treated as a miss and rebuilt in place by
//! appending a fresh record and repointing the index entry.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::Adapter;
use crate::error::{Error, Result};

const INDEX_ENTRY_LEN: usize = 24;

pub struct VectorCache {
    dir: PathBuf,
    vectors: File,
    index: File,
    offsets: HashMap<[u8; 16], u64>,
}

impl VectorCache {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let vectors_path = dir.join("vectors.bin");
        let index_path = dir.join("index.bin");
        let vectors = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&vectors_path)
            .map_err(|e| Error::io(&vectors_path, e))?;
        let mut index = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&index_path)
            .map_err(|e| Error::io(&index_path, e))?;

        let mut offsets = HashMap::new();
        let mut buf = Vec::new();
        index
            .read_to_end(&mut buf)
            .map_err(|e| Error::io(&index_path, e))?;
        // A torn trailing entry from an interrupted write is ignored; the
        // next insert of that key rewrites it.
        for entry in buf.chunks_exact(INDEX_ENTRY_LEN) {
            let mut key = [0u8; 16];
            key.copy_from_slice(&entry[..16]);
            let offset = u64::from_le_bytes(entry[16..24].try_into().unwrap());
            offsets.insert(key, offset);
        }
        Ok(VectorCache {
            dir: dir.to_path_buf(),
            vectors,
            index,
            offsets,
        })
    }

    /// 128-bit content key over everything that changes the embedding.
    pub fn key(
        text: &str,
        adapter: Adapter,
        target_dim: Option<usize>,
        max_input_tokens: Option<usize>,
    ) -> [u8; 16] {
        let mut h = Sha256::new();
        h.update(adapter.as_str().as_bytes());
        h.update([0x1f]);
        match target_dim {
            Some(d) => h.update(d.to_le_bytes()),
            None => h.update(b"-"),
        }
        h.update([0x1f]);
        match max_input_tokens {
            Some(m) => h.update(m.to_le_bytes()),
            None => h.update(b"-"),
        }
        h.update([0x1f]);
        h.update(text.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 16];
        key.copy_from_slice(&digest[..16]);
        key
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Read a cached vector; any corruption reads as a miss.
    pub fn lookup(&mut self, key: &[u8; 16]) -> Option<Vec<f64>> {
        let offset = *self.offsets.get(key)?;
        self.read_record(offset).ok()
    }

    fn read_record(&mut self, offset: u64) -> Result<Vec<f64>> {
        let path = self.dir.join("vectors.bin");
        self.vectors
            .seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(&path, e))?;
        let mut dim_buf = [0u8; 4];
        self.vectors
            .read_exact(&mut dim_buf)
            .map_err(|e| Error::io(&path, e))?;
        let dim = u32::from_le_bytes(dim_buf) as usize;
        if dim == 0 || dim > 1 << 20 {
            return Err(Error::InvalidConfig("corrupt cache record".into()));
        }
        let mut data = vec![0u8; dim * 4];
        self.vectors
            .read_exact(&mut data)
            .map_err(|e| Error::io(&path, e))?;
        Ok(data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect())
    }

    /// Append a record and point the key at it (write-through).
    pub fn insert(&mut self, key: &[u8; 16], vector: &[f64]) -> Result<()> {
        let vectors_path = self.dir.join("vectors.bin");
        let index_path = self.dir.join("index.bin");
        let offset = self
            .vectors
            .seek(SeekFrom::End(0))
            .map_err(|e| Error::io(&vectors_path, e))?;
        let mut record = Vec::with_capacity(4 + vector.len() * 4);
        record.extend_from_slice(&(vector.len() as u32).to_le_bytes());
        for x in vector {
            record.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        self.vectors
            .write_all(&record)
            .map_err(|e| Error::io(&vectors_path, e))?;

        let mut entry = Vec::with_capacity(INDEX_ENTRY_LEN);
        entry.extend_from_slice(key);
        entry.extend_from_slice(&offset.to_le_bytes());
        self.index
            .write_all(&entry)
            .map_err(|e| Error::io(&index_path, e))?;
        self.offsets.insert(*key, offset);
        Ok(())
    }
}

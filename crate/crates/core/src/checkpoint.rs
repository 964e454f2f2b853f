//! Checkpoint container: a text manifest (format version + key/value
//! configuration) followed by a directory of named raw tensor records.
//! Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::{io as tio, Elem};

const MAGIC: &[u8; 4] = b"RDCP";
const VERSION: u32 = 1;

pub fn write_checkpoint<T: Elem, W: Write>(
    w: &mut W,
    meta: &[(String, String)],
    store: &ParamStore<T>,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;

    let mut meta_text = String::new();
    for (k, v) in meta {
        if k.contains('\n') || v.contains('\n') {
            return Err(Error::invalid("checkpoint", "meta keys/values must be single-line"));
        }
        meta_text.push_str(k);
        meta_text.push_str(" = ");
        meta_text.push_str(v);
        meta_text.push('\n');
    }
    w.write_all(&(meta_text.len() as u64).to_le_bytes())?;
    w.write_all(meta_text.as_bytes())?;

    let mut blob: Vec<u8> = Vec::new();
    let mut directory: Vec<(String, u64, u64)> = Vec::new();
    for (name, tensor) in store.iter() {
        let record = tio::to_bytes(tensor)?;
        directory.push((name.to_string(), blob.len() as u64, record.len() as u64));
        blob.extend_from_slice(&record);
    }

    w.write_all(&(directory.len() as u64).to_le_bytes())?;
    for (name, offset, len) in &directory {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&offset.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
    }
    w.write_all(&blob)?;
    Ok(())
}

pub fn read_checkpoint<T: Elem, R: Read>(r: &mut R) -> Result<(Vec<(String, String)>, ParamStore<T>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("checkpoint", "bad magic bytes"));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(Error::invalid("checkpoint", format!("unsupported version {version}")));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let meta_len = u64::from_le_bytes(buf8) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let meta_text = String::from_utf8(meta_bytes)
        .map_err(|_| Error::invalid("checkpoint", "manifest is not utf-8"))?;
    let mut meta = Vec::new();
    for line in meta_text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::invalid("checkpoint", format!("bad manifest line `{line}`")))?;
        meta.push((k.to_string(), v.to_string()));
    }

    r.read_exact(&mut buf8)?;
    let n_entries = u64::from_le_bytes(buf8) as usize;
    let mut directory = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        r.read_exact(&mut buf8)?;
        let name_len = u64::from_le_bytes(buf8) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::invalid("checkpoint", "tensor name is not utf-8"))?;
        r.read_exact(&mut buf8)?;
        let offset = u64::from_le_bytes(buf8);
        r.read_exact(&mut buf8)?;
        let len = u64::from_le_bytes(buf8);
        directory.push((name, offset, len));
    }

    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    let mut store = ParamStore::new();
    for (name, offset, len) in directory {
        let (start, end) = (offset as usize, (offset + len) as usize);
        if end > blob.len() {
            return Err(Error::invalid("checkpoint", format!("record `{name}` out of bounds")));
        }
        store.insert(name, tio::from_bytes(&blob[start..end])?)?;
    }
    Ok((meta, store))
}

pub fn save<T: Elem>(
    path: impl AsRef<Path>,
    meta: &[(String, String)],
    store: &ParamStore<T>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, meta, store)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Elem>(path: impl AsRef<Path>) -> Result<(Vec<(String, String)>, ParamStore<T>)> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

pub fn meta_get<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

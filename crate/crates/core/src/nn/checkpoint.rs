//! Binary checkpoint format.
//!
//! ```text
//! u64 LE   entry count
//! repeated:
//!   u64 LE   name length in bytes
//!   [u8]     UTF-8 name
//!   matrix   u64 LE rows, u64 LE cols, rows·cols f64 LE (row-major)
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::Module;
use crate::error::{Error, Result};
use crate::ndcore::{read_u64, Matrix};

pub fn write_entries<'a>(
    w: &mut impl Write,
    entries: impl ExactSizeIterator<Item = (String, &'a Matrix)>,
) -> std::io::Result<()> {
    w.write_all(&(entries.len() as u64).to_le_bytes())?;
    for (name, m) in entries {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        m.write_to(w)?;
    }
    Ok(())
}

pub fn read_entries(r: &mut impl Read) -> std::io::Result<Vec<(String, Matrix)>> {
    let invalid = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
    let count = read_u64(r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u64(r)? as usize;
        if len > 1 << 16 {
            return Err(invalid("tensor name too long"));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| invalid("tensor name is not UTF-8"))?;
        out.push((name, Matrix::read_from(r)?));
    }
    Ok(out)
}

pub fn to_bytes(module: &dyn ModuleRef) -> Vec<u8> {
    let entries = module.entries();
    let mut buf = Vec::new();
    write_entries(&mut buf, entries.into_iter()).expect("writing to a Vec cannot fail");
    buf
}

/// Object-safe view used by the byte helpers.
pub trait ModuleRef {
    fn entries(&self) -> Vec<(String, &Matrix)>;
}

impl<M: Module> ModuleRef for M {
    fn entries(&self) -> Vec<(String, &Matrix)> {
        self.named_tensors()
    }
}

pub fn save(module: &impl Module, path: &Path) -> Result<()> {
    let bytes = to_bytes(module);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Overwrites every tensor of `module` from `entries`, matching by name and
/// shape. Missing or extra entries are errors.
pub fn load_into(module: &mut impl Module, entries: Vec<(String, Matrix)>) -> Result<()> {
    let mut by_name: HashMap<String, Matrix> = entries.into_iter().collect();
    let mut problem: Option<String> = None;
    module.visit_mut("", &mut |name, m, _| {
        if problem.is_some() {
            return;
        }
        match by_name.remove(&name) {
            Some(src) if src.shape() == m.shape() => *m = src,
            Some(src) => {
                problem = Some(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    m.shape()
                ))
            }
            None => problem = Some(format!("tensor {name} missing from checkpoint")),
        }
    });
    if let Some(p) = problem {
        return Err(Error::Checkpoint(p));
    }
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    Ok(())
}

pub fn load(module: &mut impl Module, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let entries =
        read_entries(&mut bytes.as_slice()).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    load_into(module, entries)
}

//! Binary checkpoint format for named tensors.
//!
//! Layout (all integers little-endian):
//!   magic  b"CFCK"
//!   version u32 (currently 1)
//!   count  u32
//!   repeated: name_len u32, name bytes (UTF-8), ndim u32, dims u32 each,
//!             data f32 each.
//!
//! Entries are written sorted by name so files are byte-identical for the
//! same contents.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CFCK";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a checkpoint file (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            version
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Data(format!("{}: invalid tensor name", path.display())))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 4];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(f32::from_le_bytes(buf));
        }
        out.insert(name, Tensor::new(shape, data));
    }
    Ok(out)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let dir = std::env::temp_dir().join("confrec_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.ckpt");

        let mut tensors = BTreeMap::new();
        tensors.insert(
            "w1".to_string(),
            Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-30, f32::MIN_POSITIVE]),
        );
        tensors.insert("b".to_string(), Tensor::from_vec(vec![0.125]));

        save_checkpoint(&path, &tensors).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        for (name, t) in &tensors {
            let l = &loaded[name];
            assert_eq!(l.shape(), t.shape());
            for (a, b) in l.data().iter().zip(t.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = std::env::temp_dir().join("confrec_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn same_contents_write_identical_bytes() {
        let dir = std::env::temp_dir().join("confrec_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let (p1, p2) = (dir.join("a.ckpt"), dir.join("b.ckpt"));
        let mut tensors = BTreeMap::new();
        tensors.insert("z".to_string(), Tensor::from_vec(vec![1.0, 2.0]));
        tensors.insert("a".to_string(), Tensor::from_vec(vec![-1.0]));
        save_checkpoint(&p1, &tensors).unwrap();
        save_checkpoint(&p2, &tensors).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_file(&p1).unwrap();
        std::fs::remove_file(&p2).unwrap();
    }
}

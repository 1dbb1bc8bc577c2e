//! PMAP probability-map files.
//!
//! Layout, all little-endian: `b"PMAP"`, `u16` version (1), `u32` width,
//! `u32` height, then `width * height` `f32` samples in row-major order.

use std::path::Path;

use crate::error::{Error, Result};

use super::ProbabilityMap;

pub const PMAP_MAGIC: &[u8; 4] = b"PMAP";
pub const PMAP_VERSION: u16 = 1;
const HEADER_LEN: usize = 14;

pub fn write_pmap(map: &ProbabilityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.data.len());
    out.extend_from_slice(PMAP_MAGIC);
    out.extend_from_slice(&PMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.width as u32).to_le_bytes());
    out.extend_from_slice(&(map.height as u32).to_le_bytes());
    for &v in &map.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_pmap(bytes: &[u8]) -> Result<ProbabilityMap> {
    if !bytes.starts_with(PMAP_MAGIC) {
        let n = bytes.len().min(4);
        return Err(Error::Format(format!(
            "not a PMAP file: magic {:?}",
            &bytes[..n]
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt("PMAP header truncated".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != PMAP_VERSION {
        return Err(Error::Format(format!("unsupported PMAP version {version}")));
    }
    let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let need = width * height * 4;
    let body = bytes
        .get(HEADER_LEN..HEADER_LEN + need)
        .ok_or_else(|| Error::Corrupt(format!("PMAP payload truncated: need {need} bytes")))?;
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ProbabilityMap::new(width, height, data)
}

pub fn load_pmap(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    read_pmap(&std::fs::read(path)?)
}

pub fn save_pmap(map: &ProbabilityMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_pmap(map))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let map = ProbabilityMap::new(2, 1, vec![0.25, 1.0]).unwrap();
        let bytes = write_pmap(&map);
        assert_eq!(&bytes[..4], b"PMAP");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[1, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &0.25f32.to_le_bytes());
        assert_eq!(bytes.len(), 22);
    }

    #[test]
    fn rejects_bad_version_and_out_of_range() {
        let map = ProbabilityMap::new(1, 1, vec![0.5]).unwrap();
        let mut bytes = write_pmap(&map);
        bytes[4] = 2;
        assert!(matches!(read_pmap(&bytes), Err(Error::Format(_))));
        let mut bytes = write_pmap(&map);
        bytes[14..18].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(read_pmap(&bytes), Err(Error::Argument(_))));
        assert!(matches!(
            read_pmap(&write_pmap(&map)[..16]),
            Err(Error::Corrupt(_))
        ));
    }
}

//! On-disk point cloud format.
//!
//! A cloud directory holds one `.bin` file per cloud plus `manifest.json`.
//! Each binary file is a stream of 28-byte little-endian records:
//! `x y z r g b` as `f32` followed by the label as `u32`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::PointCloud;

pub const RECORD_BYTES: usize = 28;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudEntry {
    pub file: String,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudManifest {
    pub format: String,
    pub vocabulary: Vec<String>,
    pub seed: u64,
    pub clouds: Vec<CloudEntry>,
}

impl CloudManifest {
    pub const FORMAT: &'static str = "xyzrgb-f32-label-u32-le";
}

pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut buf = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for ((p, c), &l) in cloud
        .coords()
        .iter()
        .zip(cloud.colors())
        .zip(cloud.labels())
    {
        for v in p.iter().chain(c.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&l.to_le_bytes());
    }
    buf
}

pub fn decode_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::Format(format!(
            "cloud payload of {} bytes is not a positive multiple of {RECORD_BYTES}",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut coords = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(RECORD_BYTES) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        coords.push([f(0), f(1), f(2)]);
        colors.push([f(3), f(4), f(5)]);
        labels.push(u32::from_le_bytes(rec[24..28].try_into().unwrap()));
    }
    PointCloud::new(coords, colors, labels)
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_cloud(cloud))?;
    w.flush()?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(path)?).read_to_end(&mut bytes)?;
    decode_cloud(&bytes)
}

/// Writes `clouds` into `dir` as `cloud_00000.bin`, ... plus the manifest.
pub fn write_cloud_dir(
    dir: &Path,
    clouds: &[PointCloud],
    vocabulary: &[String],
    seed: u64,
) -> Result<CloudManifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(clouds.len());
    for (i, c) in clouds.iter().enumerate() {
        let file = format!("cloud_{i:05}.bin");
        write_cloud(&dir.join(&file), c)?;
        entries.push(CloudEntry {
            file,
            points: c.len(),
        });
    }
    let manifest = CloudManifest {
        format: CloudManifest::FORMAT.to_string(),
        vocabulary: vocabulary.to_vec(),
        seed,
        clouds: entries,
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Reads a cloud directory, checking point counts and labels against the manifest.
pub fn read_cloud_dir(dir: &Path) -> Result<(CloudManifest, Vec<PointCloud>)> {
    let manifest: CloudManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != CloudManifest::FORMAT {
        return Err(Error::Format(format!(
            "unknown cloud format {:?}",
            manifest.format
        )));
    }
    let mut clouds = Vec::with_capacity(manifest.clouds.len());
    for e in &manifest.clouds {
        let c = read_cloud(&dir.join(&e.file))?;
        if c.len() != e.points {
            return Err(Error::Format(format!(
                "{} holds {} points, manifest says {}",
                e.file,
                c.len(),
                e.points
            )));
        }
        c.check_vocabulary(manifest.vocabulary.len())?;
        clouds.push(c);
    }
    Ok((manifest, clouds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn cloud_bytes_roundtrip(pts in prop::collection::vec(
            ((-5.0f32..5.0, -5.0f32..5.0, -5.0f32..5.0), (0.0f32..=1.0, 0.0f32..=1.0, 0.0f32..=1.0), 0u32..12),
            1..40,
        )) {
            let cloud = PointCloud::new(
                pts.iter().map(|p| [p.0.0, p.0.1, p.0.2]).collect(),
                pts.iter().map(|p| [p.1.0, p.1.1, p.1.2]).collect(),
                pts.iter().map(|p| p.2).collect(),
            ).unwrap();
            let bytes = encode_cloud(&cloud);
            prop_assert_eq!(bytes.len(), pts.len() * RECORD_BYTES);
            prop_assert_eq!(decode_cloud(&bytes).unwrap(), cloud);
        }
    }

    #[test]
    fn record_layout_is_little_endian() {
        let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0]], vec![[0.0, 0.5, 1.0]], vec![7]).unwrap();
        let bytes = encode_cloud(&cloud);
        assert_eq!(&bytes[0..4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[24..28], &[7, 0, 0, 0]);
        assert!(decode_cloud(&bytes[..27]).is_err());
    }

    #[test]
    fn directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(vec![[0.0; 3]; 3], vec![[0.2; 3]; 3], vec![0, 1, 1]).unwrap();
        let vocab = vec!["floor".to_string(), "box".to_string()];
        write_cloud_dir(dir.path(), &[cloud.clone(), cloud.clone()], &vocab, 11).unwrap();
        let (m, clouds) = read_cloud_dir(dir.path()).unwrap();
        assert_eq!(m.seed, 11);
        assert_eq!(clouds, vec![cloud.clone(), cloud]);
    }
}

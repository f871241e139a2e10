//! MetaImage (`.mhd` header + raw payload) reading and writing.

use std::fs;
use std::path::{Path, PathBuf};

use super::{BinaryMask, Geometry, Volume3D};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementType {
    Short,
    UChar,
    Float,
}

impl ElementType {
    pub fn tag(self) -> &'static str {
        match self {
            ElementType::Short => "MET_SHORT",
            ElementType::UChar => "MET_UCHAR",
            ElementType::Float => "MET_FLOAT",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_UCHAR" => Ok(ElementType::UChar),
            "MET_FLOAT" => Ok(ElementType::Float),
            other => Err(Error::Format(format!("unsupported element type `{other}`"))),
        }
    }

    fn size(self) -> usize {
        match self {
            ElementType::Short => 2,
            ElementType::UChar => 1,
            ElementType::Float => 4,
        }
    }
}

#[derive(Debug)]
struct Header {
    geom: Geometry,
    element: ElementType,
    msb: bool,
    data_file: PathBuf,
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<[T; 3]> {
    let items: Vec<T> = v
        .split_whitespace()
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Format(format!("bad value `{s}` for {key}")))
        })
        .collect::<Result<_>>()?;
    items
        .try_into()
        .map_err(|_| Error::Format(format!("{key} must have 3 entries")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Format(format!("bad boolean `{v}` for {key}"))),
    }
}

fn read_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ndims = None;
    let mut dims = None;
    let mut spacing = [1.0; 3];
    let mut origin = [0.0; 3];
    let mut element = None;
    let mut msb = false;
    let mut data_file = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Format(format!("malformed header line `{line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "NDims" => ndims = Some(value.parse::<usize>().map_err(|_| Error::Format("bad NDims".into()))?),
            "DimSize" => dims = Some(parse_list::<usize>(key, value)?),
            "ElementSpacing" | "ElementSize" => spacing = parse_list::<f64>(key, value)?,
            "Offset" | "Origin" | "Position" => origin = parse_list::<f64>(key, value)?,
            "ElementType" => element = Some(ElementType::parse(value)?),
            "ElementByteOrderMSB" | "BinaryDataByteOrderMSB" => msb = parse_bool(key, value)?,
            "CompressedData" => {
                if parse_bool(key, value)? {
                    return Err(Error::Format("compressed data is not supported".into()));
                }
            }
            "ElementDataFile" => data_file = Some(value.to_string()),
            _ => {}
        }
    }
    if ndims != Some(3) {
        return Err(Error::Format(format!("NDims must be 3, got {ndims:?}")));
    }
    let dims = dims.ok_or_else(|| Error::Format("missing DimSize".into()))?;
    let element = element.ok_or_else(|| Error::Format("missing ElementType".into()))?;
    let data_file = data_file.ok_or_else(|| Error::Format("missing ElementDataFile".into()))?;
    if data_file == "LOCAL" || data_file == "LIST" {
        return Err(Error::Format(format!("ElementDataFile `{data_file}` is not supported")));
    }
    let geom = Geometry::new(dims, spacing, origin).map_err(|e| Error::Format(e.to_string()))?;
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(Header {
        geom,
        element,
        msb,
        data_file: dir.join(data_file),
    })
}

fn decode(bytes: &[u8], element: ElementType, msb: bool) -> Vec<f64> {
    match element {
        ElementType::UChar => bytes.iter().map(|&b| b as f64).collect(),
        ElementType::Short => bytes
            .chunks_exact(2)
            .map(|c| {
                let a = [c[0], c[1]];
                (if msb {
                    i16::from_be_bytes(a)
                } else {
                    i16::from_le_bytes(a)
                }) as f64
            })
            .collect(),
        ElementType::Float => bytes
            .chunks_exact(4)
            .map(|c| {
                let a = [c[0], c[1], c[2], c[3]];
                (if msb {
                    f32::from_be_bytes(a)
                } else {
                    f32::from_le_bytes(a)
                }) as f64
            })
            .collect(),
    }
}

/// Reads a MetaImage volume. Values are widened to `f64`.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let h = read_header(path)?;
    let bytes = fs::read(&h.data_file).map_err(|e| Error::io(&h.data_file, e))?;
    let expected = h.geom.len() * h.element.size();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "raw size mismatch for {}: expected {expected} bytes for {:?} {}, found {}",
            h.data_file.display(),
            h.geom.dims,
            h.element.tag(),
            bytes.len()
        )));
    }
    Volume3D::from_vec(h.geom, decode(&bytes, h.element, h.msb))
}

/// Reads a MetaImage file as a mask: any non-zero voxel is set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let vol = load_volume(path)?;
    Ok(BinaryMask::threshold(&vol, |v| v != 0.0))
}

/// Element type chosen by [`save_volume`]: `MET_SHORT` when every value is an
/// integer in the `i16` range, otherwise `MET_FLOAT`.
pub fn natural_element_type(vol: &Volume3D) -> ElementType {
    let fits = vol
        .data()
        .iter()
        .all(|&v| v.fract() == 0.0 && v >= i16::MIN as f64 && v <= i16::MAX as f64);
    if fits {
        ElementType::Short
    } else {
        ElementType::Float
    }
}

fn raw_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

fn write_files(path: &Path, geom: &Geometry, element: ElementType, payload: Vec<u8>) -> Result<()> {
    let raw = raw_path(path);
    let raw_name = raw
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad output path {}", path.display())))?;
    let fmt3 = |a: [f64; 3]| format!("{} {} {}", a[0], a[1], a[2]);
    let header = format!(
        "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\n\
         CompressedData = False\nOffset = {}\nElementSpacing = {}\nDimSize = {} {} {}\n\
         ElementType = {}\nElementByteOrderMSB = False\nElementDataFile = {}\n",
        fmt3(geom.origin),
        fmt3(geom.spacing),
        geom.dims[0],
        geom.dims[1],
        geom.dims[2],
        element.tag(),
        raw_name
    );
    fs::write(&raw, payload).map_err(|e| Error::io(&raw, e))?;
    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `vol` with an explicit element type. Values are rounded and
/// saturated for integer types.
pub fn save_volume_as(vol: &Volume3D, path: impl AsRef<Path>, element: ElementType) -> Result<()> {
    let mut payload = Vec::with_capacity(vol.data().len() * element.size());
    for &v in vol.data() {
        match element {
            ElementType::UChar => payload.push(v.round().clamp(0.0, 255.0) as u8),
            ElementType::Short => {
                payload.extend_from_slice(&(v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes())
            }
            ElementType::Float => payload.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    write_files(path.as_ref(), vol.geometry(), element, payload)
}

/// Writes `vol` using [`natural_element_type`].
pub fn save_volume(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    save_volume_as(vol, path, natural_element_type(vol))
}

/// Writes a mask as `MET_UCHAR` with values 0/1.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let payload = mask.data().iter().map(|&b| b as u8).collect();
    write_files(path.as_ref(), mask.geometry(), ElementType::UChar, payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.mhd");
        let g = Geometry::new([4, 4, 4], [0.5, 0.5, 1.0], [1.0, -2.0, 3.5]).unwrap();
        let vol = Volume3D::filled(g, 100.0);
        save_volume(&vol, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("MET_SHORT"));
        let back = load_volume(&p).unwrap();
        assert_eq!(back, vol);
    }

    #[test]
    fn float_roundtrip_within_ulp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.mhd");
        let g = Geometry::isotropic([3, 2, 2], 1.0).unwrap();
        let vol = Volume3D::from_fn(g, |i, j, k| (i as f64 * 0.37 + j as f64 - k as f64 * 1.1) as f32 as f64);
        save_volume(&vol, &p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().contains("MET_FLOAT"));
        assert_eq!(load_volume(&p).unwrap(), vol);
    }

    #[test]
    fn mask_is_uchar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mhd");
        let g = Geometry::isotropic([3, 3, 3], 1.0).unwrap();
        let m = BinaryMask::from_fn(g, |i, j, k| i == j && j == k);
        save_mask(&m, &p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().contains("MET_UCHAR"));
        let raw = fs::read(dir.path().join("m.raw")).unwrap();
        assert!(raw.iter().all(|&b| b <= 1));
        assert_eq!(load_mask(&p).unwrap(), m);
    }

    #[test]
    fn header_dims_echo_and_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = "NDims = 3\nDimSize = 10 10 5\nElementSpacing = 1 1 1\nElementType = MET_SHORT\n\
                   ElementByteOrderMSB = False\nElementDataFile = a.raw\n";
        fs::write(dir.path().join("a.mhd"), hdr).unwrap();
        fs::write(dir.path().join("a.raw"), vec![0u8; 1000]).unwrap();
        let v = load_volume(dir.path().join("a.mhd")).unwrap();
        assert_eq!(v.dims(), [10, 10, 5]);
        fs::write(dir.path().join("a.raw"), vec![0u8; 998]).unwrap();
        assert!(matches!(load_volume(dir.path().join("a.mhd")), Err(Error::Format(_))));
    }

    #[test]
    fn unsupported_type_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = "NDims = 3\nDimSize = 1 1 1\nElementType = MET_DOUBLE\nElementDataFile = a.raw\n";
        fs::write(dir.path().join("a.mhd"), hdr).unwrap();
        assert!(matches!(load_volume(dir.path().join("a.mhd")), Err(Error::Format(_))));
        assert!(matches!(
            load_volume(dir.path().join("nope.mhd")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn unwritable_directory() {
        let g = Geometry::isotropic([1, 1, 1], 1.0).unwrap();
        let vol = Volume3D::filled(g, 0.0);
        assert!(save_volume(&vol, "/nonexistent-dir/x/v.mhd").is_err());
    }
}

//! Portable float map: `PF` (RGB) or `Pf` (single channel) header, width and
//! height, then a scale whose sign gives the byte order (negative means
//! little-endian). Rows are stored bottom to top as 32-bit floats. Files are
//! always written little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Image, NormalMap, RayField, ScalarMap, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    /// 1 or 3.
    pub channels: usize,
    /// Row-major, top row first, channels interleaved.
    pub data: Vec<f32>,
}

impl Pfm {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::format("PFM", format!("unsupported channel count {}", self.channels)));
        }
        let row = self.width * self.channels;
        if self.data.len() != row * self.height {
            return Err(Error::DimensionMismatch(format!(
                "PFM data has {} floats, expected {}",
                self.data.len(),
                row * self.height
            )));
        }
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(4 * self.data.len());
        for y in (0..self.height).rev() {
            for v in &self.data[y * row..(y + 1) * row] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format("PFM", "truncated header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match token()?.as_str() {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(Error::format("PFM", format!("bad magic {other:?}"))),
        };
        let parse_dim = |s: String| -> Result<usize> {
            s.parse::<usize>()
                .ok()
                .filter(|v| *v > 0)
                .ok_or_else(|| Error::format("PFM", format!("bad dimension {s:?}")))
        };
        let width = parse_dim(token()?)?;
        let height = parse_dim(token()?)?;
        let scale_tok = token()?;
        let scale: f64 = scale_tok
            .parse()
            .map_err(|_| Error::format("PFM", format!("bad scale {scale_tok:?}")))?;
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::format("PFM", "scale must be non-zero"));
        }
        let little = scale < 0.0;
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let row = width * channels;
        let need = 4 * row * height;
        let raster = bytes
            .get(pos..)
            .filter(|r| r.len() >= need)
            .ok_or_else(|| Error::format("PFM", format!("raster too short, need {need} bytes")))?;
        let mut data = vec![0f32; row * height];
        for (i, chunk) in raster[..need].chunks_exact(4).enumerate() {
            let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            let file_row = i / row;
            let y = height - 1 - file_row;
            data[y * row + i % row] = v;
        }
        Ok(Pfm {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_image(img: &Image) -> Self {
        Pfm {
            width: img.width,
            height: img.height,
            channels: 3,
            data: img.data.iter().flat_map(|p| p.map(|c| c as f32)).collect(),
        }
    }

    pub fn to_image(&self) -> Result<Image> {
        if self.channels != 3 {
            return Err(Error::format("PFM", "expected a 3-channel image"));
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
            .collect();
        Image::new(self.width, self.height, data)
    }

    /// Masked-out pixels are written as 0.
    pub fn from_scalar(map: &ScalarMap) -> Self {
        Pfm {
            width: map.width,
            height: map.height,
            channels: 1,
            data: map
                .values
                .iter()
                .zip(&map.mask)
                .map(|(v, m)| if *m { *v as f32 } else { 0.0 })
                .collect(),
        }
    }

    /// A pixel is valid when its value is finite and strictly positive.
    pub fn to_positive_scalar(&self) -> Result<ScalarMap> {
        self.to_scalar_where(|v| v.is_finite() && v > 0.0)
    }

    /// Single-channel map whose mask is `valid(value)`.
    pub fn to_scalar_where(&self, valid: impl Fn(f64) -> bool) -> Result<ScalarMap> {
        if self.channels != 1 {
            return Err(Error::format("PFM", "expected a single-channel map"));
        }
        let values: Vec<f64> = self.data.iter().map(|v| *v as f64).collect();
        let mask = values.iter().map(|v| valid(*v)).collect();
        ScalarMap::new(self.width, self.height, values, mask)
    }

    /// Three-channel vectors; masked-out entries are written as zero.
    pub fn from_vectors(width: usize, height: usize, vectors: &[Vec3], mask: &[bool]) -> Self {
        Pfm {
            width,
            height,
            channels: 3,
            data: vectors
                .iter()
                .zip(mask)
                .flat_map(|(v, m)| if *m { [v.x as f32, v.y as f32, v.z as f32] } else { [0.0; 3] })
                .collect(),
        }
    }

    /// Three-channel vectors; an entry is valid when finite and non-zero.
    pub fn to_vectors(&self) -> Result<(Vec<Vec3>, Vec<bool>)> {
        if self.channels != 3 {
            return Err(Error::format("PFM", "expected a 3-channel vector map"));
        }
        let vectors: Vec<Vec3> = self
            .data
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
            .collect();
        let mask = vectors
            .iter()
            .map(|v| v.iter().all(|c| c.is_finite()) && *v != Vec3::zeros())
            .collect();
        Ok((vectors, mask))
    }

    pub fn from_rays(rays: &RayField) -> Self {
        Self::from_vectors(rays.width, rays.height, &rays.dirs, &rays.mask)
    }

    pub fn to_rays(&self) -> Result<RayField> {
        let (dirs, mask) = self.to_vectors()?;
        RayField::new(self.width, self.height, dirs, mask)
    }

    pub fn from_normals(normals: &NormalMap) -> Self {
        Self::from_vectors(normals.width, normals.height, &normals.normals, &normals.mask)
    }
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Pfm> {
    Pfm::from_bytes(&fs::read(path)?)
}

pub fn write_pfm(path: impl AsRef<Path>, pfm: &Pfm) -> Result<()> {
    let bytes = pfm.to_bytes()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rgb_and_gray() {
        let rgb = Pfm {
            width: 3,
            height: 2,
            channels: 3,
            data: (0..18).map(|i| i as f32 * 0.25 - 1.0).collect(),
        };
        assert_eq!(Pfm::from_bytes(&rgb.to_bytes().unwrap()).unwrap(), rgb);
        let gray = Pfm {
            width: 2,
            height: 3,
            channels: 1,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        assert_eq!(Pfm::from_bytes(&gray.to_bytes().unwrap()).unwrap(), gray);
    }

    #[test]
    fn rows_are_bottom_to_top() {
        let gray = Pfm {
            width: 1,
            height: 2,
            channels: 1,
            data: vec![1.0, 2.0],
        };
        let bytes = gray.to_bytes().unwrap();
        let header = b"Pf\n1 2\n-1.0\n".len();
        assert_eq!(&bytes[header..header + 4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn reads_big_endian() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&3.5f32.to_be_bytes());
        assert_eq!(Pfm::from_bytes(&bytes).unwrap().data, vec![3.5]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(Pfm::from_bytes(b"P6\n1 1\n-1\n").is_err());
        assert!(Pfm::from_bytes(b"Pf\n2 2\n-1\n\0\0\0\0").is_err());
        assert!(Pfm::from_bytes(b"Pf\n0 2\n-1\n").is_err());
    }
}

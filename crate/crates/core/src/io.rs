//! On-disk formats.
//!
//! Volumes are a JSON header `<stem>.json` plus a raw payload `<stem>.f32`
//! of little-endian 32-bit floats in x..q order. Gradient tables are text
//! lines `gx gy gz b`. Schemes, bases, solver configurations and reports
//! are JSON.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodingBasis;
use crate::error::{Error, Result};
use crate::qspace::{QSpaceDesign, SamplingScheme};
use crate::ridgelets::RidgeletDictionary;
use crate::solver::SolverConfig;
use crate::volume::DwiVolumeSet;

pub const VOLUME_DTYPE: &str = "f32le";
pub const VOLUME_ORDER: &str = "x-fastest,q-slowest";

/// Tolerance on gradient norms before renormalisation.
pub const GRADIENT_NORM_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub n_q: usize,
    pub voxel_size_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
    pub description: String,
}

/// `stem` with `ext` appended (`a/b` + `json` → `a/b.json`).
pub fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut s = OsString::from(stem.as_os_str());
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialise")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn header_text(h: &VolumeHeader) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"dims\": [{}, {}, {}],", h.dims[0], h.dims[1], h.dims[2]);
    let _ = writeln!(out, "  \"n_q\": {},", h.n_q);
    let _ = writeln!(
        out,
        "  \"voxel_size_mm\": [{}, {}, {}],",
        fmt_f64(h.voxel_size_mm[0]),
        fmt_f64(h.voxel_size_mm[1]),
        fmt_f64(h.voxel_size_mm[2])
    );
    let _ = writeln!(out, "  \"dtype\": {},", json_string(&h.dtype));
    let _ = writeln!(out, "  \"order\": {},", json_string(&h.order));
    let _ = writeln!(out, "  \"description\": {}", json_string(&h.description));
    out.push_str("}\n");
    out
}

pub fn write_volume(stem: &Path, set: &DwiVolumeSet) -> Result<()> {
    write_volume_described(stem, set, "")
}

pub fn write_volume_described(stem: &Path, set: &DwiVolumeSet, description: &str) -> Result<()> {
    if !set.is_finite() {
        return Err(Error::invalid("refusing to write non-finite values"));
    }
    let header = VolumeHeader {
        dims: set.dims(),
        n_q: set.n_q(),
        voxel_size_mm: set.voxel_size(),
        dtype: VOLUME_DTYPE.into(),
        order: VOLUME_ORDER.into(),
        description: description.into(),
    };
    let mut payload = Vec::with_capacity(set.values().len() * 4);
    for &v in set.values() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_file(&with_extension(stem, "json"), header_text(&header).as_bytes())?;
    write_file(&with_extension(stem, "f32"), &payload)
}

pub fn read_volume_header(stem: &Path) -> Result<VolumeHeader> {
    let path = with_extension(stem, "json");
    let header: VolumeHeader = serde_json::from_str(&read_text(&path)?).map_err(|e| {
        Error::CorruptFile {
            path: path.clone(),
            detail: e.to_string(),
        }
    })?;
    if header.dtype != VOLUME_DTYPE {
        return Err(Error::UnsupportedFormat {
            path,
            detail: format!("dtype {:?} (expected {VOLUME_DTYPE:?})", header.dtype),
        });
    }
    if header.order != VOLUME_ORDER {
        return Err(Error::UnsupportedFormat {
            path,
            detail: format!("order {:?} (expected {VOLUME_ORDER:?})", header.order),
        });
    }
    Ok(header)
}

pub fn read_volume(stem: &Path) -> Result<DwiVolumeSet> {
    let header = read_volume_header(stem)?;
    let path = with_extension(stem, "f32");
    let bytes = read_file(&path)?;
    let expected = header.dims.iter().product::<usize>() * header.n_q * 4;
    if bytes.len() != expected {
        return Err(Error::CorruptFile {
            path,
            detail: format!("payload has {} bytes, header implies {expected}", bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    DwiVolumeSet::from_values(header.dims, header.voxel_size_mm, header.n_q, values).map_err(|e| {
        Error::CorruptFile {
            path,
            detail: e.to_string(),
        }
    })
}

/// b0 lines (`0 0 0 0`) first, then one line per direction.
pub fn write_gradients(path: &Path, design: &QSpaceDesign) -> Result<()> {
    let mut out = String::new();
    for _ in 0..design.n_b0() {
        out.push_str("0 0 0 0\n");
    }
    for d in design.directions() {
        let _ = writeln!(out, "{} {} {} {}", d[0], d[1], d[2], design.bvalue());
    }
    write_file(path, out.as_bytes())
}

pub fn read_gradients(path: &Path) -> Result<QSpaceDesign> {
    let text = read_text(path)?;
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut directions = Vec::new();
    let mut bvalue: Option<f64> = None;
    let mut n_b0 = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(line_no, format!("{f:?} is not a finite number")))?;
        }
        let g = [v[0], v[1], v[2]];
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if v[3] == 0.0 {
            if norm != 0.0 {
                return Err(parse_err(line_no, "b = 0 with a non-zero gradient".into()));
            }
            n_b0 += 1;
            continue;
        }
        if v[3] < 0.0 {
            return Err(parse_err(line_no, format!("negative b-value {}", v[3])));
        }
        if norm == 0.0 {
            return Err(parse_err(line_no, "zero gradient vector with b > 0".into()));
        }
        if (norm - 1.0).abs() > GRADIENT_NORM_TOL {
            return Err(parse_err(line_no, format!("gradient norm {norm} is not 1")));
        }
        match bvalue {
            None => bvalue = Some(v[3]),
            Some(b) if b != v[3] => {
                return Err(parse_err(line_no, format!("b-value {} differs from {b}", v[3])))
            }
            _ => {}
        }
        // exact unit vectors are kept bit for bit
        directions.push(if (norm - 1.0).abs() > 1e-12 {
            [g[0] / norm, g[1] / norm, g[2] / norm]
        } else {
            g
        });
    }
    let bvalue = bvalue.ok_or_else(|| parse_err(0, "no diffusion-weighted lines".into()))?;
    QSpaceDesign::new(directions, bvalue, n_b0)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::CorruptFile {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn write_scheme(path: &Path, scheme: &SamplingScheme) -> Result<()> {
    write_json(path, scheme)
}

pub fn read_scheme(path: &Path) -> Result<SamplingScheme> {
    let scheme: SamplingScheme = read_json(path)?;
    scheme.acceleration()?;
    Ok(scheme)
}

pub fn write_basis(path: &Path, basis: &EncodingBasis) -> Result<()> {
    write_json(path, basis)
}

pub fn read_basis(path: &Path) -> Result<EncodingBasis> {
    let raw: EncodingBasis = read_json(path)?;
    let basis = EncodingBasis::new(raw.matrix)?;
    if basis.af != raw.af {
        return Err(Error::CorruptFile {
            path: path.to_path_buf(),
            detail: format!("af = {} but the matrix is {}x{}", raw.af, basis.af, basis.af),
        });
    }
    Ok(basis)
}

pub fn write_config(path: &Path, cfg: &SolverConfig) -> Result<()> {
    write_json(path, cfg)
}

/// Missing or unknown fields are configuration errors naming the field.
pub fn read_config(path: &Path) -> Result<SolverConfig> {
    SolverConfig::from_json(&read_text(path)?)
}

#[derive(Serialize)]
struct DictionaryHeader<'a> {
    #[serde(rename = "N_q")]
    n_q: usize,
    #[serde(rename = "M")]
    m: usize,
    rho: f64,
    n_max: usize,
    levels: &'a [i32],
    orientations_per_level: &'a [usize],
}

/// Header `<stem>.json` and column-major little-endian f64 matrix
/// `<stem>.f64`.
pub fn write_dictionary(stem: &Path, dict: &RidgeletDictionary) -> Result<()> {
    let p = dict.params();
    let header = DictionaryHeader {
        n_q: dict.n_q(),
        m: dict.n_atoms(),
        rho: p.rho,
        n_max: p.n_max,
        levels: &p.levels,
        orientations_per_level: &p.orientations_per_level,
    };
    write_json(&with_extension(stem, "json"), &header)?;
    let mut payload = Vec::with_capacity(dict.matrix().len() * 8);
    for &v in dict.matrix().as_slice() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_file(&with_extension(stem, "f64"), &payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::spiral_directions;

    #[test]
    fn payload_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("v");
        let v = DwiVolumeSet::from_values([2, 1, 1], [1.0; 3], 1, vec![1.0, 2.0]).unwrap();
        write_volume(&stem, &v).unwrap();
        let bytes = fs::read(with_extension(&stem, "f32")).unwrap();
        assert_eq!(bytes, [0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40]);
        assert_eq!(read_volume(&stem).unwrap(), v);
    }

    #[test]
    fn payload_size_follows_header() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("v");
        let v = DwiVolumeSet::zeros([4, 4, 5], [1.0; 3], 3).unwrap();
        write_volume(&stem, &v).unwrap();
        assert_eq!(fs::metadata(with_extension(&stem, "f32")).unwrap().len(), 960);
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("v");
        write_volume(&stem, &DwiVolumeSet::zeros([2, 2, 2], [1.0; 3], 2).unwrap()).unwrap();
        let p = with_extension(&stem, "f32");
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_volume(&stem), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn foreign_dtype_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("v");
        write_volume(&stem, &DwiVolumeSet::zeros([2, 2, 2], [1.0; 3], 1).unwrap()).unwrap();
        let p = with_extension(&stem, "json");
        let text = fs::read_to_string(&p).unwrap().replace("f32le", "f64le");
        fs::write(&p, text).unwrap();
        assert!(matches!(read_volume(&stem), Err(Error::UnsupportedFormat { .. })));
    }

    #[test]
    fn header_is_plain_json_with_fixed_digits() {
        let h = VolumeHeader {
            dims: [1, 2, 3],
            n_q: 4,
            voxel_size_mm: [0.86, 0.86, 0.1],
            dtype: VOLUME_DTYPE.into(),
            order: VOLUME_ORDER.into(),
            description: "x \"y\"".into(),
        };
        let text = header_text(&h);
        assert!(text.contains("8.5999999999999999e-1"), "{text}");
        let back: VolumeHeader = serde_json::from_str(&text).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn gradient_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        fs::write(&p, "0 0 0 0\n0 1 0 2000\n1 0 0 2000\n").unwrap();
        let d = read_gradients(&p).unwrap();
        assert_eq!(d.directions()[0], [0.0, 1.0, 0.0]);
        assert_eq!((d.bvalue(), d.n_b0(), d.n_q()), (2000.0, 1, 2));

        fs::write(&p, "0 1 0 2000\n0 0 0 2000\n").unwrap();
        match read_gradients(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "0 1 0 2000\n0 1 x 2000\n").unwrap();
        assert!(matches!(read_gradients(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn gradients_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        let d = spiral_directions(64, 2000.0).unwrap().with_n_b0(2);
        write_gradients(&p, &d).unwrap();
        let back = read_gradients(&p).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.n_q(), 64);
    }

    #[test]
    fn slightly_off_unit_norms_are_renormalised() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        fs::write(&p, "0 1.00005 0 1000\n").unwrap();
        let d = read_gradients(&p).unwrap();
        assert_eq!(d.directions()[0], [0.0, 1.0, 0.0]);
        fs::write(&p, "0 1.01 0 1000\n").unwrap();
        assert!(read_gradients(&p).is_err());
    }

    #[test]
    fn scheme_and_basis_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = crate::qspace::make_scheme_for(10, 3).unwrap();
        write_scheme(&p, &s).unwrap();
        assert_eq!(read_scheme(&p).unwrap(), s);
        let text = fs::read_to_string(&p).unwrap();
        let keys: Vec<usize> = ["n_rf", "factor", "assignments"]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));

        let b = crate::encoding::default_basis(5).unwrap();
        write_basis(&p, &b).unwrap();
        assert_eq!(read_basis(&p).unwrap(), b);
    }

    #[test]
    fn config_round_trip_and_missing_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let c = SolverConfig::in_vivo();
        write_config(&p, &c).unwrap();
        assert_eq!(read_config(&p).unwrap(), c);
        fs::write(&p, r#"{"lambda": 0.02}"#).unwrap();
        let err = read_config(&p).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unwritable_path_names_path() {
        let err = write_volume(
            Path::new("/nonexistent-dir/x/v"),
            &DwiVolumeSet::zeros([1, 1, 1], [1.0; 3], 1).unwrap(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x/v.json"), "{err}");
    }
}

//! Pattern ingestion (IDX), synthetic patterns, noise, and the model file.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::memory::{MemoryModel, RegistryEntry};
use crate::network::{CstlnParams, SupportSet};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternSource {
    Idx,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSet {
    pub patterns: Vec<DVector<f64>>,
    pub labels: Option<Vec<u8>>,
    pub source: PatternSource,
}

impl PatternSet {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.patterns.first().map(|p| p.len())
    }
}

/// Raw IDX image file contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::Truncated { offset: self.bytes.len(), needed: self.pos + len });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn expect_magic(r: &mut Reader, expected: u32) -> Result<()> {
    let found = r.u32()?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut r = Reader { bytes, pos: 0 };
    expect_magic(&mut r, IDX_IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let d = rows * cols;
    let mut pixels = Vec::with_capacity(count);
    for _ in 0..count {
        pixels.push(r.take(d)?.to_vec());
    }
    Ok(IdxImages { rows, cols, pixels })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { bytes, pos: 0 };
    expect_magic(&mut r, IDX_LABELS_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.take(count)?.to_vec())
}

pub fn encode_idx_images(img: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.pixels.len() * img.rows * img.cols);
    for v in [IDX_IMAGES_MAGIC, img.pixels.len() as u32, img.rows as u32, img.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for p in &img.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Pixels scaled to `[0, 1]`, then each image scaled to unit norm unless `raw`.
pub fn images_to_patterns(img: &IdxImages, raw: bool) -> Result<Vec<DVector<f64>>> {
    img.pixels
        .iter()
        .map(|px| {
            let v = DVector::from_iterator(px.len(), px.iter().map(|&b| b as f64 / 255.0));
            if raw {
                return Ok(v);
            }
            let nrm = v.norm();
            if nrm == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok(v / nrm)
        })
        .collect()
}

pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<PatternSet> {
    let img = parse_idx_images(&fs::read(images)?)?;
    let labels = match labels {
        Some(p) => {
            let l = parse_idx_labels(&fs::read(p)?)?;
            if l.len() != img.pixels.len() {
                return Err(Error::CountMismatch { images: img.pixels.len(), labels: l.len() });
            }
            Some(l)
        }
        None => None,
    };
    Ok(PatternSet { patterns: images_to_patterns(&img, false)?, labels, source: PatternSource::Idx })
}

/// Point uniform on the sphere of radius `radius` in `R^d`.
pub fn sphere_sample<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    if radius == 0.0 || d == 0 {
        return DVector::zeros(d);
    }
    loop {
        let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let nrm = g.norm();
        if nrm > 1e-300 {
            return g * (radius / nrm);
        }
    }
}

/// Uniform on the sphere of radius `radius` inside the column span of the
/// orthonormal `basis`.
pub fn subspace_sphere_sample<R: Rng + ?Sized>(basis: &DMatrix<f64>, radius: f64, rng: &mut R) -> DVector<f64> {
    let k = basis.ncols();
    if k == 0 {
        return DVector::zeros(basis.nrows());
    }
    let v = basis * sphere_sample(k, 1.0, rng);
    let nrm = v.norm();
    v * (radius / nrm)
}

/// `p + η` with `η` uniform on the sphere of the given radius.
pub fn corrupt(p: &DVector<f64>, radius: f64, seed: u64) -> Result<DVector<f64>> {
    if !(radius >= 0.0) {
        return Err(invalid("radius", "must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(p + sphere_sample(p.len(), radius, &mut rng))
}

/// Unit-norm Gaussian patterns with pairwise cosine below 0.5.
pub fn synthetic_patterns(count: usize, d: usize, seed: u64) -> Result<PatternSet> {
    if count == 0 || d == 0 {
        return Err(invalid("count/d", "must be at least 1"));
    }
    const MAX_DRAWS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patterns: Vec<DVector<f64>> = Vec::with_capacity(count);
    let mut draws = 0;
    while patterns.len() < count {
        if draws == MAX_DRAWS {
            return Err(Error::RejectionFailure(draws));
        }
        draws += 1;
        let cand = sphere_sample(d, 1.0, &mut rng);
        if patterns.iter().all(|q| q.dot(&cand) < 0.5) {
            patterns.push(cand);
        }
    }
    Ok(PatternSet { patterns, labels: None, source: PatternSource::Synthetic })
}

pub const MODEL_FORMAT: &str = "tlnmem-model";
pub const MODEL_VERSION: u32 = 1;
const MODEL_MAGIC: &[u8; 4] = b"TLNM";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegistryHeader {
    pattern_id: usize,
    support: SupportSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    n: usize,
    d: usize,
    params: CstlnParams,
    frozen: Vec<usize>,
    registry: Vec<RegistryHeader>,
    payload_len: usize,
    crc32: u32,
}

/// `TLNM`, a little-endian `u32` header length, the JSON header, then the
/// little-endian `f64` payload: `W_E` and `W_D` row-major, then `x*` and the
/// pattern of each registry entry.
pub fn model_to_bytes(model: &MemoryModel, params: &CstlnParams) -> Result<Vec<u8>> {
    let (d, n) = (model.d(), model.n());
    if params.n != n {
        return Err(Error::DimensionMismatch { expected: params.n, found: n });
    }
    let mut payload = Vec::new();
    let mut put = |m: &DMatrix<f64>| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                payload.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
    };
    put(&model.w_e);
    put(&model.w_d);
    for e in &model.registry {
        put(&DMatrix::from_column_slice(1, n, e.x_star.as_slice()));
        put(&DMatrix::from_column_slice(1, d, e.pattern.as_slice()));
    }
    let header = ModelHeader {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        n,
        d,
        params: *params,
        frozen: model.frozen.clone(),
        registry: model
            .registry
            .iter()
            .map(|e| RegistryHeader { pattern_id: e.pattern_id, support: e.support.clone() })
            .collect(),
        payload_len: payload.len(),
        crc32: crc32fast::hash(&payload),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<(MemoryModel, CstlnParams)> {
    let corrupt = |m: &str| Error::CorruptModel(m.into());
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(corrupt("missing TLNM tag"));
    }
    let hlen = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let body = &bytes[8..];
    if body.len() < hlen {
        return Err(Error::Truncated { offset: bytes.len(), needed: 8 + hlen });
    }
    let header: serde_json::Value =
        serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(&format!("header: {e}")))?;
    let version = header.get("version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt("header has no version"))?;
    if version != MODEL_VERSION as u64 {
        return Err(Error::UnsupportedVersion { found: version as u32, supported: MODEL_VERSION });
    }
    let header: ModelHeader = serde_json::from_value(header).map_err(|e| corrupt(&format!("header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(corrupt("wrong format tag"));
    }
    let payload = &body[hlen..];
    if payload.len() != header.payload_len {
        return Err(Error::Truncated { offset: bytes.len(), needed: 8 + hlen + header.payload_len });
    }
    let found = crc32fast::hash(payload);
    if found != header.crc32 {
        return Err(Error::Checksum { expected: header.crc32, found });
    }
    let (d, n) = (header.d, header.n);
    let want = 8 * (2 * d * n + header.registry.len() * (n + d));
    if payload.len() != want {
        return Err(corrupt("payload length disagrees with dimensions"));
    }
    header.params.validate()?;
    if header.params.n != n {
        return Err(corrupt("network size disagrees with the encoder"));
    }
    let mut vals = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |r: usize, c: usize| DMatrix::from_row_iterator(r, c, vals.by_ref().take(r * c));
    let w_e = take(d, n);
    let w_d = take(n, d);
    let mut registry = Vec::new();
    for h in header.registry {
        let x_star = DVector::from_column_slice(take(1, n).as_slice());
        let pattern = DVector::from_column_slice(take(1, d).as_slice());
        registry.push(RegistryEntry { pattern_id: h.pattern_id, support: h.support, x_star, pattern });
    }
    Ok((MemoryModel { w_e, w_d, frozen: header.frozen, registry }, header.params))
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| invalid("path", "has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

pub fn save_model(path: &Path, model: &MemoryModel, params: &CstlnParams) -> Result<()> {
    write_atomic(path, &model_to_bytes(model, params)?)
}

pub fn load_model(path: &Path) -> Result<(MemoryModel, CstlnParams)> {
    model_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two 28×28 images: all zeros except one lit pixel each.
    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        let mut a = vec![0u8; 784];
        a[0] = 255;
        let mut b = vec![0u8; 784];
        b[783] = 51;
        b[400] = 102;
        img.extend(a);
        img.extend(b);
        (img, vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3])
    }

    #[test]
    fn parses_hand_built_fixture() {
        let (img, lab) = fixture();
        let parsed = parse_idx_images(&img).unwrap();
        assert_eq!((parsed.rows, parsed.cols, parsed.pixels.len()), (28, 28, 2));
        assert_eq!(parse_idx_labels(&lab).unwrap(), vec![7, 3]);
        let pats = images_to_patterns(&parsed, false).unwrap();
        assert_eq!(pats[0][0], 1.0);
        assert!((pats[1].norm() - 1.0).abs() < 1e-12);
        assert!((pats[1][400] / pats[1][783] - 2.0).abs() < 1e-12);
        assert_eq!(encode_idx_images(&parsed), img);
        assert_eq!(encode_idx_labels(&[7, 3]), lab);
    }

    #[test]
    fn idx_errors_are_distinct() {
        let (mut img, lab) = fixture();
        img[3] = 2;
        assert!(matches!(parse_idx_images(&img), Err(Error::BadMagic { found: 0x802, .. })));
        let (img, _) = fixture();
        match parse_idx_images(&img[..1000]) {
            Err(Error::Truncated { offset, needed }) => {
                assert_eq!(offset, 1000);
                assert_eq!(needed, 16 + 2 * 784);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_idx_labels(&lab[..9]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn synthetic_is_deterministic_and_spread() {
        let a = synthetic_patterns(6, 784, 1).unwrap();
        assert_eq!(a, synthetic_patterns(6, 784, 1).unwrap());
        for (i, p) in a.patterns.iter().enumerate() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
            for q in &a.patterns[..i] {
                assert!(p.dot(q) < 0.5);
            }
        }
        let small = synthetic_patterns(2, 2, 3).map(|s| s.patterns);
        assert_eq!(format!("{small:?}"), format!("{:?}", synthetic_patterns(2, 2, 3).map(|s| s.patterns)));
        assert!(matches!(synthetic_patterns(20, 2, 3), Err(Error::RejectionFailure(10_000))));
    }

    #[test]
    fn corrupt_radius_is_exact() {
        let p = DVector::from_element(10, 0.1);
        assert_eq!(corrupt(&p, 0.0, 4).unwrap(), p);
        for seed in 0..20 {
            assert!(((corrupt(&p, 0.37, seed).unwrap() - &p).norm() - 0.37).abs() < 1e-12);
        }
        assert!(corrupt(&p, -1.0, 0).is_err());
    }

    #[test]
    fn sphere_mean_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut mean = DVector::zeros(5);
        let draws = 100_000;
        for _ in 0..draws {
            mean += sphere_sample(5, 2.0, &mut rng);
        }
        assert!((mean / draws as f64).norm() < 2e-2);
    }

    #[test]
    fn subspace_sample_stays_in_span() {
        let basis = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.6, 0.8, 0.0]),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = subspace_sphere_sample(&basis, 0.5, &mut rng);
        assert!((v.norm() - 0.5).abs() < 1e-12);
        assert_eq!(v[3], 0.0);
        assert!((v[1] * 0.8 - v[2] * 0.6).abs() < 1e-15);
    }

    fn sample_model() -> (MemoryModel, CstlnParams) {
        let params = CstlnParams::new(4, 0.9, 2.0, 1.0).unwrap();
        let mut m = MemoryModel::new(3, 4);
        m.w_e = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        m.w_d = DMatrix::from_fn(4, 3, |i, j| std::f64::consts::PI * i as f64 - j as f64 / 7.0);
        m.frozen = vec![0, 1];
        m.registry.push(RegistryEntry {
            pattern_id: 5,
            support: SupportSet::pair(0),
            x_star: DVector::from_vec(vec![1.0 / 1.1, 1.0 / 1.1, 0.0, 0.0]),
            pattern: DVector::from_vec(vec![0.6, 0.0, -0.8]),
        });
        (m, params)
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let (m, params) = sample_model();
        let bytes = model_to_bytes(&m, &params).unwrap();
        let (back, p2) = model_from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(p2, params);
        assert_eq!(model_to_bytes(&back, &p2).unwrap(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tlnm");
        save_model(&path, &m, &params).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes);
        assert_eq!(load_model(&path).unwrap().0, m);
    }

    #[test]
    fn model_damage_is_detected() {
        let (m, params) = sample_model();
        let bytes = model_to_bytes(&m, &params).unwrap();
        let mut flipped = bytes.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x10;
        assert!(matches!(model_from_bytes(&flipped), Err(Error::Checksum { .. })));

        let tag = b"\"version\":1";
        let at = bytes.windows(tag.len()).position(|w| w == tag).unwrap() + tag.len() - 1;
        let mut old = bytes.clone();
        old[at] = b'0';
        assert!(matches!(model_from_bytes(&old), Err(Error::UnsupportedVersion { found: 0, supported: 1 })));
        assert!(matches!(model_from_bytes(&bytes[..bytes.len() - 8]), Err(Error::Truncated { .. })));
        assert!(matches!(model_from_bytes(b"nope"), Err(Error::CorruptModel(_))));
    }
}

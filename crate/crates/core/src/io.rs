//! Binary file formats.
//!
//! All integers are little-endian. Offsets in format errors are byte
//! positions into the file.
//!
//! `FLKV` (clip): magic `FLKV`, u32 version (1), u32 T/H/W/C, f64
//! v_min/v_max, then `T*H*W*C` IEEE-754 f32 values in t-major then h, w, c
//! order.
//!
//! `FLKP` (perturbation): magic `FLKP`, same header, then `T*C` f32 trace
//! values, frame major. `save_perturbation` also writes a human-readable
//! sidecar at `<path>.txt` with one `r g b` line per frame.
//!
//! `FLKM` (checkpoint): magic `FLKM`, u32 version (1), u32 architecture id,
//! u32 T/H/W/C, f64 v_min/v_max, u32 num_classes, u32 layer count, then one
//! record per layer. Parameters are stored as f64. Layer records:
//! conv3d = tag 0, u32 in/out/kt/kh/kw/st/sh/sw, weights, bias;
//! relu = tag 1; global mean pool = tag 2;
//! affine = tag 3, u32 in/out, weights, bias.

use crate::error::{Error, Result};
use crate::net::conv::ConvGeom;
use crate::net::{Affine, ArchId, Conv3d, Layer, ModelParams};
use crate::scalar::Scalar;
use crate::video::{Dims, Perturbation, VideoTensor};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const VIDEO_MAGIC: &[u8; 4] = b"FLKV";
pub const PERTURBATION_MAGIC: &[u8; 4] = b"FLKP";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FLKM";
pub const FORMAT_VERSION: u32 = 1;

/// Byte reader that tracks its offset so errors can name it.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "truncated file: needed {} bytes for {}, {} left",
                    n,
                    what,
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let offset = self.pos as u64;
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::format(
                offset,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(4 * n, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(8 * n, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn version(&mut self) -> Result<()> {
        let offset = self.pos as u64;
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            return Err(Error::format(
                offset,
                format!("unsupported version {}, expected {}", v, FORMAT_VERSION),
            ));
        }
        Ok(())
    }

    fn done(&mut self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_dims(out: &mut Vec<u8>, dims: &Dims) {
    push_u32(out, dims.t as u32);
    push_u32(out, dims.h as u32);
    push_u32(out, dims.w as u32);
    push_u32(out, dims.c as u32);
    push_f64(out, dims.v_min);
    push_f64(out, dims.v_max);
}

fn read_dims(r: &mut Reader) -> Result<Dims> {
    let offset = r.pos as u64;
    let t = r.u32("T")? as usize;
    let h = r.u32("H")? as usize;
    let w = r.u32("W")? as usize;
    let c = r.u32("C")? as usize;
    let v_min = r.f64("v_min")?;
    let v_max = r.f64("v_max")?;
    let dims = Dims {
        t,
        h,
        w,
        c,
        v_min,
        v_max,
    };
    dims.validate().map_err(|e| match e {
        Error::Validation(msg) => Error::format(offset, format!("invalid dims: {}", msg)),
        other => other,
    })?;
    Ok(dims)
}

/// Serialize a clip to FLKV bytes.
pub fn video_to_bytes<T: Scalar>(v: &VideoTensor<T>) -> Vec<u8> {
    let dims = v.dims();
    let mut out = Vec::with_capacity(40 + 4 * dims.video_len());
    out.extend_from_slice(VIDEO_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_dims(&mut out, dims);
    for &x in v.data() {
        out.extend_from_slice(&(x.to_f32().unwrap()).to_le_bytes());
    }
    out
}

pub fn video_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<VideoTensor<T>> {
    let mut r = Reader::new(bytes);
    r.magic(VIDEO_MAGIC)?;
    r.version()?;
    let dims = read_dims(&mut r)?;
    let raw = r.f32_vec(dims.video_len(), "pixel payload")?;
    r.done()?;
    let data = raw.into_iter().map(|x| T::from_f32(x).unwrap()).collect();
    VideoTensor::new(dims, data)
}

pub fn save_video<T: Scalar>(path: &Path, v: &VideoTensor<T>) -> Result<()> {
    fs::write(path, video_to_bytes(v))?;
    Ok(())
}

pub fn load_video<T: Scalar>(path: &Path) -> Result<VideoTensor<T>> {
    video_from_bytes(&fs::read(path)?)
}

/// Serialize a perturbation to FLKP bytes.
pub fn perturbation_to_bytes<T: Scalar>(p: &Perturbation<T>) -> Vec<u8> {
    let dims = p.dims();
    let mut out = Vec::with_capacity(40 + 4 * dims.trace_len());
    out.extend_from_slice(PERTURBATION_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_dims(&mut out, dims);
    for &x in p.trace() {
        out.extend_from_slice(&(x.to_f32().unwrap()).to_le_bytes());
    }
    out
}

pub fn perturbation_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Perturbation<T>> {
    let mut r = Reader::new(bytes);
    r.magic(PERTURBATION_MAGIC)?;
    r.version()?;
    let dims = read_dims(&mut r)?;
    let raw = r.f32_vec(dims.trace_len(), "trace payload")?;
    r.done()?;
    let trace = raw.into_iter().map(|x| T::from_f32(x).unwrap()).collect();
    Perturbation::new(dims, trace)
}

/// Human-readable companion: one `r g b` line per frame.
pub fn perturbation_sidecar<T: Scalar>(p: &Perturbation<T>) -> String {
    let dims = p.dims();
    let mut s = String::new();
    for t in 0..dims.t {
        for c in 0..dims.c {
            if c > 0 {
                s.push(' ');
            }
            s.push_str(&format!("{}", p.get(t, c).to_f32().unwrap()));
        }
        s.push('\n');
    }
    s
}

/// Writes `<path>` (binary) and `<path>.txt` (sidecar).
pub fn save_perturbation<T: Scalar>(path: &Path, p: &Perturbation<T>) -> Result<()> {
    fs::write(path, perturbation_to_bytes(p))?;
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".txt");
    let mut f = fs::File::create(Path::new(&sidecar_path))?;
    f.write_all(perturbation_sidecar(p).as_bytes())?;
    Ok(())
}

pub fn load_perturbation<T: Scalar>(path: &Path) -> Result<Perturbation<T>> {
    perturbation_from_bytes(&fs::read(path)?)
}

const LAYER_TAG_CONV: u32 = 0;
const LAYER_TAG_RELU: u32 = 1;
const LAYER_TAG_POOL: u32 = 2;
const LAYER_TAG_AFFINE: u32 = 3;

/// Serialize model parameters to FLKM bytes.
pub fn checkpoint_to_bytes<T: Scalar>(params: &ModelParams<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_u32(&mut out, params.arch.code());
    push_dims(&mut out, &params.dims);
    push_u32(&mut out, params.num_classes as u32);
    push_u32(&mut out, params.layers.len() as u32);
    for layer in &params.layers {
        match layer {
            Layer::Conv3d(c) => {
                push_u32(&mut out, LAYER_TAG_CONV);
                push_u32(&mut out, c.geom.in_ch as u32);
                push_u32(&mut out, c.geom.out_ch as u32);
                push_u32(&mut out, c.geom.kernel.0 as u32);
                push_u32(&mut out, c.geom.kernel.1 as u32);
                push_u32(&mut out, c.geom.kernel.2 as u32);
                push_u32(&mut out, c.geom.stride.0 as u32);
                push_u32(&mut out, c.geom.stride.1 as u32);
                push_u32(&mut out, c.geom.stride.2 as u32);
                for &x in c.weights.iter().chain(c.bias.iter()) {
                    push_f64(&mut out, x.to_f64().unwrap());
                }
            }
            Layer::Relu => push_u32(&mut out, LAYER_TAG_RELU),
            Layer::GlobalMeanPool => push_u32(&mut out, LAYER_TAG_POOL),
            Layer::Affine(a) => {
                push_u32(&mut out, LAYER_TAG_AFFINE);
                push_u32(&mut out, a.in_features as u32);
                push_u32(&mut out, a.out_features as u32);
                for &x in a.weights.iter().chain(a.bias.iter()) {
                    push_f64(&mut out, x.to_f64().unwrap());
                }
            }
        }
    }
    out
}

/// Parse FLKM bytes. When `expected_arch` is given, a checkpoint declaring a
/// different architecture is rejected.
pub fn checkpoint_from_bytes<T: Scalar>(
    bytes: &[u8],
    expected_arch: Option<ArchId>,
) -> Result<ModelParams<T>> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version()?;
    let arch_offset = r.pos as u64;
    let arch = ArchId::from_code(r.u32("architecture id")?)
        .map_err(|e| Error::format(arch_offset, e.to_string()))?;
    if let Some(expected) = expected_arch {
        if expected != arch {
            return Err(Error::validation(format!(
                "checkpoint holds variant {:?}, expected variant {:?}",
                arch, expected
            )));
        }
    }
    let dims = read_dims(&mut r)?;
    let num_classes = r.u32("num_classes")? as usize;
    let layer_count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for li in 0..layer_count {
        let tag_offset = r.pos as u64;
        let tag = r.u32("layer tag")?;
        layers.push(match tag {
            LAYER_TAG_CONV => {
                let in_ch = r.u32("in_ch")? as usize;
                let out_ch = r.u32("out_ch")? as usize;
                let kernel = (
                    r.u32("kt")? as usize,
                    r.u32("kh")? as usize,
                    r.u32("kw")? as usize,
                );
                let stride = (
                    r.u32("st")? as usize,
                    r.u32("sh")? as usize,
                    r.u32("sw")? as usize,
                );
                let geom = ConvGeom {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                };
                let weights = r.f64_vec(geom.weight_len(), "conv weights")?;
                let bias = r.f64_vec(out_ch, "conv bias")?;
                Layer::Conv3d(Conv3d {
                    geom,
                    weights: weights.into_iter().map(|x| T::from_f64(x).unwrap()).collect(),
                    bias: bias.into_iter().map(|x| T::from_f64(x).unwrap()).collect(),
                })
            }
            LAYER_TAG_RELU => Layer::Relu,
            LAYER_TAG_POOL => Layer::GlobalMeanPool,
            LAYER_TAG_AFFINE => {
                let in_features = r.u32("in_features")? as usize;
                let out_features = r.u32("out_features")? as usize;
                let weights = r.f64_vec(in_features * out_features, "affine weights")?;
                let bias = r.f64_vec(out_features, "affine bias")?;
                Layer::Affine(Affine {
                    in_features,
                    out_features,
                    weights: weights.into_iter().map(|x| T::from_f64(x).unwrap()).collect(),
                    bias: bias.into_iter().map(|x| T::from_f64(x).unwrap()).collect(),
                })
            }
            other => {
                return Err(Error::format(
                    tag_offset,
                    format!("unknown layer tag {} in layer {}", other, li),
                ))
            }
        });
    }
    r.done()?;
    let params = ModelParams {
        arch,
        dims,
        num_classes,
        layers,
    };
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, params: &ModelParams<T>) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(params))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path, expected_arch: Option<ArchId>) -> Result<ModelParams<T>> {
    checkpoint_from_bytes(&fs::read(path)?, expected_arch)
}

/// Hex SHA-256 of the serialized checkpoint; used to fingerprint the model
/// an attack was developed against.
pub fn model_fingerprint<T: Scalar>(params: &ModelParams<T>) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(checkpoint_to_bytes(params));
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{:02x}", b));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::Dims;
    use proptest::prelude::*;

    fn dims(t: usize) -> Dims {
        Dims::new(t, 2, 2, -1.0, 1.0).unwrap()
    }

    #[test]
    fn video_round_trip_is_bit_exact() {
        let d = dims(3);
        let data: Vec<f32> = (0..d.video_len()).map(|i| (i as f32 / 50.0) - 0.3).collect();
        let v = VideoTensor::new(d, data).unwrap();
        let bytes = video_to_bytes(&v);
        let back: VideoTensor<f32> = video_from_bytes(&bytes).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn truncated_video_names_offset() {
        let d = dims(3);
        let v = VideoTensor::<f32>::zeros(d).unwrap();
        let bytes = video_to_bytes(&v);
        let cut = &bytes[..bytes.len() - 5];
        match video_from_bytes::<f32>(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 40),
            other => panic!("expected format error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn four_channel_header_rejected() {
        let d = dims(3);
        let v = VideoTensor::<f32>::zeros(d).unwrap();
        let mut bytes = video_to_bytes(&v);
        // C field sits after magic(4) + version(4) + T(4) + H(4) + W(4)
        bytes[20..24].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(
            video_from_bytes::<f32>(&bytes),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn bad_magic_rejected_at_offset_zero() {
        let d = dims(3);
        let mut bytes = video_to_bytes(&VideoTensor::<f32>::zeros(d).unwrap());
        bytes[0] = b'X';
        match video_from_bytes::<f32>(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn perturbation_round_trip_and_payload_size() {
        let d = Dims::new(90, 4, 4, -1.0, 1.0).unwrap();
        let trace: Vec<f32> = (0..d.trace_len()).map(|i| (i as f32) * 1e-3 - 0.1).collect();
        let p = Perturbation::new(d, trace).unwrap();
        let bytes = perturbation_to_bytes(&p);
        // header: magic 4 + version 4 + dims (4*4 + 8*2) = 40; payload 90*3*4 = 1080
        assert_eq!(bytes.len(), 40 + 1080);
        let back: Perturbation<f32> = perturbation_from_bytes(&bytes).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn zero_perturbation_sidecar_lines() {
        let d = dims(4);
        let p = Perturbation::<f64>::zeros(d).unwrap();
        let sidecar = perturbation_sidecar(&p);
        let lines: Vec<&str> = sidecar.lines().collect();
        assert_eq!(lines.len(), 4);
        for line in lines {
            assert_eq!(line, "0 0 0");
        }
    }

    #[test]
    fn sidecar_written_next_to_binary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("delta.flkp");
        let p = Perturbation::<f64>::zeros(dims(2)).unwrap();
        save_perturbation(&path, &p).unwrap();
        assert!(path.exists());
        assert!(dir.path().join("delta.flkp.txt").exists());
        let back: Perturbation<f64> = load_perturbation(&path).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        use crate::net::ArchId;
        let params =
            ModelParams::<f64>::init(ArchId::A, Dims::new(4, 6, 6, -1.0, 1.0).unwrap(), 4, 11)
                .unwrap();
        let bytes = checkpoint_to_bytes(&params);
        let back: ModelParams<f64> = checkpoint_from_bytes(&bytes, None).unwrap();
        assert_eq!(params, back);
        assert_eq!(bytes, checkpoint_to_bytes(&back));
    }

    #[test]
    fn checkpoint_arch_mismatch_rejected() {
        use crate::net::ArchId;
        let params =
            ModelParams::<f64>::init(ArchId::A, Dims::new(4, 6, 6, -1.0, 1.0).unwrap(), 4, 11)
                .unwrap();
        let bytes = checkpoint_to_bytes(&params);
        assert!(checkpoint_from_bytes::<f64>(&bytes, Some(ArchId::A)).is_ok());
        assert!(matches!(
            checkpoint_from_bytes::<f64>(&bytes, Some(ArchId::B)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn corrupt_checkpoint_length_rejected() {
        use crate::net::ArchId;
        let params =
            ModelParams::<f64>::init(ArchId::A, Dims::new(4, 6, 6, -1.0, 1.0).unwrap(), 4, 11)
                .unwrap();
        let bytes = checkpoint_to_bytes(&params);
        assert!(matches!(
            checkpoint_from_bytes::<f64>(&bytes[..bytes.len() - 3], None),
            Err(Error::Format { .. })
        ));
        let mut extended = bytes;
        extended.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            checkpoint_from_bytes::<f64>(&extended, None),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn fingerprint_distinguishes_models() {
        use crate::net::ArchId;
        let d = Dims::new(4, 6, 6, -1.0, 1.0).unwrap();
        let a = ModelParams::<f64>::init(ArchId::A, d, 4, 1).unwrap();
        let b = ModelParams::<f64>::init(ArchId::A, d, 4, 2).unwrap();
        assert_eq!(model_fingerprint(&a), model_fingerprint(&a));
        assert_ne!(model_fingerprint(&a), model_fingerprint(&b));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn any_f32_video_round_trips(t in 2usize..5, h in 1usize..4, w in 1usize..4, seed in 0u64..1000) {
            let d = Dims::new(t, h, w, -2.0, 2.0).unwrap();
            let mut rng = crate::rng::root_rng(seed);
            use rand::Rng;
            let data: Vec<f32> = (0..d.video_len()).map(|_| rng.gen_range(-2.0f32..=2.0)).collect();
            let v = VideoTensor::new(d, data).unwrap();
            let back: VideoTensor<f32> = video_from_bytes(&video_to_bytes(&v)).unwrap();
            prop_assert_eq!(v, back);
        }

        #[test]
        fn any_trace_round_trips(t in 2usize..8, seed in 0u64..1000) {
            let d = Dims::new(t, 1, 1, -1.0, 1.0).unwrap();
            let mut rng = crate::rng::root_rng(seed);
            use rand::Rng;
            let trace: Vec<f32> = (0..d.trace_len()).map(|_| rng.gen_range(-5.0f32..=5.0)).collect();
            let p = Perturbation::new(d, trace).unwrap();
            let back: Perturbation<f32> = perturbation_from_bytes(&perturbation_to_bytes(&p)).unwrap();
            prop_assert_eq!(p, back);
        }
    }
}

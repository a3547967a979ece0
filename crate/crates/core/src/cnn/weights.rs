//! The VGGW portable weights file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "VGGW" | version u32 = 1 | mean f32[3] std f32[3] reserved f32[6]
//! layerCount u32
//! per layer: nameLen u32, name, outC u32, inC u32, kH u32, kW u32,
//!            kernel f32[outC·inC·kH·kW] (outC-major), bias f32[outC]
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VGGW";
pub const VERSION: u32 = 1;

/// Layers consumed by the feature extractor, in network order.
pub const REQUIRED_LAYERS: [(&str, [usize; 4]); 3] = [
    ("conv1_1", [64, 3, 3, 3]),
    ("conv1_2", [64, 64, 3, 3]),
    ("conv2_1", [128, 64, 3, 3]),
];

/// ImageNet statistics on `[0, 1]` inputs.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Per-plane standardization applied before the first convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerWeights {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// `out × in × kH × kW`, out-major.
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayerWeights {
    pub fn shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.kernel[((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VggWeights {
    pub preprocess: Preprocess,
    pub conv1_1: ConvLayerWeights,
    pub conv1_2: ConvLayerWeights,
    pub conv2_1: ConvLayerWeights,
}

impl VggWeights {
    pub fn layers(&self) -> [&ConvLayerWeights; 3] {
        [&self.conv1_1, &self.conv1_2, &self.conv2_1]
    }

    /// He-normal kernels and small normal biases from a fixed seed.
    ///
    /// Stands in for pretrained weights in tests and demos.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |name: &str, shape: [usize; 4]| {
            let [o, i, kh, kw] = shape;
            let fan_in = (i * kh * kw) as f32;
            let k = Normal::new(0.0f32, (2.0 / fan_in).sqrt()).unwrap();
            let b = Normal::new(0.0f32, 0.05).unwrap();
            ConvLayerWeights {
                name: name.to_string(),
                out_channels: o,
                in_channels: i,
                kernel_h: kh,
                kernel_w: kw,
                kernel: (0..o * i * kh * kw).map(|_| k.sample(&mut rng)).collect(),
                bias: (0..o).map(|_| b.sample(&mut rng)).collect(),
            }
        };
        let [l11, l12, l21] = REQUIRED_LAYERS;
        Self {
            preprocess: Preprocess::default(),
            conv1_1: layer(l11.0, l11.1),
            conv1_2: layer(l12.0, l12.1),
            conv2_1: layer(l21.0, l21.1),
        }
    }
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<VggWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    parse_weights(&bytes).map_err(|e| e.at(path))
}

pub fn save_weights(weights: &VggWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(weights)).map_err(|e| Error::from(e).at(path))
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::TruncatedFile);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(Error::TruncatedFile)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn parse_weights(bytes: &[u8]) -> Result<VggWeights> {
    let mut r = Reader { buf: bytes };
    if r.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let pre = r.f32s(12)?;
    let preprocess = Preprocess {
        mean: [pre[0], pre[1], pre[2]],
        std: [pre[3], pre[4], pre[5]],
    };
    if preprocess.std.iter().any(|s| !(s.is_finite() && *s > 0.0))
        || preprocess.mean.iter().any(|m| !m.is_finite())
    {
        return Err(Error::NonFiniteWeights("preprocessing".into()));
    }

    let count = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::TruncatedFile)?;
        let kernel = r.f32s(n)?;
        let bias = r.f32s(dims[0])?;
        layers.push(ConvLayerWeights {
            name,
            out_channels: dims[0],
            in_channels: dims[1],
            kernel_h: dims[2],
            kernel_w: dims[3],
            kernel,
            bias,
        });
    }

    let mut pick = |name: &str, expected: [usize; 4]| -> Result<ConvLayerWeights> {
        let idx = layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::WeightsMissing(name.to_string()))?;
        let layer = layers.swap_remove(idx);
        if layer.shape() != expected {
            return Err(Error::ShapeMismatch {
                layer: name.to_string(),
                expected,
                found: layer.shape(),
            });
        }
        if layer.kernel.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteWeights(name.to_string()));
        }
        Ok(layer)
    };
    let [l11, l12, l21] = REQUIRED_LAYERS;
    Ok(VggWeights {
        preprocess,
        conv1_1: pick(l11.0, l11.1)?,
        conv1_2: pick(l12.0, l12.1)?,
        conv2_1: pick(l21.0, l21.1)?,
    })
}

pub fn encode_weights(weights: &VggWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let p = &weights.preprocess;
    for v in p.mean.iter().chain(&p.std).chain(&[0.0f32; 6]) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let layers = weights.layers();
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        out.extend_from_slice(&(l.name.len() as u32).to_le_bytes());
        out.extend_from_slice(l.name.as_bytes());
        for d in l.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in l.kernel.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

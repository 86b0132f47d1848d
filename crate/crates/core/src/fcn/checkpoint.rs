//! Checkpoint byte codec.
//!
//! Layout: magic `PDET`, little-endian u32 version (= 1), length-prefixed
//! UTF-8 config text (`key = value` lines), then per conv layer: 4-byte tag
//! `CONV`, shape as four little-endian u32 (out, in, 3, 3), raw
//! little-endian f32 weights, then biases, in architecture order.

use alloc::string::ToString;
use alloc::vec::Vec;

use super::model::{plan_architecture, Model};
use super::{FcnConfig, FcnError};
use crate::nn::ConvLayer;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PDET";
const LAYER_TAG: &[u8; 4] = b"CONV";

/// A trained model snapshot: the config it was built from plus its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: FcnConfig,
    pub layers: Vec<ConvLayer<f32>>,
}

impl Checkpoint {
    pub fn from_model(config: FcnConfig, model: &Model<f32>) -> Self {
        Self { version: CHECKPOINT_VERSION, config, layers: model.convs.clone() }
    }

    /// Rebuilds a runnable model, validating weight shapes against the
    /// config-derived architecture.
    pub fn into_model(self) -> Result<Model<f32>, FcnError> {
        let arch = plan_architecture(&self.config)?;
        if self.layers.len() != arch.conv_shapes.len() {
            return Err(FcnError::LayerShape {
                index: self.layers.len().min(arch.conv_shapes.len()),
                reason: alloc::format!(
                    "expected {} conv layers, found {}",
                    arch.conv_shapes.len(),
                    self.layers.len()
                ),
            });
        }
        for (i, (layer, &(in_ch, out_ch))) in self.layers.iter().zip(&arch.conv_shapes).enumerate() {
            if layer.in_channels != in_ch || layer.out_channels != out_ch {
                return Err(FcnError::LayerShape {
                    index: i,
                    reason: alloc::format!(
                        "expected {}x{}, found {}x{}",
                        out_ch, in_ch, layer.out_channels, layer.in_channels
                    ),
                });
            }
            if layer.weights.len() != out_ch * in_ch * 9 || layer.bias.len() != out_ch {
                return Err(FcnError::LayerShape { index: i, reason: "buffer length".to_string() });
            }
        }
        Ok(Model { arch, convs: self.layers })
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&ck.version.to_le_bytes());
    let cfg = ck.config.to_config_text();
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    for layer in &ck.layers {
        out.extend_from_slice(LAYER_TAG);
        for dim in [layer.out_channels as u32, layer.in_channels as u32, 3, 3] {
            out.extend_from_slice(&dim.to_le_bytes());
        }
        for w in &layer.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FcnError> {
        if self.at + n > self.bytes.len() {
            return Err(FcnError::Truncated);
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FcnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, FcnError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.at == self.bytes.len()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, FcnError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(FcnError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(FcnError::UnsupportedVersion(version));
    }
    let cfg_len = r.u32()? as usize;
    let cfg_text = core::str::from_utf8(r.take(cfg_len)?)
        .map_err(|_| FcnError::ConfigText { line: 0, reason: "config text is not UTF-8".to_string() })?;
    let config = FcnConfig::from_config_text(cfg_text)?;
    let mut layers = Vec::new();
    while !r.done() {
        let index = layers.len();
        if r.take(4)? != LAYER_TAG {
            return Err(FcnError::LayerShape { index, reason: "bad layer tag".to_string() });
        }
        let out_ch = r.u32()? as usize;
        let in_ch = r.u32()? as usize;
        let kh = r.u32()?;
        let kw = r.u32()?;
        if kh != 3 || kw != 3 {
            return Err(FcnError::LayerShape {
                index,
                reason: alloc::format!("kernel must be 3x3, found {kh}x{kw}"),
            });
        }
        let mut layer = ConvLayer::zeros(in_ch, out_ch);
        for w in layer.weights.iter_mut() {
            *w = r.f32()?;
        }
        for b in layer.bias.iter_mut() {
            *b = r.f32()?;
        }
        layers.push(layer);
    }
    Ok(Checkpoint { version, config, layers })
}

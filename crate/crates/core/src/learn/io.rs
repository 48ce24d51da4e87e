//! Model file format.
//!
//! Layout: magic `ADID`, version u32 LE, then the payload (model-type tag
//! u8, class count, layer-size list, parameters as f64 LE in the order
//! documented per type below), then a CRC32 of the payload. Serialization
//! is deterministic, so identical models produce identical bytes.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::learn::averaged::AveragedMlpModel;
use crate::learn::cnn::{CnnArch, CnnModel, ConvSpec, ConvStage};
use crate::learn::mlp::{Layer, MlpModel};
use crate::learn::softmax::SoftmaxModel;

const MAGIC: &[u8; 4] = b"ADID";
const VERSION: u32 = 1;

pub const TAG_SOFTMAX: u8 = 0;
pub const TAG_MLP: u8 = 1;
pub const TAG_MLP_AVERAGED: u8 = 2;
pub const TAG_CNN: u8 = 3;

/// Any trained classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Softmax(SoftmaxModel),
    Mlp(MlpModel),
    Averaged(AveragedMlpModel),
    Cnn(CnnModel),
}

impl Model {
    pub fn type_tag(&self) -> u8 {
        match self {
            Model::Softmax(_) => TAG_SOFTMAX,
            Model::Mlp(_) => TAG_MLP,
            Model::Averaged(_) => TAG_MLP_AVERAGED,
            Model::Cnn(_) => TAG_CNN,
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            Model::Softmax(m) => m.class_count(),
            Model::Mlp(m) => m.class_count(),
            Model::Averaged(m) => m.class_count(),
            Model::Cnn(m) => m.class_count(),
        }
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Writer {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s<'a>(&mut self, values: impl IntoIterator<Item = &'a f64>) {
        for &v in values {
            self.f64(v);
        }
    }

    fn layer(&mut self, layer: &Layer) {
        self.f64s(layer.weights.iter());
        self.f64s(layer.biases.iter());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("model file truncated".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn layer(&mut self, out: usize, inp: usize) -> Result<Layer> {
        let weights = Array2::from_shape_vec((out, inp), self.f64s(out * inp)?)
            .map_err(|e| Error::Format(format!("weight block: {e}")))?;
        let biases = Array1::from_vec(self.f64s(out)?);
        Ok(Layer { weights, biases })
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes in model payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn encode_payload(model: &Model) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(model.type_tag());
    match model {
        Model::Softmax(m) => {
            w.u32(m.class_count() as u32);
            w.u32(m.feature_dim() as u32);
            w.f64(m.lambda());
            w.f64s(m.theta().iter());
        }
        Model::Mlp(m) => {
            w.u32(m.class_count() as u32);
            w.u32(m.layer_sizes().len() as u32);
            for &s in m.layer_sizes() {
                w.u32(s as u32);
            }
            for layer in m.layers() {
                w.layer(layer);
            }
        }
        Model::Averaged(m) => {
            w.u32(m.class_count() as u32);
            w.u32(m.chunk_count() as u32);
            w.u32(m.layer_sizes().len() as u32);
            for &s in m.layer_sizes() {
                w.u32(s as u32);
            }
            for layer in m.chunk_layers() {
                w.layer(layer);
            }
            for layer in m.shared_layers() {
                w.layer(layer);
            }
        }
        Model::Cnn(m) => {
            w.u32(m.class_count() as u32);
            w.u32(m.input_len() as u32);
            w.u32(m.stages().len() as u32);
            for stage in m.stages() {
                w.u32(stage.spec.filters as u32);
                w.u32(stage.filters.dim().1 as u32); // in channels
                w.u32(stage.spec.width as u32);
                w.u32(stage.spec.stride as u32);
                w.u32(stage.spec.pool as u32);
            }
            for stage in m.stages() {
                w.f64s(stage.filters.iter());
                w.f64s(stage.biases.iter());
            }
            w.f64s(m.dense_weights().iter());
            w.f64s(m.dense_biases().iter());
        }
    }
    w.buf
}

fn decode_payload(payload: &[u8]) -> Result<Model> {
    let mut r = Reader::new(payload);
    let tag = r.u8()?;
    let model = match tag {
        TAG_SOFTMAX => {
            let k = r.usize32()?;
            let d = r.usize32()?;
            let lambda = r.f64()?;
            let theta = Array2::from_shape_vec((k, d + 1), r.f64s(k * (d + 1))?)
                .map_err(|e| Error::Format(format!("theta block: {e}")))?;
            Model::Softmax(SoftmaxModel::from_parts(theta, lambda)?)
        }
        TAG_MLP => {
            let _k = r.usize32()?;
            let n_sizes = r.usize32()?;
            let sizes: Vec<usize> = (0..n_sizes)
                .map(|_| r.usize32())
                .collect::<Result<_>>()?;
            let layers: Vec<Layer> = sizes
                .windows(2)
                .map(|w| r.layer(w[1], w[0]))
                .collect::<Result<_>>()?;
            Model::Mlp(MlpModel::from_layers(layers)?)
        }
        TAG_MLP_AVERAGED => {
            let _k = r.usize32()?;
            let chunk_count = r.usize32()?;
            let n_sizes = r.usize32()?;
            let sizes: Vec<usize> = (0..n_sizes)
                .map(|_| r.usize32())
                .collect::<Result<_>>()?;
            if sizes.len() < 3 {
                return Err(Error::Format("averaged model needs three sizes".into()));
            }
            let input_spans = crate::learn::averaged::chunk_spans(sizes[0], chunk_count)?;
            let hidden_spans = crate::learn::averaged::chunk_spans(sizes[1], chunk_count)?;
            let chunk_layers: Vec<Layer> = (0..chunk_count)
                .map(|c| r.layer(hidden_spans[c].1, input_spans[c].1))
                .collect::<Result<_>>()?;
            let shared_layers: Vec<Layer> = sizes[1..]
                .windows(2)
                .map(|w| r.layer(w[1], w[0]))
                .collect::<Result<_>>()?;
            Model::Averaged(AveragedMlpModel::from_parts(
                chunk_layers,
                shared_layers,
                sizes,
            )?)
        }
        TAG_CNN => {
            let k = r.usize32()?;
            let input_len = r.usize32()?;
            let n_stages = r.usize32()?;
            let mut specs = Vec::with_capacity(n_stages);
            for _ in 0..n_stages {
                let filters = r.usize32()?;
                let in_channels = r.usize32()?;
                let width = r.usize32()?;
                let stride = r.usize32()?;
                let pool = r.usize32()?;
                specs.push((
                    ConvSpec {
                        filters,
                        width,
                        stride,
                        pool,
                    },
                    in_channels,
                ));
            }
            let arch = CnnArch {
                input_len,
                class_count: k,
                stages: specs.iter().map(|(s, _)| *s).collect(),
            };
            let flat = arch.flat_dim()?;
            let mut stages = Vec::with_capacity(n_stages);
            for (spec, in_channels) in &specs {
                let n = spec.filters * in_channels * spec.width;
                let filters =
                    Array3::from_shape_vec((spec.filters, *in_channels, spec.width), r.f64s(n)?)
                        .map_err(|e| Error::Format(format!("filter block: {e}")))?;
                let biases = Array1::from_vec(r.f64s(spec.filters)?);
                stages.push(ConvStage {
                    filters,
                    biases,
                    spec: *spec,
                });
            }
            let dense_weights = Array2::from_shape_vec((k, flat), r.f64s(k * flat)?)
                .map_err(|e| Error::Format(format!("dense block: {e}")))?;
            let dense_biases = Array1::from_vec(r.f64s(k)?);
            Model::Cnn(CnnModel::from_parts(arch, stages, dense_weights, dense_biases)?)
        }
        other => {
            return Err(Error::Format(format!("unknown model type tag {other}")));
        }
    };
    r.done()?;
    Ok(model)
}

/// Serializes a model to bytes.
pub fn encode_model(model: &Model) -> Vec<u8> {
    let payload = encode_payload(model);
    let mut out = Vec::with_capacity(12 + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

/// Parses model bytes, verifying magic, version, and CRC.
pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 13 {
        return Err(Error::Format("model file too small".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad model-file magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "model-file version {version}, expected {VERSION}"
        )));
    }
    let payload = &bytes[8..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let actual_crc = crc32fast::hash(payload);
    if stored_crc != actual_crc {
        return Err(Error::Format(format!(
            "model CRC {actual_crc:#010x} does not match stored {stored_crc:#010x}"
        )));
    }
    decode_payload(payload)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&fs::read(path)?)
}

fn expect_tag(model: Model, expected: u8) -> Result<Model> {
    let found = model.type_tag();
    if found != expected {
        return Err(Error::TypeTag { expected, found });
    }
    Ok(model)
}

pub fn load_softmax(path: &Path) -> Result<SoftmaxModel> {
    match expect_tag(load_model(path)?, TAG_SOFTMAX)? {
        Model::Softmax(m) => Ok(m),
        _ => unreachable!(),
    }
}

pub fn load_mlp(path: &Path) -> Result<MlpModel> {
    match expect_tag(load_model(path)?, TAG_MLP)? {
        Model::Mlp(m) => Ok(m),
        _ => unreachable!(),
    }
}

pub fn load_averaged(path: &Path) -> Result<AveragedMlpModel> {
    match expect_tag(load_model(path)?, TAG_MLP_AVERAGED)? {
        Model::Averaged(m) => Ok(m),
        _ => unreachable!(),
    }
}

pub fn load_cnn(path: &Path) -> Result<CnnModel> {
    match expect_tag(load_model(path)?, TAG_CNN)? {
        Model::Cnn(m) => Ok(m),
        _ => unreachable!(),
    }
}

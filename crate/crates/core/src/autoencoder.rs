//! Stacked autoencoder with untied encoder/decoder weights and no biases.
//!
//! Each layer maps its input `X` to codes `H = σ(W·X)` and reconstructs
//! `X̂ = W′·H` with a linear decoder. Layers are stacked greedily: layer `k`
//! is an autoencoder over the codes of layer `k − 1`.

use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{dim_u32, element_count, put_f64s, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, sigmoid, Matrix};

pub const MODEL_MAGIC: &[u8; 4] = b"S3AM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Encoder, hidden × input.
    pub w: Matrix,
    /// Decoder, input × hidden.
    pub w_prime: Matrix,
}

impl LayerParams {
    pub fn new(w: Matrix, w_prime: Matrix) -> Result<Self> {
        if w.rows() != w_prime.cols() || w.cols() != w_prime.rows() {
            return Err(Error::Shape(format!(
                "encoder {}x{} does not pair with decoder {}x{}",
                w.rows(),
                w.cols(),
                w_prime.rows(),
                w_prime.cols()
            )));
        }
        Ok(Self { w, w_prime })
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub layers: Vec<LayerParams>,
    pub input_dim: usize,
}

impl AutoencoderParams {
    pub fn new(layers: Vec<LayerParams>) -> Result<Self> {
        let input_dim = layers
            .first()
            .map(LayerParams::input_dim)
            .ok_or_else(|| Error::InvalidDimension("stack needs at least one layer".into()))?;
        for pair in layers.windows(2) {
            if pair[1].input_dim() != pair[0].hidden_dim() {
                return Err(Error::Shape(format!(
                    "layer of width {} feeds a layer expecting {}",
                    pair[0].hidden_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers, input_dim })
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers.iter().map(LayerParams::hidden_dim).collect()
    }

    /// Dimension of the deepest code.
    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, LayerParams::hidden_dim)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.w_prime.is_finite())
    }
}

/// Hidden sizes `[⌊2/3·d⌋, ⌊1/2·d⌋]` for input dimension `d`.
pub fn default_hidden_dims(input_dim: usize) -> Vec<usize> {
    vec![2 * input_dim / 3, input_dim / 2]
}

/// Uniform Glorot initialisation, `U[−r, r]` with `r = √(6/(fan_in+fan_out))`.
///
/// Weights are drawn layer by layer, encoder before decoder, row-major, from a
/// ChaCha8 stream seeded with `seed`.
pub fn init_params(input_dim: usize, hidden_dims: &[usize], seed: u64) -> Result<AutoencoderParams> {
    if input_dim == 0 {
        return Err(Error::InvalidDimension("input dimension is zero".into()));
    }
    if hidden_dims.is_empty() {
        return Err(Error::InvalidDimension("no hidden layers".into()));
    }
    if let Some(k) = hidden_dims.iter().position(|&h| h == 0) {
        return Err(Error::InvalidDimension(format!("hidden layer {k} has zero units")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(hidden_dims.len());
    let mut fan_in = input_dim;
    for &h in hidden_dims {
        let r = init_bound(fan_in, h);
        let dist = Uniform::new_inclusive(-r, r).expect("finite bound");
        let w = Matrix::from_fn(h, fan_in, |_, _| dist.sample(&mut rng));
        let w_prime = Matrix::from_fn(fan_in, h, |_, _| dist.sample(&mut rng));
        layers.push(LayerParams { w, w_prime });
        fan_in = h;
    }
    AutoencoderParams::new(layers)
}

pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `σ(W·X)`.
pub fn encode_layer(p: &LayerParams, x: &Matrix) -> Result<Matrix> {
    Ok(sigmoid(&p.w.matmul(x)?))
}

/// `W′·H`, linear.
pub fn decode_layer(p: &LayerParams, h: &Matrix) -> Result<Matrix> {
    p.w_prime.matmul(h)
}

/// `‖X − W′σ(W·X)‖²_F`.
pub fn reconstruction_loss(p: &LayerParams, x: &Matrix) -> Result<f64> {
    let recon = decode_layer(p, &encode_layer(p, x)?)?;
    Ok(frobenius_sq(&x.sub(&recon)?))
}

/// Deepest code of the stack.
pub fn encode_stack(p: &AutoencoderParams, x: &Matrix) -> Result<Matrix> {
    if x.rows() != p.input_dim {
        return Err(Error::Shape(format!(
            "input has {} rows, model expects {}",
            x.rows(),
            p.input_dim
        )));
    }
    let mut codes = x.clone();
    for layer in &p.layers {
        codes = encode_layer(layer, &codes)?;
    }
    Ok(codes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingStage {
    Initialized,
    Pretrained,
    Finetuned,
}

/// JSON header of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub lambda: f64,
    pub seed: u64,
    pub training_stage: TrainingStage,
    /// Training-set mean subtracted from inputs before encoding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_mean: Option<Vec<f64>>,
}

impl ModelHeader {
    pub fn for_params(p: &AutoencoderParams, lambda: f64, seed: u64, stage: TrainingStage) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            input_dim: p.input_dim,
            hidden_dims: p.hidden_dims(),
            lambda,
            seed,
            training_stage: stage,
            input_mean: None,
        }
    }
}

/// Serialises a model.
///
/// Layout: magic `S3AM`, header length (u32 LE), UTF-8 JSON header, then for
/// each layer `W` and `W′` as `rows: u32 LE, cols: u32 LE, rows·cols f64 LE`
/// row-major.
pub fn encode_model(header: &ModelHeader, p: &AutoencoderParams) -> Result<Vec<u8>> {
    check_header(header, p)?;
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, u32::try_from(json.len()).map_err(|_| Error::Header("header too long".into()))?);
    out.extend_from_slice(&json);
    for layer in &p.layers {
        for m in [&layer.w, &layer.w_prime] {
            let (r, c) = dim_u32(m.rows(), m.cols())?;
            put_u32(&mut out, r);
            put_u32(&mut out, c);
            put_f64s(&mut out, m.data());
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<(ModelHeader, AutoencoderParams)> {
    let mut rd = ByteReader::new(bytes);
    rd.magic(MODEL_MAGIC)?;
    let header_len = rd.u32()? as usize;
    let header: ModelHeader = serde_json::from_slice(rd.take(header_len)?)
        .map_err(|e| Error::Header(e.to_string()))?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(header.format_version));
    }
    if header.hidden_dims.is_empty() {
        return Err(Error::Header("no hidden layers".into()));
    }
    let mut layers = Vec::with_capacity(header.hidden_dims.len());
    let mut fan_in = header.input_dim;
    for &h in &header.hidden_dims {
        let w = read_matrix(&mut rd, h, fan_in)?;
        let w_prime = read_matrix(&mut rd, fan_in, h)?;
        layers.push(LayerParams { w, w_prime });
        fan_in = h;
    }
    rd.finish()?;
    let params = AutoencoderParams::new(layers)?;
    check_header(&header, &params)?;
    Ok((header, params))
}

fn read_matrix(rd: &mut ByteReader<'_>, rows: usize, cols: usize) -> Result<Matrix> {
    let at = rd.offset();
    let r = rd.u32()?;
    let c = rd.u32()?;
    if r as usize != rows || c as usize != cols {
        return Err(Error::Header(format!(
            "block at offset {at} is {r}x{c}, header implies {rows}x{cols}"
        )));
    }
    let n = element_count(r, c)?;
    Matrix::from_vec(rows, cols, rd.f64s(n)?)
}

fn check_header(header: &ModelHeader, p: &AutoencoderParams) -> Result<()> {
    if header.input_dim != p.input_dim || header.hidden_dims != p.hidden_dims() {
        return Err(Error::Header(format!(
            "header dims {} -> {:?} disagree with weights {} -> {:?}",
            header.input_dim,
            header.hidden_dims,
            p.input_dim,
            p.hidden_dims()
        )));
    }
    if let Some(mean) = &header.input_mean {
        if mean.len() != header.input_dim {
            return Err(Error::Header(format!(
                "input_mean has {} entries for input_dim {}",
                mean.len(),
                header.input_dim
            )));
        }
    }
    Ok(())
}

pub fn save_model(path: &Path, header: &ModelHeader, p: &AutoencoderParams) -> Result<()> {
    let bytes = encode_model(header, p)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(ModelHeader, AutoencoderParams)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

//! Audio and text encoders (dilated conv stacks, mean-pooled), fused by an MLP.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub channels: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub dropout: f64,
    pub embed_dim: usize,
}

impl EncoderSpec {
    /// `layers` conv layers with dilations 1, 2, 4, ...
    pub fn doubling(
        layers: usize,
        channels: usize,
        kernel: usize,
        dropout: f64,
        embed_dim: usize,
    ) -> Self {
        Self {
            channels,
            kernel,
            dilations: (0..layers).map(|i| 1 << i).collect(),
            dropout,
            embed_dim,
        }
    }

    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel - 1) * self.dilations.iter().sum::<usize>()
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(format!("{name} encoder: {m}")));
        if self.kernel.is_multiple_of(2) {
            return bad("kernel size must be odd");
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return bad("dilations must be non-empty and positive");
        }
        if self.channels == 0 || self.embed_dim == 0 {
            return bad("channels and embedding size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "labels")]
pub enum Head {
    Sigmoid(usize),
    Softmax(usize),
}

impl Head {
    pub fn labels(self) -> usize {
        match self {
            Head::Sigmoid(n) | Head::Softmax(n) => n,
        }
    }
}

/// Per-feature affine standardization of the audio window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardize {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub audio: Option<EncoderSpec>,
    pub text: Option<EncoderSpec>,
    pub audio_frames: usize,
    pub audio_features: usize,
    pub text_slots: usize,
    pub text_width: usize,
    /// Width of the speaker one-hot input; 0 disables it.
    #[serde(default)]
    pub speakers: usize,
    pub decoder: DecoderSpec,
    pub head: Head,
    #[serde(default)]
    pub audio_norm: Option<Standardize>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.audio.is_none() && self.text.is_none() {
            return Err(Error::InvalidSpec(
                "model needs at least one encoder".into(),
            ));
        }
        if let Some(a) = &self.audio {
            a.validate("audio")?;
            if self.audio_frames == 0 || self.audio_features == 0 {
                return Err(Error::InvalidSpec("empty audio window".into()));
            }
        }
        if let Some(t) = &self.text {
            t.validate("text")?;
            if self.text_slots == 0 || self.text_width == 0 {
                return Err(Error::InvalidSpec("empty text window".into()));
            }
        }
        if self.head.labels() == 0 {
            return Err(Error::InvalidSpec("head needs at least one label".into()));
        }
        if self.decoder.layers > 0 && self.decoder.hidden == 0 {
            return Err(Error::InvalidSpec(
                "decoder hidden size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.decoder.dropout) {
            return Err(Error::InvalidSpec(
                "decoder dropout must lie in [0, 1)".into(),
            ));
        }
        if let Some(n) = &self.audio_norm {
            if n.mean.len() != self.audio_features
                || n.std.len() != self.audio_features
                || n.std.iter().any(|&s| !(s > 0.0))
            {
                return Err(Error::InvalidSpec(
                    "audio standardization does not match the features".into(),
                ));
            }
        }
        Ok(())
    }

    /// Parameter names and shapes in initialization order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut fused = 0;
        for (prefix, enc, cin) in [
            ("audio", &self.audio, self.audio_features),
            ("text", &self.text, self.text_width),
        ] {
            let Some(enc) = enc else { continue };
            let mut c = cin;
            for i in 0..enc.dilations.len() {
                out.push((
                    format!("{prefix}.conv{i}.w"),
                    vec![enc.kernel, c, enc.channels],
                ));
                out.push((format!("{prefix}.conv{i}.b"), vec![enc.channels]));
                c = enc.channels;
            }
            out.push((format!("{prefix}.proj.w"), vec![c, enc.embed_dim]));
            out.push((format!("{prefix}.proj.b"), vec![enc.embed_dim]));
            fused += enc.embed_dim;
        }
        fused += self.speakers;
        let mut width = fused;
        for i in 0..self.decoder.layers {
            out.push((format!("decoder.fc{i}.w"), vec![width, self.decoder.hidden]));
            out.push((format!("decoder.fc{i}.b"), vec![self.decoder.hidden]));
            width = self.decoder.hidden;
        }
        out.push(("decoder.out.w".into(), vec![width, self.head.labels()]));
        out.push(("decoder.out.b".into(), vec![self.head.labels()]));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub seed: u64,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::InvalidSpec(format!("missing parameter `{name}`")))
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            seed: self.seed,
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
pub fn init_params<T: Real>(spec: &ModelSpec, seed: u64) -> Result<ModelParams<T>> {
    spec.validate()?;
    let mut rng = rng_for(seed, &[]);
    let mut tensors = BTreeMap::new();
    for (name, shape) in spec.param_shapes() {
        let t = if name.ends_with(".b") {
            Tensor::zeros(&shape)
        } else {
            let fan_in: usize = shape[..shape.len() - 1].iter().product();
            let a = (6.0 / fan_in as f64).sqrt();
            Tensor::from_fn(&shape, |_| T::of(rng.gen_range(-a..a)))
        };
        tensors.insert(name, t);
    }
    Ok(ModelParams { seed, tensors })
}

/// Model inputs for a batch of frames. Absent modalities may be `None`.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub size: usize,
    /// `[B, audio_frames, audio_features]`
    pub audio: Option<Tensor<T>>,
    /// `[B, text_slots, text_width]`
    pub text: Option<Tensor<T>>,
    /// `[B, speakers]`
    pub speaker: Option<Tensor<T>>,
}

pub type ParamVars = BTreeMap<String, Var>;

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub spec: ModelSpec,
    pub params: ModelParams<T>,
}

impl<T: Real> Model<T> {
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let params = init_params(&spec, seed)?;
        Ok(Self { spec, params })
    }

    pub fn new(spec: ModelSpec, params: ModelParams<T>) -> Result<Self> {
        spec.validate()?;
        for (name, shape) in spec.param_shapes() {
            params.get(&name)?.expect_shape(&name, &shape)?;
        }
        if params.tensors.len() != spec.param_shapes().len() {
            return Err(Error::InvalidSpec("unexpected extra parameters".into()));
        }
        Ok(Self { spec, params })
    }

    /// Puts every parameter on the tape, trainable or constant.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> ParamVars {
        self.params
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    g.param(v.clone())
                } else {
                    g.input(v.clone())
                };
                (k.clone(), var)
            })
            .collect()
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        let s = &self.spec;
        let b = batch.size;
        let need = |t: &Option<Tensor<T>>, name: &str, shape: &[usize]| -> Result<()> {
            match t {
                Some(t) => t.expect_shape(name, shape),
                None => Err(Error::Shape {
                    name: name.into(),
                    expected: format!("{shape:?}"),
                    actual: "missing".into(),
                }),
            }
        };
        if s.audio.is_some() {
            need(
                &batch.audio,
                "audio_window",
                &[b, s.audio_frames, s.audio_features],
            )?;
        }
        if s.text.is_some() {
            need(&batch.text, "text_window", &[b, s.text_slots, s.text_width])?;
        }
        if s.speakers > 0 {
            need(&batch.speaker, "speaker_onehot", &[b, s.speakers])?;
        }
        Ok(())
    }

    fn standardized_audio(&self, audio: &Tensor<T>) -> Tensor<T> {
        let Some(norm) = &self.spec.audio_norm else {
            return audio.clone();
        };
        let f = self.spec.audio_features;
        let scale: Vec<T> = norm.std.iter().map(|&s| T::of(1.0 / s)).collect();
        let shift: Vec<T> = norm.mean.iter().map(|&m| T::of(m)).collect();
        let mut out = audio.clone();
        for row in out.data.chunks_mut(f) {
            for ((v, &m), &sc) in row.iter_mut().zip(&shift).zip(&scale) {
                *v = (*v - m) * sc;
            }
        }
        out
    }

    /// Conv stack output before pooling, `[B, T, channels]`.
    pub fn encode_stack<R: Rng>(
        &self,
        g: &mut Graph<T>,
        vars: &ParamVars,
        prefix: &str,
        x: Var,
        mut rng: Option<&mut R>,
    ) -> Var {
        let enc = if prefix == "audio" {
            &self.spec.audio
        } else {
            &self.spec.text
        };
        let enc = enc.as_ref().expect("encoder configured");
        let mut h = x;
        for (i, &d) in enc.dilations.iter().enumerate() {
            let w = vars[&format!("{prefix}.conv{i}.w")];
            let b = vars[&format!("{prefix}.conv{i}.b")];
            h = g.conv1d(h, w, b, d);
            h = g.relu(h);
            h = g.dropout(h, enc.dropout, rng.as_deref_mut());
        }
        h
    }

    fn encode<R: Rng>(
        &self,
        g: &mut Graph<T>,
        vars: &ParamVars,
        prefix: &str,
        x: Var,
        rng: Option<&mut R>,
    ) -> Var {
        let h = self.encode_stack(g, vars, prefix, x, rng);
        let pooled = g.mean_time(h);
        let e = g.linear(
            pooled,
            vars[&format!("{prefix}.proj.w")],
            vars[&format!("{prefix}.proj.b")],
        );
        g.relu(e)
    }

    /// Records the forward pass and returns the head probabilities `[B, labels]`.
    /// Dropout is active only when an RNG is supplied.
    pub fn forward_graph<R: Rng>(
        &self,
        g: &mut Graph<T>,
        vars: &ParamVars,
        batch: &Batch<T>,
        mut rng: Option<&mut R>,
    ) -> Result<Var> {
        self.check_batch(batch)?;
        let mut parts = Vec::new();
        if self.spec.audio.is_some() {
            let x = g.input(self.standardized_audio(batch.audio.as_ref().expect("checked")));
            parts.push(self.encode(g, vars, "audio", x, rng.as_deref_mut()));
        }
        if self.spec.text.is_some() {
            let x = g.input(batch.text.clone().expect("checked"));
            parts.push(self.encode(g, vars, "text", x, rng.as_deref_mut()));
        }
        if self.spec.speakers > 0 {
            parts.push(g.input(batch.speaker.clone().expect("checked")));
        }
        let mut h = g.concat(&parts);
        for i in 0..self.spec.decoder.layers {
            h = g.linear(
                h,
                vars[&format!("decoder.fc{i}.w")],
                vars[&format!("decoder.fc{i}.b")],
            );
            h = g.relu(h);
            h = g.dropout(h, self.spec.decoder.dropout, rng.as_deref_mut());
        }
        let logits = g.linear(h, vars["decoder.out.w"], vars["decoder.out.b"]);
        Ok(match self.spec.head {
            Head::Sigmoid(_) => g.sigmoid(logits),
            Head::Softmax(_) => g.softmax(logits),
        })
    }

    /// Inference: head probabilities `[B, labels]`, dropout off.
    pub fn predict(&self, batch: &Batch<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let out = self.forward_graph::<rand_chacha::ChaCha8Rng>(&mut g, &vars, batch, None)?;
        Ok(g.value(out).clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub presence: f64,
    /// One probability vector per property model; `None` when presence is
    /// below the threshold.
    pub properties: Option<Vec<Vec<f64>>>,
}

/// Presence first, then properties only for frames judged to carry a gesture.
pub fn predict_pipeline<T: Real>(
    exist: &Model<T>,
    props: &[&Model<T>],
    batch: &Batch<T>,
    threshold: f64,
) -> Result<Vec<PipelineOutput>> {
    let presence = exist.predict(batch)?;
    let per_model = props
        .iter()
        .map(|m| m.predict(batch))
        .collect::<Result<Vec<_>>>()?;
    let width = exist.spec.head.labels();
    Ok((0..batch.size)
        .map(|i| {
            let p = presence.data[i * width].f64();
            let properties = (p >= threshold).then(|| {
                per_model
                    .iter()
                    .zip(props)
                    .map(|(t, m)| {
                        let l = m.spec.head.labels();
                        t.data[i * l..(i + 1) * l].iter().map(|v| v.f64()).collect()
                    })
                    .collect()
            });
            PipelineOutput {
                presence: p,
                properties,
            }
        })
        .collect())
}

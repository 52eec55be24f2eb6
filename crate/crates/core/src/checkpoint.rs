//! Lossless text checkpoints.
//!
//! ```text
//! edgepop-checkpoint v1
//! kind lstm-ae
//! n_contents 12
//! window 11
//! encoder_widths 16 8 12
//! seed 7
//! tensors 48
//! tensor encoder.0.w_f 16 28
//! 0x1.2p-3 -0x1.8p-2 ...
//! ```
//!
//! Values are row-major hex floats, one tensor per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::baselines::{DenseAutoencoder, DenseEncoder};
use crate::error::{Error, Result};
use crate::hexfloat;
use crate::lstm_ae::{LayerSpec, ModelParams, StackParams};
use crate::model::ParamSet;
use crate::rng::{stream, Stream};
use crate::tensor::{Tensor, GATE_NAMES};

const MAGIC: &str = "edgepop-checkpoint v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LstmAe,
    LstmEncoder,
    DenseAe,
    DenseEncoder,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LstmAe => "lstm-ae",
            ModelKind::LstmEncoder => "lstm-encoder",
            ModelKind::DenseAe => "dense-ae",
            ModelKind::DenseEncoder => "dense-encoder",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            ModelKind::LstmAe,
            ModelKind::LstmEncoder,
            ModelKind::DenseAe,
            ModelKind::DenseEncoder,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub n_contents: usize,
    /// Input window length (H+1).
    pub window: usize,
    pub encoder_widths: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Tensor)>,
}

fn lstm_names(part: &str, layers: usize) -> Vec<String> {
    (0..layers)
        .flat_map(|l| GATE_NAMES.iter().map(move |g| format!("{part}.{l}.{g}")))
        .collect()
}

fn dense_names(part: &str, layers: usize) -> Vec<String> {
    (0..layers)
        .flat_map(|l| ["w", "b"].into_iter().map(move |g| format!("{part}.{l}.{g}")))
        .collect()
}

fn named<P: ParamSet>(p: &P, names: Vec<String>) -> Vec<(String, Tensor)> {
    names
        .into_iter()
        .zip(p.tensors())
        .map(|(n, t)| (n, t.clone()))
        .collect()
}

fn fill<P: ParamSet>(template: &mut P, names: &[String], tensors: Vec<(String, Tensor)>) -> Result<()> {
    let slots = template.tensors_mut();
    if slots.len() != tensors.len() || names.len() != tensors.len() {
        return Err(Error::Mismatch(format!(
            "checkpoint has {} tensors, model needs {}",
            tensors.len(),
            slots.len()
        )));
    }
    for ((slot, expected), (name, t)) in slots.into_iter().zip(names).zip(tensors) {
        if &name != expected {
            return Err(Error::Mismatch(format!("expected tensor {expected}, found {name}")));
        }
        t.ensure_shape(slot.shape())?;
        *slot = t;
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_lstm(p: &ModelParams, window: usize, seed: u64) -> Result<Self> {
        let spec = p.layer_spec()?;
        let l = spec.encoder_widths().len();
        let mut names = lstm_names("encoder", l);
        names.extend(lstm_names("decoder", l));
        Ok(Checkpoint {
            header: CheckpointHeader {
                kind: ModelKind::LstmAe,
                n_contents: spec.input_width(),
                window,
                encoder_widths: spec.encoder_widths().to_vec(),
                seed,
            },
            tensors: named(p, names),
        })
    }

    pub fn from_lstm_encoder(e: &StackParams, window: usize, seed: u64) -> Result<Self> {
        let n = e.layers.first().ok_or(Error::Empty("encoder layers"))?.input();
        let spec = LayerSpec::new(n, e.widths())?;
        Ok(Checkpoint {
            header: CheckpointHeader {
                kind: ModelKind::LstmEncoder,
                n_contents: n,
                window,
                encoder_widths: spec.encoder_widths().to_vec(),
                seed,
            },
            tensors: named(e, lstm_names("encoder", e.layers.len())),
        })
    }

    pub fn from_dense(p: &DenseAutoencoder, seed: u64) -> Self {
        let l = p.encoder.layers.len();
        let mut names = dense_names("encoder", l);
        names.extend(dense_names("decoder", l));
        Checkpoint {
            header: dense_header(&p.encoder, ModelKind::DenseAe, seed),
            tensors: named(p, names),
        }
    }

    pub fn from_dense_encoder(e: &DenseEncoder, seed: u64) -> Self {
        Checkpoint {
            header: dense_header(e, ModelKind::DenseEncoder, seed),
            tensors: named(e, dense_names("encoder", e.layers.len())),
        }
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Mismatch(format!(
                "checkpoint holds {}, expected {}",
                self.header.kind.name(),
                kind.name()
            )));
        }
        Ok(())
    }

    fn lstm_spec(&self) -> Result<LayerSpec> {
        LayerSpec::new(self.header.n_contents, self.header.encoder_widths.clone())
    }

    pub fn into_lstm(self) -> Result<ModelParams> {
        self.expect_kind(ModelKind::LstmAe)?;
        let spec = self.lstm_spec()?;
        let l = spec.encoder_widths().len();
        let mut names = lstm_names("encoder", l);
        names.extend(lstm_names("decoder", l));
        let mut p = ModelParams::zeros(&spec);
        fill(&mut p, &names, self.tensors)?;
        Ok(p)
    }

    pub fn into_lstm_encoder(self) -> Result<StackParams> {
        self.expect_kind(ModelKind::LstmEncoder)?;
        let spec = self.lstm_spec()?;
        let mut e = ModelParams::zeros(&spec).encoder;
        fill(
            &mut e,
            &lstm_names("encoder", spec.encoder_widths().len()),
            self.tensors,
        )?;
        Ok(e)
    }

    fn dense_template(&self) -> Result<DenseAutoencoder> {
        let mut rng = stream(0, Stream::Init);
        DenseAutoencoder::init(
            self.header.n_contents,
            self.header.window,
            &self.header.encoder_widths,
            &mut rng,
        )
    }

    pub fn into_dense(self) -> Result<DenseAutoencoder> {
        self.expect_kind(ModelKind::DenseAe)?;
        let mut p = self.dense_template()?;
        let l = self.header.encoder_widths.len();
        let mut names = dense_names("encoder", l);
        names.extend(dense_names("decoder", l));
        fill(&mut p, &names, self.tensors)?;
        Ok(p)
    }

    pub fn into_dense_encoder(self) -> Result<DenseEncoder> {
        self.expect_kind(ModelKind::DenseEncoder)?;
        let mut e = self.dense_template()?.encoder;
        fill(
            &mut e,
            &dense_names("encoder", self.header.encoder_widths.len()),
            self.tensors,
        )?;
        Ok(e)
    }

    pub fn render(&self) -> String {
        let h = &self.header;
        let widths: Vec<String> = h.encoder_widths.iter().map(|w| w.to_string()).collect();
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "kind {}", h.kind.name());
        let _ = writeln!(out, "n_contents {}", h.n_contents);
        let _ = writeln!(out, "window {}", h.window);
        let _ = writeln!(out, "encoder_widths {}", widths.join(" "));
        let _ = writeln!(out, "seed {}", h.seed);
        let _ = writeln!(out, "tensors {}", self.tensors.len());
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "tensor {name} {}", dims.join(" "));
            let vals: Vec<String> = t.data().iter().map(|v| hexfloat::format(*v)).collect();
            let _ = writeln!(out, "{}", vals.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::parse(0, format!("missing {what}")));

        let (n, magic) = next("header")?;
        if magic != MAGIC {
            return Err(Error::parse(n, "not a checkpoint file"));
        }
        let (n, l) = next("kind")?;
        let kind =
            field(n, l, "kind").and_then(|v| ModelKind::from_name(v).ok_or_else(|| Error::parse(n, "unknown kind")))?;
        let (n, l) = next("n_contents")?;
        let n_contents = number(n, field(n, l, "n_contents")?)?;
        let (n, l) = next("window")?;
        let window = number(n, field(n, l, "window")?)?;
        let (n, l) = next("encoder_widths")?;
        let encoder_widths = field(n, l, "encoder_widths")?
            .split(' ')
            .map(|w| number(n, w))
            .collect::<Result<Vec<usize>>>()?;
        let (n, l) = next("seed")?;
        let seed: u64 = field(n, l, "seed")?.parse().map_err(|_| Error::parse(n, "bad seed"))?;
        let (n, l) = next("tensor count")?;
        let count = number(n, field(n, l, "tensors")?)?;

        let mut tensors = Vec::new();
        for _ in 0..count {
            let (n, l) = next("tensor header")?;
            let rest = field(n, l, "tensor")?;
            let mut parts = rest.split(' ');
            let name = parts
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::parse(n, "missing tensor name"))?;
            let shape = parts.map(|d| number(n, d)).collect::<Result<Vec<usize>>>()?;
            if shape.is_empty() {
                return Err(Error::parse(n, "tensor without dimensions"));
            }
            let (n, l) = next("tensor values")?;
            let data = l
                .split(' ')
                .map(|v| hexfloat::parse(v).map_err(|_| Error::parse(n, format!("bad value {v:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            let t = Tensor::from_vec(&shape, data).map_err(|e| Error::parse(n, e.to_string()))?;
            tensors.push((name.to_string(), t));
        }
        if let Ok((n, _)) = next("end") {
            return Err(Error::parse(n, "trailing content"));
        }
        Ok(Checkpoint {
            header: CheckpointHeader {
                kind,
                n_contents,
                window,
                encoder_widths,
                seed,
            },
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn dense_header(e: &DenseEncoder, kind: ModelKind, seed: u64) -> CheckpointHeader {
    CheckpointHeader {
        kind,
        n_contents: e.n_contents(),
        window: e.window(),
        encoder_widths: e.layers.iter().map(|l| l.out_width()).collect(),
        seed,
    }
}

fn field<'a>(line_no: usize, line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::parse(line_no, format!("expected `{key} ...`")))
}

fn number(line_no: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(line_no, format!("bad integer {s:?}")))
}

//! Named, shape-tagged parameter arrays: the unit of storage for network
//! weights, gradients, and optimizer moments, plus federated averaging and
//! bit-exact text checkpoints.

use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Errors from parameter-set structure or checkpoint parsing.
#[derive(Debug, Error)]
pub enum ParamError {
    #[error("parameter sets differ at index {index}: {left} vs {right}")]
    ShapeMismatch { index: usize, left: String, right: String },
    #[error("cannot average an empty list of parameter sets")]
    EmptyAverage,
    #[error("checkpoint parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// One named tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self { name: name.to_string(), shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn signature(&self) -> String {
        format!("{}:{:?}", self.name, self.shape)
    }
}

/// An ordered collection of named tensors — a whole network's parameters,
/// its gradients, or one optimizer moment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentParams {
    pub tensors: Vec<Tensor>,
}

impl AgentParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a tensor, returning its index for fixed-layout access.
    pub fn push(&mut self, tensor: Tensor) -> usize {
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    /// A same-shaped set with every entry zero (gradient/moment buffer).
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(&t.name, &t.shape))
                .collect(),
        }
    }

    pub fn zero_fill(&mut self) {
        for t in &mut self.tensors {
            t.data.fill(0.0);
        }
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn same_structure(&self, other: &Self) -> Result<(), ParamError> {
        if self.tensors.len() != other.tensors.len() {
            return Err(ParamError::ShapeMismatch {
                index: self.tensors.len().min(other.tensors.len()),
                left: format!("{} tensors", self.tensors.len()),
                right: format!("{} tensors", other.tensors.len()),
            });
        }
        for (i, (a, b)) in self.tensors.iter().zip(&other.tensors).enumerate() {
            if a.name != b.name || a.shape != b.shape {
                return Err(ParamError::ShapeMismatch {
                    index: i,
                    left: a.signature(),
                    right: b.signature(),
                });
            }
        }
        Ok(())
    }

    /// Copy values from another set with identical structure.
    pub fn copy_from(&mut self, other: &Self) -> Result<(), ParamError> {
        self.same_structure(other)?;
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Federated averaging
// ---------------------------------------------------------------------------

/// Element-wise arithmetic mean of identically-structured parameter sets.
pub fn fedavg(sets: &[&AgentParams]) -> Result<AgentParams, ParamError> {
    let first = *sets.first().ok_or(ParamError::EmptyAverage)?;
    for other in &sets[1..] {
        first.same_structure(other)?;
    }
    let mut out = first.zeros_like();
    let scale = 1.0 / sets.len() as f64;
    for set in sets {
        for (acc, src) in out.tensors.iter_mut().zip(&set.tensors) {
            for (a, &s) in acc.data.iter_mut().zip(&src.data) {
                *a += s * scale;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CHECKPOINT_HEADER: &str = "cfmb-params v1";

/// Serialize to a self-describing text container. Values are written as the
/// hex of their IEEE-754 bits, so load∘save is bit-exact.
pub fn params_to_text(params: &AgentParams) -> String {
    let mut out = String::new();
    out.push_str(CHECKPOINT_HEADER);
    out.push('\n');
    for t in &params.tensors {
        let dims: Vec<String> = t.shape.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "tensor {} {}", t.name, dims.join("x"));
        for chunk in t.data.chunks(64) {
            let words: Vec<String> =
                chunk.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            out.push_str(&words.join(" "));
            out.push('\n');
        }
        if t.data.is_empty() {
            out.push('\n');
        }
    }
    out
}

/// Parse the text container produced by `params_to_text`.
pub fn params_from_text(text: &str) -> Result<AgentParams, ParamError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, line)) if line.trim() == CHECKPOINT_HEADER => {}
        _ => {
            return Err(ParamError::Parse { line: 1, message: "missing header".into() });
        }
    }
    let mut params = AgentParams::new();
    let mut current: Option<(Tensor, usize)> = None; // tensor, expected len
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("tensor ") {
            if let Some((t, want)) = current.take() {
                if t.data.len() != want {
                    return Err(ParamError::Parse {
                        line: line_no,
                        message: format!("tensor {} has {} of {} values", t.name, t.data.len(), want),
                    });
                }
                params.push(t);
            }
            let mut parts = rest.split_whitespace();
            let name = parts.next().ok_or(ParamError::Parse {
                line: line_no,
                message: "tensor line missing name".into(),
            })?;
            let dims = parts.next().ok_or(ParamError::Parse {
                line: line_no,
                message: "tensor line missing shape".into(),
            })?;
            let shape: Vec<usize> = dims
                .split('x')
                .map(|d| {
                    d.parse().map_err(|_| ParamError::Parse {
                        line: line_no,
                        message: format!("bad dimension {d:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            let want = shape.iter().product();
            let tensor =
                Tensor { name: name.to_string(), shape, data: Vec::with_capacity(want) };
            current = Some((tensor, want));
        } else if !line.is_empty() {
            let (tensor, _) = current.as_mut().ok_or(ParamError::Parse {
                line: line_no,
                message: "values before any tensor header".into(),
            })?;
            for word in line.split_whitespace() {
                let bits = u64::from_str_radix(word, 16).map_err(|_| ParamError::Parse {
                    line: line_no,
                    message: format!("bad value word {word:?}"),
                })?;
                tensor.data.push(f64::from_bits(bits));
            }
        }
    }
    if let Some((t, want)) = current.take() {
        if t.data.len() != want {
            return Err(ParamError::Parse {
                line: 0,
                message: format!("tensor {} has {} of {} values", t.name, t.data.len(), want),
            });
        }
        params.push(t);
    }
    Ok(params)
}

pub fn save_params(params: &AgentParams, path: &Path) -> Result<(), ParamError> {
    std::fs::write(path, params_to_text(params))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<AgentParams, ParamError> {
    params_from_text(&std::fs::read_to_string(path)?)
}

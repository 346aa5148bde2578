use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::layers::{LayerSpec, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "cnn", alias = "CNN")]
    Cnn,
    /// Low-latency variant: one convolution, two dense hidden layers.
    #[serde(rename = "llcnn", alias = "llCNN")]
    LlCnn,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::Cnn, Architecture::LlCnn];

    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Cnn => "cnn",
            Architecture::LlCnn => "llcnn",
        }
    }

    fn layer_counts(&self) -> (usize, usize) {
        match self {
            Architecture::Cnn => (2, 1),
            Architecture::LlCnn => (1, 2),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Architecture::Cnn),
            "llcnn" => Ok(Architecture::LlCnn),
            other => Err(Error::InvalidConfig(format!("unknown architecture {other:?}"))),
        }
    }
}

/// One convolutional block: convolution + ReLU, optionally followed by
/// non-overlapping max pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvHyper {
    pub filters: usize,
    /// (time, coefficient) extent.
    pub kernel: (usize, usize),
    #[serde(default = "unit_stride")]
    pub stride: (usize, usize),
    #[serde(default)]
    pub pool: Option<(usize, usize)>,
}

fn unit_stride() -> (usize, usize) {
    (1, 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// (frames, coefficients).
    pub input_shape: (usize, usize),
    pub num_classes: usize,
    pub conv: Vec<ConvHyper>,
    /// Widths of the dense hidden layers.
    pub dense: Vec<usize>,
}

impl ModelSpec {
    /// Default layer sizes for `architecture`.
    pub fn new(architecture: Architecture, input_shape: (usize, usize), num_classes: usize) -> Self {
        let (conv, dense) = match architecture {
            Architecture::Cnn => (
                vec![
                    ConvHyper { filters: 16, kernel: (8, 8), stride: (1, 1), pool: Some((2, 2)) },
                    ConvHyper { filters: 32, kernel: (4, 4), stride: (1, 1), pool: None },
                ],
                vec![64],
            ),
            Architecture::LlCnn => (
                vec![ConvHyper { filters: 16, kernel: (8, 8), stride: (2, 2), pool: None }],
                vec![64, 32],
            ),
        };
        Self { architecture, input_shape, num_classes, conv, dense }
    }

    pub fn validate(&self) -> Result<()> {
        let (nc, nd) = self.architecture.layer_counts();
        if self.conv.len() != nc || self.dense.len() != nd {
            return Err(Error::SpecInvariant(format!(
                "{} needs {nc} convolutional and {nd} dense hidden layers, got {} and {}",
                self.architecture,
                self.conv.len(),
                self.dense.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::SpecInvariant("num_classes must be >= 2".into()));
        }
        let zero = self.conv.iter().any(|c| {
            c.filters == 0
                || c.kernel.0 == 0
                || c.kernel.1 == 0
                || c.stride.0 == 0
                || c.stride.1 == 0
                || c.pool.is_some_and(|p| p.0 == 0 || p.1 == 0)
        }) || self.dense.contains(&0);
        if zero {
            return Err(Error::SpecInvariant("layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// Lowers the spec to a concrete layer stack.
    ///
    /// The first convolution must fit the input. Kernels and pooling
    /// windows of later layers are clamped to the incoming feature map, so
    /// the default sizes work for every feature shape in the grid.
    pub fn network(&self) -> Result<Network> {
        self.validate()?;
        let (h, w) = self.input_shape;
        let first = self.conv[0].kernel;
        if h < first.0 || w < first.1 {
            return Err(Error::Shape(format!(
                "input {h}x{w} is smaller than the first kernel {}x{}",
                first.0, first.1
            )));
        }
        let mut layers = Vec::new();
        for c in &self.conv {
            layers.push(LayerSpec::Conv { filters: c.filters, kernel: c.kernel, stride: c.stride });
            if let Some(p) = c.pool {
                layers.push(LayerSpec::MaxPool { size: p });
            }
        }
        layers.extend(self.dense.iter().map(|&units| LayerSpec::Dense { units, relu: true }));
        layers.push(LayerSpec::Dense { units: self.num_classes, relu: false });
        Network::new(self.input_shape, &layers, true)
    }

    /// Number of trainable scalars.
    pub fn num_params(&self) -> Result<usize> {
        Ok(self.network()?.num_params())
    }
}

//! Declarative channel layouts and their shape arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ConvGeom;

/// Shape of one activation without the batch axis: `[C, D, H, W]`.
pub type Shape4 = [usize; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// Convolution, optional batch norm, ReLU.
    Conv { filters: usize, kernel: [usize; 3], pad: [usize; 3], batch_norm: bool },
    /// Max pooling with stride equal to the window, then dropout.
    Pool { window: [usize; 3], dropout: f64 },
    /// `relu(conv_u(x)) / (decay + relu(conv_i(x)))`.
    Shunting { filters: usize, kernel: [usize; 3], pad: [usize; 3], decay: f64 },
}

impl LayerSpec {
    pub fn is_conv(&self) -> bool {
        !matches!(self, LayerSpec::Pool { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Pool { .. } => "pool",
            LayerSpec::Shunting { .. } => "shunting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub input: Shape4,
    pub layers: Vec<LayerSpec>,
    /// Index of the last convolution layer, the one the cross-channel feeds.
    pub last: usize,
}

pub const DEFAULT_DROPOUT: f64 = 0.25;
pub const SHUNTING_DECAY: f64 = 1.0;

fn conv3(filters: usize) -> LayerSpec {
    LayerSpec::Conv { filters, kernel: [3, 3, 3], pad: [1, 1, 1], batch_norm: true }
}

fn conv1(filters: usize, batch_norm: bool) -> LayerSpec {
    LayerSpec::Conv { filters, kernel: [1, 1, 3], pad: [0, 0, 0], batch_norm }
}

fn pool(window: [usize; 3]) -> LayerSpec {
    LayerSpec::Pool { window, dropout: DEFAULT_DROPOUT }
}

impl ChannelSpec {
    /// Visual layout with 10 convolutions in blocks of 2, 2, 3, 3, each block
    /// followed by pooling; the tenth convolution is a shunting layer.
    /// `widths` lists the 10 filter counts, `pools` the 4 pooling windows.
    pub fn visual(frames: usize, side: usize, widths: [usize; 10], pools: [[usize; 3]; 4]) -> Self {
        let mut layers = Vec::new();
        let blocks = [2, 2, 3, 3];
        let mut w = widths.iter();
        for (bi, &n) in blocks.iter().enumerate() {
            for i in 0..n {
                let f = *w.next().unwrap();
                if bi == 3 && i == n - 1 {
                    layers.push(LayerSpec::Shunting { filters: f, kernel: [3, 3, 3], pad: [1, 1, 1], decay: SHUNTING_DECAY });
                } else {
                    layers.push(conv3(f));
                }
            }
            layers.push(pool(pools[bi]));
        }
        let last = layers.len() - 2;
        Self { name: "visual".into(), input: [1, frames, side, side], layers, last }
    }

    /// Full-size visual channel: 9x128x128 clips, VGG16-style widths.
    pub fn visual_full() -> Self {
        Self::visual(9, 128, [32, 32, 64, 64, 128, 128, 128, 256, 256, 256], [[1, 2, 2]; 4])
    }

    /// Desk-scale visual channel: 9x16x16 clips.
    pub fn visual_desk() -> Self {
        Self::visual(9, 16, [4, 4, 8, 8, 16, 16, 16, 16, 16, 16], [[1, 2, 2], [2, 2, 2], [2, 2, 2], [2, 2, 2]])
    }

    /// Gradient-check size: 2-frame 16x16 clips, two maps per layer.
    pub fn visual_tiny() -> Self {
        Self::visual(2, 16, [2; 10], [[1, 2, 2]; 4])
    }

    /// Auditory layout: three width-3 conv1d layers over time with the
    /// coefficients as input maps, each followed by width-2 pooling.
    pub fn auditory(coeffs: usize, frames: usize, widths: [usize; 3]) -> Self {
        let layers = vec![
            conv1(widths[0], true),
            pool([1, 1, 2]),
            conv1(widths[1], true),
            pool([1, 1, 2]),
            conv1(widths[2], false),
            pool([1, 1, 2]),
        ];
        Self { name: "auditory".into(), input: [coeffs, 1, 1, frames], layers, last: 4 }
    }

    pub fn auditory_full() -> Self {
        Self::auditory(26, 35, [16, 32, 64])
    }

    /// Tiny auditory layout for gradient checks: 4 coefficients x 22 frames.
    pub fn auditory_tiny() -> Self {
        Self::auditory(4, 22, [2, 2, 2])
    }

    /// Output shape after every layer, in order.
    pub fn shape_table(&self) -> Result<Vec<Shape4>> {
        let mut s = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            s = match l {
                LayerSpec::Conv { filters, kernel, pad, .. } | LayerSpec::Shunting { filters, kernel, pad, .. } => {
                    let geom = ConvGeom::padded(*pad);
                    let d = crate::nn::kernels::conv_out_dims([s[1], s[2], s[3]], *kernel, &geom)
                        .map_err(|e| Error::Shape(format!("{} layer {i}: {e}", self.name)))?;
                    [*filters, d[0], d[1], d[2]]
                }
                LayerSpec::Pool { window, .. } => {
                    let mut o = [s[0], 0, 0, 0];
                    for a in 0..3 {
                        if s[a + 1] < window[a] {
                            return Err(Error::Shape(format!(
                                "{} layer {i}: pooling window {:?} larger than input {:?}",
                                self.name, window, s
                            )));
                        }
                        o[a + 1] = (s[a + 1] - window[a]) / window[a] + 1;
                    }
                    o
                }
            };
            out.push(s);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.last >= self.layers.len() || !self.layers[self.last].is_conv() {
            return Err(Error::Invalid(format!("{}: last layer index {} is not a convolution", self.name, self.last)));
        }
        if self.layers[self.last + 1..].iter().any(LayerSpec::is_conv) {
            return Err(Error::Invalid(format!("{}: convolutions after the last layer", self.name)));
        }
        if self.input.iter().any(|&d| d == 0) {
            return Err(Error::Invalid(format!("{}: zero-sized input {:?}", self.name, self.input)));
        }
        for l in &self.layers {
            if let LayerSpec::Pool { dropout, .. } = l {
                if !(0.0..1.0).contains(dropout) {
                    return Err(Error::Invalid(format!("{}: dropout {dropout} outside [0, 1)", self.name)));
                }
            }
        }
        self.shape_table().map(|_| ())
    }

    /// Activation entering the last layer.
    pub fn pre_last_shape(&self) -> Result<Shape4> {
        Ok(if self.last == 0 { self.input } else { self.shape_table()?[self.last - 1] })
    }

    pub fn output_shape(&self) -> Result<Shape4> {
        Ok(*self.shape_table()?.last().unwrap_or(&self.input))
    }

    pub fn conv_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_conv()).count()
    }

    pub fn pool_count(&self) -> usize {
        self.layers.len() - self.conv_count()
    }

    /// Sets every pooling layer's dropout rate.
    pub fn with_dropout(mut self, rate: f64) -> Self {
        for l in &mut self.layers {
            if let LayerSpec::Pool { dropout, .. } = l {
                *dropout = rate;
            }
        }
        self
    }

    /// Human-readable table: layer index, kind, output shape.
    pub fn describe(&self) -> Result<String> {
        let mut s = format!("{} input {:?}\n", self.name, self.input);
        for (i, (l, shape)) in self.layers.iter().zip(self.shape_table()?).enumerate() {
            let mark = if i == self.last { " (last)" } else { "" };
            s.push_str(&format!("  {i:2} {:<8} -> {:?}{mark}\n", l.kind(), shape));
        }
        Ok(s)
    }
}

/// Cross-channel sizes: per-channel projection units, the square map side
/// they are reshaped to, and the number of cross-channel filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSpec {
    pub units: usize,
    pub side: usize,
    pub filters: usize,
}

impl CrossSpec {
    pub fn full() -> Self {
        Self { units: 100, side: 10, filters: 8 }
    }

    pub fn tiny() -> Self {
        Self { units: 4, side: 2, filters: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side * self.side != self.units || self.filters == 0 {
            return Err(Error::Invalid(format!(
                "cross-channel projection of {} units cannot be reshaped to {}x{}",
                self.units, self.side, self.side
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub visual: ChannelSpec,
    pub auditory: ChannelSpec,
    pub cross: CrossSpec,
    /// Width of the joint expression representation.
    pub joint_units: usize,
    /// Hidden units of the training heads.
    pub head_hidden: usize,
}

impl ModelSpec {
    pub fn full() -> Self {
        Self {
            visual: ChannelSpec::visual_full(),
            auditory: ChannelSpec::auditory_full(),
            cross: CrossSpec::full(),
            joint_units: 64,
            head_hidden: 200,
        }
    }

    pub fn desk() -> Self {
        Self {
            visual: ChannelSpec::visual_desk(),
            auditory: ChannelSpec::auditory_full(),
            cross: CrossSpec::full(),
            joint_units: 32,
            head_hidden: 200,
        }
    }

    pub fn tiny() -> Self {
        Self {
            visual: ChannelSpec::visual_tiny().with_dropout(0.0),
            auditory: ChannelSpec::auditory_tiny().with_dropout(0.0),
            cross: CrossSpec::tiny(),
            joint_units: 3,
            head_hidden: 4,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Validation(format!("unknown model profile '{other}' (full, desk, tiny)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.visual.validate()?;
        self.auditory.validate()?;
        self.cross.validate()?;
        if self.joint_units == 0 || self.head_hidden == 0 {
            return Err(Error::Invalid("joint and head widths must be positive".into()));
        }
        Ok(())
    }
}

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::param("nn", format!("unknown activation `{other}`"))),
        }
    }
}

/// One layer of the network. Pairs are `(rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        activation: Activation,
    },
    MaxPool {
        size: (usize, usize),
        stride: (usize, usize),
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    /// `filters` square kernels, stride 1, no padding, ReLU.
    pub fn conv(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv {
            filters,
            kernel: (kernel, kernel),
            stride: (1, 1),
            padding: (0, 0),
            activation: Activation::Relu,
        }
    }

    pub fn maxpool(size: usize) -> Self {
        LayerSpec::MaxPool {
            size: (size, size),
            stride: (size, size),
        }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    pub fn activation(&self) -> Option<Activation> {
        match self {
            LayerSpec::Conv { activation, .. } | LayerSpec::Dense { activation, .. } => Some(*activation),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    /// Output shape for `input`, or an error when the geometry does not fit.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                padding,
                ..
            } => {
                if filters == 0 || kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
                    return Err(Error::param("nn", "conv filters, kernel and stride must be positive"));
                }
                let rows = conv_extent(input.rows, kernel.0, padding.0, stride.0)?;
                let cols = conv_extent(input.cols, kernel.1, padding.1, stride.1)?;
                Ok(Shape::new(filters, rows, cols))
            }
            LayerSpec::MaxPool { size, stride } => {
                if size.0 == 0 || size.1 == 0 || stride.0 == 0 || stride.1 == 0 {
                    return Err(Error::param("nn", "pool size and stride must be positive"));
                }
                if input.rows < size.0 || input.cols < size.1 {
                    return Err(Error::param("nn", format!("pool {size:?} larger than input {input}")));
                }
                Ok(Shape::new(
                    input.channels,
                    (input.rows - size.0) / stride.0 + 1,
                    (input.cols - size.1) / stride.1 + 1,
                ))
            }
            LayerSpec::Flatten => Ok(Shape::flat(input.len())),
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return Err(Error::param("nn", "dense layer needs at least one unit"));
                }
                Ok(Shape::flat(units))
            }
        }
    }
}

/// Output extent of a convolution along one axis. Rejects geometries where the
/// stride does not tile the padded input exactly.
pub fn conv_extent(input: usize, kernel: usize, padding: usize, stride: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::param(
            "nn",
            format!("kernel {kernel} larger than padded input {padded}"),
        ));
    }
    if (padded - kernel) % stride != 0 {
        return Err(Error::param(
            "nn",
            format!("({input} - {kernel} + 2*{padding}) / {stride} is not integral"),
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Network topology for square single-channel images.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl NetworkConfig {
    /// The reference topology: convolutions with 128, 64, 32, 16 filters.
    pub fn default_topology(input_size: usize, num_classes: usize) -> Self {
        Self::with_filters(input_size, num_classes, [128, 64, 32, 16])
    }

    /// Reference topology with custom filter counts: a 3×3 convolution, three
    /// 7×7 convolutions, 2×2 max-pooling, a 64-unit ReLU dense layer and a
    /// sigmoid output.
    pub fn with_filters(input_size: usize, num_classes: usize, filters: [usize; 4]) -> Self {
        NetworkConfig {
            input_size,
            input_channels: 1,
            layers: vec![
                LayerSpec::conv(filters[0], 3),
                LayerSpec::conv(filters[1], 7),
                LayerSpec::conv(filters[2], 7),
                LayerSpec::conv(filters[3], 7),
                LayerSpec::maxpool(2),
                LayerSpec::Flatten,
                LayerSpec::dense(64, Activation::Relu),
                LayerSpec::dense(num_classes, Activation::Sigmoid),
            ],
            num_classes,
        }
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(self.input_channels, self.input_size, self.input_size)
    }

    /// Input and output shape of every layer.
    pub fn shapes(&self) -> Result<Vec<(Shape, Shape)>> {
        let mut shape = self.input_shape();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(shape).map_err(|e| match e {
                Error::Param { message, .. } => Error::param("nn", format!("layer {i} ({}): {message}", layer.name())),
                other => other,
            })?;
            out.push((shape, next));
            shape = next;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_channels == 0 {
            return Err(Error::param("nn", "input must be non-empty"));
        }
        if self.num_classes == 0 {
            return Err(Error::param("nn", "num_classes must be positive"));
        }
        self.shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Dense {
                units,
                activation: Activation::Sigmoid,
            }) if *units == self.num_classes => {}
            _ => {
                return Err(Error::param(
                    "nn",
                    format!("last layer must be a {}-unit sigmoid dense layer", self.num_classes),
                ))
            }
        }
        Ok(())
    }

    /// Number of label classes: a single sigmoid output is a binary task.
    pub fn label_classes(&self) -> usize {
        if self.num_classes == 1 {
            2
        } else {
            self.num_classes
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes_at_300() {
        let cfg = NetworkConfig::default_topology(300, 5);
        cfg.validate().unwrap();
        let shapes = cfg.shapes().unwrap();
        let outs: Vec<Shape> = shapes.iter().map(|s| s.1).collect();
        assert_eq!(outs[0], Shape::new(128, 298, 298));
        assert_eq!(outs[1], Shape::new(64, 292, 292));
        assert_eq!(outs[2], Shape::new(32, 286, 286));
        assert_eq!(outs[3], Shape::new(16, 280, 280));
        assert_eq!(outs[4], Shape::new(16, 140, 140));
        assert_eq!(outs[5], Shape::flat(16 * 140 * 140));
        assert_eq!(outs[7], Shape::flat(5));
    }

    #[test]
    fn desk_scale_shapes() {
        let cfg = NetworkConfig::with_filters(64, 5, [32, 16, 8, 4]);
        let outs: Vec<Shape> = cfg.shapes().unwrap().iter().map(|s| s.1).collect();
        assert_eq!(outs[3], Shape::new(4, 44, 44));
        assert_eq!(outs[5], Shape::flat(4 * 22 * 22));
    }

    #[test]
    fn non_integral_conv_rejected() {
        assert_eq!(conv_extent(300, 3, 0, 1).unwrap(), 298);
        assert_eq!(conv_extent(7, 3, 1, 2).unwrap(), 4);
        assert!(conv_extent(8, 3, 0, 2).is_err());
        assert!(conv_extent(2, 3, 0, 1).is_err());
    }

    #[test]
    fn output_layer_must_match_classes() {
        let mut cfg = NetworkConfig::default_topology(64, 5);
        cfg.num_classes = 1;
        assert!(cfg.validate().is_err());
    }
}

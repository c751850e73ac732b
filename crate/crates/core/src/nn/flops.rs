//! Parameter, FLOP and energy accounting for one prediction.
//!
//! A convolution costs `F_pf = Ho * Wo * (2 * C * Kr * Kc + 1)` per filter. With
//! a ReLU the layer costs `(F_pf + 2 * C * Kr * Kc + 1) * N_f`, without one
//! `F_pf * N_f`. Dense layers cost `2 * in * out + out`, plus two operations
//! per unit (comparison and multiplication) behind a ReLU. Max-pooling costs
//! one comparison per comparison step. The network total is the sum over
//! layers.

use crate::error::{Error, Result};
use crate::nn::config::{Activation, LayerSpec, NetworkConfig};
use crate::nn::tensor::Shape;

/// Peak single-precision efficiency of the reference GPU, in FLOPS per watt.
pub const DEFAULT_FLOPS_PER_WATT: f64 = 53.8e9;

/// Cost of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub index: usize,
    pub kind: &'static str,
    pub output: Shape,
    pub params: u64,
    pub flops: u64,
}

/// FLOPs of one convolution filter over the whole input.
pub fn conv_flops_per_filter(input: Shape, kernel: (usize, usize), padding: (usize, usize), stride: (usize, usize)) -> Result<u64> {
    let rows = super::config::conv_extent(input.rows, kernel.0, padding.0, stride.0)?;
    let cols = super::config::conv_extent(input.cols, kernel.1, padding.1, stride.1)?;
    Ok((rows * cols) as u64 * per_position(input.channels, kernel))
}

fn per_position(channels: usize, kernel: (usize, usize)) -> u64 {
    (2 * channels * kernel.0 * kernel.1 + 1) as u64
}

fn layer_cost(index: usize, spec: &LayerSpec, input: Shape, output: Shape) -> Result<LayerCost> {
    let (params, flops) = match *spec {
        LayerSpec::Conv {
            filters,
            kernel,
            stride,
            padding,
            activation,
        } => {
            let params = filters * (kernel.0 * kernel.1 * input.channels + 1);
            let per_filter = conv_flops_per_filter(input, kernel, padding, stride)?;
            let surcharge = match activation {
                Activation::Relu => per_position(input.channels, kernel),
                Activation::Sigmoid => 0,
            };
            (params as u64, (per_filter + surcharge) * filters as u64)
        }
        LayerSpec::MaxPool { size, .. } => (0, (output.len() * (size.0 * size.1 - 1)) as u64),
        LayerSpec::Flatten => (0, 0),
        LayerSpec::Dense { units, activation } => {
            let n_in = input.len() as u64;
            let out = units as u64;
            let relu = if activation == Activation::Relu { 2 * out } else { 0 };
            (n_in * out + out, 2 * n_in * out + out + relu)
        }
    };
    Ok(LayerCost {
        index,
        kind: spec.name(),
        output,
        params,
        flops,
    })
}

/// Per-layer parameter and FLOP counts.
pub fn layer_costs(config: &NetworkConfig) -> Result<Vec<LayerCost>> {
    config
        .layers
        .iter()
        .zip(config.shapes()?)
        .enumerate()
        .map(|(i, (spec, (input, output)))| layer_cost(i, spec, input, output))
        .collect()
}

pub fn count_params(config: &NetworkConfig) -> Result<u64> {
    Ok(layer_costs(config)?.iter().map(|c| c.params).sum())
}

pub fn count_flops(config: &NetworkConfig) -> Result<u64> {
    Ok(layer_costs(config)?.iter().map(|c| c.flops).sum())
}

/// Theoretical energy of one prediction in joules.
pub fn tec(flops: u64, flops_per_watt: f64) -> Result<f64> {
    if !(flops_per_watt > 0.0) || !flops_per_watt.is_finite() {
        return Err(Error::param("nn", format!("flops_per_watt {flops_per_watt} must be positive")));
    }
    Ok(flops as f64 / flops_per_watt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(layers: Vec<LayerSpec>, input: usize) -> NetworkConfig {
        NetworkConfig {
            input_size: input,
            input_channels: 1,
            layers,
            num_classes: 1,
        }
    }

    #[test]
    fn per_filter_worked_values() {
        let f = conv_flops_per_filter(Shape::new(1, 300, 300), (3, 3), (0, 0), (1, 1)).unwrap();
        assert_eq!(f, 298 * 298 * 19);
        assert_eq!(f, 1_687_276);
        assert_eq!(conv_flops_per_filter(Shape::new(1, 1, 1), (1, 1), (0, 0), (1, 1)).unwrap(), 3);
    }

    #[test]
    fn parameter_counts() {
        let c = single(vec![LayerSpec::conv(128, 3)], 300);
        assert_eq!(count_params(&c).unwrap(), 1280);
        let d = NetworkConfig {
            input_size: 10,
            input_channels: 1,
            layers: vec![LayerSpec::Flatten, LayerSpec::dense(64, Activation::Relu)],
            num_classes: 1,
        };
        assert_eq!(count_params(&d).unwrap(), 6464);
        let p = single(vec![LayerSpec::maxpool(2)], 8);
        assert_eq!(count_params(&p).unwrap(), 0);
    }

    #[test]
    fn conv_layer_includes_relu_surcharge() {
        let c = single(vec![LayerSpec::conv(1, 3)], 300);
        assert_eq!(count_flops(&c).unwrap(), 1_687_276 + 19);
    }

    #[test]
    fn tec_values() {
        assert!((tec(2_100_000_000, DEFAULT_FLOPS_PER_WATT).unwrap() - 0.039).abs() < 0.039 * 0.01);
        assert_eq!(tec(0, DEFAULT_FLOPS_PER_WATT).unwrap(), 0.0);
        assert!(tec(1, 0.0).is_err());
        assert!(tec(1, -3.0).is_err());
    }
}

//! Checkpoint files.
//!
//! ```text
//! linksight-nn 1
//! byte_order little
//! input_size 64
//! input_channels 1
//! num_classes 5
//! layers 8
//! conv 32 3x3 1x1 0x0 relu
//! ...
//! dense 5 sigmoid
//! end
//! <parameters: each layer's weights then biases, f64 little-endian>
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::config::{LayerSpec, NetworkConfig};
use crate::nn::network::{Network, NetworkState};

const MAGIC: &str = "linksight-nn";
const VERSION: u32 = 1;

fn bad(m: impl Into<String>) -> Error {
    Error::Checkpoint(m.into())
}

fn pair(p: (usize, usize)) -> String {
    format!("{}x{}", p.0, p.1)
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once('x').ok_or_else(|| bad(format!("bad pair `{s}`")))?;
    Ok((
        a.parse().map_err(|_| bad(format!("bad pair `{s}`")))?,
        b.parse().map_err(|_| bad(format!("bad pair `{s}`")))?,
    ))
}

pub fn encode(net: &Network) -> Vec<u8> {
    let cfg = &net.config;
    let mut head = String::new();
    let _ = writeln!(head, "{MAGIC} {VERSION}");
    let _ = writeln!(head, "byte_order little");
    let _ = writeln!(head, "input_size {}", cfg.input_size);
    let _ = writeln!(head, "input_channels {}", cfg.input_channels);
    let _ = writeln!(head, "num_classes {}", cfg.num_classes);
    let _ = writeln!(head, "layers {}", cfg.layers.len());
    for layer in &cfg.layers {
        let line = match *layer {
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                padding,
                activation,
            } => format!("conv {filters} {} {} {} {activation}", pair(kernel), pair(stride), pair(padding)),
            LayerSpec::MaxPool { size, stride } => format!("maxpool {} {}", pair(size), pair(stride)),
            LayerSpec::Flatten => "flatten".to_string(),
            LayerSpec::Dense { units, activation } => format!("dense {units} {activation}"),
        };
        let _ = writeln!(head, "{line}");
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    out.reserve(8 * net.parameter_count());
    for v in net.state.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8"))
    };
    let magic = next_line()?;
    if magic != format!("{MAGIC} {VERSION}") {
        return Err(bad(format!("unsupported header `{magic}`")));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = next_line()?;
        line.strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(format!("expected `{key}`, got `{line}`")))
    };
    let order = field("byte_order")?;
    if order != "little" {
        return Err(bad(format!("unsupported byte order `{order}`")));
    }
    let num = |s: String| s.parse::<usize>().map_err(|_| bad(format!("bad number `{s}`")));
    let input_size = num(field("input_size")?)?;
    let input_channels = num(field("input_channels")?)?;
    let num_classes = num(field("num_classes")?)?;
    let n_layers = num(field("layers")?)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let line = next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let layer = match parts.as_slice() {
            ["conv", f, k, s, p, a] => LayerSpec::Conv {
                filters: f.parse().map_err(|_| bad(format!("bad layer `{line}`")))?,
                kernel: parse_pair(k)?,
                stride: parse_pair(s)?,
                padding: parse_pair(p)?,
                activation: a.parse()?,
            },
            ["maxpool", k, s] => LayerSpec::MaxPool {
                size: parse_pair(k)?,
                stride: parse_pair(s)?,
            },
            ["flatten"] => LayerSpec::Flatten,
            ["dense", u, a] => LayerSpec::Dense {
                units: u.parse().map_err(|_| bad(format!("bad layer `{line}`")))?,
                activation: a.parse()?,
            },
            _ => return Err(bad(format!("bad layer `{line}`"))),
        };
        layers.push(layer);
    }
    if next_line()? != "end" {
        return Err(bad("missing `end`"));
    }
    let config = NetworkConfig {
        input_size,
        input_channels,
        layers,
        num_classes,
    };
    config.validate()?;
    let mut state = NetworkState::zeros(&config)?;
    let payload = &bytes[pos..];
    if payload.len() != 8 * state.parameter_count() {
        return Err(bad(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            8 * state.parameter_count()
        )));
    }
    for (v, chunk) in state.iter_mut().zip(payload.chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().expect("chunks of 8"));
    }
    Network::new(config, state)
}

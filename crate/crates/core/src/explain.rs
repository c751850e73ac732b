//! Guided-backpropagation saliency maps.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::{export_image, ImageFormat, ImageKind, ImageMatrix};
use crate::nn::{BackpropRule, Network, ReluRecord, Tensor};

/// Output unit to explain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassTarget {
    /// The highest-scoring output.
    #[default]
    Auto,
    Index(usize),
}

impl FromStr for ClassTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(ClassTarget::Auto);
        }
        s.parse()
            .map(ClassTarget::Index)
            .map_err(|_| Error::param("explain", format!("class must be `auto` or an index, got `{s}`")))
    }
}

/// Input-gradient map of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub size: usize,
    pub cells: Vec<f64>,
    pub target_class: usize,
    pub source_id: String,
}

impl SaliencyMap {
    pub fn to_matrix(&self) -> ImageMatrix {
        ImageMatrix {
            size: self.size,
            cells: self.cells.clone(),
            kind: ImageKind::Saliency,
        }
    }
}

/// Gradient of the target score with respect to the input, where every ReLU
/// passes gradient only if its pre-activation was positive and the incoming
/// gradient is non-negative.
pub fn guided_backprop(net: &Network, image: &Tensor, target: ClassTarget, source_id: &str) -> Result<SaliencyMap> {
    guided_backprop_traced(net, image, target, source_id).map(|(m, _)| m)
}

/// [`guided_backprop`] that also returns what each ReLU saw.
pub fn guided_backprop_traced(
    net: &Network,
    image: &Tensor,
    target: ClassTarget,
    source_id: &str,
) -> Result<(SaliencyMap, Vec<ReluRecord>)> {
    let prep = net.prepare();
    let cache = net.forward_cached(&prep, &[image])?;
    let logits = &cache.logits[0];
    let k = logits.len();
    let class = match target {
        ClassTarget::Auto => argmax(logits),
        ClassTarget::Index(i) if i < k => i,
        ClassTarget::Index(i) => {
            return Err(Error::param("explain", format!("target class {i} outside 0..{k}")));
        }
    };
    // d sigmoid(z) / dz at the target unit
    let s = 1.0 / (1.0 + (-logits[class]).exp());
    let mut d_logits = vec![0.0; k];
    d_logits[class] = s * (1.0 - s);
    let mut relus = Vec::new();
    let grad = net
        .backward(&prep, &cache, vec![d_logits], BackpropRule::Guided, None, Some(&mut relus), true)
        .expect("input gradient requested")
        .remove(0);
    Ok((
        SaliencyMap {
            size: image.shape.rows,
            cells: grad,
            target_class: class,
            source_id: source_id.to_string(),
        },
        relus,
    ))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Encodes a map; PGM rescales linearly so the largest value is white.
pub fn render_saliency(map: &SaliencyMap, format: ImageFormat) -> Vec<u8> {
    export_image(&map.to_matrix(), format)
}

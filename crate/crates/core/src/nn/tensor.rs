use std::fmt;

use crate::error::{Error, Result};

/// Dimensions of an activation volume. A flat vector of length `n` is
/// `Shape { channels: n, rows: 1, cols: 1 }`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(channels: usize, rows: usize, cols: usize) -> Self {
        Shape { channels, rows, cols }
    }

    pub const fn flat(len: usize) -> Self {
        Shape::new(len, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.rows, self.cols, self.channels)
    }
}

/// Real-valued tensor stored channel-major: `data[(c * rows + r) * cols + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} values do not fill a {shape} tensor",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Single-channel image from a row-major square matrix.
    pub fn from_image(size: usize, cells: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::new(1, size, size), cells)
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, k: usize) -> f64 {
        self.data[(c * self.shape.rows + r) * self.shape.cols + k]
    }
}

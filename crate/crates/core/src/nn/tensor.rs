use super::NnError;

/// Dense rank-4 tensor in NHWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(NnError::ShapeMismatch(format!("{} values cannot fill shape {:?}", data.len(), dims)));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn index(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        let [_, hh, ww, cc] = self.dims;
        ((n * hh + h) * ww + w) * cc + c
    }

    pub fn get(&self, n: usize, h: usize, w: usize, c: usize) -> f64 {
        self.data[self.index(n, h, w, c)]
    }

    /// Stack single-channel `frames x coeffs` matrices (row-major) into a batch.
    pub fn from_examples(frames: usize, coeffs: usize, examples: &[&[f64]]) -> Result<Self, NnError> {
        let mut data = Vec::with_capacity(examples.len() * frames * coeffs);
        for ex in examples {
            if ex.len() != frames * coeffs {
                return Err(NnError::ShapeMismatch(format!(
                    "example has {} values, expected {frames}x{coeffs}",
                    ex.len()
                )));
            }
            data.extend_from_slice(ex);
        }
        Ok(Self { dims: [examples.len(), frames, coeffs, 1], data })
    }
}

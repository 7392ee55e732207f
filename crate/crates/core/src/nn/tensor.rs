use crate::{Error, Result};

/// Dense row-major f32 tensor. 4-D tensors are NCHW.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::shape("tensor", format!("dims must be non-empty and positive, got {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("dims {dims:?} need {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Panics if any dim is zero.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, 0.0)
    }

    /// Panics if any dim is zero.
    pub fn full(dims: &[usize], value: f32) -> Self {
        assert!(
            !dims.is_empty() && !dims.contains(&0),
            "invalid tensor dims {dims:?}"
        );
        Self {
            dims: dims.to_vec(),
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let mut t = Self::zeros(dims);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.data.len() || dims.contains(&0) {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {dims:?}", self.dims),
            ));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::shape(
                op,
                format!("expected rank {rank}, got dims {:?}", self.dims),
            ));
        }
        Ok(())
    }

    pub(crate) fn expect_same_dims(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(
                op,
                format!("dims {:?} and {:?} differ", self.dims, other.dims),
            ));
        }
        Ok(())
    }

    /// Leading sub-block: each axis keeps its first `dims[i]` indices.
    pub fn prefix_slice(&self, dims: &[usize]) -> Result<Tensor> {
        if dims.len() != self.rank() || dims.iter().zip(&self.dims).any(|(&d, &s)| d > s || d == 0) {
            return Err(Error::shape(
                "prefix_slice",
                format!("cannot take {dims:?} from {:?}", self.dims),
            ));
        }
        let rank = dims.len();
        let mut src_strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            src_strides[i] = src_strides[i + 1] * self.dims[i + 1];
        }
        let run = dims[rank - 1];
        let outer: usize = dims[..rank - 1].iter().product();
        let mut out = Vec::with_capacity(outer * run);
        let mut idx = vec![0usize; rank.saturating_sub(1)];
        for _ in 0..outer {
            let base: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
            out.extend_from_slice(&self.data[base..base + run]);
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < dims[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor::new(dims, out)
    }
}

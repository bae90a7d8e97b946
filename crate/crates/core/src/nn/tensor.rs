use crate::scalar::Scalar;

/// A dense `c×h×w` activation for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length");
        Tensor { c, h, w, data }
    }

    /// A flat vector viewed as `n×1×1`.
    pub fn vector(data: Vec<T>) -> Self {
        let n = data.len();
        Tensor::from_vec(n, 1, 1, data)
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, o: &Self) -> bool {
        self.c == o.c && self.h == o.h && self.w == o.w
    }

    /// Stack along channels.
    pub fn concat(parts: &[&Tensor<T>]) -> Self {
        let (h, w) = (parts[0].h, parts[0].w);
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let mut c = 0;
        for p in parts {
            assert!(p.h == h && p.w == w, "concat spatial mismatch");
            data.extend_from_slice(&p.data);
            c += p.c;
        }
        Tensor { c, h, w, data }
    }

    pub fn add_assign(&mut self, o: &Self) {
        debug_assert!(self.same_shape(o));
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }
}

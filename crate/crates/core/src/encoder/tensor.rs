use ndarray::{Array, Dimension};

/// Borrowed row-major view of one named parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorRef<'a> {
    pub shape: &'a [usize],
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

pub(crate) trait AsTensor {
    fn tensor_ref(&self) -> TensorRef<'_>;
    fn tensor_mut(&mut self) -> TensorMut<'_>;
}

impl<D: Dimension> AsTensor for Array<f64, D> {
    fn tensor_ref(&self) -> TensorRef<'_> {
        TensorRef {
            shape: self.shape(),
            data: self.as_slice().expect("parameters are stored in standard layout"),
        }
    }

    fn tensor_mut(&mut self) -> TensorMut<'_> {
        let shape = self.shape().to_vec();
        TensorMut {
            shape,
            data: self
                .as_slice_mut()
                .expect("parameters are stored in standard layout"),
        }
    }
}

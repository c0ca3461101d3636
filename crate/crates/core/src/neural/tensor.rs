//! Dense row-major matrices and the three matmul kernels the detector
//! needs. Kernels are written row-accumulate style so the inner loops
//! vectorize without fast-math.

use super::float::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Float> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::ZERO; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not hold {} values",
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn from_f64_slice(shape: &[usize], data: &[f64]) -> Self {
        Tensor::from_vec(shape, data.iter().map(|&x| F::from_f64(x)).collect())
    }

    pub fn scalar(x: F) -> Self {
        Tensor::from_vec(&[1, 1], vec![x])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Rows of the 2-D interpretation; matrices are the only shapes the
    /// model uses.
    pub fn rows(&self) -> usize {
        assert_eq!(
            self.shape.len(),
            2,
            "expected a matrix, got shape {:?}",
            self.shape
        );
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(
            self.shape.len(),
            2,
            "expected a matrix, got shape {:?}",
            self.shape
        );
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols() + j]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64()).collect()
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// C = A * B for A [m x k], B [k x n].
pub fn matmul<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    let (m, k) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul inner dims {k} vs {kb}");
    let mut out = Tensor::zeros(&[m, n]);
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut od[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av != F::ZERO {
                let brow = &bd[kk * n..(kk + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

/// C = A^T * B for A [m x k], B [m x n], giving [k x n].
pub fn matmul_tn<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    let (m, k) = (a.rows(), a.cols());
    let (mb, n) = (b.rows(), b.cols());
    assert_eq!(m, mb, "matmul_tn outer dims {m} vs {mb}");
    let mut out = Tensor::zeros(&[k, n]);
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let brow = &bd[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            if av != F::ZERO {
                let orow = &mut od[l * n..(l + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

pub fn transpose<F: Float>(a: &Tensor<F>) -> Tensor<F> {
    let (m, n) = (a.rows(), a.cols());
    let mut out = Tensor::zeros(&[n, m]);
    let ad = a.data();
    let od = out.data_mut();
    for i in 0..m {
        for j in 0..n {
            od[j * m + i] = ad[i * n + j];
        }
    }
    out
}

/// C = A * B^T for A [m x k], B [n x k], giving [m x n].
pub fn matmul_nt<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    matmul(a, &transpose(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64_slice(shape, v)
    }

    #[test]
    fn matmul_small() {
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_variants_agree_with_transposition() {
        let a = t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 5.0, -6.0]);
        let b = t(&[2, 4], &[1.0, 0.0, 2.0, 1.0, -1.0, 3.0, 0.0, 2.0]);
        let via_tn = matmul_tn(&a, &b);
        let via_t = matmul(&transpose(&a), &b);
        assert_eq!(via_tn, via_t);

        let c = t(
            &[4, 3],
            &[1.0, 2.0, 0.0, -1.0, 1.0, 1.0, 2.0, 0.0, 3.0, 0.0, 1.0, 2.0],
        );
        let via_nt = matmul_nt(&a, &c);
        let via_t2 = matmul(&a, &transpose(&c));
        assert_eq!(via_nt, via_t2);
    }
}

use crate::error::{mismatch, Error, Result};

use super::matrix::{matmul_into, norm2, DenseMatrix};

/// Dense order-N tensor.
///
/// Entries are stored row-major by multi-index `(i_1, …, i_N)`, last index
/// fastest. With this ordering `vectorize(g ×₁ A¹ ⋯ ×_N Aᴺ) = (A¹ ⊗ ⋯ ⊗ Aᴺ)·vectorize(g)`
/// with the factors in natural order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(&shape)?;
        if data.len() != len {
            return Err(mismatch("DenseTensor::new", len, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite tensor entry".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = checked_len(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index in storage order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = checked_len(&shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "multi-index has wrong order");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of range {n}");
            acc * n + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    fn split_at_mode(&self, mode: usize) -> (usize, usize, usize) {
        let p = self.shape[..mode].iter().product();
        let q = self.shape[mode + 1..].iter().product();
        (p, self.shape[mode], q)
    }

    fn check_mode(&self, mode: usize, context: &'static str) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::IndexOutOfRange {
                context,
                index: mode,
                limit: self.order(),
            });
        }
        Ok(())
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidInput("tensor order must be at least 1".into()));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "tensor dimensions must be positive, got {shape:?}"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::InvalidInput(format!("tensor shape {shape:?} overflows")))
}

/// Mode-`mode` unfolding (0-based): an `I_mode × ∏_{k≠mode} I_k` matrix whose
/// columns are the mode fibers.
///
/// Column `p·Q + q` holds the fiber with leading indices `p` (modes before
/// `mode`, row-major) and trailing indices `q` (modes after, row-major).
pub fn unfold(x: &DenseTensor, mode: usize) -> Result<DenseMatrix> {
    x.check_mode(mode, "unfold")?;
    let (p, n, q) = x.split_at_mode(mode);
    let mut out = vec![0.0; x.len()];
    let cols = p * q;
    for pi in 0..p {
        for i in 0..n {
            let src = &x.data[(pi * n + i) * q..(pi * n + i + 1) * q];
            out[i * cols + pi * q..i * cols + (pi + 1) * q].copy_from_slice(src);
        }
    }
    Ok(DenseMatrix::from_vec_unchecked(n, cols, out))
}

/// Inverse of [`unfold`].
pub fn fold(m: &DenseMatrix, shape: &[usize], mode: usize) -> Result<DenseTensor> {
    let len = checked_len(shape)?;
    if mode >= shape.len() {
        return Err(Error::IndexOutOfRange {
            context: "fold",
            index: mode,
            limit: shape.len(),
        });
    }
    let n = shape[mode];
    let p: usize = shape[..mode].iter().product();
    let q: usize = shape[mode + 1..].iter().product();
    if m.rows() != n || m.cols() != p * q || m.rows() * m.cols() != len {
        return Err(mismatch(
            "fold",
            format!("{}x{}", n, p * q),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    let cols = p * q;
    let md = m.data();
    let mut out = vec![0.0; len];
    for pi in 0..p {
        for i in 0..n {
            out[(pi * n + i) * q..(pi * n + i + 1) * q]
                .copy_from_slice(&md[i * cols + pi * q..i * cols + (pi + 1) * q]);
        }
    }
    Ok(DenseTensor::from_parts_unchecked(shape.to_vec(), out))
}

pub fn vectorize(x: &DenseTensor) -> Vec<f64> {
    x.data.clone()
}

pub fn devectorize(v: &[f64], shape: &[usize]) -> Result<DenseTensor> {
    DenseTensor::new(shape.to_vec(), v.to_vec())
}

/// `x ×_mode a`: every mode fiber is multiplied by `a`.
pub fn n_mode_product(x: &DenseTensor, a: &DenseMatrix, mode: usize) -> Result<DenseTensor> {
    x.check_mode(mode, "n_mode_product")?;
    let (p, n, q) = x.split_at_mode(mode);
    if a.cols() != n {
        return Err(mismatch("n_mode_product", format!("{n} columns"), a.cols()));
    }
    let j = a.rows();
    let mut out = vec![0.0; p * j * q];
    for pi in 0..p {
        matmul_into(
            a.data(),
            j,
            n,
            &x.data[pi * n * q..(pi + 1) * n * q],
            q,
            &mut out[pi * j * q..(pi + 1) * j * q],
        );
    }
    let mut shape = x.shape.clone();
    shape[mode] = j;
    Ok(DenseTensor::from_parts_unchecked(shape, out))
}

/// `x ×₁ a[0] ×₂ a[1] ⋯`, one product per mode.
pub fn multi_mode_product(x: &DenseTensor, factors: &[&DenseMatrix]) -> Result<DenseTensor> {
    if factors.len() != x.order() {
        return Err(mismatch("multi_mode_product", x.order(), factors.len()));
    }
    let mut y = x.clone();
    for (mode, a) in factors.iter().enumerate() {
        y = n_mode_product(&y, a, mode)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor {
        let mut rng = rng_from_seed(seed);
        DenseTensor::from_fn(shape.to_vec(), |_| StandardNormal.sample(&mut rng)).unwrap()
    }

    #[test]
    fn rejects_empty_and_zero_shapes() {
        assert!(DenseTensor::zeros(vec![]).is_err());
        assert!(DenseTensor::zeros(vec![2, 0]).is_err());
        assert!(DenseTensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn unfold_order_one_is_column() {
        let x = DenseTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let m = unfold(&x, 0).unwrap();
        assert_eq!(m.shape(), (3, 1));
        assert_eq!(m.data(), x.data());
    }

    #[test]
    fn unfold_matrix_rows_are_fibers() {
        let x = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // Mode-0 fibers: x[:, j]. Row i of the unfolding lists x[i, j] over j.
        let m0 = unfold(&x, 0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(m0.get(i, j), x.get(&[i, j]));
            }
        }
        let m1 = unfold(&x, 1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(m1.get(j, i), x.get(&[i, j]));
            }
        }
    }

    #[test]
    fn unfold_bad_mode() {
        let x = random_tensor(&[2, 3], 0);
        assert!(matches!(unfold(&x, 2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn fold_row_vector() {
        let m = DenseMatrix::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = fold(&m.transpose(), &[4], 0).unwrap();
        assert_eq!(t.shape(), &[4]);
        assert!(fold(&m, &[3], 0).is_err());
        assert!(fold(&m, &[2, 3], 1).is_err());
    }

    #[test]
    fn scalar_vectorizes_to_length_one() {
        let x = DenseTensor::new(vec![1], vec![5.0]).unwrap();
        assert_eq!(vectorize(&x), vec![5.0]);
    }

    #[test]
    fn n_mode_identity_and_vector() {
        let x = random_tensor(&[2, 3, 4], 1);
        let y = n_mode_product(&x, &DenseMatrix::identity(3), 1).unwrap();
        assert_eq!(x, y);

        let v = DenseTensor::new(vec![2], vec![1.0, -1.0]).unwrap();
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let y = n_mode_product(&v, &a, 0).unwrap();
        assert_eq!(y.data(), a.matvec(&[1.0, -1.0]).as_slice());
        assert!(n_mode_product(&v, &DenseMatrix::identity(3), 0).is_err());
    }

    #[test]
    fn n_mode_matches_elementwise_sum() {
        let x = random_tensor(&[2, 3, 2], 2);
        let mut rng = rng_from_seed(3);
        let a = DenseMatrix::from_fn(4, 3, |_, _| StandardNormal.sample(&mut rng));
        let y = n_mode_product(&x, &a, 1).unwrap();
        assert_eq!(y.shape(), &[2, 4, 2]);
        for i in 0..2 {
            for j in 0..4 {
                for k in 0..2 {
                    let expect: f64 = (0..3).map(|m| x.get(&[i, m, k]) * a.get(j, m)).sum();
                    assert!((y.get(&[i, j, k]) - expect).abs() < 1e-13);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn fold_unfold_roundtrip(shape in prop::collection::vec(1usize..5, 1..5), seed in any::<u64>()) {
            let x = random_tensor(&shape, seed);
            for mode in 0..shape.len() {
                let back = fold(&unfold(&x, mode).unwrap(), &shape, mode).unwrap();
                prop_assert_eq!(&back, &x);
            }
            let back = devectorize(&vectorize(&x), &shape).unwrap();
            prop_assert_eq!(&back, &x);
        }

        #[test]
        fn unfold_matches_fiber_enumeration(shape in prop::collection::vec(1usize..4, 1..5), seed in any::<u64>()) {
            let x = random_tensor(&shape, seed);
            for mode in 0..shape.len() {
                let m = unfold(&x, mode).unwrap();
                // Enumerate (leading, trailing) multi-indices independently.
                let lead: usize = shape[..mode].iter().product();
                let trail: usize = shape[mode + 1..].iter().product();
                for l in 0..lead {
                    for t in 0..trail {
                        let mut idx = vec![0; shape.len()];
                        let mut r = l;
                        for k in (0..mode).rev() { idx[k] = r % shape[k]; r /= shape[k]; }
                        let mut r = t;
                        for k in (mode + 1..shape.len()).rev() { idx[k] = r % shape[k]; r /= shape[k]; }
                        for i in 0..shape[mode] {
                            idx[mode] = i;
                            prop_assert_eq!(m.get(i, l * trail + t), x.get(&idx));
                        }
                    }
                }
            }
        }
    }
}

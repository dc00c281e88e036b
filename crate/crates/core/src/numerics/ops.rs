use serde::{Deserialize, Serialize};

use super::real::{gemm, Real};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => {
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            }
        }
    }

    /// Derivative expressed through the activation's output `y`. ReLU's
    /// derivative at exactly zero is zero.
    #[inline]
    pub fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

/// `y = x W + b` for `x: n x n_in`, `W: n_in x n_out`, `b: n_out`.
pub fn affine_forward_into<T: Real>(
    x: &[T],
    w: &[T],
    b: &[T],
    n: usize,
    n_in: usize,
    n_out: usize,
    y: &mut [T],
) {
    assert_eq!(b.len(), n_out);
    for row in y.chunks_exact_mut(n_out) {
        row.copy_from_slice(b);
    }
    gemm(n, n_in, n_out, x, false, w, false, y, true);
}

/// Gradients of `y = x W + b` given `upstream = dL/dy`:
/// `dX = upstream W^T`, `dW = x^T upstream`, `db = column sums of upstream`.
/// `dx` is skipped when `None` (first layer of a network).
#[allow(clippy::too_many_arguments)]
pub fn affine_backward_into<T: Real>(
    upstream: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    n_in: usize,
    n_out: usize,
    dx: Option<&mut [T]>,
    dw: &mut [T],
    db: &mut [T],
) {
    gemm(n_in, n, n_out, x, true, upstream, false, dw, false);
    let mut sums = vec![0.0f64; n_out];
    for row in upstream.chunks_exact(n_out) {
        for (s, &g) in sums.iter_mut().zip(row) {
            *s += g.wide();
        }
    }
    for (d, s) in db.iter_mut().zip(sums) {
        *d = T::of(s);
    }
    if let Some(dx) = dx {
        gemm(n, n_out, n_in, upstream, false, w, true, dx, false);
    }
}

fn check_affine_shapes(x: &Tensor, w: &Tensor, b_len: usize) -> Result<(usize, usize, usize)> {
    let (n, n_in) = x.dims2()?;
    let (w_in, n_out) = w.dims2()?;
    if w_in != n_in {
        return Err(Error::Shape(format!(
            "x is {n}x{n_in} but W is {w_in}x{n_out}"
        )));
    }
    if b_len != n_out {
        return Err(Error::Shape(format!(
            "bias has {b_len} entries, W has {n_out} columns"
        )));
    }
    Ok((n, n_in, n_out))
}

pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if b.shape().len() != 1 {
        return Err(Error::Shape(format!("bias must be 1-D, got {:?}", b.shape())));
    }
    let (n, n_in, n_out) = check_affine_shapes(x, w, b.len())?;
    let mut y = vec![0.0f32; n * n_out];
    affine_forward_into(x.data(), w.data(), b.data(), n, n_in, n_out, &mut y);
    Tensor::new(vec![n, n_out], y)
}

/// Returns `(dX, dW, db)`.
pub fn affine_backward(upstream: &Tensor, x: &Tensor, w: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, n_in, n_out) = check_affine_shapes(x, w, w.dims2()?.1)?;
    if upstream.dims2()? != (n, n_out) {
        return Err(Error::Shape(format!(
            "upstream is {:?}, expected [{n}, {n_out}]",
            upstream.shape()
        )));
    }
    let mut dx = vec![0.0f32; n * n_in];
    let mut dw = vec![0.0f32; n_in * n_out];
    let mut db = vec![0.0f32; n_out];
    affine_backward_into(
        upstream.data(),
        x.data(),
        w.data(),
        n,
        n_in,
        n_out,
        Some(&mut dx),
        &mut dw,
        &mut db,
    );
    Ok((
        Tensor::new(vec![n, n_in], dx)?,
        Tensor::new(vec![n_in, n_out], dw)?,
        Tensor::new(vec![n_out], db)?,
    ))
}

/// In place: `param <- param - lr * (grad + l2 * param)`.
pub fn sgd_step<T: Real>(param: &mut [T], grad: &[T], lr: f64, l2: f64) -> Result<()> {
    if param.len() != grad.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradients",
            param.len(),
            grad.len()
        )));
    }
    if !(lr >= 0.0 && lr.is_finite()) || !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sgd_step needs lr >= 0 and l2 >= 0, got lr={lr}, l2={l2}"
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient element {i}")));
    }
    for (p, g) in param.iter_mut().zip(grad) {
        let pw = p.wide();
        *p = T::of(pw - lr * (g.wide() + l2 * pw));
    }
    Ok(())
}

pub fn dot<T: Real>(u: &[T], v: &[T]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a.wide() * b.wide()).sum()
}

pub fn l2_norm<T: Real>(u: &[T]) -> f64 {
    dot(u, u).sqrt()
}

/// `u.v / (|u| |v|)`, clamped into [-1, 1].
pub fn cosine_similarity<T: Real>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with {} and {} dims",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if !nu.is_finite() || !nv.is_finite() {
        return Err(Error::NonFinite("cosine_similarity input".into()));
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm("cosine_similarity input".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f32]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn v(data: &[f32]) -> Tensor {
        Tensor::vector(data.to_vec()).unwrap()
    }

    #[test]
    fn affine_forward_examples() {
        let eye = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let y = affine_forward(&t(&[&[1.0, 2.0]]), &eye, &v(&[0.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);

        let zero = t(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let y = affine_forward(&t(&[&[1.0, 2.0]]), &zero, &v(&[3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);

        let diag = t(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let y = affine_forward(&t(&[&[1.0, 1.0]]), &diag, &v(&[1.0, 1.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn affine_forward_shape_mismatch() {
        let w = t(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert!(matches!(
            affine_forward(&t(&[&[1.0, 2.0, 3.0]]), &w, &v(&[0.0; 3])),
            Err(Error::Shape(_))
        ));
        assert!(affine_forward(&t(&[&[1.0, 2.0]]), &w, &v(&[0.0; 2])).is_err());
    }

    #[test]
    fn affine_backward_examples() {
        let eye = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let x = t(&[&[1.0, 2.0]]);
        let (dx, dw, db) = affine_backward(&t(&[&[1.0, 1.0]]), &x, &eye).unwrap();
        assert_eq!(dw.data(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(db.data(), &[1.0, 1.0]);
        assert_eq!(dx.data(), &[1.0, 1.0]);

        let (dx, dw, db) = affine_backward(&t(&[&[0.0, 0.0]]), &x, &eye).unwrap();
        assert!(dx.data().iter().chain(dw.data()).chain(db.data()).all(|&g| g == 0.0));

        assert!(affine_backward(&t(&[&[1.0, 1.0, 1.0]]), &x, &eye).is_err());
    }

    #[test]
    fn sgd_examples() {
        let mut p = [1.0f32];
        sgd_step(&mut p, &[0.5], 0.1, 0.0).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-7);

        let mut p = [1.25f32, -3.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.1, 0.0).unwrap();
        assert_eq!(p, [1.25, -3.0]);

        let mut p = [1.0f32];
        sgd_step(&mut p, &[0.0], 0.1, 0.1).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-7);
    }

    #[test]
    fn sgd_rejects_non_finite_gradient() {
        let mut p = [1.0f32, 2.0];
        assert!(matches!(
            sgd_step(&mut p, &[0.0, f32::INFINITY], 0.1, 0.0),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(p, [1.0, 2.0]);
        assert!(sgd_step(&mut p, &[0.0, 0.0], -1.0, 0.0).is_err());
    }

    #[test]
    fn cosine_examples() {
        let u = [0.3f64, -1.2, 4.0];
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0f64, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.70710678).abs() < 1e-8);
        assert!(matches!(
            cosine_similarity(&[0.0f64, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm(_))
        ));
        assert!(cosine_similarity(&[1.0f64], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Relu.apply(-2.0f64), 0.0);
        assert_eq!(Activation::Relu.derivative_from_output(0.0f64), 0.0);
        assert_eq!(Activation::Relu.derivative_from_output(0.5f64), 1.0);
        let s = Activation::Sigmoid.apply(0.0f64);
        assert_eq!(s, 0.5);
        assert!(Activation::Sigmoid.apply(-800.0f64) >= 0.0);
        assert!(Activation::Sigmoid.apply(800.0f64) <= 1.0);
        assert_eq!(Activation::Sigmoid.derivative_from_output(0.5f64), 0.25);
    }
}

//! Dense numeric kernels shared by the tape operations.

use super::Scalar;

/// Whether an operand is used as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// `c[m×n] (+)= op(a) · op(b)` with every buffer row-major and contiguous.
///
/// `a` holds `m×k` (or `k×m` when transposed); `b` holds `k×n` (or `n×k`).
/// When `accumulate` is false `c` is overwritten.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: Trans,
    b: &[T],
    tb: Trans,
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs buffer");
    assert_eq!(b.len(), k * n, "gemm: rhs buffer");
    assert_eq!(c.len(), m * n, "gemm: output buffer");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match ta {
        Trans::No => (k as isize, 1),
        Trans::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (n as isize, 1),
        Trans::Yes => (1, k as isize),
    };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the asserts above bound every index the strides can address.
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    let s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    s + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (y, &x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// In-place max-subtracted softmax over one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = T::one() / total;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Row-wise softmax over a `rows × cols` buffer.
pub fn softmax_rows<T: Scalar>(data: &[T], cols: usize) -> Vec<T> {
    let mut out = data.to_vec();
    for row in out.chunks_exact_mut(cols) {
        softmax_in_place(row);
    }
    out
}

pub(crate) const GELU_COEFF: f64 = 0.044_715;

/// `sqrt(2/pi)`
pub(crate) const GELU_SCALE: f64 = 0.797_884_560_802_865_4;

/// Tanh-approximated GELU; returns the output and the inner tanh value.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> (T, T) {
    let c = T::of(GELU_COEFF);
    let s = T::of(GELU_SCALE);
    let t = (s * (x + c * x * x * x)).tanh();
    (T::of(0.5) * x * (T::one() + t), t)
}

/// Derivative of the tanh GELU given `x` and the saved tanh value.
#[inline]
pub fn gelu_grad<T: Scalar>(x: T, t: T) -> T {
    let c = T::of(GELU_COEFF);
    let s = T::of(GELU_SCALE);
    let half = T::of(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * s * (T::one() + T::of(3.0) * c * x * x)
}

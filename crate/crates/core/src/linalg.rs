//! Row-major dense matrix products on top of `matrixmultiply`.
//!
//! `matrixmultiply` uses a fixed blocking and summation order for a given
//! shape and CPU feature set, so results are bit-for-bit repeatable.

/// Storage order of an operand as it enters a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// Use the row-major matrix as stored.
    N,
    /// Use its transpose.
    T,
}

/// `c = alpha * op(a) * op(b) + beta * c` where `op(a)` is `m x k`,
/// `op(b)` is `k x n` and `c` is `m x n`, all row-major.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    op_a: Op,
    b: &[f64],
    op_b: Op,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "lhs has wrong size");
    assert_eq!(b.len(), k * n, "rhs has wrong size");
    assert_eq!(c.len(), m * n, "output has wrong size");
    let (rsa, csa) = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: the asserts above guarantee every index the kernel touches,
    // derived from (m, k, n) and the strides, lies inside its slice.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
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

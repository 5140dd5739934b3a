/// Strided matrix operand: `(data, row stride, column stride)`.
pub(super) type View<'a> = (&'a [f64], usize, usize);

fn check(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>) {
    let (ad, rsa, csa) = a;
    let (bd, rsb, csb) = b;
    assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < ad.len(), "gemm: A out of bounds");
    assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < bd.len(), "gemm: B out of bounds");
}

/// # Safety
/// `c` must be valid for `m * n` writes (and reads when `beta != 0`), and
/// the operands must satisfy [`check`].
unsafe fn raw(m: usize, k: usize, n: usize, alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: *mut f64) {
    let (ad, rsa, csa) = a;
    let (bd, rsb, csb) = b;
    // SAFETY: forwarded from the caller.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            ad.as_ptr(),
            rsa as isize,
            csa as isize,
            bd.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c,
            n as isize,
            1,
        );
    }
}

/// `C = alpha * A B + beta * C` for `A: m x k`, `B: k x n` and a row-major
/// contiguous `C: m x n`.
pub(super) fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    check(m, k, n, a, b);
    assert!(c.len() >= m * n, "gemm: C out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds checked above; `c` is an exclusive borrow, so it does
    // not alias `a` or `b`.
    unsafe { raw(m, k, n, alpha, a, b, beta, c.as_mut_ptr()) }
}

/// Freshly allocated row-major `A B` (`m x n`), written without a zeroing
/// pass.
pub(super) fn gemm_new(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>) -> Vec<f64> {
    check(m, k, n, a, b);
    let mut c = Vec::with_capacity(m * n);
    if m > 0 && n > 0 {
        // SAFETY: bounds checked above; with `beta == 0` the kernel writes
        // every element of the `m * n` buffer without reading it, after
        // which the length can be set.
        unsafe {
            raw(m, k, n, 1.0, a, b, 0.0, c.as_mut_ptr());
            c.set_len(m * n);
        }
    }
    c
}

//! Row-major GEMM on top of `matrixmultiply`.

/// `C = A * B + beta * C` for logical shapes `A: m x k`, `B: k x n`,
/// `C: m x n`. `a_t` / `b_t` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe the stated row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// A strided matrix window into a slice: element `(r, c)` lives at
/// `off + r * rs + c * cs`.
#[derive(Debug, Clone, Copy)]
pub struct View {
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn row_major(off: usize, cols: usize) -> Self {
        Self { off, rs: cols, cs: 1 }
    }

    pub fn t(self) -> Self {
        Self { off: self.off, rs: self.cs, cs: self.rs }
    }

    fn fits(&self, rows: usize, cols: usize, len: usize) -> bool {
        rows == 0 || cols == 0 || self.off + (rows - 1) * self.rs + (cols - 1) * self.cs < len
    }
}

/// `C += A * B` on strided windows, `A: m x k`, `B: k x n`, `C: m x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], va: View, b: &[f64], vb: View, c: &mut [f64], vc: View) {
    assert!(va.fits(m, k, a.len()) && vb.fits(k, n, b.len()) && vc.fits(m, n, c.len()), "gemm window out of bounds");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: every addressed element was bounds-checked above; `c` is
    // uniquely borrowed and does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr().add(va.off),
            va.rs as isize,
            va.cs as isize,
            b.as_ptr().add(vb.off),
            vb.rs as isize,
            vb.cs as isize,
            1.0,
            c.as_mut_ptr().add(vc.off),
            vc.rs as isize,
            vc.cs as isize,
        );
    }
}

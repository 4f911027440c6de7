use num_traits::Float;

/// Element type of tensors. The whole math stack (tape, model forward,
/// optimizer) is generic over this so the same code runs in f32 for
/// training and in f64 "shadow mode" for tight finite-difference checks.
pub trait Scalar:
    Float + num_traits::NumAssign + Default + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f32(x: f32) -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f32(self) -> f32;
    fn to_f64(self) -> f64;

    /// C := alpha * op(A) * op(B) + beta * C with explicit row/col strides,
    /// row-major buffers. Transposition is expressed through the strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn from_f32(x: f32) -> Self {
        x
    }
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f32(self) -> f32 {
        self
    }
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
        unsafe {
            matrixmultiply::sgemm(
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
                rsc,
                csc,
            );
        }
    }
}

impl Scalar for f64 {
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
    fn to_f64(self) -> f64 {
        self
    }

    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len(), rsc, csc);
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
                rsc,
                csc,
            );
        }
    }
}

/// Validate that the strided index ranges stay inside the slices before
/// handing raw pointers to the gemm kernel.
#[allow(clippy::too_many_arguments)]
fn check_gemm_bounds(
    m: usize,
    k: usize,
    n: usize,
    a_len: usize,
    rsa: isize,
    csa: isize,
    b_len: usize,
    rsb: isize,
    csb: isize,
    c_len: usize,
    rsc: isize,
    csc: isize,
) {
    let max_index = |rows: usize, cols: usize, rs: isize, cs: isize| -> usize {
        if rows == 0 || cols == 0 {
            return 0;
        }
        let r = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
        assert!(r >= 0, "negative strides are not used here");
        r as usize + 1
    };
    assert!(max_index(m, k, rsa, csa) <= a_len, "gemm A out of bounds");
    assert!(max_index(k, n, rsb, csb) <= b_len, "gemm B out of bounds");
    assert!(max_index(m, n, rsc, csc) <= c_len, "gemm C out of bounds");
}

/// Plain row-major matmul: C := A(m×k) · B(k×n), overwriting C.
pub fn matmul_into<E: Scalar>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    gemm_rowmajor(m, k, n, E::one(), a, false, b, false, E::zero(), c);
}

/// Row-major gemm with optional transposes expressed through strides.
/// `a` is m×k after transposition, `b` is k×n after transposition.
#[allow(clippy::too_many_arguments)]
pub fn gemm_rowmajor<E: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: E,
    a: &[E],
    ta: bool,
    b: &[E],
    tb: bool,
    beta: E,
    c: &mut [E],
) {
    // Transposed operands are views into the untransposed storage:
    // op(A)=Aᵀ means storage is k×m row-major, so rsa=1, csa=m.
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };

    #[cfg(feature = "parallel")]
    {
        // Split output rows across threads; each row of C has a single
        // writer and a fixed reduction order, so results are bitwise
        // identical to the serial path.
        const PAR_THRESHOLD: usize = 1 << 20;
        if m * k * n >= PAR_THRESHOLD && m >= 2 && rayon::current_num_threads() > 1 {
            let chunk = m.div_ceil(rayon::current_num_threads());
            let rows_per_chunk = chunk.max(1);
            use rayon::prelude::*;
            c.par_chunks_mut(rows_per_chunk * n)
                .enumerate()
                .for_each(|(ci, c_chunk)| {
                    let row0 = ci * rows_per_chunk;
                    let rows = c_chunk.len() / n;
                    let a_sub = if ta {
                        // Column offset within transposed A.
                        &a[row0..]
                    } else {
                        &a[row0 * k..]
                    };
                    E::gemm_strided(
                        rows, k, n, alpha, a_sub, rsa, csa, b, rsb, csb, beta, c_chunk, n as isize,
                        1,
                    );
                });
            return;
        }
    }

    E::gemm_strided(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, n as isize, 1);
}

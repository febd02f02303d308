//! Floating point element types.
//!
//! Training and inference run in `f32`. `f64` exists for finite-difference
//! gradient verification; its matrix product accumulates strictly in index
//! order so results are bit-comparable with naive loop references.

use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

pub trait Scalar:
    Float + Debug + Default + Sum + AddAssign + SubAssign + MulAssign + DivAssign + Send + Sync + 'static
{
    /// Short tag used in diagnostics.
    const NAME: &'static str;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = alpha * op(a) * op(b) + beta * c` on row-major operands where
    /// `op(a)` is `m x k` and `op(b)` is `k x n`. `ta`/`tb` select the
    /// transposed interpretation of the stored matrices.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        ta: bool,
        b: &[Self],
        tb: bool,
        beta: Self,
        c: &mut [Self],
    );
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    // stored matrix is (rows x cols) when not transposed
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

fn check_gemm_lens(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert!(a >= m * k, "gemm: lhs too short");
    assert!(b >= k * n, "gemm: rhs too short");
    assert!(c >= m * n, "gemm: output too short");
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        ta: bool,
        b: &[f32],
        tb: bool,
        beta: f32,
        c: &mut [f32],
    ) {
        check_gemm_lens(m, k, n, a.len(), b.len(), c.len());
        if m == 0 || n == 0 {
            return;
        }
        let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
        let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
        // SAFETY: operand lengths were checked above against the logical
        // extents, and every stride pair addresses within those extents.
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
                n as isize,
                1,
            );
        }
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        ta: bool,
        b: &[f64],
        tb: bool,
        beta: f64,
        c: &mut [f64],
    ) {
        check_gemm_lens(m, k, n, a.len(), b.len(), c.len());
        let (rsa, csa) = strides(m, k, ta);
        let (rsb, csb) = strides(k, n, tb);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    let av = a[(i as isize * rsa + p as isize * csa) as usize];
                    let bv = b[(p as isize * rsb + j as isize * csb) as usize];
                    acc += av * bv;
                }
                let slot = &mut c[i * n + j];
                *slot = if beta == 0.0 { alpha * acc } else { alpha * acc + beta * *slot };
            }
        }
    }
}

use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating point element type of model parameters and activations.
///
/// Training runs in `f32`; gradient checks run the same code in `f64`.
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn erf(self) -> Self;

    /// `c = alpha * a * b + beta * c` on strided row/column layouts, where
    /// `a` is `m x k`, `b` is `k x n` and `c` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], usize, usize),
        b: (&[Self], usize, usize),
        beta: Self,
        c: (&mut [Self], usize, usize),
    );
}

fn extent(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_real {
    ($t:ty, $erf:path, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn erf(self) -> Self {
                $erf(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], usize, usize),
                b: (&[Self], usize, usize),
                beta: Self,
                c: (&mut [Self], usize, usize),
            ) {
                assert!(extent(m, k, a.1, a.2) <= a.0.len(), "gemm: lhs out of range");
                assert!(extent(k, n, b.1, b.2) <= b.0.len(), "gemm: rhs out of range");
                assert!(extent(m, n, c.1, c.2) <= c.0.len(), "gemm: output out of range");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the asserts above bound every index the kernel touches.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr(),
                        a.1 as isize,
                        a.2 as isize,
                        b.0.as_ptr(),
                        b.1 as isize,
                        b.2 as isize,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1 as isize,
                        c.2 as isize,
                    );
                }
            }
        }
    };
}

impl_real!(f32, libm::erff, matrixmultiply::sgemm);
impl_real!(f64, libm::erf, matrixmultiply::dgemm);

/// Row-major helpers over contiguous buffers.
pub(crate) mod mat {
    use super::Real;

    /// `c (+)= a * b`, a: m x k, b: k x n.
    pub fn nn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
        let beta = if acc { T::one() } else { T::zero() };
        T::gemm(m, k, n, T::one(), (a, k, 1), (b, n, 1), beta, (c, n, 1));
    }

    /// `c (+)= a^T * b`, a stored k x m, b: k x n.
    pub fn tn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
        let beta = if acc { T::one() } else { T::zero() };
        T::gemm(m, k, n, T::one(), (a, 1, m), (b, n, 1), beta, (c, n, 1));
    }

    /// `c (+)= a * b^T`, a: m x k, b stored n x k.
    pub fn nt<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
        let beta = if acc { T::one() } else { T::zero() };
        T::gemm(m, k, n, T::one(), (a, k, 1), (b, 1, k), beta, (c, n, 1));
    }

    pub fn add_bias<T: Real>(x: &mut [T], bias: &[T]) {
        for row in x.chunks_exact_mut(bias.len()) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
    }

    pub fn col_sum_into<T: Real>(x: &[T], out: &mut [T]) {
        for row in x.chunks_exact(out.len()) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
    }
}

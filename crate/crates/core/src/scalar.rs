//! Scalar abstraction: every numeric routine in this crate is generic over
//! the element type, so the same code runs in f32 (training) and f64
//! (gradient verification).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point element type of tensors, images and embeddings.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    /// Short label used in reports ("f32" / "f64").
    const LABEL: &'static str;

    /// Dense matrix multiply `c = alpha * op(a) @ op(b) + beta * c` on
    /// row-major buffers, where `op` is transpose when the corresponding
    /// flag is set. Logical dimensions: op(a) is m×k, op(b) is k×n, c is
    /// m×n. Stored dimensions are (m,k)/(k,m) and (k,n)/(n,k) accordingly.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

/// Row/column strides for one gemm operand.
fn operand_strides(trans: bool, rows_logical: usize, cols_logical: usize) -> (isize, isize) {
    if trans {
        // Stored as cols_logical x rows_logical row-major.
        (1, rows_logical as isize)
    } else {
        let _ = rows_logical;
        (cols_logical as isize, 1)
    }
}

macro_rules! impl_scalar {
    ($ty:ty, $label:expr, $mm:path) => {
        impl Scalar for $ty {
            const LABEL: &'static str = $label;

            fn gemm(
                trans_a: bool,
                trans_b: bool,
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert_eq!(a.len(), m * k, "gemm: operand A length");
                assert_eq!(b.len(), k * n, "gemm: operand B length");
                assert_eq!(c.len(), m * n, "gemm: operand C length");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    for v in c.iter_mut() {
                        *v *= beta;
                    }
                    return;
                }
                let (rsa, csa) = operand_strides(trans_a, m, k);
                let (rsb, csb) = operand_strides(trans_b, k, n);
                unsafe {
                    $mm(
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
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_product() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut c = [0.0f64; 4];
        f64::gemm(false, false, 2, 3, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn gemm_transpose_flags() {
        // A (2x3) stored transposed as 3x2, B (3x2) stored transposed as 2x3.
        let a_t = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b_t = [7.0f64, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c = [0.0f64; 4];
        f64::gemm(true, true, 2, 3, 2, 1.0, &a_t, &b_t, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn gemm_beta_accumulates() {
        let a = [2.0f32];
        let b = [3.0f32];
        let mut c = [10.0f32];
        f32::gemm(false, false, 1, 1, 1, 1.0, &a, &b, 1.0, &mut c);
        assert_eq!(c[0], 16.0);
    }
}

//! Worker-count control shared by the dense linear algebra and the block
//! assembly.

use faer::Par;

/// Parallelism for dense kernels, following the current rayon pool.
pub fn par() -> Par {
    match rayon::current_num_threads() {
        0 | 1 => Par::Seq,
        n => Par::rayon(n),
    }
}

/// Size the global rayon pool and align the factorization parallelism with
/// it. Only the first call can resize the pool; later calls keep the
/// existing pool and return its size.
pub fn configure_threads(threads: Option<usize>) -> usize {
    if let Some(n) = threads.filter(|n| *n > 0) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .start_handler(|_| flush_subnormals())
            .build_global();
    }
    faer::set_global_parallelism(par());
    rayon::current_num_threads()
}

/// Clear the upper halves of the vector registers after wide SIMD kernels.
/// Without this, scalar libm calls that follow a dense product can run an
/// order of magnitude slower on AVX-512 hardware.
#[inline]
pub fn clear_upper_vector_state() {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: the feature was detected at runtime just above.
            unsafe { zero_upper() }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn zero_upper() {
    std::arch::x86_64::_mm256_zeroupper();
}

/// Flush subnormal results and operands to zero on the calling thread.
/// Kernel tails and triangular solves otherwise spend most of their time in
/// microcode assists.
#[inline]
pub fn flush_subnormals() {
    #[cfg(target_arch = "x86_64")]
    {
        #[allow(deprecated)]
        // SAFETY: MXCSR is always present on x86_64; only the FTZ and DAZ bits change.
        unsafe {
            use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
            _mm_setcsr(_mm_getcsr() | 0x8040);
        }
    }
}

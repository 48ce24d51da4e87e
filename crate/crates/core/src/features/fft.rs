//! Iterative radix-2 complex FFT with precomputed twiddles.

/// Plan for a fixed power-of-two length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddle_re: Vec<f64>,
    twiddle_im: Vec<f64>,
}

impl Fft {
    /// `n` must be a power of two and at least 2.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n.is_power_of_two(), "FFT length must be 2^k");
        let half = n / 2;
        let mut twiddle_re = Vec::with_capacity(half);
        let mut twiddle_im = Vec::with_capacity(half);
        for k in 0..half {
            let angle = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
            twiddle_re.push(angle.cos());
            twiddle_im.push(angle.sin());
        }
        Fft {
            n,
            twiddle_re,
            twiddle_im,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place forward transform, decimation in time.
    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        assert_eq!(re.len(), n);
        assert_eq!(im.len(), n);

        // Bit-reversal permutation.
        let mut j = 0usize;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }

        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let wr = self.twiddle_re[k * step];
                    let wi = self.twiddle_im[k * step];
                    let i0 = start + k;
                    let i1 = i0 + half;
                    let tr = re[i1] * wr - im[i1] * wi;
                    let ti = re[i1] * wi + im[i1] * wr;
                    re[i1] = re[i0] - tr;
                    im[i1] = im[i0] - ti;
                    re[i0] += tr;
                    im[i0] += ti;
                }
            }
            len <<= 1;
        }
    }
}

//! Dense loops behind the layers. Every reduction runs in a fixed order so
//! results are bit-reproducible.

use super::real::Real;

/// `y += a * x`
#[inline]
pub fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight interleaved partial sums.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
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
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    /// For each patch row `(c, ki, kj)`: the valid output x-range and the
    /// input offset, shared by `im2col` and `col2im`.
    #[inline]
    fn x_range(&self, kj: usize) -> (usize, usize, isize) {
        let pad = (self.kernel / 2) as isize;
        let dx = kj as isize - pad;
        let lo = (-dx).max(0) as usize;
        let hi = (self.width as isize - dx).min(self.width as isize).max(0) as usize;
        (lo, hi, dx)
    }
}

/// Unfolds a C x H x W input into a (C k k) x (H W) patch matrix for a
/// same-padded stride-1 convolution.
pub fn im2col<T: Real>(input: &[T], g: ConvGeometry, cols: &mut Vec<T>) {
    let (h, w, k) = (g.height, g.width, g.kernel);
    let pad = (k / 2) as isize;
    cols.clear();
    cols.resize(g.rows() * g.plane(), T::zero());
    for c in 0..g.channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * h * w..(row + 1) * h * w];
                let (lo, hi, dx) = g.x_range(kj);
                if lo >= hi {
                    continue;
                }
                for y in 0..h {
                    let iy = y as isize + ki as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &src_row[(lo as isize + dx) as usize..(hi as isize + dx) as usize];
                    dst[y * w + lo..y * w + hi].copy_from_slice(src);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub fn col2im<T: Real>(cols: &[T], g: ConvGeometry, input_grad: &mut [T]) {
    let (h, w, k) = (g.height, g.width, g.kernel);
    let pad = (k / 2) as isize;
    input_grad.iter_mut().for_each(|v| *v = T::zero());
    for c in 0..g.channels {
        let plane = &mut input_grad[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * h * w..(row + 1) * h * w];
                let (lo, hi, dx) = g.x_range(kj);
                if lo >= hi {
                    continue;
                }
                for y in 0..h {
                    let iy = y as isize + ki as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut dst_row[(lo as isize + dx) as usize..(hi as isize + dx) as usize];
                    for (d, &s) in dst.iter_mut().zip(&src[y * w + lo..y * w + hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 - i as f64 * 0.01).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    /// `<im2col(x), y> == <x, col2im(y)>` for random x, y.
    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        let g = ConvGeometry { channels: 2, height: 5, width: 4, kernel: 3 };
        let mut r = crate::rng::seeded(1);
        let x: Vec<f64> = (0..2 * 5 * 4).map(|_| crate::rng::uniform(&mut r, -1.0, 1.0)).collect();
        let y: Vec<f64> = (0..g.rows() * g.plane()).map(|_| crate::rng::uniform(&mut r, -1.0, 1.0)).collect();
        let mut cols = Vec::new();
        im2col(&x, g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, g, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn center_row_of_im2col_is_the_input() {
        let g = ConvGeometry { channels: 1, height: 3, width: 3, kernel: 3 };
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        let mut cols = Vec::new();
        im2col(&x, g, &mut cols);
        assert_eq!(&cols[4 * 9..5 * 9], x.as_slice());
        // top-left tap sees the input shifted down-right with zero fill
        assert_eq!(&cols[0..9], &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
    }
}

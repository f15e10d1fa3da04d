//! Box-window SSIM with an exact backward pass wrt the second image.

use crate::image::Image;
use crate::num::Real;

pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

/// Mirror index without repeating the edge (`-1 → 1`, `n → n-2`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    // Windows never reach past one full mirror for the sizes we allow.
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Local statistics of one channel at one pixel.
#[derive(Debug, Clone, Copy)]
struct Moments<T> {
    mx: T,
    my: T,
    exx: T,
    eyy: T,
    exy: T,
}

fn moments<T: Real>(a: &Image<T>, b: &Image<T>, c: usize, x: usize, y: usize, window: usize) -> Moments<T> {
    let r = (window / 2) as isize;
    let (w, h) = (a.width(), a.height());
    let mut m = Moments {
        mx: T::zero(),
        my: T::zero(),
        exx: T::zero(),
        eyy: T::zero(),
        exy: T::zero(),
    };
    for dy in -r..=r {
        let yy = reflect(y as isize + dy, h);
        for dx in -r..=r {
            let xx = reflect(x as isize + dx, w);
            let (va, vb) = (a.get(xx, yy, c), b.get(xx, yy, c));
            m.mx += va;
            m.my += vb;
            m.exx += va * va;
            m.eyy += vb * vb;
            m.exy += va * vb;
        }
    }
    let inv = T::one() / T::from_usize_lossy(window * window);
    Moments {
        mx: m.mx * inv,
        my: m.my * inv,
        exx: m.exx * inv,
        eyy: m.eyy * inv,
        exy: m.exy * inv,
    }
}

/// SSIM and its partials wrt `(my, eyy, exy)`.
fn ssim_terms<T: Real>(m: &Moments<T>) -> (T, [T; 3]) {
    let two = T::lit(2.0);
    let (c1, c2) = (T::lit(SSIM_C1), T::lit(SSIM_C2));
    let sxx = m.exx - m.mx * m.mx;
    let syy = m.eyy - m.my * m.my;
    let sxy = m.exy - m.mx * m.my;
    let a1 = two * m.mx * m.my + c1;
    let a2 = two * sxy + c2;
    let b1 = m.mx * m.mx + m.my * m.my + c1;
    let b2 = sxx + syy + c2;
    let d = b1 * b2;
    let s = a1 * a2 / d;
    let d_my = (two * m.mx * a2 - two * m.mx * a1) / d - s * (two * m.my * b2 - two * m.my * b1) / d;
    let d_eyy = -s / b2;
    let d_exy = two * a1 / d;
    (s, [d_my, d_eyy, d_exy])
}

/// Channel-averaged SSIM map (one channel) with a `window × window` box
/// filter and reflective padding.
pub fn ssim_map<T: Real>(a: &Image<T>, b: &Image<T>, window: usize) -> Image<T> {
    assert!(a.same_shape(b), "ssim operands differ in shape");
    assert!(window % 2 == 1, "window must be odd");
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let inv_c = T::one() / T::from_usize_lossy(ch);
    Image::from_fn(w, h, 1, |x, y, _| {
        let mut acc = T::zero();
        for c in 0..ch {
            acc += ssim_terms(&moments(a, b, c, x, y, window)).0;
        }
        acc * inv_c
    })
}

/// Accumulates `Σ_p upstream(p) · ∂SSIM(p)/∂b` into `grad_b`.
pub fn ssim_backward<T: Real>(a: &Image<T>, b: &Image<T>, window: usize, upstream: &Image<T>, grad_b: &mut Image<T>) {
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let r = (window / 2) as isize;
    let inv_k = T::one() / T::from_usize_lossy(window * window);
    let inv_c = T::one() / T::from_usize_lossy(ch);
    let two = T::lit(2.0);
    for y in 0..h {
        for x in 0..w {
            let g = upstream.at(x, y);
            if g == T::zero() {
                continue;
            }
            for c in 0..ch {
                let (_, [d_my, d_eyy, d_exy]) = ssim_terms(&moments(a, b, c, x, y, window));
                let scale = g * inv_c * inv_k;
                for dy in -r..=r {
                    let yy = reflect(y as isize + dy, h);
                    for dx in -r..=r {
                        let xx = reflect(x as isize + dx, w);
                        let (va, vb) = (a.get(xx, yy, c), b.get(xx, yy, c));
                        let i = grad_b.index(xx, yy, c);
                        grad_b.as_mut_slice()[i] += scale * (d_my + d_eyy * two * vb + d_exy * va);
                    }
                }
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::image::{Image, Mask};
use crate::num::Real;

/// Which side image the center view is reconstructed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Sample `I_l(x + d)`.
    Left,
    /// Sample `I_r(x − d)`.
    Right,
}

impl Side {
    #[inline]
    fn sign<T: Real>(self) -> T {
        match self {
            Side::Left => T::one(),
            Side::Right => -T::one(),
        }
    }
}

/// Horizontal backward warp with linear interpolation along the row.
/// Samples leaving `[0, W−1]` are clamped to the border and flagged in the
/// returned mask.
pub fn warp_horizontal<T: Real>(target: &Image<T>, disp: &Image<T>, side: Side) -> (Image<T>, Mask) {
    let (w, h, ch) = (target.width(), target.height(), target.channels());
    assert_eq!((disp.width(), disp.height()), (w, h), "disparity map size");
    let mut out = Image::zeros(w, h, ch);
    let mut mask = Mask::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let s = sample_pos(x, disp.at(x, y), side, w);
            mask.set(x, y, s.in_bounds);
            for c in 0..ch {
                let v = (T::one() - s.frac) * target.get(s.x0, y, c) + s.frac * target.get(s.x1, y, c);
                out.set(x, y, c, v);
            }
        }
    }
    (out, mask)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SamplePos<T> {
    pub x0: usize,
    pub x1: usize,
    pub frac: T,
    pub in_bounds: bool,
}

#[inline]
pub(crate) fn sample_pos<T: Real>(x: usize, d: T, side: Side, w: usize) -> SamplePos<T> {
    let xs = T::from_usize_lossy(x) + side.sign::<T>() * d;
    let last = T::from_usize_lossy(w - 1);
    let in_bounds = xs >= T::zero() && xs <= last;
    if w == 1 {
        return SamplePos {
            x0: 0,
            x1: 0,
            frac: T::zero(),
            in_bounds,
        };
    }
    let xc = xs.max(T::zero()).min(last);
    let x0 = xc.floor().to_usize().unwrap_or(0).min(w - 2);
    SamplePos {
        x0,
        x1: x0 + 1,
        frac: xc - T::from_usize_lossy(x0),
        in_bounds,
    }
}

/// `∂warped/∂d` per pixel and channel; zero where the sample is clamped.
pub(crate) fn warp_slope<T: Real>(target: &Image<T>, disp: &Image<T>, side: Side) -> Image<T> {
    let (w, h, ch) = (target.width(), target.height(), target.channels());
    Image::from_fn(w, h, ch, |x, y, c| {
        let s = sample_pos(x, disp.at(x, y), side, w);
        if !s.in_bounds || s.x0 == s.x1 {
            T::zero()
        } else {
            side.sign::<T>() * (target.get(s.x1, y, c) - target.get(s.x0, y, c))
        }
    })
}

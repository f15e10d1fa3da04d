use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded lattice value noise, smoothstep-interpolated, summed over a few
/// octaves. Band-limited by construction: no energy above
/// `frequency · 2^(octaves-1)` cycles per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueNoise {
    pub seed: u64,
    /// Lattice cells per world unit at the first octave.
    pub frequency: f64,
    pub octaves: u32,
    /// Output range per channel.
    pub low: f64,
    pub high: f64,
}

impl ValueNoise {
    pub fn new(seed: u64, frequency: f64) -> Self {
        Self {
            seed,
            frequency,
            octaves: 2,
            low: 0.1,
            high: 0.9,
        }
    }

    fn lattice(&self, cell: [i64; 3], channel: u64, octave: u32) -> f64 {
        let mut h = splitmix64(self.seed ^ (channel << 56) ^ ((octave as u64) << 48));
        for c in cell {
            h = splitmix64(h ^ c as u64);
        }
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn octave(&self, p: Vec3<f64>, channel: u64, octave: u32) -> f64 {
        let f = self.frequency * (1u64 << octave) as f64;
        let q = [p.x * f, p.y * f, p.z * f];
        let base = q.map(|v| v.floor() as i64);
        let s = [0, 1, 2].map(|a| {
            let t = q[a] - base[a] as f64;
            t * t * (3.0 - 2.0 * t)
        });
        let mut acc = 0.0;
        for k in 0..8 {
            let bit = |a: usize| ((k >> a) & 1) as i64;
            let mut w = 1.0;
            for (a, sa) in s.iter().enumerate() {
                w *= if bit(a) == 1 { *sa } else { 1.0 - *sa };
            }
            acc += w * self.lattice([base[0] + bit(0), base[1] + bit(1), base[2] + bit(2)], channel, octave);
        }
        acc
    }

    /// RGB value at `p`, each channel in `[low, high]`.
    pub fn rgb(&self, p: Vec3<f64>) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut norm = 0.0;
            let mut amp = 1.0;
            for oct in 0..self.octaves {
                acc += amp * self.octave(p, c as u64, oct);
                norm += amp;
                amp *= 0.5;
            }
            *o = self.low + (self.high - self.low) * acc / norm;
        }
        out
    }
}

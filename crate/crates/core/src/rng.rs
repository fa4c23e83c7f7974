//! Counter-based splittable random number generation.
//!
//! Every path (or policy) gets its own stream keyed by (master seed, stream
//! index). A stream is a pure function of that key, so results do not depend
//! on how many paths are simulated, in what order, or on how work is split
//! across threads.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 stream keyed by (seed, stream index).
#[derive(Debug, Clone)]
pub struct PathRng {
    state: u64,
    spare_normal: Option<f64>,
}

impl PathRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        // Scramble the stream index before folding it into the seed so that
        // consecutive indices land in unrelated regions of the state space.
        let state = mix64(seed ^ mix64(stream.wrapping_mul(GOLDEN).wrapping_add(1)));
        PathRng {
            state,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform draw in (0, 1].
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Standard normal draw via Box-Muller; the second variate of each pair
    /// is cached on the stream.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let mag = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare_normal = Some(mag * s);
        mag * c
    }

    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }
}

//! Stable FNV-1a hashing used wherever the simulation needs a deterministic
//! pseudo-random draw keyed by ids (confidence bands, noise, wrong choices).

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(OFFSET)
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(mut self, bytes: &[u8]) -> Self {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    /// Hashes a field followed by a separator so that `("ab", "c")` and
    /// `("a", "bc")` differ.
    pub fn field(self, s: &str) -> Self {
        self.bytes(s.as_bytes()).bytes(&[0x1f])
    }

    pub fn f64(self, v: f64) -> Self {
        self.bytes(&v.to_bits().to_le_bytes())
    }

    pub fn finish(self) -> u64 {
        // xorshift finalizer; raw FNV has weak low bits for short inputs
        let mut x = self.0;
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
        x ^= x >> 33;
        x
    }
}

pub fn hash_fields(fields: &[&str]) -> u64 {
    fields.iter().fold(Fnv1a::new(), |h, f| h.field(f)).finish()
}

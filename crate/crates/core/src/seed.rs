//! Seed derivations. Every random stream in the toolkit comes from one
//! global seed through [`derive_seed`], so results never depend on
//! scheduling or ambient entropy.

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const DATA: u64 = 3;
    pub const POOL: u64 = 4;
    pub const ATTACK: u64 = 5;
    pub const REPEAT: u64 = 6;
    pub const CALIBRATION: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)`
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}

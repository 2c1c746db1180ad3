use std::sync::OnceLock;

/// Anchor colors of the error-map ramp, interpolated in fixed integer
/// arithmetic below. The resulting 256-entry table is part of the on-disk
/// format: golden files depend on it bit for bit.
const ANCHORS: [(usize, [u8; 3]); 6] = [
    (0, [0, 0, 128]),
    (51, [0, 0, 255]),
    (102, [0, 255, 255]),
    (153, [0, 255, 0]),
    (204, [255, 255, 0]),
    (255, [255, 0, 0]),
];

fn lerp_channel(a: u8, b: u8, num: usize, den: usize) -> u8 {
    let delta = b as i64 - a as i64;
    let v = a as i64 + (delta * num as i64 + den as i64 / 2).div_euclid(den as i64);
    v.clamp(0, 255) as u8
}

fn build_table() -> [[u8; 3]; 256] {
    let mut table = [[0u8; 3]; 256];
    for seg in ANCHORS.windows(2) {
        let (lo, ca) = seg[0];
        let (hi, cb) = seg[1];
        for (i, entry) in table.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let num = i - lo;
            let den = hi - lo;
            for ch in 0..3 {
                entry[ch] = lerp_channel(ca[ch], cb[ch], num, den);
            }
        }
    }
    table
}

/// The fixed 256-entry error-map color table (index 0 = zero error).
pub fn error_color_table() -> &'static [[u8; 3]; 256] {
    static TABLE: OnceLock<[[u8; 3]; 256]> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoints_are_pinned() {
        let t = error_color_table();
        assert_eq!(t[0], [0, 0, 128]);
        assert_eq!(t[51], [0, 0, 255]);
        assert_eq!(t[102], [0, 255, 255]);
        assert_eq!(t[153], [0, 255, 0]);
        assert_eq!(t[204], [255, 255, 0]);
        assert_eq!(t[255], [255, 0, 0]);
        // Frozen interior samples.
        assert_eq!(t[128], [0, 255, 125]);
        assert_eq!(t[26], [0, 0, 193]);
    }
}

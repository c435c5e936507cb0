//! Run-length transport of binary masks.
//!
//! A mask is scanned in row-major order and written as alternating run
//! lengths, always starting with a background run (which may be 0). The runs
//! sum to `w * h`. An all-foreground 2x2 mask is `[0, 4]`; an empty one `[4]`.

use clickseg::imgcore::BinaryMask;

use crate::ServeError;

pub fn encode(mask: &BinaryMask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &v in mask.data() {
        if v != current {
            runs.push(len);
            current = v;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    runs
}

pub fn decode(runs: &[u32], width: usize, height: usize) -> Result<BinaryMask, ServeError> {
    let total: u64 = runs.iter().map(|&r| u64::from(r)).sum();
    if total != (width * height) as u64 {
        return Err(ServeError::BadRequest(format!(
            "runs cover {total} pixels, mask has {}",
            width * height
        )));
    }
    let mut data = Vec::with_capacity(width * height);
    for (i, &r) in runs.iter().enumerate() {
        data.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    BinaryMask::new(width, height, data).map_err(|e| ServeError::BadRequest(e.to_string()))
}

//! Regional episode rewards reported for the 27-region runs, as printed.

pub const U_NO_NEGO: [f64; 27] = [
    5.8, 2.2, 1.4, 3.6, 0.9, 10.9, 0.7, 1.1, 9.7, 1.3, 3.6, 3.8, 6.0, 3.8, 2.1, 22.6, 14.5, 7.3, 11.5, 5.5, 16.2, 3.9,
    8.8, 1.5, 6.6, 2.5, 9.3,
];

pub const RANK_NO_NEGO: [usize; 27] = [
    11, 19, 22, 17, 25, 4, 26, 24, 5, 23, 16, 14, 10, 15, 20, 0, 2, 8, 3, 12, 1, 13, 7, 21, 9, 18, 6,
];

pub const U_NEGO: [f64; 27] = [
    5.0, 2.0, 1.2, 2.8, 0.9, 10.1, 0.6, 0.9, 8.7, 1.2, 3.0, 3.6, 5.9, 3.8, 2.0, 21.2, 13.5, 6.7, 9.5, 4.4, 15.7, 3.4,
    8.0, 1.1, 6.4, 2.2, 8.0,
];

pub const RANK_NEGO: [usize; 27] = [
    11, 20, 22, 17, 25, 3, 26, 24, 5, 21, 16, 14, 10, 13, 19, 0, 2, 8, 4, 12, 1, 15, 7, 23, 9, 18, 6,
];

pub const GAIN: [&str; 27] = [
    "0.86", "0.90", "0.85", "0.77", "1.00", "0.92", "0.85", "0.81", "0.89", "0.92", "0.83", "0.94", "0.98", "1.00",
    "0.95", "0.93", "0.93", "0.91", "0.82", "0.80", "0.96", "0.87", "0.90", "0.73", "0.96", "0.88", "0.86",
];

/// Printed collective rewards (totals row).
pub const U_TOTAL_NO_NEGO: &str = "165.5";
pub const U_TOTAL_NEGO: &str = "150.5";

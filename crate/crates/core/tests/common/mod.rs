//! Helpers shared by the integration tests. Rates are recomputed here from
//! the raw radio parameters rather than through the library's channel code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavran::scenario::{GroundUser, RadioParams, Role};
use uavran::{Point, Scenario};

pub const H: f64 = 50.0;
pub const B: f64 = 1.0e7;
pub const PV: f64 = 0.01;
pub const PU: f64 = 0.01;

/// 10^-5 / (10^7 * 10^-19.9) written out from the table values.
pub fn gamma0() -> f64 {
    1e-5 / (1e7 * 10f64.powf(-19.9))
}

/// Spectral efficiency of a share `a` with power `p` at horizontal distance squared `d2`.
pub fn eff(a: f64, p: f64, d2: f64) -> f64 {
    if a <= 0.0 || p <= 0.0 {
        return 0.0;
    }
    let snr = p * gamma0() / (H * H + d2);
    a * (1.0 + snr / a).log2()
}

pub fn gu(id: u32, x: f64, y: f64, role: Role, pair: Option<u32>) -> GroundUser {
    GroundUser {
        id,
        position: Point::new(x, y),
        role,
        uplink_power_w: role.is_source().then_some(PU),
        pair_id: pair,
        rate_bps: Some(2.0e6),
        throughput_bits: Some(3.0e8),
    }
}

pub fn scenario(users: Vec<GroundUser>) -> Scenario {
    Scenario::new(RadioParams::standard(), users).expect("valid scenario")
}

/// Same users with every requirement overwritten.
pub fn with_requirements(mut users: Vec<GroundUser>, rate_bps: f64, bits: f64) -> Vec<GroundUser> {
    for u in &mut users {
        u.rate_bps = Some(rate_bps);
        u.throughput_bits = Some(bits);
    }
    users
}

/// `pairs` relay pairs placed uniformly in a square of side `side`.
pub fn relay_users(seed: u64, pairs: usize, side: f64) -> Vec<GroundUser> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in 0..pairs {
        let pid = Some(k as u32 + 1);
        out.push(gu(2 * k as u32 + 1, rng.gen::<f64>() * side, rng.gen::<f64>() * side, Role::RelaySource, pid));
        out.push(gu(2 * k as u32 + 2, rng.gen::<f64>() * side, rng.gen::<f64>() * side, Role::RelayDestination, pid));
    }
    out
}

/// 4 to 6 users with a random mix of uplink, downlink and relay roles.
pub fn mixed_users(seed: u64, side: f64) -> Vec<GroundUser> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=6usize);
    let pairs = rng.gen_range(0..=n / 2);
    let rest = n - 2 * pairs;
    let uplink = rng.gen_range(0..=rest);
    let mut out = Vec::new();
    let mut id = 1;
    let pos = |rng: &mut ChaCha8Rng| (rng.gen::<f64>() * side, rng.gen::<f64>() * side);
    for k in 0..pairs {
        let (x, y) = pos(&mut rng);
        out.push(gu(id, x, y, Role::RelaySource, Some(k as u32 + 1)));
        let (x, y) = pos(&mut rng);
        out.push(gu(id + 1, x, y, Role::RelayDestination, Some(k as u32 + 1)));
        id += 2;
    }
    for k in 0..rest {
        let (x, y) = pos(&mut rng);
        let role = if k < uplink { Role::UplinkSource } else { Role::DownlinkDestination };
        out.push(gu(id, x, y, role, None));
        id += 1;
    }
    out
}

pub fn random_points(seed: u64, n: usize, side: f64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side)).collect()
}

/// Path length through `pts` in `order`, summed left to right.
pub fn path_len(pts: &[Point], order: &[usize], closed: bool) -> f64 {
    let d = |a: Point, b: Point| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    let mut s: f64 = order.windows(2).map(|w| d(pts[w[0]], pts[w[1]])).sum();
    if closed && order.len() > 1 {
        s += d(pts[order[order.len() - 1]], pts[order[0]]);
    }
    s
}

/// Every permutation of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

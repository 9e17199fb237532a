//! Reference implementations shared by the integration tests and the
//! acceptance harness. Everything here is written from first principles and
//! deliberately avoids calling into the crate for the quantity under test.

#![allow(dead_code)]

use std::f64::consts::PI;

use leotwin::phy::{
    antenna_gain, channel_capacity, channel_coefficient, interference_power, sinr, AntennaModel,
    InterferenceSet, RadioLink,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const C_M_S: f64 = 299_792_458.0;
pub const K_B: f64 = 1.380_649e-23;
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// J1 by its power series, summed smallest term first.
pub fn j1_series(x: f64) -> f64 {
    let half = x / 2.0;
    let mut terms = Vec::new();
    let mut t = half;
    for m in 0..200 {
        terms.push(t);
        let m = m as f64;
        t *= -half * half / ((m + 1.0) * (m + 2.0));
        if t.abs() < 1e-300 || (m > 10.0 && t.abs() < 1e-25) {
            break;
        }
    }
    terms.iter().rev().sum()
}

/// J1 from Bessel's integral `(1/π)∫₀^π cos(τ − x sin τ) dτ`. The integrand
/// is smooth, even and 2π-periodic, so the trapezoid rule converges
/// geometrically.
pub fn j1_integral(x: f64) -> f64 {
    let n = 2000;
    let h = PI / n as f64;
    let f = |tau: f64| (tau - x * tau.sin()).cos();
    let mut s = 0.5 * (f(0.0) + f(PI));
    for i in 1..n {
        s += f(i as f64 * h);
    }
    s * h / PI
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Haversine distance on a sphere of radius 6371 km.
pub fn great_circle_km(lat1_deg: f64, lon1_deg: f64, lat2_deg: f64, lon2_deg: f64) -> f64 {
    let (p1, p2) = (lat1_deg.to_radians(), lat2_deg.to_radians());
    let dp = p2 - p1;
    let dl = (lon2_deg - lon1_deg).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().asin()
}

fn random_antenna(rng: &mut ChaCha8Rng) -> AntennaModel {
    let frequency_hz = rng.random_range(10e9..30e9);
    // keep k·a ≤ 3.5 so every angle stays inside the main lobe and the
    // relative comparison never lands on a null
    let k = 2.0 * PI * frequency_hz / C_M_S;
    AntennaModel {
        g_max: 10f64.powf(rng.random_range(2.0..4.5)),
        aperture_radius_m: rng.random_range(0.05..3.5) / k,
        frequency_hz,
    }
}

fn random_link(
    rng: &mut ChaCha8Rng,
    tx: &str,
    rx: &str,
    antenna: AntennaModel,
    bandwidth_hz: f64,
) -> RadioLink {
    RadioLink {
        tx_id: tx.into(),
        rx_id: rx.into(),
        tx_power_w: rng.random_range(0.5..50.0),
        tx_antenna: antenna,
        rx_gain_linear: 10f64.powf(rng.random_range(1.0..4.0)),
        distance_km: rng.random_range(500.0..3000.0),
        offaxis_angle_rad: rng.random_range(0.0..PI / 2.0),
        bandwidth_hz,
        rx_noise_temp_k: rng.random_range(100.0..800.0),
    }
}

/// Hand-composed gain: `g_max·(2·J1(u)/u)²` with `u = (2π/λ)·a·sinθ`.
pub fn gain_oracle(theta: f64, a: &AntennaModel) -> f64 {
    let lambda = C_M_S / a.frequency_hz;
    let u = 2.0 * PI / lambda * a.aperture_radius_m * theta.sin();
    if u == 0.0 {
        return a.g_max;
    }
    let r = 2.0 * j1_integral(u) / u;
    a.g_max * r * r
}

/// Received power from the Friis form `P·G_t·G_r·(λ/4πd)²`.
pub fn received_oracle(l: &RadioLink) -> f64 {
    let lambda = C_M_S / l.tx_antenna.frequency_hz;
    let d = l.distance_km * 1000.0;
    l.tx_power_w
        * gain_oracle(l.offaxis_angle_rad, &l.tx_antenna)
        * l.rx_gain_linear
        * (lambda / (4.0 * PI * d)).powi(2)
}

pub struct PhySuite {
    pub bessel_max_abs_err: f64,
    pub bessel_points: usize,
    pub link_sets: usize,
    pub link_max_rel_err: f64,
    pub boresight_rel_err: f64,
}

impl PhySuite {
    pub fn passes(&self) -> bool {
        self.bessel_max_abs_err <= 1e-12
            && self.link_max_rel_err <= 1e-9
            && self.boresight_rel_err <= 1e-6
    }
}

/// Runs the physical-layer oracle suite: the crate's J1 against both
/// references, 200 randomized link budgets against the hand composition,
/// and gain continuity at boresight.
pub fn run_phy_suite() -> PhySuite {
    let mut bessel_max_abs_err: f64 = 0.0;
    let mut bessel_points = 0;
    for i in 0..=2000 {
        let x = i as f64 * 0.01;
        let got = leotwin::phy::bessel_j1(x);
        let integral = j1_integral(x);
        bessel_max_abs_err = bessel_max_abs_err.max((got - integral).abs());
        // the alternating series loses digits to cancellation beyond x ≈ 8
        if x <= 8.0 {
            bessel_max_abs_err = bessel_max_abs_err.max((got - j1_series(x)).abs());
        }
        bessel_points += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x11ab);
    let mut link_max_rel_err: f64 = 0.0;
    let link_sets = 200;
    for _ in 0..link_sets {
        let bw = rng.random_range(10e6..500e6);
        let ant = random_antenna(&mut rng);
        let desired = random_link(&mut rng, "tx0", "rx", ant, bw);
        let n_int = rng.random_range(0..5);
        let interferers: Vec<RadioLink> = (0..n_int)
            .map(|i| {
                let ant = random_antenna(&mut rng);
                random_link(&mut rng, &format!("tx{}", i + 1), "rx", ant, bw)
            })
            .collect();

        let lambda = C_M_S / desired.tx_antenna.frequency_hz;
        let h_want = (gain_oracle(desired.offaxis_angle_rad, &desired.tx_antenna)
            * desired.rx_gain_linear)
            .sqrt()
            / (4.0 * PI * desired.distance_km * 1000.0 / lambda);
        let h_got = channel_coefficient(&desired).unwrap();
        link_max_rel_err = link_max_rel_err.max(rel_err(h_got, h_want));

        let g_got = antenna_gain(desired.offaxis_angle_rad, &desired.tx_antenna).unwrap();
        link_max_rel_err = link_max_rel_err.max(rel_err(
            g_got,
            gain_oracle(desired.offaxis_angle_rad, &desired.tx_antenna),
        ));

        let i_want: f64 = interferers.iter().map(received_oracle).sum();
        let set = InterferenceSet::new(interferers);
        let i_got = interference_power("rx", &set).unwrap();
        if i_want > 0.0 {
            link_max_rel_err = link_max_rel_err.max(rel_err(i_got, i_want));
        } else {
            link_max_rel_err = link_max_rel_err.max(i_got.abs());
        }

        let noise = K_B * desired.rx_noise_temp_k * desired.bandwidth_hz;
        let sinr_want = received_oracle(&desired) / (noise + i_want);
        let sinr_got = sinr(&desired, &set).unwrap();
        link_max_rel_err = link_max_rel_err.max(rel_err(sinr_got, sinr_want));

        let cap_want = bw * (1.0 + sinr_want).log2();
        link_max_rel_err = link_max_rel_err.max(rel_err(channel_capacity(sinr_got, bw), cap_want));
    }

    let ant = AntennaModel {
        g_max: 1000.0,
        aperture_radius_m: 0.5,
        frequency_hz: 20e9,
    };
    let mut boresight_rel_err: f64 = 0.0;
    for theta in [1e-6, 1e-8, 1e-10, 1e-12, f64::MIN_POSITIVE] {
        boresight_rel_err =
            boresight_rel_err.max(rel_err(antenna_gain(theta, &ant).unwrap(), ant.g_max));
    }

    PhySuite {
        bessel_max_abs_err,
        bessel_points,
        link_sets,
        link_max_rel_err,
        boresight_rel_err,
    }
}

use leotwin::constellation::SatId;
use leotwin::phy::GsIndex;
use leotwin::topology::{Link, LinkId, LinkKind, NodeId, TopologySnapshot};
use nalgebra::Vector3;

/// Snapshot over explicit nodes. Nodes below `sat_count` are satellites,
/// the rest stations named `gs0`, `gs1`, ... Each edge is `(a, b, failed)`;
/// lengths come from the positions.
pub fn graph(
    sat_count: u32,
    positions: Vec<Vector3<f64>>,
    edges: &[(u32, u32, bool)],
    ground_transit: bool,
) -> TopologySnapshot {
    let stations = positions.len() as u32 - sat_count;
    let links = edges
        .iter()
        .enumerate()
        .map(|(i, &(a, b, failed))| {
            let d = (positions[a as usize] - positions[b as usize]).norm();
            let (kind, id) = match (a < sat_count, b < sat_count) {
                (true, true) => (LinkKind::Isl, LinkId(i as u64)),
                (true, false) => (LinkKind::Gsl, LinkId::gsl(SatId(a), GsIndex(b - sat_count))),
                (false, true) => (LinkKind::Gsl, LinkId::gsl(SatId(b), GsIndex(a - sat_count))),
                (false, false) => panic!("station-to-station edge"),
            };
            let mut l = Link::new(id, NodeId(a), NodeId(b), kind, d, 1e9);
            l.failed = failed;
            l
        })
        .collect();
    TopologySnapshot::new(
        0,
        0.0,
        sat_count,
        (0..stations).map(|i| format!("gs{i}")).collect(),
        positions,
        ground_transit,
        links,
    )
    .expect("well-formed test graph")
}

/// Random satellite-only graph on a 550 km shell with edge probability `p`
/// and failure probability `q`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: u32, p: f64, q: f64) -> TopologySnapshot {
    let r = EARTH_RADIUS_KM + 550.0;
    let positions = (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let s = (1.0 - z * z).sqrt();
            Vector3::new(r * s * phi.cos(), r * s * phi.sin(), r * z)
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                edges.push((a, b, rng.random::<f64>() < q));
            }
        }
    }
    graph(n, positions, &edges, false)
}

/// Minimum one-way delay from `src` to `dst` over every simple path of live
/// links, by exhaustive depth-first enumeration. Only the endpoints may be
/// non-transit nodes.
pub fn brute_force_delay(s: &TopologySnapshot, src: NodeId, dst: NodeId) -> f64 {
    fn dfs(
        s: &TopologySnapshot,
        at: NodeId,
        dst: NodeId,
        acc: f64,
        seen: &mut Vec<bool>,
        best: &mut f64,
    ) {
        if at == dst {
            *best = best.min(acc);
            return;
        }
        for l in &s.links {
            if l.failed || (l.endpoint_a != at && l.endpoint_b != at) {
                continue;
            }
            let nx = l.other(at);
            if seen[nx.0 as usize] || (nx != dst && !s.can_transit(nx)) {
                continue;
            }
            seen[nx.0 as usize] = true;
            dfs(s, nx, dst, acc + l.delay_s, seen, best);
            seen[nx.0 as usize] = false;
        }
    }
    let mut seen = vec![false; s.node_count()];
    seen[src.0 as usize] = true;
    let mut best = f64::INFINITY;
    dfs(s, src, dst, 0.0, &mut seen, &mut best);
    best
}

/// Fewest hops from `src` to `dst` over live links, by exhaustive
/// enumeration.
pub fn brute_force_hops(s: &TopologySnapshot, src: NodeId, dst: NodeId) -> Option<usize> {
    fn dfs(
        s: &TopologySnapshot,
        at: NodeId,
        dst: NodeId,
        depth: usize,
        seen: &mut Vec<bool>,
        best: &mut usize,
    ) {
        if depth >= *best {
            return;
        }
        if at == dst {
            *best = depth;
            return;
        }
        for &(nx, li) in s.neighbors(at) {
            if s.links[li].failed || seen[nx.0 as usize] {
                continue;
            }
            seen[nx.0 as usize] = true;
            dfs(s, nx, dst, depth + 1, seen, best);
            seen[nx.0 as usize] = false;
        }
    }
    let mut seen = vec![false; s.node_count()];
    seen[src.0 as usize] = true;
    let mut best = usize::MAX;
    dfs(s, src, dst, 0, &mut seen, &mut best);
    (best != usize::MAX).then_some(best)
}

/// `rows × cols` grid of satellites on a 1° lat/lon lattice near the equator.
pub fn lattice(rows: u32, cols: u32) -> TopologySnapshot {
    let r = EARTH_RADIUS_KM + 550.0;
    let mut positions = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let (lat, lon) = ((i as f64 - 2.0).to_radians(), (j as f64).to_radians());
            positions.push(Vector3::new(
                r * lat.cos() * lon.cos(),
                r * lat.cos() * lon.sin(),
                r * lat.sin(),
            ));
        }
    }
    let mut edges = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let n = i * cols + j;
            if j + 1 < cols {
                edges.push((n, n + 1, false));
            }
            if i + 1 < rows {
                edges.push((n, n + cols, false));
            }
        }
    }
    graph(rows * cols, positions, &edges, false)
}

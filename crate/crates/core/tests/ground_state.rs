use soliton_lab::ground::{d_alpha_profile, solve_ground_state, GroundState};
use soliton_lab::ops::l_plus_banded;
use soliton_lab::radial::{RadialGrid, SectorIndex};

fn ground(alpha: f64, n: usize) -> GroundState<f64> {
    solve_ground_state(alpha, &RadialGrid::new(30.0 / alpha, n).unwrap()).unwrap()
}

/// `φ'' + 2φ'/r - α²φ + φ³ = 0` by RK4 from a series start; `true` when the
/// trajectory crosses zero (amplitude too large).
fn overshoots(a: f64, alpha: f64, dr: f64) -> bool {
    let rhs = |r: f64, y: [f64; 2]| [y[1], -2.0 * y[1] / r + alpha * alpha * y[0] - y[0].powi(3)];
    let c = a * (alpha * alpha - a * a) / 6.0;
    let mut r = dr;
    let mut y = [a + c * r * r, 2.0 * c * r];
    while r < 14.0 / alpha {
        let k1 = rhs(r, y);
        let k2 = rhs(r + dr / 2.0, [y[0] + dr / 2.0 * k1[0], y[1] + dr / 2.0 * k1[1]]);
        let k3 = rhs(r + dr / 2.0, [y[0] + dr / 2.0 * k2[0], y[1] + dr / 2.0 * k2[1]]);
        let k4 = rhs(r + dr, [y[0] + dr * k3[0], y[1] + dr * k3[1]]);
        for i in 0..2 {
            y[i] += dr / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += dr;
        if y[0] < 0.0 {
            return true;
        }
        if y[1] > 0.0 {
            return false;
        }
    }
    y[0] < 0.0
}

fn shooting_oracle(alpha: f64, dr: f64) -> f64 {
    let (mut lo, mut hi) = (1.5 * alpha, 8.0 * alpha);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if overshoots(mid, alpha, dr) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn amplitude_matches_independent_shooting() {
    let (a1, a2) = (shooting_oracle(1.0, 2e-3), shooting_oracle(1.0, 1e-3));
    // RK4: extrapolate in dr⁴
    let oracle = a2 + (a2 - a1) / 15.0;
    assert!((a1 - a2).abs() < 1e-6, "{a1} vs {a2}");
    let gs = ground(1.0, 3000);
    assert!((gs.amplitude - oracle).abs() < 1e-6, "{} vs {oracle}", gs.amplitude);
}

#[test]
fn invariants_of_the_profile() {
    let gs = ground(1.0, 1200);
    assert!(gs.residual <= 1e-8, "residual {}", gs.residual);
    assert!(gs.phi.iter().all(|&p| p > 0.0));
    assert!(gs.phi.windows(2).all(|w| w[1] < w[0]));
    assert!(gs.dphi_dr.iter().all(|&d| d < 0.0));
}

#[test]
fn amplitude_and_mass_scale_with_alpha() {
    let base = ground(1.0, 1200);
    for alpha in [0.5, 2.0] {
        let gs = ground(alpha, 1200);
        assert!((gs.amplitude / (alpha * base.amplitude) - 1.0).abs() < 1e-5);
        assert!((gs.mass * alpha / base.mass - 1.0).abs() < 1e-5);
    }
}

#[test]
fn exponential_tail() {
    for alpha in [1.0, 2.0] {
        let gs = ground(alpha, 3000);
        let rmax = gs.grid.r_max();
        let pts: Vec<(f64, f64)> = gs
            .grid
            .nodes()
            .iter()
            .zip(&gs.phi)
            .filter(|(r, _)| **r >= 0.6 * rmax && **r <= 0.9 * rmax)
            .map(|(&r, &p)| (r, p.ln()))
            .collect();
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        let slope = (last.1 - first.1) / (last.0 - first.0);
        assert!(slope >= -1.05 * alpha && slope <= -0.95 * alpha, "alpha {alpha}: slope {slope}");
    }
}

#[test]
fn d_alpha_against_scaling_identity() {
    // ∂_αφ(r, 1) = φ(r) + r φ'(r) at α = 1
    let gs = ground(1.0, 2000);
    let scale = gs.phi[0];
    for i in 0..gs.grid.len() {
        let r = gs.grid.nodes()[i];
        let oracle = gs.phi[i] + r * gs.dphi_dr[i];
        assert!((gs.dphi_dalpha[i] - oracle).abs() < 1e-6 * scale, "r={r}");
    }
    let scaled = d_alpha_profile(&gs);
    for (a, b) in scaled.iter().zip(&gs.dphi_dalpha) {
        assert!((a - b).abs() < 1e-6 * scale);
    }
}

#[test]
fn d_alpha_against_finite_difference() {
    let alpha = 1.3;
    let grid = RadialGrid::new(30.0, 1500).unwrap();
    let d = 1e-3 * alpha;
    let gs = solve_ground_state(alpha, &grid).unwrap();
    let (p, m) = (solve_ground_state(alpha + d, &grid).unwrap(), solve_ground_state(alpha - d, &grid).unwrap());
    let fd: Vec<f64> = p.phi.iter().zip(&m.phi).map(|(a, b)| (a - b) / (2.0 * d)).collect();
    let num: f64 = fd.iter().zip(&gs.dphi_dalpha).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = fd.iter().map(|a| a * a).sum();
    assert!((num / den).sqrt() < 2e-3);
}

#[test]
fn d_alpha_pairing_and_l_plus_image() {
    for alpha in [1.0, 1.7] {
        let gs = ground(alpha, 1200);
        let pairing = gs.grid.integrate(&gs.dphi_dalpha.iter().zip(&gs.phi).map(|(a, b)| a * b).collect::<Vec<_>>());
        let expected = -0.5 * gs.mass / alpha;
        assert!((pairing / expected - 1.0).abs() < 1e-4, "{pairing} vs {expected}");

        let lp = l_plus_banded(&gs, SectorIndex::S);
        let image = lp.matvec(&gs.line_dalpha());
        let u = gs.line();
        let res: f64 = image.iter().zip(&u).map(|(a, b)| (a + 2.0 * alpha * b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = u.iter().map(|b| (2.0 * alpha * b).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-4 * scale, "{}", res / scale);
    }
}

#[test]
fn mass_derivative_in_alpha() {
    let (a, d) = (1.0, 1e-3);
    let mp = ground(a + d, 1200).mass;
    let mm = ground(a - d, 1200).mass;
    let gs = ground(a, 1200);
    let fd = (mp - mm) / (2.0 * d);
    assert!((fd / (-gs.mass / a) - 1.0).abs() < 1e-4);
}

#[test]
fn single_precision_agrees_with_double() {
    let g64 = RadialGrid::new(20.0, 400).unwrap();
    let g32 = g64.cast::<f32>();
    let a = solve_ground_state(1.0f64, &g64).unwrap();
    let b = solve_ground_state(1.0f32, &g32).unwrap();
    assert!((b.amplitude as f64 - a.amplitude).abs() < 1e-3 * a.amplitude, "{} vs {}", b.amplitude, a.amplitude);
    assert!((b.mass as f64 / a.mass - 1.0).abs() < 1e-3, "{} vs {}", b.mass, a.mass);
}

#[test]
fn nonpositive_alpha_is_rejected() {
    let grid = RadialGrid::new(30.0, 200).unwrap();
    assert!(solve_ground_state(0.0, &grid).is_err());
    assert!(solve_ground_state(f64::NAN, &grid).is_err());
}

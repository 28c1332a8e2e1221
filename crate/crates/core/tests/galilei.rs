use num_complex::Complex64 as c64;
use proptest::prelude::*;
use rustfft::FftPlanner;
use soliton_lab::galilei::{
    apply_galilei, apply_galilei_inverse, frame_change_radial, frame_change_u_to_z, frame_change_z_to_u, Boundary, BoxField, GalileiFrame,
    VectorField,
};
use std::f64::consts::PI;

const L: f64 = 40.0;
const N: usize = 256;

fn gaussian_line(center: f64, width: f64) -> BoxField {
    BoxField::line(N, L / N as f64, -L / 2.0, Boundary::Periodic, |x| c64::new((-(x - center).powi(2) / (width * width)).exp(), 0.0))
}

/// Velocity whose plane wave is periodic on the box.
fn box_velocity(m: i32) -> f64 {
    2.0 * PI * m as f64 / L
}

fn max_diff(a: &BoxField, b: &BoxField) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Exact free flow `e^{itΔ}` on the periodic line.
fn free_flow(f: &BoxField, t: f64) -> BoxField {
    let n = f.shape[0];
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = f.data.clone();
    planner.plan_fft_forward(n).process(&mut buf);
    for (m, b) in buf.iter_mut().enumerate() {
        let k = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 } * 2.0 * PI / L;
        *b *= c64::from_polar(1.0 / n as f64, -k * k * t);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    BoxField { data: buf, ..f.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn periodic_transform_is_an_isometry(gamma in -3.0..3.0f64, m in -4i32..4, d in -5.0..5.0f64, t in 0.0..2.0f64) {
        let f = gaussian_line(1.0, 1.5);
        let frame = GalileiFrame::new(gamma, [box_velocity(m), 0.0, 0.0], [d, 0.0, 0.0], 1.0);
        let g = apply_galilei(&frame, t, &f).unwrap();
        prop_assert!((g.norm() / f.norm() - 1.0).abs() < 1e-12);
        let back = apply_galilei_inverse(&frame, t, &g).unwrap();
        prop_assert!(max_diff(&back, &f) < 1e-12);
    }
}

#[test]
fn gaussian_moves_and_picks_up_the_plane_wave() {
    let f = gaussian_line(0.0, 1.0);
    let v = box_velocity(2);
    let (gamma, d, t) = (0.4, 1.5, 0.75);
    let frame = GalileiFrame::new(gamma, [v, 0.0, 0.0], [d, 0.0, 0.0], 1.0);
    let g = apply_galilei(&frame, t, &f).unwrap();
    let expected = BoxField::line(N, L / N as f64, -L / 2.0, Boundary::Periodic, |x| {
        let y = x - 2.0 * t * v - d;
        c64::from_polar((-y * y).exp(), gamma + v * x - t * v * v)
    });
    assert!(max_diff(&g, &expected) < 1e-10, "{}", max_diff(&g, &expected));
}

#[test]
fn boost_commutes_with_the_free_flow() {
    let f = gaussian_line(-2.0, 1.2);
    let frame = GalileiFrame::new(0.3, [box_velocity(3), 0.0, 0.0], [0.5, 0.0, 0.0], 1.0);
    for t in [0.3, 1.0] {
        let lhs = free_flow(&apply_galilei(&frame, 0.0, &f).unwrap(), t);
        let rhs = apply_galilei(&frame, t, &free_flow(&f, t)).unwrap();
        assert!(max_diff(&lhs, &rhs) < 1e-10, "t = {t}: {}", max_diff(&lhs, &rhs));
    }
}

#[test]
fn three_dimensional_shift_matches_samples() {
    let shape = [24, 20, 16];
    let h = [0.5, 0.6, 0.75];
    let lower = [-6.0, -6.0, -6.0];
    let bump = |c: [f64; 3]| move |x: [f64; 3]| c64::new((-(0..3).map(|k| (x[k] - c[k]).powi(2)).sum::<f64>() / 2.0).exp(), 0.0);
    let f = BoxField::from_fn(shape, h, lower, Boundary::Padded(4), bump([0.0; 3]));
    let frame = GalileiFrame::new(0.0, [0.0; 3], [0.4, -0.3, 0.8], 1.0);
    let g = apply_galilei(&frame, 0.0, &f).unwrap();
    let expected = BoxField::from_fn(shape, h, lower, Boundary::Padded(4), bump([0.4, -0.3, 0.8]));
    assert!(max_diff(&g, &expected) < 1e-3, "{}", max_diff(&g, &expected));
}

#[test]
fn frame_change_round_trips_and_keeps_j_invariance() {
    let f = BoxField::line(N, L / N as f64, -L / 2.0, Boundary::Periodic, |x| c64::new((-x * x).exp(), 0.3 * x * (-x * x / 2.0).exp()));
    let z = VectorField::j_invariant(f);
    assert!(z.j_defect() < 1e-15);
    let frame = GalileiFrame::new(0.7, [box_velocity(1), 0.0, 0.0], [-1.0, 0.0, 0.0], 1.3);
    let t = 0.9;
    let u = frame_change_z_to_u(&z, &frame, t).unwrap();
    assert!(u.j_defect() < 1e-12, "{}", u.j_defect());
    assert!((u.norm() / z.norm() - 1.0).abs() < 1e-12);
    let back = frame_change_u_to_z(&u, &frame, t).unwrap();
    assert!(max_diff(&back.first, &z.first) < 1e-12);
    assert!(max_diff(&back.second, &z.second) < 1e-12);
}

#[test]
fn frozen_frame_is_a_pure_phase() {
    let f = gaussian_line(0.0, 1.0);
    let frame = GalileiFrame::frozen(0.5, 1.2);
    let t = 2.0;
    let u = frame_change_z_to_u(&VectorField::j_invariant(f.clone()), &frame, t).unwrap();
    let w = c64::from_polar(1.0, frame.omega(t) + 0.5);
    for (a, b) in u.first.data.iter().zip(&f.data) {
        assert!((a - w * b).norm() < 1e-14);
    }
}

#[test]
fn oversized_or_impossible_shifts_are_rejected() {
    let padded = BoxField::line(64, 0.25, -8.0, Boundary::Padded(8), |x| c64::new((-x * x).exp(), 0.0));
    let ok = GalileiFrame::new(0.0, [0.0; 3], [1.5, 0.0, 0.0], 1.0);
    assert!(apply_galilei(&ok, 0.0, &padded).is_ok());
    let far = GalileiFrame::new(0.0, [0.0; 3], [2.5, 0.0, 0.0], 1.0);
    assert!(apply_galilei(&far, 0.0, &padded).is_err());
    assert!(apply_galilei_inverse(&far, 0.0, &padded).is_err());
    // a boost eventually runs out of padding
    let boost = GalileiFrame::new(0.0, [0.5, 0.0, 0.0], [0.0; 3], 1.0);
    assert!(apply_galilei(&boost, 1.0, &padded).is_ok());
    assert!(apply_galilei(&boost, 3.0, &padded).is_err());
    // the line has no room along y
    let sideways = GalileiFrame::new(0.0, [0.0; 3], [0.0, 0.1, 0.0], 1.0);
    assert!(apply_galilei(&sideways, 0.0, &gaussian_line(0.0, 1.0)).is_err());
}

#[test]
fn radial_frame_change_is_phase_only() {
    let z: Vec<c64> = (0..10).map(|k| c64::new(k as f64, 1.0 - k as f64)).collect();
    let frame = GalileiFrame::frozen(0.3, 1.1);
    let u = frame_change_radial(&z, &frame, 1.5, false).unwrap();
    let back = frame_change_radial(&u, &frame, 1.5, true).unwrap();
    assert!(z.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-14));
    let w = c64::from_polar(1.0, frame.omega(1.5) + 0.3);
    assert!((u[1] - w * z[1]).norm() < 1e-14);
    assert!((u[6] - w.conj() * z[6]).norm() < 1e-14);
    let moving = GalileiFrame::new(0.0, [0.1, 0.0, 0.0], [0.0; 3], 1.0);
    assert!(frame_change_radial(&z, &moving, 1.0, false).is_err());
    assert!(frame_change_radial(&z[..9], &frame, 1.0, false).is_err());
}

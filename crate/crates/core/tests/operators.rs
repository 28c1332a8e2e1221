use faer::{c64, Mat};
use soliton_lab::ground::{solve_ground_state, GroundState};
use soliton_lab::ops::{
    assemble_h, assemble_h_uv, assemble_l_minus, assemble_l_plus, banded_to_dense, j_map, l_minus_banded, l_plus_banded, OperatorKind,
    SectorHamiltonian,
};
use soliton_lab::radial::{RadialGrid, SectorIndex};
use soliton_lab::spectral::{eigenvalues, line_norm, symmetric_eigenvalues};

fn ground(alpha: f64, n: usize) -> GroundState<f64> {
    solve_ground_state(alpha, &RadialGrid::new(30.0 / alpha, n).unwrap()).unwrap()
}

fn real(v: &[f64]) -> Vec<c64> {
    v.iter().map(|&x| c64::new(x, 0.0)).collect()
}

fn rel_norm(gs: &GroundState<f64>, sector: SectorIndex, x: &[c64], reference: &[c64]) -> f64 {
    line_norm(&gs.grid, sector, x) / line_norm(&gs.grid, sector, reference)
}

fn is_symmetric(m: &Mat<f64>) -> bool {
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

#[test]
fn scalar_operators_are_symmetric_and_tagged() {
    let gs = ground(1.0, 300);
    for s in [SectorIndex::S, SectorIndex::P] {
        let lm = assemble_l_minus(&gs, s);
        let lp = assemble_l_plus(&gs, s);
        assert_eq!(lm.kind, OperatorKind::LMinus);
        assert_eq!(lp.kind, OperatorKind::LPlus);
        assert_eq!(lm.dim(), 300);
        assert!(is_symmetric(lm.matrix.as_real().unwrap()));
        assert!(is_symmetric(lp.matrix.as_real().unwrap()));
    }
}

#[test]
fn l_minus_annihilates_the_ground_state() {
    let gs = ground(1.0, 800);
    let u = gs.line();
    let image = l_minus_banded(&gs, SectorIndex::S).matvec(&u);
    let res = rel_norm(&gs, SectorIndex::S, &real(&image), &real(&u));
    assert!(res < 1e-8, "{res}");

    let ev = symmetric_eigenvalues(&banded_to_dense(&l_minus_banded(&gs, SectorIndex::S))).unwrap();
    assert!(ev[0].abs() < 1e-8, "{}", ev[0]);
    assert!(ev[1] > 0.5, "{}", ev[1]);
}

#[test]
fn l_plus_has_one_negative_direction() {
    for alpha in [1.0, 1.5] {
        let gs = ground(alpha, 600);
        let a2 = alpha * alpha;
        let ev = symmetric_eigenvalues(&banded_to_dense(&l_plus_banded(&gs, SectorIndex::S))).unwrap();
        assert!(ev[0] < -a2);
        assert!(ev[1] > 0.0, "{}", ev[1]);
    }
}

#[test]
fn dipole_l_plus_kernel_is_the_translation_mode() {
    let gs = ground(1.0, 1200);
    let p = SectorIndex::P;
    let ev = symmetric_eigenvalues(&banded_to_dense(&l_plus_banded(&gs, p))).unwrap();
    let smallest = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    assert!(smallest < 1e-5, "{smallest}");
    assert_eq!(ev.iter().filter(|&&v| v < -1e-5).count(), 0);

    let d = gs.grid.to_line(&gs.dphi_dr);
    let image = l_plus_banded(&gs, p).matvec(&d);
    assert!(rel_norm(&gs, p, &real(&image), &real(&d)) < 1e-4);
}

#[test]
fn dense_matrix_matches_matrix_free_action() {
    let gs = ground(1.0, 120);
    for s in [SectorIndex::S, SectorIndex::P] {
        let h = SectorHamiltonian::new(&gs, s);
        let dense = assemble_h(&gs, s).matrix.to_complex();
        let x: Vec<c64> = (0..240).map(|k| c64::new((0.3 * k as f64).sin(), (0.7 * k as f64).cos())).collect();
        let y = h.apply(&x);
        for (i, yi) in y.iter().enumerate() {
            let d: c64 = (0..240).map(|j| dense[(i, j)] * x[j]).sum();
            assert!((d - yi).norm() < 1e-10 * (1.0 + yi.norm()));
        }
        // Hᵀ through the transpose of the dense matrix
        let yt = h.apply_transpose(&x);
        for (i, yi) in yt.iter().enumerate() {
            let d: c64 = (0..240).map(|j| dense[(j, i)] * x[j]).sum();
            assert!((d - yi).norm() < 1e-10 * (1.0 + yi.norm()));
        }
    }
}

#[test]
fn phase_and_translation_modes_lie_in_the_kernel() {
    let gs = ground(1.0, 1200);
    let u = gs.line();
    let phase: Vec<c64> = u.iter().map(|&x| c64::new(0.0, x)).chain(u.iter().map(|&x| c64::new(0.0, -x))).collect();
    let h0 = SectorHamiltonian::new(&gs, SectorIndex::S);
    assert!(rel_norm(&gs, SectorIndex::S, &h0.apply(&phase), &phase) < 1e-8);

    let d = real(&gs.grid.to_line(&gs.dphi_dr));
    let trans: Vec<c64> = d.iter().chain(d.iter()).copied().collect();
    let h1 = SectorHamiltonian::new(&gs, SectorIndex::P);
    assert!(rel_norm(&gs, SectorIndex::P, &h1.apply(&trans), &trans) < 1e-4);
}

#[test]
fn generalized_kernel_actions() {
    let gs = ground(1.3, 1200);
    let alpha = gs.alpha;
    let u = gs.line();

    // scaling direction maps onto the phase direction
    let ua = real(&gs.line_dalpha());
    let gen: Vec<c64> = ua.iter().chain(ua.iter()).copied().collect();
    let target: Vec<c64> =
        u.iter().map(|&x| c64::new(-2.0 * alpha * x, 0.0)).chain(u.iter().map(|&x| c64::new(2.0 * alpha * x, 0.0))).collect();
    let img = SectorHamiltonian::new(&gs, SectorIndex::S).apply(&gen);
    let diff: Vec<c64> = img.iter().zip(&target).map(|(a, b)| a - b).collect();
    assert!(rel_norm(&gs, SectorIndex::S, &diff, &target) < 1e-4);

    // boost direction maps onto the translation direction
    let p = SectorIndex::P;
    let xu: Vec<f64> = u.iter().zip(gs.grid.nodes()).map(|(a, r)| a * r).collect();
    let boost: Vec<c64> = xu.iter().map(|&x| c64::new(x, 0.0)).chain(xu.iter().map(|&x| c64::new(-x, 0.0))).collect();
    let d = gs.grid.to_line(&gs.dphi_dr);
    let target: Vec<c64> = d.iter().chain(d.iter()).map(|&x| c64::new(-2.0 * x, 0.0)).collect();
    let img = SectorHamiltonian::new(&gs, p).apply(&boost);
    let diff: Vec<c64> = img.iter().zip(&target).map(|(a, b)| a - b).collect();
    assert!(rel_norm(&gs, p, &diff, &target) < 1e-4);
}

#[test]
fn uv_form_shares_the_spectrum() {
    let gs = ground(1.0, 100);
    for s in [SectorIndex::S, SectorIndex::P] {
        let mut block = eigenvalues(assemble_h(&gs, s).matrix.as_real().unwrap()).unwrap();
        let uv = assemble_h_uv(&gs, s);
        assert_eq!(uv.kind, OperatorKind::HUv);
        let m = uv.matrix.to_complex();
        let mut other: Vec<c64> = m.eigenvalues().unwrap();
        let key = |z: &c64| (z.re * 1e6).round() as i64 * 1_000_000_000 + (z.im * 1e3).round() as i64;
        block.sort_by_key(key);
        other.sort_by_key(key);
        let scale = block.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        for (a, b) in block.iter().zip(&other) {
            assert!((a - b).norm() < 1e-8 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn spectrum_is_symmetric_under_negation_and_conjugation() {
    let gs = ground(1.0, 150);
    let ev = eigenvalues(assemble_h(&gs, SectorIndex::S).matrix.as_real().unwrap()).unwrap();
    let scale = ev.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    for z in &ev {
        for image in [-z, z.conj(), -z.conj()] {
            let nearest = ev.iter().map(|w| (w - image).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-6 * scale, "{z}");
        }
    }
}

#[test]
fn j_commutes_with_h() {
    let gs = ground(1.0, 200);
    let h = SectorHamiltonian::new(&gs, SectorIndex::P);
    let x: Vec<c64> = (0..400).map(|k| c64::new((1.1 * k as f64).sin(), (0.4 * k as f64).cos())).collect();
    // H J = -J H
    let lhs = h.apply(&j_map(&x));
    let rhs = j_map(&h.apply(&x));
    for (a, b) in lhs.iter().zip(&rhs) {
        assert!((a + b).norm() < 1e-10 * (1.0 + a.norm()));
    }
}

use faer::c64;
use soliton_lab::ground::{solve_ground_state, GroundState};
use soliton_lab::projections::{
    aj_residual, build_projections, check_projections, solve_aj_system, Hamiltonians, MultiField, ProjectionKind, ProjectionSet, RootFamily,
};
use soliton_lab::radial::RadialGrid;
use soliton_lab::spectral::{imaginary_pair, EigenPair};

struct Setup {
    gs: GroundState<f64>,
    family: RootFamily,
    plus: EigenPair,
    set: ProjectionSet,
}

fn setup(alpha: f64, n: usize) -> Setup {
    let gs = solve_ground_state(alpha, &RadialGrid::new(30.0 / alpha, n).unwrap()).unwrap();
    let family = RootFamily::full(&gs);
    let (_, plus, minus) = imaginary_pair(&gs).unwrap();
    let set = build_projections(&gs, &family, &plus, &minus).unwrap();
    Setup { gs, family, plus, set }
}

#[test]
fn pairing_entries_against_integrals() {
    let s = setup(1.3, 600);
    let (grid, fam) = (&s.gs.grid, &s.family);
    let mass = s.gs.mass;
    let alpha = s.gs.alpha;
    assert_eq!(fam.len(), 8);
    assert!(fam.pairing_imag < 1e-12);
    // radial pair: ⟨φ, ∂αφ⟩ = -mass/(2α)
    let r = fam.xi_eta(grid, 2, 1).re;
    assert!((r.abs() / (mass / alpha) - 1.0).abs() < 1e-4, "{r}");
    // dipole pairs: ⟨x_jφ, ∂_jφ⟩ = -mass/2
    for j in 0..3 {
        let d = fam.xi_eta(grid, 3 + j, 6 + j).re;
        assert!((d.abs() / mass - 1.0).abs() < 1e-3, "{d}");
    }
    // members of different channels or of the same type do not pair
    for a in 1..=8 {
        for b in 1..=8 {
            let linked = matches!((a, b), (1, 2) | (2, 1)) || (a >= 3 && b >= 3 && (a as i32 - b as i32).abs() == 3);
            if !linked {
                assert!(fam.xi_eta(grid, a, b).norm() < 1e-10 * mass, "({a}, {b})");
            }
        }
    }
    assert!(fam.pairing_condition() > 0.1);
}

#[test]
fn projection_invariants_on_probes() {
    let s = setup(1.0, 400);
    let ham = Hamiltonians::new(&s.gs);
    let c = check_projections(&s.set, &ham, 3, 11);
    assert!(c.idempotency.iter().all(|&v| v < 1e-8), "{:?}", c.idempotency);
    assert!(c.annihilation < 1e-8, "{}", c.annihilation);
    assert!(c.commutation < 1e-5, "{}", c.commutation);
    assert!(c.j_preservation < 1e-8, "{}", c.j_preservation);
    assert_eq!((c.rank_root, c.rank_plus, c.rank_minus), (8, 1, 1));
    let sigma = s.set.sigma;
    // the discrete chains are closed only to discretization accuracy, so the
    // zero cluster splits like its square root
    let zeros = c.unstable_spectrum.iter().filter(|z| z[0].hypot(z[1]) < 5e-2).count();
    assert_eq!(zeros, 8);
    assert!(c.unstable_spectrum.iter().any(|z| z[0].abs() < 1e-8 && (z[1] - sigma).abs() < 1e-8));
}

#[test]
fn projections_fix_their_ranges() {
    let s = setup(1.0, 400);
    let g = &s.gs.grid;
    let fp = MultiField::radial(s.plus.right.clone());
    let nf = fp.norm(g);
    let up = s.set.apply(ProjectionKind::UnstablePlus, &fp);
    assert!(up.sub(&fp).norm(g) < 1e-10 * nf);
    assert!(s.set.apply(ProjectionKind::Stable, &fp).norm(g) < 1e-10 * nf);
    assert!((s.set.unstable_coefficient(&fp) - 1.0).norm() < 1e-10);
    for eta in &s.family.eta {
        let ne = eta.norm(g);
        assert!(s.set.apply(ProjectionKind::Root, eta).sub(eta).norm(g) < 1e-10 * ne);
        assert!(s.set.apply(ProjectionKind::Stable, eta).norm(g) < 1e-10 * ne);
        assert!(s.set.apply(ProjectionKind::ImPlus, eta).norm(g) < 1e-8 * ne);
    }
}

#[test]
fn restricted_matrix_is_nilpotent_on_the_root_block() {
    let s = setup(1.0, 400);
    let ham = Hamiltonians::new(&s.gs);
    let m = s.set.restricted_unstable_matrix(&ham);
    assert_eq!(m.nrows(), 9);
    let scale = (0..9).flat_map(|i| (0..9).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].norm()).fold(0.0, f64::max);
    let root = faer::Mat::from_fn(8, 8, |i, j| m[(i, j)]);
    let sq = &root * &root;
    for i in 0..8 {
        for j in 0..8 {
            assert!(sq[(i, j)].norm() < 1e-3 * scale * scale, "({i}, {j}) {}", sq[(i, j)]);
        }
    }
    // exactly four nonzero chain links
    let links = (0..8).flat_map(|i| (0..8).map(move |j| (i, j))).filter(|&(i, j)| root[(i, j)].norm() > 1e-2 * scale).count();
    assert_eq!(links, 4);
    assert!((m[(8, 8)] - c64::new(0.0, s.set.sigma)).norm() < 1e-8);
}

#[test]
fn aj_system_zeroes_the_secular_pairings() {
    let s = setup(1.0, 400);
    let g = &s.gs.grid;
    let zero = solve_aj_system(g, &s.family, &s.plus, 0.0, &s.family).unwrap();
    assert!(zero.iter().all(|a| a.abs() < 1e-14));
    let a = solve_aj_system(g, &s.family, &s.plus, 0.1, &s.family).unwrap();
    let b = solve_aj_system(g, &s.family, &s.plus, 0.2, &s.family).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((2.0 * x - y).abs() < 1e-12 * (1.0 + y.abs()));
    }
    assert!(aj_residual(g, &s.family, &s.plus, 0.1, &s.family, &a) < 1e-12);

    // reference family from a nearby parameter point
    let other = solve_ground_state(1.02, g).unwrap();
    let reference = RootFamily::full(&other);
    let c = solve_aj_system(g, &s.family, &s.plus, 0.1, &reference).unwrap();
    assert!(aj_residual(g, &s.family, &s.plus, 0.1, &reference, &c) < 1e-10);
    assert!(solve_aj_system(g, &s.family, &s.plus, 0.1, &RootFamily::radial(&s.gs)).is_err());
}

#[test]
fn radial_family_pairs_within_its_channel() {
    let s = setup(1.0, 400);
    let radial = RootFamily::radial(&s.gs);
    assert_eq!(radial.labels, vec![1, 2]);
    let full = &s.family;
    for (a, b) in [(1, 2), (2, 1), (1, 1)] {
        assert!((radial.xi_eta(&s.gs.grid, a, b) - full.xi_eta(&s.gs.grid, a, b)).norm() < 1e-14);
    }
}

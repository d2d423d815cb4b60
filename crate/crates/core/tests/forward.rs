mod common;

use common::*;
use eit_oed::contact::{contact_field, ContactQuadrature, ElectrodeLayout};
use eit_oed::forward::{assemble_system, current_basis, measurement_map, solve_forward, CurrentBasis, ForwardModel};
use eit_oed::model::HeadModel;
use eit_oed::presets;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sigma(model: &HeadModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base = model.layered_conductivity(&LAYERS).unwrap();
    base.iter().map(|s| s * rng.gen_range(0.5..2.0)).collect()
}

#[test]
fn system_is_symmetric_and_scales_linearly() {
    let model = desk_model();
    let layout = symmetric_layout();
    let sigma = model.layered_conductivity(&LAYERS).unwrap();
    let quad = contact_field(&layout, model.surface()).unwrap().quadrature(model.mesh());
    let sys = assemble_system(&model, &sigma, &quad).unwrap();
    assert!(sys.matrix().asymmetry() <= 1e-14);

    let sigma2: Vec<f64> = sigma.iter().map(|s| 2.0 * s).collect();
    let layout2 = layout.with_peaks(layout.peaks().iter().map(|z| 2.0 * z).collect()).unwrap();
    let quad2 = contact_field(&layout2, model.surface()).unwrap().quadrature(model.mesh());
    let sys2 = assemble_system(&model, &sigma2, &quad2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let x = DVector::from_fn(sys.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let (a, b) = (sys.quadratic_form(&x), sys2.quadratic_form(&x));
        assert!(a > 0.0);
        assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs());
    }
}

#[test]
fn no_contact_means_no_coercivity() {
    let model = desk_model();
    let layout = symmetric_layout();
    let sigma = model.layered_conductivity(&LAYERS).unwrap();
    let mut quad: ContactQuadrature = contact_field(&layout, model.surface()).unwrap().quadrature(model.mesh());
    quad.peaks.iter_mut().for_each(|z| *z = 0.0);
    let sys = assemble_system(&model, &sigma, &quad).unwrap();
    // constant potential with zero electrode coefficients lies in the kernel
    let mut x = DVector::zeros(sys.dim());
    x.rows_mut(0, model.node_count()).fill(1.0);
    let q = sys.quadratic_form(&x);
    assert!(q.abs() < 1e-12, "{q}");
}

#[test]
fn gauge_reciprocity_and_residual() {
    let model = desk_model();
    let layout = symmetric_layout();
    let basis = current_basis(12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let sigma = random_sigma(&model, &mut rng);
        let fwd = ForwardModel::new(&model, &sigma, &layout, &basis).unwrap();
        assert!(fwd.relative_residual() <= 1e-10, "{}", fwd.relative_residual());
        let u = &fwd.solution().electrode;
        for c in u.column_iter() {
            assert!(c.sum().abs() <= 1e-12);
        }
        let i = basis.patterns();
        for a in 0..11 {
            for b in 0..11 {
                let ab = u.column(a).dot(&i.column(b));
                let ba = u.column(b).dot(&i.column(a));
                assert!((ab - ba).abs() <= 1e-10 * ab.abs().max(ba.abs()), "{a} {b}: {ab} {ba}");
            }
        }
    }
}

#[test]
fn antipodal_pair_is_antisymmetric() {
    let model = desk_model();
    let layout = ElectrodeLayout::new(vec![1.0, 1.0], vec![0.0, std::f64::consts::PI], 7.5e-3, 0.4, vec![1e3; 2]).unwrap();
    let sigma = vec![0.2; model.node_count()];
    let u = solve_forward(&model, &sigma, &layout, &current_basis(2).unwrap()).unwrap().electrode;
    assert!(u[(0, 0)] > 0.0);
    assert!((u[(0, 0)] + u[(1, 0)]).abs() <= 1e-12 * u[(0, 0)]);
}

#[test]
fn lower_conductivity_raises_driving_voltages() {
    let model = desk_model();
    let layout = symmetric_layout();
    let basis = current_basis(12).unwrap();
    let sigma = vec![0.2; model.node_count()];
    let half: Vec<f64> = sigma.iter().map(|s| 0.5 * s).collect();
    let a = solve_forward(&model, &sigma, &layout, &basis).unwrap().electrode;
    let b = solve_forward(&model, &half, &layout, &basis).unwrap().electrode;
    for l in 0..11 {
        let va = a[(0, l)] - a[(l + 1, l)];
        let vb = b[(0, l)] - b[(l + 1, l)];
        assert!(vb > va && va > 0.0, "pattern {l}: {va} -> {vb}");
    }
}

#[test]
fn measurement_vector_layout_and_relabeling() {
    let model = desk_model();
    let layout = symmetric_layout();
    let basis = current_basis(12).unwrap();
    let sigma = vec![0.2; model.node_count()];
    let fwd = ForwardModel::new(&model, &sigma, &layout, &basis).unwrap();
    let meas = fwd.measurements();
    assert_eq!(meas.len(), 132);
    assert_eq!(meas, measurement_map(&model, &sigma, &layout, &basis).unwrap());
    for i in 0..11 {
        for k in 0..12 {
            assert_eq!(meas[i * 12 + k].to_bits(), fwd.solution().electrode[(k, i)].to_bits());
        }
    }

    // swap electrodes 3 and 7 (zero-based 2 and 6)
    let (a, b) = (2usize, 6usize);
    let mut theta = layout.theta().to_vec();
    let mut phi = layout.phi().to_vec();
    theta.swap(a, b);
    phi.swap(a, b);
    let swapped = layout.with_angles(&theta, &phi).unwrap();
    let meas2 = measurement_map(&model, &sigma, &swapped, &basis).unwrap();
    let relabel = |k: usize| if k == a { b } else if k == b { a } else { k };
    let scale = meas.amax();
    for i in 0..11 {
        let i2 = relabel(i + 1) - 1;
        for k in 0..12 {
            let v = meas2[i2 * 12 + relabel(k)];
            assert!((v - meas[i * 12 + k]).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn refinement_differences_shrink() {
    let basis = current_basis(12).unwrap();
    let layout = symmetric_layout();
    let meas = |edge: f64| {
        let model = HeadModel::layered_ball(&ball(edge)).unwrap();
        let sigma = vec![0.2; model.node_count()];
        measurement_map(&model, &sigma, &layout, &basis).unwrap()
    };
    let (m1, m2, m3) = (meas(0.02), meas(0.01), meas(0.005));
    let d12 = (&m1 - &m2).norm();
    let d23 = (&m2 - &m3).norm();
    eprintln!("refinement differences: {d12:.4e} then {d23:.4e}");
    assert!(d12 <= 4.0 * d23 || d23 < d12);
}

#[test]
fn nonpositive_conductivity_rejected() {
    let model = desk_model();
    let mut sigma = vec![0.2; model.node_count()];
    sigma[17] = -0.1;
    let err = solve_forward(&model, &sigma, &symmetric_layout(), &current_basis(12).unwrap()).unwrap_err();
    assert!(matches!(err, eit_oed::Error::Conductivity { node: 17, .. }));
}

#[test]
fn other_feeder_basis_is_consistent() {
    // the span of the patterns does not depend on the feeder, so the
    // back-mapped potentials of a fixed current agree
    let model = desk_model();
    let layout = presets::layout_by_name("quadrant12").unwrap();
    let sigma = vec![0.2; model.node_count()];
    let b0 = current_basis(12).unwrap();
    let b3 = CurrentBasis::with_feeder(12, 3).unwrap();
    let u0 = solve_forward(&model, &sigma, &layout, &b0).unwrap().electrode;
    let u3 = solve_forward(&model, &sigma, &layout, &b3).unwrap().electrode;
    // I = e_4 - e_1 is pattern 0 of b3 and minus pattern 2 of b0
    let d = &u3.column(0) + &u0.column(2);
    assert!(d.amax() <= 1e-10 * u0.amax());
}

//! The chi closed form must coincide with the Gaussian closed form applied
//! to the lifted field on L x S^{p-1} with D = diag(B, I/sqrt(2)).

use lsfield::excursion::{chi_excursion_asymptotic, gaussian_excursion_asymptotic, PickandsInput};
use lsfield::field::{CovarianceModel, DField};
use lsfield::manifold::{sphere_grid, ManifoldDescriptor};
use lsfield::math::{minor_norm, Structure};
use nalgebra::DMatrix;

fn base_circle_model(c: f64, alpha: f64) -> CovarianceModel {
    CovarianceModel::powered_exponential(
        Structure::single(2, alpha, 1).unwrap(),
        DField::ScalarPerBlock(vec![c]),
    )
    .unwrap()
}

fn lifted_model(c: f64, alpha: f64) -> CovarianceModel {
    // E = {2, 2}, alpha = {alpha, 2}, R = {1, 1}, D = diag(c I, I/sqrt(2))
    let s = Structure::new(vec![2, 2], vec![alpha, 2.0], vec![1, 1]).unwrap();
    CovarianceModel::powered_exponential(s, DField::ScalarPerBlock(vec![c, 1.0 / 2.0f64.sqrt()]))
        .unwrap()
}

#[test]
fn chi_p2_equals_gaussian_on_lifted_manifold() {
    let circle = ManifoldDescriptor::circle(1.0).unwrap();
    let lifted = ManifoldDescriptor::product(
        circle.clone(),
        ManifoldDescriptor::unit_sphere_of_dim(2).unwrap(),
    );
    for (c, alpha, pick) in [
        (1.0, 2.0, PickandsInput::ClosedForm),
        (0.6, 2.0, PickandsInput::ClosedForm),
        (1.3, 1.0, PickandsInput::ClosedForm),
    ] {
        for u in [2.0, 3.0, 4.5] {
            let chi =
                chi_excursion_asymptotic(&circle, &base_circle_model(c, alpha), 2, u, 256, pick)
                    .unwrap();
            let gauss =
                gaussian_excursion_asymptotic(&lifted, &lifted_model(c, alpha), u, 256, pick)
                    .unwrap();
            assert!(
                (chi - gauss).abs() <= 1e-10 * chi.max(1e-30),
                "c={c} alpha={alpha} u={u}: chi {chi} vs gauss {gauss}"
            );
        }
    }
}

#[test]
fn sphere_frame_minor_norm_identity() {
    // ||(1/sqrt(2)) I_p P_u||_{p-1} = 2^{-(p-1)/2}
    for p in [2usize, 3] {
        let sphere = ManifoldDescriptor::unit_sphere_of_dim(p).unwrap();
        let want = 2.0f64.powf(-((p - 1) as f64) / 2.0);
        for v in sphere_grid(p, 40).unwrap() {
            let frame = sphere.tangent_frame(&v).unwrap();
            let scaled = DMatrix::identity(p, p) * (1.0 / 2.0f64.sqrt()) * &frame.columns;
            let got = minor_norm(&scaled).unwrap();
            assert!(
                (got - want).abs() < 1e-12,
                "p={p}: {got} vs {want} at {v:?}"
            );
        }
    }
}

#[test]
fn chi_empirical_matches_closed_form_at_desk_scale() {
    use lsfield::excursion::chi_suprema;
    let circle = ManifoldDescriptor::circle(1.0).unwrap();
    let model = base_circle_model(1.0, 2.0);
    let points = circle.sample_points(256).unwrap();
    let n_reps = 20_000;
    let sup = chi_suprema(&model, &points, 2, n_reps, 19).unwrap();
    for u in [3.0, 3.5] {
        let p_hat = sup.iter().filter(|&&s| s > u).count() as f64 / n_reps as f64;
        let asym = chi_excursion_asymptotic(&circle, &model, 2, u, 512, PickandsInput::ClosedForm)
            .unwrap();
        let ratio = p_hat / asym;
        assert!(
            (0.7..=1.3).contains(&ratio),
            "u={u}: empirical {p_hat} vs asymptotic {asym} (ratio {ratio})"
        );
    }
}

#[test]
fn chi_lift_supremum_converges_to_norm_supremum() {
    // (b) <= (a) with the gap shrinking as the sphere grid refines
    use lsfield::field::{chi_lift_supremum, sample_vector_field};
    let circle = ManifoldDescriptor::circle(1.0).unwrap();
    let model = base_circle_model(1.0, 2.0);
    let pts = circle.sample_points(64).unwrap();
    let sample = sample_vector_field(&model, &pts, 2, 200, 31).unwrap();
    let coarse = chi_lift_supremum(&sample, &sphere_grid(2, 16).unwrap()).unwrap();
    let fine = chi_lift_supremum(&sample, &sphere_grid(2, 512).unwrap()).unwrap();
    let mut gap_coarse = 0.0f64;
    let mut gap_fine = 0.0f64;
    for ((a1, b1), (a2, b2)) in coarse.iter().zip(&fine) {
        assert!(b1 <= a1 && b2 <= a2);
        assert!((a1 - a2).abs() < 1e-14);
        gap_coarse += a1 - b1;
        gap_fine += a2 - b2;
    }
    assert!(gap_fine < gap_coarse);
}

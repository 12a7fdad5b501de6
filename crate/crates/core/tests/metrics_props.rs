use gslider_core::analysis::{
    angular_error, find_peaks, fractional_anisotropy, nmse, DtiModel, PeakParams,
};
use gslider_core::encoding::{stick_tensor_signal, PhantomParams};
use gslider_core::qspace::spiral_directions;
use gslider_core::ridgelets::{OdfPipeline, RidgeletDictionary, RidgeletParams, Tessellation};
use proptest::prelude::*;

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn direction() -> impl Strategy<Value = [f64; 3]> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| unit([x, y, z]))
}

fn neg(v: [f64; 3]) -> [f64; 3] {
    [-v[0], -v[1], -v[2]]
}

fn stick(design: &gslider_core::qspace::QSpaceDesign, axes: &[[f64; 3]]) -> Vec<f64> {
    let p = PhantomParams::default();
    design
        .directions()
        .iter()
        .map(|q| {
            axes.iter()
                .map(|a| stick_tensor_signal(q, a, p.wm_axial, p.wm_radial, design.bvalue()))
                .sum::<f64>()
                / axes.len() as f64
        })
        .collect()
}

proptest! {
    #[test]
    fn angular_error_is_symmetric_and_axial(u in direction(), v in direction()) {
        let a = angular_error(&u, &v).unwrap();
        prop_assert!((a - angular_error(&v, &u).unwrap()).abs() < 1e-12);
        prop_assert!((a - angular_error(&neg(u), &v).unwrap()).abs() < 1e-12);
        prop_assert!((a - angular_error(&u, &neg(v)).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=90.0).contains(&a));
    }

    #[test]
    fn nmse_ignores_q_order(
        pairs in prop::collection::vec((-2.0f64..2.0, 0.1f64..2.0), 2..30),
        seed in any::<u64>(),
    ) {
        let (est, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut order: Vec<usize> = (0..est.len()).collect();
        // deterministic shuffle
        let mut s = seed | 1;
        for i in (1..order.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let pe: Vec<f64> = order.iter().map(|&i| est[i]).collect();
        let pt: Vec<f64> = order.iter().map(|&i| truth[i]).collect();
        let a = nmse(&est, &truth).unwrap();
        let b = nmse(&pe, &pt).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn fa_ignores_signal_scale(axis in direction(), alpha in 0.05f64..20.0) {
        let design = spiral_directions(30, 1000.0).unwrap();
        let model = DtiModel::new(&design).unwrap();
        let s = stick(&design, &[axis]);
        let scaled: Vec<f64> = s.iter().map(|v| alpha * v).collect();
        let a = model.fit_with_b0(&s, 1.0).unwrap();
        let b = model.fit_with_b0(&scaled, alpha).unwrap();
        prop_assert!((a.fa - b.fa).abs() < 1e-10);
        prop_assert!((b.s0 - alpha).abs() < 1e-8 * alpha);
    }
}

#[test]
fn fa_closed_forms() {
    assert!(fractional_anisotropy([1e-3; 3]).abs() < 1e-10);
    assert!((fractional_anisotropy([1.7e-3, 0.0, 0.0]) - 1.0).abs() < 1e-12);
    // λ = (2, 1, 1): sqrt(3/2)·sqrt(2/3)/sqrt(6) = 1/sqrt(6)
    assert!((fractional_anisotropy([2.0, 1.0, 1.0]) - 1.0 / 6f64.sqrt()).abs() < 1e-12);
}

fn pipeline() -> (gslider_core::qspace::QSpaceDesign, OdfPipeline) {
    let design = spiral_directions(64, 2000.0).unwrap();
    let dict = RidgeletDictionary::build(&design, &RidgeletParams::default()).unwrap();
    let odf = OdfPipeline::new(&dict, Tessellation::default_odf(), 8, 1e-3).unwrap();
    (design, odf)
}

fn nearest(p: &[f64; 3], set: &[[f64; 3]]) -> f64 {
    set.iter()
        .map(|q| angular_error(p, q).unwrap())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn single_fibre_odf_has_one_peak_on_the_fibre() {
    let (design, odf) = pipeline();
    for axis in [[1.0, 0.0, 0.0], unit([0.3, 0.8, -0.5]), unit([0.0, 0.2, 1.0])] {
        let peaks = find_peaks(&odf.odf(&stick(&design, &[axis])), odf.tessellation(), &PeakParams::default());
        assert_eq!(peaks.len(), 1, "axis {axis:?}: {:?}", peaks.directions);
        let err = angular_error(&peaks.directions[0], &axis).unwrap();
        assert!(err < 6.0, "axis {axis:?}: {err} degrees");
    }
}

#[test]
fn crossing_odf_resolves_both_fibres() {
    let (design, odf) = pipeline();
    let axes = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    let peaks = find_peaks(&odf.odf(&stick(&design, &axes)), odf.tessellation(), &PeakParams::default());
    assert_eq!(peaks.len(), 2, "{:?}", peaks.directions);
    for a in &axes {
        assert!(nearest(a, &peaks.directions) < 6.0);
    }
}

#[test]
fn peaks_follow_a_global_rotation() {
    // 90° about y maps the x/z crossing onto itself
    let rot = |v: &[f64; 3]| [v[2], v[1], -v[0]];
    let tess = Tessellation::default_odf();
    let rotated = tess.map_vertices(rot);
    let crossing = |v: &[f64; 3]| {
        let lobe = |d: f64| (8.0 * (d * d - 1.0)).exp();
        lobe(v[0]) + lobe(v[2])
    };
    let odf: Vec<f64> = tess.vertices().iter().map(crossing).collect();
    let odf_rot: Vec<f64> = rotated.vertices().iter().map(crossing).collect();
    let params = PeakParams::default();
    let p = find_peaks(&odf, &tess, &params);
    let q = find_peaks(&odf_rot, &rotated, &params);
    assert_eq!(p.len(), 2);
    assert_eq!(p.len(), q.len());
    let moved: Vec<[f64; 3]> = p.directions.iter().map(rot).collect();
    for d in &q.directions {
        assert!(nearest(d, &moved) < 1e-9);
    }
    // the rotated peaks still sit on the fibres
    for a in [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]] {
        assert!(nearest(&a, &q.directions) < 6.0);
    }
}

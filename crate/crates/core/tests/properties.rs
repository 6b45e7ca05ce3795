use std::f64::consts::TAU;

use fourier_shapes::contour::default_samples;
use fourier_shapes::objective::{LinearModel, Model, NaturalImage, RasterSettings};
use fourier_shapes::optimizer::{Init, OptimizerConfig};
use fourier_shapes::oracle::{dense_polygon, polygon_distance};
use fourier_shapes::raster::{rasterize, rasterize_raw, rasterize_backward, winding_number, CanvasSpec};
use fourier_shapes::regularizer::fundamental_and_harmonic_sums;
use fourier_shapes::{
    reg_loss, run_optimization, FourierCoefficients, ObjectiveMode, ObjectiveSpec, Problem, RegularizerConfig,
};
use proptest::prelude::*;

/// Near-elliptical contours: always simple, centred well inside the canvas.
fn blob(order: usize) -> impl Strategy<Value = FourierCoefficients> {
    (0.3f64..0.7, 0.0f64..TAU, -0.15f64..0.15, -0.15f64..0.15, 0.0f64..0.08, proptest::collection::vec(-1.0f64..1.0, 4 * order))
        .prop_map(move |(r, phase, x, y, m, noise)| {
            let mut c = FourierCoefficients::zeros(order);
            c.set(1, r * phase.cos(), r * phase.sin());
            c.set(-1, m * phase.sin(), m * phase.cos());
            c.set(0, x, y);
            for k in 2..=order as i64 {
                let s = 0.04 / (k * k) as f64;
                let i = 4 * (k as usize - 2);
                c.set(k, s * noise[i], s * noise[i + 1]);
                c.set(-k, s * noise[i + 2], s * noise[i + 3]);
            }
            c
        })
}

fn any_coeffs(order: usize) -> impl Strategy<Value = FourierCoefficients> {
    proptest::collection::vec(-1.0f64..1.0, 2 * (2 * order + 1))
        .prop_map(move |p| FourierCoefficients::from_params(order, p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coefficient_json_round_trips_bit_exactly(c in any_coeffs(5)) {
        let back = FourierCoefficients::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back.params().len(), 2 * (2 * 5 + 1));
        for (a, b) in back.params().iter().zip(c.params()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn normalized_grid_lies_in_unit_interval(c in any_coeffs(4)) {
        let (raw, mask) = rasterize(&c, &CanvasSpec::square(20), default_samples(4)).unwrap();
        prop_assert!(raw.values.iter().all(|v| v.is_finite()));
        prop_assert!(mask.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn far_pixels_are_near_integers(c in blob(4)) {
        let canvas = CanvasSpec::square(32);
        let raw = rasterize_raw(&c, &canvas, 256).unwrap();
        let poly = dense_polygon(&c, 4096).unwrap();
        let far = 2.0 * canvas.pitch_x();
        for row in 0..32 {
            for col in 0..32 {
                let p = canvas.pixel_center(col, row);
                if polygon_distance(p, &poly) > far {
                    let v = raw.at(row, col);
                    prop_assert!((v - v.round()).abs() <= 0.05, "({row},{col}) -> {v}");
                }
            }
        }
    }

    #[test]
    fn one_pitch_shift_moves_the_mask_one_pixel(c in blob(3)) {
        let canvas = CanvasSpec::square(32);
        let n = default_samples(3);
        let (_, mask) = rasterize(&c, &canvas, n).unwrap();
        let mut shifted = c.clone();
        shifted.translate(canvas.pitch_x(), 0.0);
        let (_, moved) = rasterize(&shifted, &canvas, n).unwrap();
        let mut worst: f64 = 0.0;
        for row in 1..31 {
            for col in 1..31 {
                worst = worst.max((moved.at(row, col + 1) - mask.at(row, col)).abs());
            }
        }
        prop_assert!(worst <= 0.02, "worst {worst}");
    }

    #[test]
    fn grid_equals_pointwise_winding(c in any_coeffs(3), seed in 0usize..1000) {
        let canvas = CanvasSpec::square(12);
        let raw = rasterize_raw(&c, &canvas, 64).unwrap();
        for idx in (seed % 7..144).step_by(7) {
            let (row, col) = (idx / 12, idx % 12);
            let w = winding_number(&c, canvas.pixel_center(col, row), 64).unwrap();
            prop_assert_eq!(w.to_bits(), raw.at(row, col).to_bits());
        }
    }

    #[test]
    fn gradient_has_store_layout(c in any_coeffs(3), u in proptest::collection::vec(-1.0f64..1.0, 64)) {
        let canvas = CanvasSpec::square(8);
        let g = rasterize_backward(&c, &canvas, 64, &u).unwrap();
        prop_assert_eq!(g.grads.len(), c.params().len());
        prop_assert!(g.is_finite());
    }

    #[test]
    fn regularizer_zero_iff_feasible(c in any_coeffs(4)) {
        let cfg = RegularizerConfig::default();
        let (s_fund, s_harm) = fundamental_and_harmonic_sums(&c);
        let caps_hold = c.harmonics().filter(|(k, _, _)| k.abs() >= 2).all(|(_, a, b)| a.hypot(b) <= cfg.gamma * s_fund);
        let feasible = cfg.lambda * s_harm <= s_fund && caps_hold;
        let (reg, _) = reg_loss(&c, &cfg);
        prop_assert_eq!(reg == 0.0, feasible);
    }

    #[test]
    fn regularizer_ignores_the_centre(c in any_coeffs(4), x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let cfg = RegularizerConfig::default();
        let mut moved = c.clone();
        moved.set(0, x, y);
        prop_assert_eq!(reg_loss(&c, &cfg).0.to_bits(), reg_loss(&moved, &cfg).0.to_bits());
    }

    #[test]
    fn keep_and_occlude_cancel(c in blob(2), seed in 0u64..1000, lambda_area in 0.0f64..3.0) {
        let side = 10;
        let mut v = seed;
        let mut next = || { v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (v >> 11) as f64 / (1u64 << 53) as f64 };
        let image = NaturalImage::new(side, side, 1, (0..side * side).map(|_| next()).collect()).unwrap();
        let weight = (0..2 * side * side).map(|_| next() * 0.2 - 0.1).collect();
        let model = LinearModel::new([side, side, 1], 2, weight, vec![0.1, -0.1]).unwrap();
        let mut total = 0.0;
        for mode in [ObjectiveMode::SaliencyKeep, ObjectiveMode::SaliencyOcclude] {
            let mut spec = ObjectiveSpec::new(mode, 0);
            spec.reg.lambda_reg = 0.0;
            spec.reg.lambda_area = lambda_area;
            let mut p = Problem {
                order: 2,
                raster: RasterSettings { canvas: CanvasSpec::square(side), samples: 256 },
                spec,
                model: Model::Linear(model.clone()),
                image: Some(image.clone()),
            };
            total += p.evaluate(&c).unwrap().total;
        }
        prop_assert!(total.abs() < 1e-12, "{total}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trace_steps_are_bounded_and_increasing(seed in 0u64..1000, steps in 1usize..30) {
        let side = 8;
        let model = LinearModel::new([side, side, 1], 2, vec![0.05; 2 * side * side], vec![0.0, 0.0]).unwrap();
        let mut p = Problem {
            order: 2,
            raster: RasterSettings { canvas: CanvasSpec::square(side), samples: 256 },
            spec: ObjectiveSpec::new(ObjectiveMode::Generate, 1),
            model: Model::Linear(model),
            image: None,
        };
        let cfg = OptimizerConfig { steps, seed, init: Init::random(0.1), ..Default::default() };
        let t = run_optimization(&mut p, &cfg, None).unwrap_or_else(|f| panic!("{f}"));
        prop_assert!(t.records.len() <= steps);
        prop_assert!(t.records.windows(2).all(|w| w[0].step < w[1].step));
    }
}

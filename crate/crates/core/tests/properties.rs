use inr_partition::hypothesis::{verify_proposition, Verdict};
use inr_partition::image::ImageField;
use inr_partition::partition::{connected_relabel, greedy_merge_logged, pog, pos, GridSpec, LabelMap, SegmentParams};
use inr_partition::spectra::dft2_values;
use inr_partition::trainer::metrics::psnr;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_image(h: usize, w: usize, seed: u64) -> ImageField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageField::from_fn(h, w, 3, |_, _, _| rng.random_range(0.0..1.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_cells_have_closed_form_areas(h in 1usize..60, w in 1usize..60, rx in 1usize..60, ry in 1usize..60) {
        prop_assume!(rx <= w && ry <= h);
        let mask = pog(h, w, GridSpec { rx, ry }).unwrap();
        let cols = w.div_ceil(rx);
        let rows = h.div_ceil(ry);
        prop_assert_eq!(mask.k(), cols * rows);
        let areas = mask.areas();
        for i in 0..rows {
            for j in 0..cols {
                let cw = rx.min(w - j * rx);
                let ch = ry.min(h - i * ry);
                prop_assert_eq!(areas[i * cols + j], cw * ch);
            }
        }
    }

    #[test]
    fn every_pixel_selects_exactly_one_head(h in 1usize..40, w in 1usize..40, rx in 1usize..40, ry in 1usize..40) {
        prop_assume!(rx <= w && ry <= h);
        let mask = pog(h, w, GridSpec { rx, ry }).unwrap();
        for p in 0..h * w {
            let hot = mask.one_hot(p);
            prop_assert_eq!(hot.len(), mask.k());
            prop_assert_eq!(hot.iter().map(|&v| v as usize).sum::<usize>(), 1);
            prop_assert_eq!(hot[mask.labels()[p] as usize], 1);
        }
    }

    #[test]
    fn segmentation_masks_are_connected_covers(h in 12usize..32, w in 12usize..32, k in prop::sample::select(vec![2usize, 4, 9]), seed in any::<u64>()) {
        let image = noise_image(h, w, seed);
        let params = SegmentParams { min_regions: 12, max_regions: 400, min_size: 2, ..SegmentParams::default() };
        let mask = pos(&image, k, &params).unwrap();
        prop_assert_eq!(mask.k(), k);
        prop_assert_eq!(mask.labels().len(), h * w);
        prop_assert!(mask.areas().iter().all(|&a| a > 0));
        prop_assert!(mask.to_label_map().labels_connected());
    }

    #[test]
    fn merging_absorbs_regions_in_nondecreasing_area(h in 2usize..16, w in 2usize..16, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = LabelMap::new(h, w, (0..h * w).map(|_| rng.random_range(0..4)).collect()).unwrap();
        let map = connected_relabel(&raw);
        let start = map.region_count();
        let (mask, log) = greedy_merge_logged(&map, 1).unwrap();
        prop_assert_eq!(mask.k(), 1);
        prop_assert_eq!(log.len(), start - 1);
        for (i, e) in log.iter().enumerate() {
            prop_assert_eq!(e.regions_left, start - 1 - i);
            prop_assert!(e.merged_area > e.absorbed_area);
        }
        for pair in log.windows(2) {
            prop_assert!(pair[0].absorbed_area <= pair[1].absorbed_area);
        }
        for k in 1..=start.min(6) {
            prop_assert!(greedy_merge_logged(&map, k).unwrap().0.to_label_map().labels_connected());
        }
    }

    #[test]
    fn parseval_holds(h in 1usize..24, w in 1usize..24, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        let spec = dft2_values(&f, h, w).unwrap();
        let energy: f64 = f.iter().map(|v| v * v).sum::<f64>() * (h * w) as f64;
        let spectral: f64 = spec.bins.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((spectral - energy).abs() <= 1e-9 * energy.max(1e-300));
    }

    #[test]
    fn dft_is_linear_and_conjugate_symmetric(h in 1usize..16, w in 1usize..16, a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let (sf, sg, sm) = (dft2_values(&f, h, w).unwrap(), dft2_values(&g, h, w).unwrap(), dft2_values(&mix, h, w).unwrap());
        for i in 0..h * w {
            let expect = sf.bins[i] * a + sg.bins[i] * b;
            prop_assert!((sm.bins[i] - expect).norm() <= 1e-9 * (1.0 + expect.norm()));
        }
        for fy in -(h as isize)..h as isize {
            for fx in -(w as isize)..w as isize {
                let d = sf.at(fy, fx) - sf.at(-fy, -fx).conj();
                prop_assert!(d.norm() <= 1e-9 * (1.0 + sf.at(fy, fx).norm()));
            }
        }
    }

    #[test]
    fn psnr_falls_as_noise_grows(seed in any::<u64>(), s1 in 0.001f64..0.2, s2 in 0.001f64..0.2) {
        prop_assume!((s1 - s2).abs() > 1e-6);
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = ImageField::from_fn(16, 16, 1, |_, _, _| rng.random_range(0.25..0.75)).unwrap();
        let noise: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noisy = |s: f64| {
            let data = base.data().iter().zip(&noise).map(|(v, n)| v + s * n).collect();
            ImageField::new(16, 16, 1, data).unwrap()
        };
        prop_assert!(psnr(&noisy(lo), &base).unwrap() > psnr(&noisy(hi), &base).unwrap());
    }

    #[test]
    fn proposition_holds_on_random_instances(p in 1.001f64..3.0, k in 3usize..12, extra in prop::collection::vec(0usize..60, 12)) {
        let mut min_n = (2f64.ln() / p.ln()).ceil() as usize;
        if p.powi(min_n as i32) < 2.0 {
            min_n += 1;
        }
        let counts: Vec<usize> = extra[..k].iter().map(|e| min_n + e).collect();
        match verify_proposition(p, &counts) {
            Verdict::Evaluated { holds, .. } => prop_assert!(holds),
            Verdict::Inapplicable(why) => prop_assert!(false, "{}", why),
        }
    }
}

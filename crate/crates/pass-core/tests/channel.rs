//! Geometry properties of the line-of-sight channel and the composed
//! effective channel: translation/reflection symmetry, distance decay, and
//! the Cauchy bound tying |h_eff| to its factors.

use nalgebra::DMatrix;
use pass_core::channel::{effective_channel, los_channel, UserLayout};
use pass_core::waveguide::{cascaded_gain_matrix, PaConfiguration, WaveguideSpec};
use proptest::prelude::*;

fn spec(n: usize) -> WaveguideSpec {
    WaveguideSpec::new(
        vec![1009.2378, 645.7996],
        DMatrix::from_element(n, 2, 150.0),
        0.006,
        0.0,
        20.0,
        0.005,
        3.0,
        28e9,
    )
    .unwrap()
}

fn config(n: usize, jitter: &[f64]) -> PaConfiguration {
    let positions: Vec<f64> = (0..n)
        .map(|i| 20.0 * (i as f64 + 0.5 + 0.4 * (jitter[i] - 0.5)) / n as f64)
        .collect();
    let beta_pa: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { 1009.2378 } else { 645.7996 })
        .collect();
    PaConfiguration::new(positions, beta_pa)
}

proptest! {
    // R depends on the user through (x_n - u_x) and u_y only, so shifting
    // PAs and user together along x changes nothing, and mirroring the user
    // across the waveguide changes nothing.
    #[test]
    fn channel_is_translation_and_reflection_invariant(
        jitter in proptest::collection::vec(0.0..1.0f64, 3),
        ux in 0.0..20.0f64,
        uy in 0.1..5.0f64,
        shift in -3.0..3.0f64,
    ) {
        let spec = spec(3);
        let base = config(3, &jitter);
        let h = los_channel(&spec, &base, [ux, uy, 0.0]).unwrap();

        let shifted = PaConfiguration::new(
            base.positions.iter().map(|x| x + shift).collect(),
            base.beta_pa.clone(),
        );
        let h_shift = los_channel(&spec, &shifted, [ux + shift, uy, 0.0]).unwrap();
        let h_mirror = los_channel(&spec, &base, [ux, -uy, 0.0]).unwrap();

        for n in 0..3 {
            // Mirroring is exact ((-y)^2 == y^2); translation perturbs
            // x_n - u_x by rounding, which the carrier phase amplifies to
            // ~1e-12 relative.
            prop_assert_eq!(h[n], h_mirror[n]);
            prop_assert!((h[n] - h_shift[n]).norm() <= 1e-9 * h[n].norm());
        }
    }

    // Pulling the user away from the waveguide weakens every entry.
    #[test]
    fn farther_users_see_weaker_entries(
        jitter in proptest::collection::vec(0.0..1.0f64, 3),
        ux in 0.0..20.0f64,
        uy in 0.1..4.9f64,
        extra in 0.1..5.0f64,
    ) {
        let spec = spec(3);
        let base = config(3, &jitter);
        let near = los_channel(&spec, &base, [ux, uy, 0.0]).unwrap();
        let far = los_channel(&spec, &base, [ux, uy + extra, 0.0]).unwrap();
        for n in 0..3 {
            prop_assert!(far[n].norm() < near[n].norm());
        }
    }

    // |h^H g_m| can never beat the triangle inequality against its factors.
    #[test]
    fn effective_entries_obey_cauchy_bound(
        jitter in proptest::collection::vec(0.0..1.0f64, 4),
        ux in 0.0..20.0f64,
        uy in -5.0..5.0f64,
    ) {
        let spec = spec(4);
        let cfg = config(4, &jitter);
        let g = cascaded_gain_matrix(&spec, &cfg).unwrap();
        let h = los_channel(&spec, &cfg, [ux, uy, 0.0]).unwrap();
        let eff = effective_channel(g.clone(), vec![h.clone()]).unwrap();
        for m in 0..2 {
            let bound: f64 = (0..4).map(|n| h[n].norm() * g[(n, m)].norm()).sum();
            prop_assert!(eff.h_eff[(0, m)].norm() <= bound + 1e-15);
        }
    }
}

#[test]
fn effective_channel_is_linear_in_users() {
    // Row k only depends on user k; adding users appends rows.
    let spec = spec(3);
    let cfg = config(3, &[0.5, 0.5, 0.5]);
    let g = cascaded_gain_matrix(&spec, &cfg).unwrap();
    let layout = UserLayout::new(vec![(4.0, 2.0), (11.0, -3.0)]).unwrap();
    let hs: Vec<_> = layout
        .iter()
        .map(|&u| los_channel(&spec, &cfg, u).unwrap())
        .collect();

    let both = effective_channel(g.clone(), hs.clone()).unwrap();
    let solo0 = effective_channel(g.clone(), vec![hs[0].clone()]).unwrap();
    let solo1 = effective_channel(g, vec![hs[1].clone()]).unwrap();

    assert_eq!(both.h_eff.nrows(), 2);
    for m in 0..2 {
        assert_eq!(both.h_eff[(0, m)], solo0.h_eff[(0, m)]);
        assert_eq!(both.h_eff[(1, m)], solo1.h_eff[(0, m)]);
    }
}

#[test]
fn user_directly_below_a_pa_hits_the_height_floor() {
    let spec = spec(1);
    let cfg = PaConfiguration::new(vec![7.0], vec![1009.2378]);
    let h = los_channel(&spec, &cfg, [7.0, 0.0, 0.0]).unwrap();
    let lambda = spec.wavelength();
    let expected = lambda / (4.0 * std::f64::consts::PI * 3.0);
    assert!((h[0].norm() - expected).abs() < 1e-18);
}

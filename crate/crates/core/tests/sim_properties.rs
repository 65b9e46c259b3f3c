use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sfc_core::sim::population::{agglomerate_random_pair, crystal_mass_gain, mc_population_step, slug_ode_step};
use sfc_core::sim::tempering::{advection_rhs, heat_split, Boundary};
use sfc_core::sim::{Inputs, Physics, PlantParams, SimConfig, Simulator, Slug};

fn transport_only(seed: u64) -> Simulator {
    Simulator::new(PlantParams::default(), SimConfig { seed, ..SimConfig::default() })
        .unwrap()
        .with_physics(Physics {
            heat_transfer: false,
            growth: false,
            agglomeration: false,
        })
}

fn cube_sum(ls: &[f64]) -> f64 {
    ls.iter().map(|l| l * l * l).sum()
}

fn total_solute_and_crystal(slug: &Slug, p: &PlantParams) -> f64 {
    slug.conc * slug.mass + slug.crystal_mass(p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn concentration_step_arrives_unsmeared(
        q_pm in 0.6e-7..1.6e-7f64,
        q_air in 0.6e-7..1.6e-7f64,
        switch in 5usize..60,
        c2 in 0.05..0.2f64,
    ) {
        let mut sim = transport_only(1);
        let u = Inputs { q_pm, q_air, q_tm: 3.5e-6, w_cryst: 0.0 };
        let c1 = sim.params().c_in;
        prop_assume!(c1 != c2);
        let mut exits = Vec::new();
        for k in 0..4000 {
            if k == switch {
                sim.params_mut().c_in = c2;
            }
            let r = sim.step(&u).unwrap();
            exits.extend(r.outlet.iter().map(|e| (e.slug.conc, e.slug.temp)));
            if exits.len() > switch + 5 {
                break;
            }
        }
        prop_assert!(exits.len() > switch + 5);
        let t_in = sim.params().t_pm_in;
        for (i, &(c, t)) in exits.iter().enumerate() {
            let expected = if i < switch { c1 } else { c2 };
            prop_assert_eq!(c, expected);
            prop_assert_eq!(t, t_in);
        }
    }

    #[test]
    fn slugs_stay_ordered(
        q_pm in 0.6e-7..1.6e-7f64,
        q_air in 0.0..1.6e-7f64,
        q_tm in 1e-6..6e-6f64,
        seed in 0u64..1000,
    ) {
        let mut sim = Simulator::new(PlantParams::default(), SimConfig { seed, ..SimConfig::default() }).unwrap();
        let u = Inputs { q_pm, q_air, q_tm, w_cryst: 0.005 };
        for _ in 0..300 {
            sim.step(&u).unwrap();
            prop_assert!(sim.state().is_ordered());
        }
        let length = sim.params().length;
        prop_assert!(sim.state().slugs.iter().all(|s| s.z >= 0.0 && s.z <= length));
    }

    #[test]
    fn growth_step_conserves_solute_plus_crystal_mass(
        n in 1usize..200,
        mean in 50e-6..400e-6f64,
        conc in 0.12..0.2f64,
        temp in 283.0..313.0f64,
        seed in 0u64..1000,
    ) {
        let p = PlantParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let particles: Vec<f64> = (0..n).map(|i| mean * (0.5 + (i as f64 / n as f64))).collect();
        let mut slug = Slug { z: 0.5, mass: 5e-4, conc, temp, particles };
        let before = total_solute_and_crystal(&slug, &p);
        let out = slug_ode_step(&mut slug, &p, temp, 0.0, 5.0).unwrap();
        mc_population_step(&mut slug, &p, out.growth, 0.0, 5.0, &mut rng);
        let after = total_solute_and_crystal(&slug, &p);
        prop_assert!(((after - before) / before).abs() <= 1e-9, "{} vs {}", before, after);
        prop_assert!(slug.conc >= 0.0);
    }

    #[test]
    fn agglomeration_conserves_cube_sum(
        n in 2usize..300,
        kernel in 1e-12..1e-8f64,
        seed in 0u64..1000,
    ) {
        let p = PlantParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let particles: Vec<f64> = (0..n).map(|i| 1e-4 + 1e-6 * i as f64).collect();
        let mut slug = Slug { z: 0.5, mass: 5e-4, conc: 0.14, temp: 300.0, particles };
        let before = cube_sum(&slug.particles);
        let out = mc_population_step(&mut slug, &p, 0.0, kernel, 5.0, &mut rng);
        prop_assert_eq!(slug.particles.len(), n - out.events);
        let after = cube_sum(&slug.particles);
        prop_assert!(((after - before) / before).abs() <= 1e-12);
    }

    #[test]
    fn pair_merge_conserves_cube_sum(ls in prop::collection::vec(1e-6..1e-3f64, 2..50), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = ls.clone();
        let before = cube_sum(&v);
        let merged = agglomerate_random_pair(&mut v, &mut rng).unwrap();
        prop_assert_eq!(v.len(), ls.len() - 1);
        prop_assert!(merged >= ls.iter().copied().fold(0.0, f64::min));
        prop_assert!(((cube_sum(&v) - before) / before).abs() <= 1e-12);
    }

    #[test]
    fn heat_split_sums_to_duty(
        a in -0.5..40.0f64,
        len in 0.0..8.0f64,
        q in -50.0..50.0f64,
        n in 10usize..200,
    ) {
        let total = 36.0;
        let dz = total / n as f64;
        let parts = heat_split(a, a + len, q, dz, n).unwrap();
        let sum: f64 = parts.iter().map(|(_, v)| v).sum();
        prop_assert!((sum - q).abs() <= 1e-12 * q.abs().max(f64::MIN_POSITIVE));
        prop_assert!(parts.iter().all(|(k, _)| *k < n));
        prop_assert!(parts.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn slug_heat_matches_grid_source(
        q_pm in 0.6e-7..1.6e-7f64,
        q_tm in 1e-6..6e-6f64,
        seed in 0u64..1000,
    ) {
        let mut sim = Simulator::new(PlantParams::default(), SimConfig { seed, ..SimConfig::default() }).unwrap();
        let u = Inputs { q_pm, q_air: 1.1e-7, q_tm, w_cryst: 0.005 };
        for _ in 0..200 {
            let r = sim.step(&u).unwrap();
            let scale = r.heat_released_by_slugs.abs().max(1e-300);
            prop_assert!((r.heat_released_by_slugs - r.heat_into_grid).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn periodic_advection_is_conservative(
        values in prop::collection::vec(280.0..320.0f64, 10..80),
        v in -2.0..2.0f64,
    ) {
        let dz = 0.1;
        let mut out = vec![0.0; values.len()];
        advection_rhs(&values, v, dz, Boundary::Periodic, &mut out);
        let net: f64 = out.iter().sum::<f64>() * dz;
        prop_assert!(net.abs() <= 1e-10 * v.abs().max(1.0) * 320.0);
    }
}

#[test]
fn crystal_mass_gain_is_exact_cube_difference() {
    let p = PlantParams::default();
    let ls = [1e-4, 2e-4, 3.5e-4];
    let dl = 1e-6;
    let exact: f64 = ls.iter().map(|l: &f64| (l + dl).powi(3) - l.powi(3)).sum::<f64>() * p.shape_factor * p.crystal_density;
    let got = crystal_mass_gain(&p, &ls, dl);
    assert!(((got - exact) / exact).abs() < 1e-10);
}

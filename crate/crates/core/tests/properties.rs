use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uavlab::channel::{fspl_bs, fspl_uav, ked_loss, knife_edge_j, link_budget, ChannelParams, LinkKind};
use uavlab::coverage::{compute_coverage_map, map_mae, CoverageMap};
use uavlab::nn::{soft_update, LayerSpec, Network, NetworkSpec};
use uavlab::pca;
use uavlab::replay::{PerConfig, PrioritizedBuffer, ReplayBuffer, SumTree, Transition, UniformBuffer};
use uavlab::rl::Observation;
use uavlab::world::{
    format_heightmap, generate_terrain, parse_heightmap, place_scenario, Bounds, PlacementParams, Position3D,
    Scenario, TerrainGrid, TerrainParams,
};

fn small_terrain(seed: u64, cells: usize) -> TerrainGrid {
    let params = TerrainParams { width_cells: cells, height_cells: cells, ..TerrainParams::default() };
    generate_terrain(seed, &params).unwrap()
}

fn small_scenario(seed: u64) -> Scenario {
    let terrain = small_terrain(seed, 9);
    let bounds = Bounds::over_terrain(&terrain, 10.0, 300.0);
    let placement = PlacementParams { n_users: 4, ..PlacementParams::default() };
    place_scenario(seed, &terrain, bounds, &placement).unwrap()
}

fn transition(tag: f64) -> Transition {
    let obs = Observation { image: vec![tag], aux: vec![] };
    Transition { state: obs.clone(), action: [tag; 3], reward: tag, next_state: obs, done: false }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn terrain_is_seed_deterministic_and_sized(seed in any::<u64>(), cells in 2usize..40) {
        let a = small_terrain(seed, cells);
        prop_assert_eq!(a.width(), cells);
        prop_assert_eq!(a.height(), cells);
        prop_assert!(a.elevations().iter().all(|v| v.is_finite()));
        prop_assert_eq!(a, small_terrain(seed, cells));
    }

    #[test]
    fn heightmap_text_round_trips(seed in any::<u64>(), cells in 2usize..20) {
        let t = small_terrain(seed, cells);
        let back = parse_heightmap(&format_heightmap(&t)).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn placement_satisfies_its_invariants(seed in any::<u64>()) {
        let s = small_scenario(seed);
        prop_assert!(s.validate(PlacementParams::default().bs_height).is_ok());
        prop_assert!(s.bounds.contains(&s.uav_init));
        prop_assert_eq!(s.users.len(), 4);
    }

    #[test]
    fn clamp_lands_inside_and_normalizes_to_unit_cube(
        x in -1e4f64..1e4, y in -1e4f64..1e4, z in -500f64..800.0,
    ) {
        let b = Bounds { x_min: 0.0, x_max: 6400.0, y_min: 0.0, y_max: 3200.0, z_min: 10.0, z_max: 300.0 };
        let p = Position3D::new(x, y, z);
        let c = b.clamp(&p);
        prop_assert!(b.contains(&c));
        prop_assert!(b.normalize(&c).iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(b.contains(&p), b.violation(&p).is_none());
        if b.contains(&p) {
            prop_assert_eq!(c, p);
        }
    }

    #[test]
    fn free_space_gain_decreases_with_distance(d in 1.0f64..1e5, f in 1.0f64..4.0) {
        let fc = f * 1e9;
        prop_assert!(fspl_bs(2.0 * d, fc).unwrap() < fspl_bs(d, fc).unwrap());
        prop_assert!(fspl_uav(2.0 * d, fc).unwrap() < fspl_uav(d, fc).unwrap());
    }

    #[test]
    fn knife_edge_is_nonnegative_and_nondecreasing(a in -5.0f64..20.0, da in 0.0f64..5.0) {
        prop_assert!(knife_edge_j(a) >= 0.0);
        prop_assert!(knife_edge_j(a + da) >= knife_edge_j(a) - 1e-12);
    }

    #[test]
    fn diffraction_is_a_loss_and_link_budget_adds_up(seed in any::<u64>(), ux in 0.0f64..1.0, uy in 0.0f64..1.0) {
        let s = small_scenario(seed);
        let params = ChannelParams::default();
        let b = s.bounds;
        let uav = Position3D::new(b.x_min + ux * (b.x_max - b.x_min), b.y_min + uy * (b.y_max - b.y_min), 50.0);
        for u in &s.users {
            prop_assert!(ked_loss(&s.terrain, &uav, u, params.fc, params.fresnel_clearance).unwrap() <= 0.0);
            let lb = link_budget(LinkKind::UavToUser, &s.terrain, &uav, u, &params).unwrap();
            prop_assert!((lb.gain_db - (lb.pl_db + lb.ked_db + lb.veg_db)).abs() < 1e-9);
            prop_assert!((lb.rx_power_dbm - (params.tx_power_uav_dbm + lb.gain_db)).abs() < 1e-9);
        }
    }

    #[test]
    fn coverage_csv_round_trips_and_mae_is_a_metric(seed in any::<u64>(), z1 in 20.0f64..290.0, z2 in 20.0f64..290.0) {
        let s = small_scenario(seed);
        let params = ChannelParams::default();
        let c = s.bounds.center();
        let a = compute_coverage_map(&s, &Position3D::new(c.x, c.y, z1), &params).unwrap();
        let b = compute_coverage_map(&s, &Position3D::new(c.x, c.y, z2), &params).unwrap();
        prop_assert_eq!(a.values.len(), 81);
        prop_assert!(a.values.iter().all(|v| v.is_finite()));
        prop_assert_eq!(CoverageMap::from_csv(&a.to_csv()).unwrap(), a.clone());
        prop_assert_eq!(map_mae(&a, &a).unwrap(), 0.0);
        prop_assert!((map_mae(&a, &b).unwrap() - map_mae(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pca_retains_more_components_for_higher_targets(seed in any::<u64>(), t in 0.5f64..0.99) {
        let s = small_scenario(seed);
        let maps = uavlab::harness::sample_maps(&s, &ChannelParams::default(), 20, seed).unwrap();
        let full = pca::fit(&maps, 1.0).unwrap();
        let lo = full.with_target(t).unwrap();
        let hi = full.with_target((t + 1.0) / 2.0).unwrap();
        prop_assert!(lo.k <= hi.k && hi.k <= full.k);
        let mae = |m: &pca::PcaModel| -> f64 {
            maps.iter().map(|x| map_mae(x, &m.reconstruct(&m.project(x).unwrap()).unwrap()).unwrap()).sum::<f64>()
        };
        prop_assert!(mae(&full) < 1e-6 * maps.len() as f64);
        prop_assert!(mae(&hi) <= mae(&lo) + 1e-9);
    }

    #[test]
    fn soft_update_is_a_convex_combination(s1 in any::<u64>(), s2 in any::<u64>(), tau in 0.0f64..=1.0) {
        let spec = NetworkSpec {
            input: [1, 1, 1],
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::ConcatAux { aux_len: 2 },
                LayerSpec::Dense { units: 4 },
                LayerSpec::LeakyRelu { slope: 0.01 },
                LayerSpec::Dense { units: 2 },
            ],
        };
        let online = Network::new(spec.clone(), s1).unwrap();
        let mut target = Network::new(spec, s2).unwrap();
        let before = target.clone();
        soft_update(&mut target, &online, tau).unwrap();
        for ((t, b), o) in target.params().iter().zip(before.params()).zip(online.params()) {
            for ((t, b), o) in t.data().iter().zip(b.data()).zip(o.data()) {
                prop_assert!((t - (tau * o + (1.0 - tau) * b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sum_tree_total_tracks_brute_force(values in prop::collection::vec(0.0f64..10.0, 1..64), ops in prop::collection::vec((0usize..64, 0.0f64..10.0), 0..100)) {
        let mut tree = SumTree::new(values.len());
        let mut shadow = values.clone();
        for (i, v) in values.iter().enumerate() {
            tree.set(i, *v);
        }
        for (i, v) in ops {
            let i = i % shadow.len();
            tree.set(i, v);
            shadow[i] = v;
        }
        let total: f64 = shadow.iter().sum();
        prop_assert!((tree.total() - total).abs() <= 1e-9 * total.max(1.0));
        prop_assert!(shadow.iter().enumerate().all(|(i, v)| tree.get(i) == *v));
    }

    #[test]
    fn replay_buffers_keep_the_newest_transitions(capacity in 1usize..32, pushes in 0usize..100, seed in any::<u64>()) {
        let mut uniform = ReplayBuffer::Uniform(UniformBuffer::new(capacity).unwrap());
        let mut per = ReplayBuffer::Prioritized(PrioritizedBuffer::new(capacity, PerConfig::default()).unwrap());
        for k in 0..pushes {
            uniform.push(transition(k as f64));
            per.push(transition(k as f64));
        }
        let expect: Vec<f64> = (pushes.saturating_sub(capacity)..pushes).map(|k| k as f64).collect();
        for buf in [&uniform, &per] {
            prop_assert_eq!(buf.len(), pushes.min(capacity));
            let got: Vec<f64> = buf.ordered().iter().map(|t| t.reward).collect();
            prop_assert_eq!(&got, &expect);
            if !buf.is_empty() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = buf.len().min(8);
                let batch = buf.sample(n, 0.4, &mut rng).unwrap();
                prop_assert_eq!(batch.indices.len(), n);
                prop_assert!(batch.weights.iter().all(|w| *w > 0.0 && *w <= 1.0 + 1e-12));
                prop_assert!(batch.indices.iter().all(|&i| expect.contains(&buf.get(i).reward)));
            }
        }
    }
}

use edgepir::cache::{CachingScheme, EncodedCache, FileLibrary, Regime};
use edgepir::rates::backhaul_pir;
use edgepir::simnet::{Network, SessionConfig, Simulator};
use edgepir::topology::{zipf, CoverageDistribution, Topology};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Setup {
    n_sbs: usize,
    t: usize,
    ks: Vec<Option<usize>>,
    n: usize,
    l_bits: usize,
    seed: u64,
}

fn setup() -> impl Strategy<Value = Setup> {
    (4usize..=7, 1usize..=2, 1usize..=2, prop::collection::vec(0usize..3, 2..5), 1usize..=3, any::<u64>())
        .prop_filter_map("k_max + T must fit below N_SBS", |(n_sbs, t, k_min, mult, spare, seed)| {
            let ks: Vec<Option<usize>> = mult
                .iter()
                .map(|&m| match m {
                    0 => None,
                    1 => Some(k_min),
                    _ => Some(2 * k_min),
                })
                .collect();
            let k_max = ks.iter().flatten().copied().max()?;
            let n = (k_max + t + spare - 1).min(n_sbs);
            (n >= k_max + t && k_max < n_sbs).then_some(Setup {
                n_sbs,
                t,
                ks,
                n,
                l_bits: 6 * k_min,
                seed,
            })
        })
}

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn build(s: &Setup) -> (FileLibrary, EncodedCache) {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let beta = s.n - (s.ks.iter().flatten().max().unwrap() + s.t - 1);
    let lib = FileLibrary::random(beta, s.l_bits, zipf(s.ks.len(), 0.7).unwrap(), &mut rng).unwrap();
    let storage: f64 = s.ks.iter().flatten().map(|&k| 1.0 / k as f64).sum();
    let scheme = CachingScheme::new(s.n_sbs, storage + 1e-9, s.ks.clone(), Regime::Pir).unwrap();
    let cache = EncodedCache::encode_default(&lib, &scheme, 8).unwrap();
    (lib, cache)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_session_recovers_the_requested_file(s in setup()) {
        let (lib, cache) = build(&s);
        let gamma = CoverageDistribution::point_mass(s.n_sbs);
        let net = Network::new(&lib, &cache, Topology::Literal { gamma, n_sbs: s.n_sbs }).unwrap();
        let sim = Simulator::new(&net, SessionConfig::new(s.t, s.n)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 1);
        for file in 0..lib.num_files() {
            for b in 0..=s.n_sbs {
                let in_range = sample(&mut rng, s.n_sbs, b).into_vec();
                let tr = sim.run_retrieval(file, &in_range, &mut rng).unwrap();
                prop_assert!(tr.success);
                prop_assert_eq!(tr.cached, s.ks[file].is_some());
                if let Some(rec) = &tr.recovered {
                    let want: Vec<String> = lib.file(file).iter().map(|x| bit_string(x)).collect();
                    prop_assert_eq!(rec, &want);
                }
            }
        }
    }

    #[test]
    fn snapshots_round_trip(s in setup()) {
        let (_, cache) = build(&s);
        let mut buf = Vec::new();
        cache.write_snapshot(&mut buf).unwrap();
        let back = EncodedCache::read_snapshot(&mut buf.as_slice()).unwrap();
        for j in 0..s.n_sbs {
            prop_assert_eq!(back.column(j).unwrap(), cache.column(j).unwrap());
        }
        prop_assert_eq!(back.scheme().ks(), cache.scheme().ks());
    }
}

#[test]
fn users_out_of_range_are_served_by_the_mbs_alone() {
    let s = Setup {
        n_sbs: 5,
        t: 1,
        ks: vec![Some(2), Some(2), None],
        n: 4,
        l_bits: 6,
        seed: 9,
    };
    let (lib, cache) = build(&s);
    let gamma = CoverageDistribution::point_mass(0);
    let net = Network::new(&lib, &cache, Topology::Literal { gamma, n_sbs: 5 }).unwrap();
    let sim = Simulator::new(&net, SessionConfig::new(1, 4)).unwrap();
    let mc = sim.monte_carlo(2_000, 4).unwrap();
    let mu: Vec<f64> = (0..3).map(|i| cache.scheme().mu(i)).collect();
    let r = backhaul_pir(lib.popularity(), &mu, &CoverageDistribution::point_mass(0), 4, 1).unwrap();
    assert!(r > 1.0);
    assert!(mc.agrees_with(r, 0.0, 4.0), "r_hat = {}, r = {r}", mc.r_hat);
    assert_eq!(mc.d_hat, 0.0);
}


use proptest::prelude::*;
use sigsel_core::dataset::{generate_synthetic, make_trial_split, read_dataset, GeneratorConfig, Protocol};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn splits_partition_each_users_genuine_set(
        users in 2usize..6,
        genuine in 20usize..30,
        seed in any::<u64>(),
        trial in any::<u64>(),
        protocol in prop_oneof![
            Just(Protocol::Skilled05), Just(Protocol::Skilled20),
            Just(Protocol::Random05), Just(Protocol::Random20)
        ],
    ) {
        let cfg = GeneratorConfig { n_users: users, genuine_per_user: genuine, forgery_per_user: 3, features: 6, planted: 2, ..Default::default() };
        let (ds, _) = generate_synthetic(&cfg, seed).unwrap();
        let split = make_trial_split(&ds, protocol, trial).unwrap();
        prop_assert_eq!(&split, &make_trial_split(&ds, protocol, trial).unwrap());
        for us in &split.users {
            let mut all: Vec<usize> = us.train.iter().chain(&us.test_genuine).copied().collect();
            all.sort_unstable();
            let mut own = ds.genuine_of(us.user).to_vec();
            own.sort_unstable();
            prop_assert_eq!(all, own);
            prop_assert_eq!(us.train.len(), protocol.train_count());
            if protocol.uses_random_forgeries() {
                let mut owners: Vec<usize> = us.test_forgery.iter()
                    .map(|&i| ds.user_index(&ds.sample(i).user_id).unwrap())
                    .collect();
                owners.sort_unstable();
                let expected: Vec<usize> = (0..users).filter(|&v| v != us.user).collect();
                prop_assert_eq!(owners, expected);
            } else {
                prop_assert_eq!(&us.test_forgery, &ds.forgeries_of(us.user).to_vec());
            }
        }
    }

    #[test]
    fn csv_round_trip_is_lossless(seed in any::<u64>()) {
        let cfg = GeneratorConfig { n_users: 3, genuine_per_user: 4, forgery_per_user: 2, features: 5, planted: 2, ..Default::default() };
        let (ds, _) = generate_synthetic(&cfg, seed).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), "mem.csv").unwrap();
        prop_assert_eq!(back, ds);
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn planted_features_separate_labels() {
    let cfg = GeneratorConfig::default();
    let (ds, truth) = generate_synthetic(&cfg, 17).unwrap();
    let mut wins = 0;
    let mut pairs = 0;
    for (u, id) in ds.users().iter().enumerate() {
        let planted = truth.planted(id).unwrap();
        let gap = |j: usize| {
            (mean(ds.genuine_of(u).iter().map(|&i| ds.sample(i).features[j]))
                - mean(ds.forgeries_of(u).iter().map(|&i| ds.sample(i).features[j])))
            .abs()
        };
        let background = (0..cfg.features)
            .filter(|j| !planted.contains(j))
            .map(gap)
            .fold(0.0, f64::max);
        for &j in planted {
            pairs += 1;
            wins += usize::from(gap(j) > background);
        }
    }
    assert!(wins as f64 >= 0.95 * pairs as f64, "{wins}/{pairs}");
}

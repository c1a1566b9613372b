mod common;

use common::*;
use hetsched_core::harness::generate_sample_specs;
use hetsched_core::spec_io::{parse_job, parse_resource_matrix, write_job, write_resource_matrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_pairs_roundtrip(seed in any::<u64>()) {
        let (job, rm) = random_spec_pair(&mut ChaCha8Rng::seed_from_u64(seed));
        if let Err(e) = roundtrip(&job, &rm) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn generated_samples_roundtrip(seed in any::<u64>(), n in 1usize..30, p in 1usize..6) {
        let (job, rm) = generate_sample_specs(n, p, &mut ChaCha8Rng::seed_from_u64(seed));
        if let Err(e) = roundtrip(&job, &rm) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn resource_blocks_in_any_order(seed in any::<u64>()) {
        let (job, rm) = random_spec_pair(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut reversed = rm.clone();
        reversed.resources.reverse();
        let text = write_resource_matrix(&reversed);
        let parsed = parse_resource_matrix(&text, &job).unwrap();
        prop_assert_eq!(parsed.exec_times(&job).unwrap(), rm.exec_times(&job).unwrap());
    }

    #[test]
    fn parser_never_panics(text in "[ -~\n]{0,200}") {
        let _ = parse_job(&text);
    }
}

#[test]
fn files_on_disk_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (job, rm) = generate_sample_specs(10, 3, &mut ChaCha8Rng::seed_from_u64(0));
    let (jp, rp) = (dir.path().join("sample.job"), dir.path().join("sample.rm"));
    std::fs::write(&jp, write_job(&job)).unwrap();
    std::fs::write(&rp, write_resource_matrix(&rm)).unwrap();
    let job2 = parse_job(&std::fs::read_to_string(&jp).unwrap()).unwrap();
    let rm2 = parse_resource_matrix(&std::fs::read_to_string(&rp).unwrap(), &job2).unwrap();
    assert_eq!((job2, rm2), (job, rm));
}

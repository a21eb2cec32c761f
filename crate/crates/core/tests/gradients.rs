mod support {
    pub mod grad_cases;
}

use support::grad_cases::{run, ALL};

#[test]
fn every_block_matches_central_differences() {
    for case in ALL {
        let r = run(case, 100, 7).unwrap();
        assert!(r.entries > 100, "{}", case.name());
        assert!(r.max_rel_error < 1e-4, "{}: max relative error {:e}", case.name(), r.max_rel_error);
    }
}

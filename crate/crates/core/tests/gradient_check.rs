mod common;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..8 {
        let r = common::check_scene(seed);
        println!(
            "seed {seed}: {} params, max rel err {:.2e} ({})",
            r.checked, r.max_rel_err, r.worst
        );
        assert!(r.max_rel_err < 1e-3, "seed {seed}: {}", r.worst);
    }
}

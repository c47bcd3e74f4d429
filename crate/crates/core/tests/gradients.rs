use deepconn_core::verify::{gradcheck_suite, layer_names, SuiteOptions};

#[test]
fn every_layer_and_model_passes() {
    let out = gradcheck_suite(&SuiteOptions::default()).unwrap();
    assert_eq!(out.len(), layer_names().len());
    for o in &out {
        println!(
            "{:<20} max rel err {:.3e} over {} entries",
            o.name, o.max_relative_error, o.entries_checked
        );
    }
    for o in &out {
        assert!(
            o.passed,
            "{} failed: {:.3e} at {}[{}] analytic {} numeric {}",
            o.name,
            o.max_relative_error,
            o.worst_param,
            o.worst_index,
            o.worst_analytic,
            o.worst_numeric
        );
    }
}

#[test]
fn corrupted_gradients_are_caught() {
    let opts = SuiteOptions {
        grad_scale: 1.1,
        ..SuiteOptions::default()
    };
    let out = gradcheck_suite(&opts).unwrap();
    for o in &out {
        assert!(!o.passed, "{} missed the corruption", o.name);
        assert!(
            (o.max_relative_error - 0.1 / 2.1).abs() < 1e-3,
            "{}",
            o.max_relative_error
        );
    }
}

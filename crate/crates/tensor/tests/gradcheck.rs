//! Every differentiable operation against central finite differences, in both precisions.

use iarn_tensor::gradcheck::op_suite;

#[test]
fn every_op_matches_finite_differences_f32() {
    for (name, r) in op_suite::<f32>(1e-3, 1e-3).unwrap() {
        assert!(
            r.fraction_within() >= 0.95,
            "{name}: {:.1}% within 1e-3, worst {:.2e}",
            r.fraction_within() * 100.0,
            r.worst
        );
    }
}

#[test]
fn every_op_matches_finite_differences_f64() {
    for (name, r) in op_suite::<f64>(1e-6, 1e-5).unwrap() {
        assert!(r.worst <= 1e-5, "{name}: worst rel err {:.2e}", r.worst);
    }
}

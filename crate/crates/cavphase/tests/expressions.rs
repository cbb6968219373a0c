use cavphase::expr::{parse_expression, parse_traction_expression};

#[test]
fn preset_tractions_evaluate() {
    let g = parse_traction_expression("(0, 1/10 - 3/10*y)").unwrap();
    let v = g.eval([0.0, 1.0]);
    assert_eq!(v[0], 0.0);
    assert!((v[1] + 0.2).abs() < 1e-15);
    let g = parse_traction_expression("(-y, -x)").unwrap();
    assert_eq!(g.eval([0.5, -0.5]), [0.5, -0.5]);
    let g = parse_traction_expression("(5*x, 4*y)").unwrap();
    for p in [[0.3, -0.7], [-1.0, 1.0], [0.125, 0.0]] {
        assert_eq!(g.eval(p), [5.0 * p[0], 4.0 * p[1]]);
    }
    let g = parse_traction_expression("(-1/2*x^2, y^2)").unwrap();
    assert_eq!(g.eval([0.6, -0.3]), [-0.5 * 0.6 * 0.6, 0.3 * 0.3]);
    let f = g.to_traction();
    assert_eq!(f([1.0, 2.0]), [-0.5, 4.0]);
}

#[test]
fn parse_errors_point_at_the_problem() {
    let e = parse_expression("1 + * x").unwrap_err();
    assert_eq!(e.position, 4);
    assert!(e.to_string().starts_with("at column 5:"), "{e}");
    assert!(parse_traction_expression("(x, y").is_err());
    assert!(parse_traction_expression("(x)").is_err());
    assert!(parse_expression("z").is_err());
}

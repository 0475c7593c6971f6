use vrmass_cli::config::*;

#[test]
fn minimal_config_is_valid() {
    let c = parse_config("n = 3\nsubcommand = mass\n").unwrap();
    assert_eq!(c.subcommand, Subcommand::Mass);
    assert_eq!(c.n, 3);
    assert_eq!(c.intervals, 400);
    assert_eq!(c.radii, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
    assert!(!c.defaulted.contains(&"n".to_string()));
    assert!(c.defaulted.contains(&"newton_tol".to_string()));
}

#[test]
fn dimension_two_is_rejected_with_its_line() {
    let e = parse_config("# comment\nsubcommand = mass\nn = 2\n").unwrap_err();
    assert_eq!(e.line, 3);
    assert!(e.message.contains("n must be"));
}

#[test]
fn unknown_keys_type_errors_and_duplicates_carry_lines() {
    let e = parse_config("n = 3\nbogus = 1\n").unwrap_err();
    assert_eq!(e.line, 2);
    assert!(e.message.contains("unknown key"));
    let e = parse_config("\n\nintervals = many\n").unwrap_err();
    assert_eq!(e.line, 3);
    let e = parse_config("fiber = torus\n").unwrap_err();
    assert_eq!(e.line, 1);
    let e = parse_config("n = 3\nn = 4\n").unwrap_err();
    assert_eq!(e.line, 2);
    let e = parse_config("newton_tol = -1\n").unwrap_err();
    assert_eq!(e.line, 1);
    let e = parse_config("r_max = 12\nradii = 3, 13\n").unwrap_err();
    assert_eq!(e.line, 2);
    let e = parse_config("no equals sign\n").unwrap_err();
    assert_eq!(e.line, 1);
}

#[test]
fn missing_tolerance_is_defaulted_and_echoed_in_the_manifest() {
    let c = parse_config("subcommand = lichnerowicz\n").unwrap();
    assert_eq!(c.newton_tol, 1e-10);
    let m = c.manifest();
    assert!(m.contains("newton_tol = 1e-10\n"));
    let line = m.lines().find(|l| l.starts_with("defaulted = ")).unwrap();
    assert!(line.split(" = ").nth(1).unwrap().split(',').any(|k| k == "newton_tol"));
    assert!(m.contains("vrmass_core_version = "));
    // every key appears
    for k in KEYS {
        assert!(m.lines().any(|l| l.starts_with(&format!("{k} = "))), "{k}");
    }
}

#[test]
fn resolved_text_parses_back_to_the_same_config() {
    let c = parse_config("subcommand = evolve\nradii = 8, 9.5, 12\neps = 0.03\nout = runs/a\n").unwrap();
    let again = parse_config(&c.to_text()).unwrap();
    assert_eq!(RunConfig { defaulted: vec![], ..c }, RunConfig { defaulted: vec![], ..again });
}

#[test]
fn subcommand_dependent_defaults() {
    let e = parse_config("subcommand = evolve\n").unwrap();
    assert_eq!((e.inner, e.fiber, e.family), (Inner::TwoEnded, FiberKind::Hyperbolic, Family::Tt));
    let v = parse_config_for("", Some(Subcommand::Variation)).unwrap();
    assert_eq!((v.inner, v.family), (Inner::TwoEnded, Family::Background));
    assert!(!v.defaulted.contains(&"subcommand".to_string()));
    let m = parse_config("").unwrap();
    assert_eq!((m.subcommand, m.inner), (Subcommand::Mass, Inner::Excision));
    let e = parse_config_for("subcommand = mass\n", Some(Subcommand::Lapse)).unwrap_err();
    assert_eq!(e.line, 1);
}

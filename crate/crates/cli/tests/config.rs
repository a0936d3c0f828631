use homlab::analysis::HypothesisStatus;
use homlab::DomainKind;
use homlab_cli::config::{parse_config_str, Kind, OUTSIDE_HYPOTHESES};

#[test]
fn minimal_cell_config_gets_defaults() {
    let cfg = parse_config_str("kind = \"cell\"\n", Kind::Cell).unwrap();
    assert_eq!(cfg.geometry.dim, 3);
    assert_eq!(cfg.geometry.resolution, 64);
    assert_eq!(cfg.geometry.kind, DomainKind::Torus);
    assert_eq!(cfg.geometry.obstacle.analytic_porosity(3), homlab::Obstacle::ball(0.5).unwrap().analytic_porosity(3));
    assert!(cfg.warnings.is_empty());
    assert_eq!(cfg.hypotheses, HypothesisStatus::Inside);
}

#[test]
fn every_violation_is_reported_at_once() {
    let text = r#"
kind = "cell"
colour = "red"
[geometry]
dimension = 5
resolution = 15
spin = 1
[physics]
gamma = 0.5
"#;
    let err = parse_config_str(text, Kind::Cell).unwrap_err();
    let all = err.violations.join("\n");
    assert!(all.contains("unknown key 'colour'"), "{all}");
    assert!(all.contains("unknown key 'geometry.spin'"), "{all}");
    assert!(all.contains("dimension"), "{all}");
    assert!(all.contains("resolution"), "{all}");
    assert!(all.contains("exponent") || all.contains("γ"), "{all}");
    assert!(err.violations.len() >= 5);
}

#[test]
fn subcritical_gamma_warns_and_proceeds() {
    let cfg = parse_config_str("kind = \"cell\"\n[physics]\ngamma = 1.4\n", Kind::Cell).unwrap();
    assert_eq!(cfg.hypotheses, HypothesisStatus::Outside);
    assert!(cfg.warnings.iter().any(|w| w.contains(OUTSIDE_HYPOTHESES)));
    assert_eq!(OUTSIDE_HYPOTHESES, "outside Theorem 1 hypotheses");
}

#[test]
fn torus_epsilon_must_tile_the_domain() {
    let err = parse_config_str("[geometry]\ndomain = \"torus\"\nepsilon = [0.2]\n", Kind::Nse).unwrap_err();
    assert!(err.violations.iter().any(|v| v.contains("ε = 0.2")), "{err}");
    assert!(parse_config_str("[geometry]\ndomain = \"torus\"\nepsilon = [0.25]\n", Kind::Nse).is_ok());
}

#[test]
fn kind_must_match_the_command() {
    assert!(parse_config_str("kind = \"rate\"\n", Kind::Cell).is_err());
    assert!(parse_config_str("kind = \"nonsense\"\n", Kind::Cell).is_err());
}

#[test]
fn rate_sweeps_need_three_decreasing_epsilons() {
    let two = "[geometry]\ndimension = 2\nepsilon = [0.25, 0.125]\n";
    assert!(parse_config_str(two, Kind::Rate).is_err());
    let unordered = "[geometry]\ndimension = 2\nepsilon = [0.125, 0.25, 0.0625]\n";
    assert!(parse_config_str(unordered, Kind::Rate).is_err());
    let ok = "[geometry]\ndimension = 2\nresolution = 16\nepsilon = [0.25, 0.125, 0.0625]\n";
    assert!(parse_config_str(ok, Kind::Rate).is_ok());
}

#[test]
fn expressions_are_checked_against_the_dimension() {
    let bad = "[geometry]\ndimension = 2\n[physics]\nrho0 = \"1 + 0.1*cos(z)\"\n";
    assert!(parse_config_str(bad, Kind::Nse).is_err());
    let syntax = "[geometry]\ndimension = 2\n[physics]\nrho0 = \"1 + exp(x)\"\n";
    assert!(parse_config_str(syntax, Kind::Nse).is_err());
    let ok = "[geometry]\ndimension = 2\n[physics]\nrho0 = \"1 + 0.1*cos(2*pi*y)\"\nforce = [\"0\", \"-1\"]\n";
    assert!(parse_config_str(ok, Kind::Nse).is_ok());
}

#[test]
fn toml_syntax_errors_are_config_errors() {
    assert!(parse_config_str("kind = ", Kind::Cell).is_err());
}

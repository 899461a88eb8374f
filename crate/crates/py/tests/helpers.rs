use hps_core::integrator::Method;
use hps_core::model::SocialCase;
use hps_sim::{parse_case, parse_method};

#[test]
fn case_names() {
    assert_eq!(parse_case("i"), Ok(SocialCase::CaseI));
    assert_eq!(parse_case("ii"), Ok(SocialCase::CaseII));
    assert!(parse_case("iii").is_err());
}

#[test]
fn method_names() {
    assert_eq!(parse_method("exact"), Ok(Method::ExactExp));
    assert_eq!(parse_method("rk4"), Ok(Method::Rk4));
    assert!(parse_method("euler").unwrap_err().contains("euler"));
}

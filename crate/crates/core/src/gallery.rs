//! Bundled filters. The JSON files under `gallery/` are the source of truth
//! and are embedded at compile time so tests and the CLI share exact inputs.

use crate::filter_bank::FilterSpec;

pub const NAMES: [&str; 5] = ["haar", "stretched_haar", "d4", "shannon", "highpass_haar"];

const HAAR: &str = include_str!("../gallery/haar.json");
const STRETCHED_HAAR: &str = include_str!("../gallery/stretched_haar.json");
const D4: &str = include_str!("../gallery/d4.json");
const SHANNON: &str = include_str!("../gallery/shannon.json");
const HIGHPASS_HAAR: &str = include_str!("../gallery/highpass_haar.json");

/// Raw JSON text of a bundled filter.
pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "haar" => Some(HAAR),
        "stretched_haar" => Some(STRETCHED_HAAR),
        "d4" => Some(D4),
        "shannon" => Some(SHANNON),
        "highpass_haar" => Some(HIGHPASS_HAAR),
        _ => None,
    }
}

pub fn builtin(name: &str) -> Option<FilterSpec> {
    source(name).map(|s| FilterSpec::from_json_str(s).expect("bundled filter parses"))
}

pub fn haar() -> FilterSpec {
    builtin("haar").unwrap()
}

pub fn stretched_haar() -> FilterSpec {
    builtin("stretched_haar").unwrap()
}

pub fn d4() -> FilterSpec {
    builtin("d4").unwrap()
}

pub fn shannon() -> FilterSpec {
    builtin("shannon").unwrap()
}

pub fn highpass_haar() -> FilterSpec {
    builtin("highpass_haar").unwrap()
}

pub fn all() -> Vec<FilterSpec> {
    NAMES.iter().map(|n| builtin(n).unwrap()).collect()
}

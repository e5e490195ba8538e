use super::{parse_model, ReactionNetwork};

/// `(name, model text)` for the shipped example networks.
pub const BUILTIN_MODELS: [(&str, &str); 6] = [
    ("birth", include_str!("../../models/birth.model")),
    ("birth-death", include_str!("../../models/birth-death.model")),
    ("lotka-volterra", include_str!("../../models/lotka-volterra.model")),
    ("dimerization", include_str!("../../models/dimerization.model")),
    ("toggle", include_str!("../../models/toggle.model")),
    ("fast-slow", include_str!("../../models/fast-slow.model")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_MODELS.iter().map(|(n, _)| *n)
}

/// Parses a shipped model by name.
pub fn builtin(name: &str) -> Option<ReactionNetwork> {
    BUILTIN_MODELS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_model(text).expect("builtin model must parse"))
}

//! Reaction networks: species, reactions, intensities and the model text format.

mod builtin;
pub mod expr;
mod nullspace;
mod parse;

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use builtin::{builtin, builtin_names, BUILTIN_MODELS};
pub use expr::Expr;
pub use nullspace::{integer_nullspace_basis, nullspace_lattice, LatticeError, DEFAULT_LATTICE_CAP};
pub use parse::parse_model;

/// A point of the state space Z_{>=0}^d.
pub type State = Vec<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("network must declare at least one species")]
    NoSpecies,
    #[error("network must contain at least one reaction")]
    NoReactions,
    #[error("reaction {0}: vector length does not match species count")]
    DimensionMismatch(usize),
    #[error("initial state has a negative component")]
    NegativeInitialState,
    #[error("time horizon must be positive and finite, got {0}")]
    BadHorizon(String),
    #[error("reaction {0}: rate constant must be finite and non-negative")]
    BadRateConstant(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntensitySpec {
    /// `kappa * prod_i x_i! / (x_i - y_i)!`, zero when any `x_i < y_i`.
    MassAction { kappa: f64, reactant_counts: Vec<u32> },
    Expression(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    reactants: Vec<u32>,
    products: Vec<u32>,
    zeta: Vec<i64>,
    intensity: IntensitySpec,
    // (species, y_i) for y_i > 0
    mass_action_terms: Vec<(usize, u32)>,
    // species whose count falls when this reaction fires
    consumed: Vec<usize>,
}

impl Reaction {
    /// Builds a reaction from reactant/product multiplicities. A mass-action
    /// intensity takes its `y` from the reactants.
    pub fn mass_action(reactants: Vec<u32>, products: Vec<u32>, kappa: f64) -> Self {
        let y = reactants.clone();
        Self::new(
            reactants,
            products,
            IntensitySpec::MassAction {
                kappa,
                reactant_counts: y,
            },
        )
    }

    pub fn with_expression(reactants: Vec<u32>, products: Vec<u32>, expr: Expr) -> Self {
        Self::new(reactants, products, IntensitySpec::Expression(expr))
    }

    pub fn new(reactants: Vec<u32>, products: Vec<u32>, intensity: IntensitySpec) -> Self {
        let zeta: Vec<i64> = products
            .iter()
            .zip(&reactants)
            .map(|(&p, &r)| i64::from(p) - i64::from(r))
            .collect();
        let mass_action_terms = match &intensity {
            IntensitySpec::MassAction {
                reactant_counts, ..
            } => reactant_counts
                .iter()
                .enumerate()
                .filter(|(_, &y)| y > 0)
                .map(|(i, &y)| (i, y))
                .collect(),
            IntensitySpec::Expression(_) => Vec::new(),
        };
        let consumed = zeta
            .iter()
            .enumerate()
            .filter(|(_, &z)| z < 0)
            .map(|(i, _)| i)
            .collect();
        Self {
            reactants,
            products,
            zeta,
            intensity,
            mass_action_terms,
            consumed,
        }
    }

    pub fn zeta(&self) -> &[i64] {
        &self.zeta
    }

    pub fn reactants(&self) -> &[u32] {
        &self.reactants
    }

    pub fn products(&self) -> &[u32] {
        &self.products
    }

    pub fn intensity_spec(&self) -> &IntensitySpec {
        &self.intensity
    }

    /// Species whose counts this reaction's intensity reads, including the
    /// non-negativity guard.
    pub fn dependencies(&self) -> Vec<usize> {
        let mut deps: Vec<usize> = self.consumed.clone();
        match &self.intensity {
            IntensitySpec::MassAction { .. } => {
                for &(i, _) in &self.mass_action_terms {
                    if !deps.contains(&i) {
                        deps.push(i);
                    }
                }
            }
            IntensitySpec::Expression(e) => e.species_used(&mut deps),
        }
        deps.sort_unstable();
        deps
    }

    /// Intensity at `x`, zero whenever firing would leave the non-negative
    /// orthant.
    #[inline]
    pub fn rate(&self, x: &[i64]) -> f64 {
        for &i in &self.consumed {
            if x[i] + self.zeta[i] < 0 {
                return 0.0;
            }
        }
        match &self.intensity {
            IntensitySpec::MassAction { kappa, .. } => {
                let mut prod = *kappa;
                for &(i, y) in &self.mass_action_terms {
                    let xi = x[i];
                    if xi < i64::from(y) {
                        return 0.0;
                    }
                    let mut ff: i64 = 1;
                    let mut overflow = false;
                    for j in 0..i64::from(y) {
                        match ff.checked_mul(xi - j) {
                            Some(v) => ff = v,
                            None => {
                                overflow = true;
                                break;
                            }
                        }
                    }
                    if overflow {
                        prod *= (0..i64::from(y)).map(|j| (xi - j) as f64).product::<f64>();
                    } else {
                        prod *= ff as f64;
                    }
                }
                prod
            }
            IntensitySpec::Expression(e) => e.eval(x),
        }
    }
}

/// An immutable reaction network with a point-mass initial state and a time
/// horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    initial_state: State,
    horizon: f64,
}

impl ReactionNetwork {
    pub fn new(
        species: Vec<String>,
        reactions: Vec<Reaction>,
        initial_state: State,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        let d = species.len();
        if d == 0 {
            return Err(ModelError::NoSpecies);
        }
        if reactions.is_empty() {
            return Err(ModelError::NoReactions);
        }
        for (r, reaction) in reactions.iter().enumerate() {
            let y_len = match &reaction.intensity {
                IntensitySpec::MassAction {
                    kappa,
                    reactant_counts,
                } => {
                    if !(kappa.is_finite() && *kappa >= 0.0) {
                        return Err(ModelError::BadRateConstant(r));
                    }
                    reactant_counts.len()
                }
                IntensitySpec::Expression(_) => d,
            };
            if reaction.zeta.len() != d
                || reaction.reactants.len() != d
                || reaction.products.len() != d
                || y_len != d
            {
                return Err(ModelError::DimensionMismatch(r));
            }
        }
        if initial_state.len() != d {
            return Err(ModelError::DimensionMismatch(usize::MAX));
        }
        if initial_state.iter().any(|&v| v < 0) {
            return Err(ModelError::NegativeInitialState);
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ModelError::BadHorizon(horizon.to_string()));
        }
        Ok(Self {
            species,
            reactions,
            initial_state,
            horizon,
        })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn initial_state(&self) -> &[i64] {
        &self.initial_state
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_initial_state(mut self, x0: State) -> Result<Self, ModelError> {
        if x0.len() != self.num_species() {
            return Err(ModelError::DimensionMismatch(usize::MAX));
        }
        if x0.iter().any(|&v| v < 0) {
            return Err(ModelError::NegativeInitialState);
        }
        self.initial_state = x0;
        Ok(self)
    }

    pub fn with_horizon(mut self, t: f64) -> Result<Self, ModelError> {
        if !(t.is_finite() && t > 0.0) {
            return Err(ModelError::BadHorizon(t.to_string()));
        }
        self.horizon = t;
        Ok(self)
    }

    /// lambda_r(x).
    pub fn intensity(&self, r: usize, x: &[i64]) -> f64 {
        self.reactions[r].rate(x)
    }

    /// lambda_0(x) = sum_r lambda_r(x).
    pub fn total_intensity(&self, x: &[i64]) -> f64 {
        self.reactions.iter().map(|r| r.rate(x)).sum()
    }

    /// The d x R matrix whose r-th column is zeta_r, stored row-major.
    pub fn stoichiometry(&self) -> StoichiometryMatrix {
        let d = self.num_species();
        let r = self.num_reactions();
        let mut entries = vec![0i64; d * r];
        for (j, reaction) in self.reactions.iter().enumerate() {
            for (i, &z) in reaction.zeta.iter().enumerate() {
                entries[i * r + j] = z;
            }
        }
        StoichiometryMatrix {
            rows: d,
            cols: r,
            entries,
        }
    }

    /// Index of a species by name.
    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    /// Canonical model-file rendering; `parse_model` inverts it exactly.
    pub fn to_model_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "species: {}", self.species.join(" "));
        let init: Vec<String> = self
            .species
            .iter()
            .zip(&self.initial_state)
            .map(|(s, v)| format!("{s}={v}"))
            .collect();
        let _ = writeln!(out, "init: {}", init.join(" "));
        let _ = writeln!(out, "t: {}", self.horizon);
        for reaction in &self.reactions {
            let lhs = self.side_text(&reaction.reactants);
            let rhs = self.side_text(&reaction.products);
            let rate = match &reaction.intensity {
                IntensitySpec::MassAction { kappa, .. } => format!("{kappa}"),
                IntensitySpec::Expression(e) => format!("expr({})", e.display(&self.species)),
            };
            let _ = writeln!(out, "{lhs} -> {rhs} @ {rate}");
        }
        out
    }

    fn side_text(&self, counts: &[u32]) -> String {
        let terms: Vec<String> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| {
                if c == 1 {
                    self.species[i].clone()
                } else {
                    format!("{c}*{}", self.species[i])
                }
            })
            .collect();
        if terms.is_empty() {
            "0".to_string()
        } else {
            terms.join(" + ")
        }
    }

    /// SHA-256 of the canonical model text, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_model_text().as_bytes());
        hex::encode(digest)
    }
}

/// Row-major integer matrix S (d x R).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoichiometryMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<i64>,
}

impl StoichiometryMatrix {
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<i64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// S k, restricted to `rows` when given.
    pub fn apply(&self, k: &[i64], rows: Option<&[usize]>) -> Vec<i64> {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..self.rows).collect();
                &all
            }
        };
        rows.iter()
            .map(|&i| (0..self.cols).map(|j| self.get(i, j) * k[j]).sum())
            .collect()
    }
}

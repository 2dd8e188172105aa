//! Input decks, expressions, and output writers.

pub mod deck;
pub mod expr;
pub mod manifest;
pub mod vtu;

pub use deck::{
    deck_to_case, mesh_to_deck, parse_inp, write_deck, BoundaryCard, InputDeck, SolverCase,
    StepCard,
};
pub use expr::{parse_expr, Expr};
pub use manifest::{read_manifest, write_manifest, RunManifest};
pub use vtu::{write_time_series, write_vtu, ProbeSeries, TimeSeriesFiles};

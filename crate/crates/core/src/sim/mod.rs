//! Simulation designs, the Monte-Carlo harness and file I/O.

pub mod dgp;
pub mod io;
pub mod monte_carlo;

pub use dgp::{gen_dgp1, gen_dgp2, DgpKind, DgpSpec};
pub use io::{emit_report, load_csv, Format, Output};
pub use monte_carlo::{run_monte_carlo, MonteCarloSpec, NuisanceChoice, SimulationReport};

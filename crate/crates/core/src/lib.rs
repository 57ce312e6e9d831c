//! Power network model, AC optimal power flow models, differentially
//! private line obfuscation and attack simulation.

pub mod attack;
pub mod dp;
pub mod error;
pub mod matpower;
pub mod network;
pub mod opf;
pub mod plo;

pub use error::{CoreError, Result};
pub use matpower::{parse_case, to_json, to_matrix_case};
pub use network::{preprocess, Bus, Generator, Line, Network};
pub use opf::{check_ac_feasibility, check_ac_feasibility_from, solve_ac_opf, solve_restoration, Feasibility, OpfSolution, RestorationSolution};

//! Time allocation via emotional stationarity.
//!
//! An agent chooses among activities. Every finished activity is evaluated
//! along a small set of emotion traits (satisfaction, challenge, boredom, ...)
//! and the agent adjusts how often it engages in each activity so that the
//! long-run distribution of experienced emotions matches a target
//! distribution, its *character*.
//!
//! The crate is organised bottom-up:
//!
//! * [`emotion`]: emotion spaces, distributions, characters, per-activity
//!   experience models and the KL divergence.
//! * [`optimizer`]: minimisation of `D(character || mixture experience)` over
//!   the activity simplex by exponentiated gradient, plus a lattice oracle.
//! * [`policy`]: emotional drives, exploration and the next-activity choice.
//! * [`envs`]: synthetic game and chat environments and the rules that turn
//!   an episode into an emotion vector.
//! * [`harness`]: the experiment loop, its JSON config and CSV timeline.
//!
//! ```
//! use taes::emotion::{Character, EmotionSpace, ExperienceModel, Distribution};
//! use taes::optimizer::{optimize_weights, SolverConfig};
//!
//! let space = EmotionSpace::new(["S", "B"]).unwrap();
//! let character = Character::new(space.clone(), vec![0.6, 0.4]).unwrap();
//! let mut chess = ExperienceModel::new(space.clone(), "chess", 0.0).unwrap();
//! chess.observe(&Distribution::new(vec![0.9, 0.1]).unwrap()).unwrap();
//! let mut chat = ExperienceModel::new(space, "chat", 0.0).unwrap();
//! chat.observe(&Distribution::new(vec![0.1, 0.9]).unwrap()).unwrap();
//!
//! let result = optimize_weights(&character, &[chess, chat], &SolverConfig::default(), None).unwrap();
//! assert!((result.q_star[0] - 0.625).abs() < 1e-4);
//! assert!(result.objective < 1e-8);
//! ```

pub mod emotion;
pub mod envs;
mod error;
pub mod harness;
pub mod optimizer;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};

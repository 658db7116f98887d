//! Relational symbol learning for task planning.
//!
//! The pipeline runs in stages:
//!
//! 1. [`sim`] collects pick-and-place transitions in a kinematic block world.
//! 2. [`neural`] trains a network whose binary bottlenecks are unary object
//!    predicates and pairwise relations, by predicting action effects.
//! 3. [`symbols`] turns continuous transitions into symbolic ones.
//! 4. [`induce`] groups symbolic transitions into lifted operators.
//! 5. [`pddl`] writes (and reads back) STRIPS domains and problems.
//! 6. [`plan`] grounds operators, searches for plans and replays them.
//!
//! [`pipeline`] wires the stages together behind the command-line tool.

pub mod induce;
pub mod neural;
pub mod pddl;
pub mod pipeline;
pub mod plan;
pub mod sim;
pub mod symbols;

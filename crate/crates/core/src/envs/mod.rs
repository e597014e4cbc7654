//! Environment dynamics. Both environments are pure functions of their inputs.

pub mod lock;
pub mod maze;

pub use lock::{LockSpec, LockState, LockTransition, NUM_LOCK_ACTIONS};
pub use maze::{layout_text, reached, Cell, MazeSpec, MazeState, LAYOUT_IDS};

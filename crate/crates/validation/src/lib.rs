//! Holds the `acceptance` test target, which runs the full physics
//! acceptance suite through the command-line pipeline:
//!
//! ```text
//! cargo test -p darkring-validation --test acceptance            # all criteria
//! cargo test -p darkring-validation --test acceptance -- 3 7     # a subset
//! ```

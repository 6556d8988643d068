//! Command-line front end: dataset generation, training, evaluation,
//! offline rendering and the websocket server.

pub mod commands;
pub mod protocol;
pub mod scene;
pub mod serve;

use std::fmt;

/// Invalid user input (configuration, scene or shape files); exits with 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// 2 for configuration problems (including a [`ConfigError`] attached as
/// context), 3 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let config = err.downcast_ref::<ConfigError>().is_some()
        || err.chain().any(|e| {
            e.is::<ConfigError>()
                || matches!(
                    e.downcast_ref::<neures_core::Error>(),
                    Some(neures_core::Error::Config(_))
                )
        });
    if config {
        2
    } else {
        3
    }
}

use cabletrans::Error;

#[derive(Debug)]
pub enum CliError {
    /// Problem has no acceptable solution.
    Infeasible(String),
    /// Bad arguments or unreadable input.
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Input(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Infeasible(m) | CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::NoPath | Error::SeedInfeasible(_) | Error::Divergence { .. } => {
                CliError::Infeasible(msg)
            }
            Error::InvalidConfig(_)
            | Error::EmptyGrid
            | Error::Parse { .. }
            | Error::Scenario(_)
            | Error::OutOfDomain { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Toml(_) => CliError::Input(msg),
            Error::DegenerateThrust(_)
            | Error::HopfSingularity(_)
            | Error::SingularSystem(_)
            | Error::InsufficientSamples { .. } => CliError::Internal(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(CliError::from(Error::NoPath).code(), 2);
        assert_eq!(CliError::from(Error::EmptyGrid).code(), 3);
        assert_eq!(
            CliError::from(Error::Parse {
                line: 3,
                msg: "x".into()
            })
            .code(),
            3
        );
        assert_eq!(CliError::from(Error::SingularSystem("k".into())).code(), 4);
    }
}

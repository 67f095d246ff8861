use std::fmt;

use playdecay::Error;

/// A failed run, carrying the process exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Failure::Data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m)) = self;
        f.write_str(m)
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        if err.is_numerical() {
            Failure::Numerical(err.to_string())
        } else if matches!(err, Error::InvalidConfig(_)) {
            Failure::Usage(err.to_string())
        } else {
            Failure::Data(err.to_string())
        }
    }
}

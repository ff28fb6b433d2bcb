use std::fmt;

use super::BusError;

fn validate_path(name: &str) -> Result<(), String> {
    if name.is_empty() {
        return Err("name is empty".into());
    }
    if name.chars().any(char::is_whitespace) {
        return Err(format!("`{name}` contains whitespace"));
    }
    if name.split('/').any(str::is_empty) {
        return Err(format!("`{name}` has an empty path segment"));
    }
    Ok(())
}

macro_rules! path_name {
    ($(#[$meta:meta])* $ty:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $ty(String);

        impl $ty {
            pub fn new(name: impl Into<String>) -> Result<Self, BusError> {
                let name = name.into();
                validate_path(&name).map_err(BusError::InvalidName)?;
                Ok(Self(name))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl TryFrom<&str> for $ty {
            type Error = BusError;

            fn try_from(value: &str) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }
    };
}

path_name!(
    /// `/`-separated topic name such as `self_localization/pose`.
    TopicId
);
path_name!(
    /// `/`-separated service name such as `TAKE_OFF/activate`.
    ServiceId
);

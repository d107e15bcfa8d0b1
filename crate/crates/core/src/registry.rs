//! Name-keyed registries for interchangeable strategies.
//!
//! Head wirings, curriculum split heuristics and ensemble combiners are each
//! defined by a trait; every implementation registers a constructor under a
//! stable name so configuration files and CLI flags can select it at runtime.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Constructor stored in a [`Registry`]. The argument carries strategy-specific
/// parameters (thresholds, weights) already parsed by the caller.
pub type Factory<T, P> = fn(&P) -> Result<Box<T>>;

pub struct Registry<T: ?Sized, P = ()> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T, P>>,
}

impl<T: ?Sized, P> Registry<T, P> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, factory: Factory<T, P>) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn create(&self, name: &str, params: &P) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(factory) => factory(params),
            None => Err(Error::Unknown {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }
}

//! Name-keyed registries for the interchangeable strategies of the solver:
//! lower-order terms, generic level functions, manufactured cases, Riesz
//! solvers and step rules. Each strategy kind lives behind a trait; the
//! registry maps a config/CLI name onto a factory that builds a trait object.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub struct Registry<F> {
    kind: &'static str,
    entries: BTreeMap<&'static str, F>,
}

impl<F> Registry<F> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, factory: F) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn get(&self, name: &str) -> Result<&F> {
        self.entries.get(name).ok_or_else(|| Error::UnknownId {
            kind: self.kind,
            id: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_known_entries() {
        let mut reg: Registry<fn() -> u32> = Registry::new("widget");
        reg.register("one", || 1).register("two", || 2);
        assert_eq!((reg.get("two").unwrap())(), 2);
        let err = reg.get("three").err().unwrap().to_string();
        assert!(err.contains("widget"));
        assert!(err.contains("three"));
        assert!(err.contains("one, two"));
    }
}

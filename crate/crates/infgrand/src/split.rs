//! Labeled / validation / test node sets, with the optional observed set
//! used by inductive experiments.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub labeled: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<Vec<usize>>,
}

impl Split {
    /// Checks pairwise disjointness of the evaluation sets, index ranges,
    /// and `labeled <= observed` when an observed set is present.
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        for (name, set) in [
            ("labeled", &self.labeled),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            if let Some(&bad) = set.iter().find(|&&v| v >= num_nodes) {
                return Err(Error::input(format!(
                    "{} set contains node {} out of range for {} nodes",
                    name, bad, num_nodes
                )));
            }
        }
        let labeled: HashSet<_> = self.labeled.iter().collect();
        let val: HashSet<_> = self.val.iter().collect();
        let test: HashSet<_> = self.test.iter().collect();
        if labeled.intersection(&val).next().is_some()
            || labeled.intersection(&test).next().is_some()
            || val.intersection(&test).next().is_some()
        {
            return Err(Error::input("labeled/val/test sets are not disjoint"));
        }
        if let Some(obs) = &self.observed {
            if let Some(&bad) = obs.iter().find(|&&v| v >= num_nodes) {
                return Err(Error::input(format!(
                    "observed set contains node {} out of range",
                    bad
                )));
            }
            let obs: HashSet<_> = obs.iter().collect();
            if !labeled.is_subset(&obs) {
                return Err(Error::input("labeled set is not contained in observed set"));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Split> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

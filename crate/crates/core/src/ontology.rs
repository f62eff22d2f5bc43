//! Domain taxonomy used to tag elements. Items form a forest: each item has
//! at most one parent and parent chains never loop.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::{KbError, Result};
use crate::model::{ItemId, OntologyItem};

#[derive(Debug, Clone, Default)]
pub struct Ontology {
    items: BTreeMap<ItemId, OntologyItem>,
    sibling_labels: HashSet<(Option<ItemId>, String)>,
}

impl Ontology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &ItemId) -> Option<&OntologyItem> {
        self.items.get(id)
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.items.contains_key(id)
    }

    pub fn items(&self) -> impl Iterator<Item = &OntologyItem> {
        self.items.values()
    }

    /// Checks that `item` can be added without breaking label uniqueness or
    /// the forest shape. Does not mutate.
    pub fn check_insert(&self, item: &OntologyItem) -> Result<()> {
        if item.label.trim().is_empty() {
            return Err(KbError::EmptyLabel);
        }
        if let Some(parent) = &item.parent {
            if !self.items.contains_key(parent) {
                return Err(KbError::UnknownParent(parent.to_string()));
            }
            // The new id must not already sit on its own parent chain.
            let mut seen = HashSet::new();
            let mut cursor = Some(parent.clone());
            while let Some(id) = cursor {
                if id == item.id || !seen.insert(id.clone()) {
                    return Err(KbError::InvalidArgument(format!(
                        "ontology item '{}' would create a cycle",
                        item.id
                    )));
                }
                cursor = self.items.get(&id).and_then(|i| i.parent.clone());
            }
        }
        if self
            .sibling_labels
            .contains(&(item.parent.clone(), item.label.clone()))
        {
            return Err(KbError::DuplicateSiblingLabel(item.label.clone()));
        }
        Ok(())
    }

    pub fn insert(&mut self, item: OntologyItem) -> Result<()> {
        if self.items.contains_key(&item.id) {
            return Err(KbError::Conflict(item.id.to_string()));
        }
        self.check_insert(&item)?;
        self.sibling_labels
            .insert((item.parent.clone(), item.label.clone()));
        self.items.insert(item.id.clone(), item);
        Ok(())
    }

    /// Removes a leaf item. Used to roll back an insert.
    pub(crate) fn remove(&mut self, id: &ItemId) {
        if let Some(item) = self.items.remove(id) {
            self.sibling_labels.remove(&(item.parent, item.label));
        }
    }

    /// Chain from the item's parent up to its root, nearest first.
    pub fn ancestors(&self, id: &ItemId) -> Result<Vec<ItemId>> {
        let item = self
            .items
            .get(id)
            .ok_or_else(|| KbError::not_found("ontology item", id.as_str()))?;
        let mut chain = Vec::new();
        let mut cursor = item.parent.clone();
        while let Some(parent) = cursor {
            if chain.contains(&parent) {
                break;
            }
            cursor = self.items.get(&parent).and_then(|i| i.parent.clone());
            chain.push(parent);
        }
        Ok(chain)
    }

    /// Depth of an item; roots have depth 0.
    pub fn depth(&self, id: &ItemId) -> usize {
        self.ancestors(id).map(|a| a.len()).unwrap_or(0)
    }

    /// The tags plus all of their ancestors. Unknown tags are kept as-is.
    pub fn ancestor_closure<'a>(
        &self,
        tags: impl IntoIterator<Item = &'a ItemId>,
    ) -> BTreeSet<ItemId> {
        let mut out = BTreeSet::new();
        for tag in tags {
            out.insert(tag.clone());
            if let Ok(chain) = self.ancestors(tag) {
                out.extend(chain);
            }
        }
        out
    }
}

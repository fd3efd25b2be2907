use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub name: String,
}

/// Target knowledge base. Row order is file order and is the row order of
/// every entity index built from it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    entities: Vec<Entity>,
    id_to_row: HashMap<String, usize>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entities<I>(entities: I) -> Result<Self>
    where
        I: IntoIterator<Item = Entity>,
    {
        let mut kb = Self::new();
        for e in entities {
            kb.push(e)?;
        }
        Ok(kb)
    }

    pub fn push(&mut self, entity: Entity) -> Result<usize> {
        if entity.name.trim().is_empty() {
            return Err(Error::EmptyEntityName(entity.id));
        }
        if self.id_to_row.contains_key(&entity.id) {
            return Err(Error::DuplicateEntity(entity.id));
        }
        let row = self.entities.len();
        self.id_to_row.insert(entity.id.clone(), row);
        self.entities.push(entity);
        Ok(row)
    }

    /// Parses `entity_id<TAB>name` lines. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut kb = Self::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: "expected `entity_id<TAB>name`".into(),
            })?;
            if id.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: "empty entity id".into(),
                });
            }
            kb.push(Entity {
                id: id.to_string(),
                name: name.to_string(),
            })?;
        }
        Ok(kb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for e in &self.entities {
            out.push_str(&e.id);
            out.push('\t');
            out.push_str(&e.name);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn row(&self, id: &str) -> Option<usize> {
        self.id_to_row.get(id).copied()
    }

    pub fn entity(&self, row: usize) -> &Entity {
        &self.entities[row]
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }
}

//! Rooted label hierarchy with depth collapse.
//!
//! On disk the taxonomy is one flat JSON object mapping child to parent, with
//! the reserved key `"root"` naming the root:
//!
//! ```text
//! {"root": "Entity", "Animal": "Entity", "Mammal": "Animal", "Tiger": "Mammal"}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Result, SparcError};

pub const ROOT_KEY: &str = "root";

#[derive(Debug, Clone)]
pub struct Taxonomy {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    root: usize,
}

impl Taxonomy {
    /// Builds from `(child, parent)` edges. Every node other than `root`
    /// must appear exactly once as a child.
    pub fn from_edges<'a, I>(root: &str, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut names = vec![root.to_string()];
        let mut index = HashMap::from([(root.to_string(), 0usize)]);
        let mut parent_name: Vec<Option<String>> = vec![None];

        let mut intern = |name: &str, names: &mut Vec<String>, parent_name: &mut Vec<Option<String>>| {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                parent_name.push(None);
                names.len() - 1
            })
        };

        for (child, parent) in edges {
            if child.is_empty() || parent.is_empty() {
                return Err(SparcError::Taxonomy("empty label in edge".into()));
            }
            if child == root {
                return Err(SparcError::Taxonomy(format!("root `{root}` has a parent")));
            }
            let c = intern(child, &mut names, &mut parent_name);
            intern(parent, &mut names, &mut parent_name);
            if parent_name[c].is_some() {
                return Err(SparcError::Taxonomy(format!("`{child}` has two parents")));
            }
            parent_name[c] = Some(parent.to_string());
        }

        let index: HashMap<String, usize> =
            names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let parent: Vec<Option<usize>> = parent_name
            .iter()
            .map(|p| p.as_ref().map(|p| index[p]))
            .collect();

        let orphans: Vec<&str> = (1..names.len())
            .filter(|&i| parent[i].is_none())
            .map(|i| names[i].as_str())
            .collect();
        if !orphans.is_empty() {
            return Err(SparcError::Taxonomy(format!(
                "multiple roots: `{root}` and {orphans:?}"
            )));
        }

        // Depth by walking to the root; a walk longer than the node count is a cycle.
        let n = names.len();
        let mut depth = vec![usize::MAX; n];
        depth[0] = 0;
        for start in 0..n {
            let mut path = Vec::new();
            let mut cur = start;
            while depth[cur] == usize::MAX {
                path.push(cur);
                if path.len() > n {
                    return Err(SparcError::Taxonomy(format!(
                        "cycle through `{}`",
                        names[start]
                    )));
                }
                cur = parent[cur].expect("non-root nodes have parents");
            }
            let mut d = depth[cur];
            for &node in path.iter().rev() {
                d += 1;
                depth[node] = d;
            }
        }

        Ok(Self {
            names,
            index,
            parent,
            depth,
            root: 0,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SparcError::io(path, e))?;
        let map: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| SparcError::format("taxonomy", format!("{}: {e}", path.display())))?;
        let root = map
            .get(ROOT_KEY)
            .ok_or_else(|| SparcError::Taxonomy("missing \"root\" key".into()))?;
        Self::from_edges(
            root,
            map.iter()
                .filter(|(k, _)| k.as_str() != ROOT_KEY)
                .map(|(k, v)| (k.as_str(), v.as_str())),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut map = BTreeMap::new();
        map.insert(ROOT_KEY.to_string(), self.root().to_string());
        for (i, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                map.insert(self.names[i].clone(), self.names[*p].clone());
            }
        }
        let text = serde_json::to_string_pretty(&map)
            .map_err(|e| SparcError::format("taxonomy", e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| SparcError::io(path, e))
    }

    pub fn root(&self) -> &str {
        &self.names[self.root]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn depth(&self, label: &str) -> Result<usize> {
        self.id(label).map(|i| self.depth[i])
    }

    pub fn parent(&self, label: &str) -> Result<Option<&str>> {
        self.id(label)
            .map(|i| self.parent[i].map(|p| self.names[p].as_str()))
    }

    /// Deepest level present in the hierarchy.
    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// The ancestor of `label` at exactly `depth`, or `label` itself when it
    /// is already at or above that depth.
    pub fn collapse<'a>(&'a self, label: &str, depth: usize) -> Result<&'a str> {
        let mut cur = self.id(label)?;
        while self.depth[cur] > depth {
            cur = self.parent[cur].expect("depth > 0 implies a parent");
        }
        Ok(&self.names[cur])
    }

    fn id(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| SparcError::UnknownLabel(label.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats() -> Taxonomy {
        Taxonomy::from_edges(
            "Entity",
            [
                ("Animal", "Entity"),
                ("Mammal", "Animal"),
                ("Carnivore", "Mammal"),
                ("Tiger", "Carnivore"),
                ("Leopard", "Carnivore"),
                ("Vehicle", "Entity"),
                ("Car", "Vehicle"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn tiger_collapses_to_entity_at_depth_zero() {
        let t = cats();
        assert_eq!(t.depth("Tiger").unwrap(), 4);
        assert_eq!(t.collapse("Tiger", 0).unwrap(), "Entity");
        assert_eq!(t.collapse("Tiger", 3).unwrap(), "Carnivore");
        assert_eq!(t.collapse("Tiger", 2).unwrap(), "Mammal");
    }

    #[test]
    fn collapse_below_leaf_is_identity() {
        let t = cats();
        assert_eq!(t.collapse("Tiger", 99).unwrap(), "Tiger");
        assert_eq!(t.collapse("Tiger", 4).unwrap(), "Tiger");
    }

    #[test]
    fn siblings_agree_up_to_their_common_ancestor() {
        let t = cats();
        let shared = t.depth("Carnivore").unwrap();
        for d in 0..=shared {
            assert_eq!(t.collapse("Tiger", d).unwrap(), t.collapse("Leopard", d).unwrap());
        }
        assert_ne!(
            t.collapse("Tiger", shared + 1).unwrap(),
            t.collapse("Leopard", shared + 1).unwrap()
        );
    }

    #[test]
    fn collapse_is_idempotent() {
        let t = cats();
        for label in ["Tiger", "Leopard", "Car", "Entity", "Mammal"] {
            for d in 0..6 {
                let once = t.collapse(label, d).unwrap();
                assert_eq!(t.collapse(once, d).unwrap(), once);
            }
        }
    }

    #[test]
    fn unknown_label_is_an_error() {
        assert!(matches!(
            cats().collapse("Unicorn", 1),
            Err(SparcError::UnknownLabel(_))
        ));
    }

    #[test]
    fn rejects_second_root() {
        let err = Taxonomy::from_edges("Entity", [("Tiger", "Carnivore")]).unwrap_err();
        assert!(matches!(err, SparcError::Taxonomy(_)), "{err}");
    }

    #[test]
    fn rejects_cycle() {
        let err = Taxonomy::from_edges("Entity", [("A", "B"), ("B", "A")]).unwrap_err();
        assert!(matches!(err, SparcError::Taxonomy(_)), "{err}");
    }

    #[test]
    fn rejects_parented_root() {
        assert!(Taxonomy::from_edges("Entity", [("Entity", "A")]).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("taxonomy.json");
        cats().save(&path).unwrap();
        let back = Taxonomy::load(&path).unwrap();
        assert_eq!(back.root(), "Entity");
        assert_eq!(back.len(), cats().len());
        assert_eq!(back.collapse("Leopard", 1).unwrap(), "Animal");
    }

    #[test]
    fn missing_root_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        std::fs::write(&path, r#"{"Tiger": "Entity"}"#).unwrap();
        assert!(matches!(Taxonomy::load(&path), Err(SparcError::Taxonomy(_))));
    }
}

//! `package-lock.json` parser (lockfileVersion 2 and 3, `packages` section).

use std::collections::{BTreeMap, HashMap};

use serde_json::{Map, Value};

use super::{
    classify_specifier, DependencyGraph, DependencyRecord, LockfileError, PackageId,
    PackageManagerKind, SpecifierSource,
};

const ROOT_SECTIONS: [&str; 4] = [
    "dependencies",
    "optionalDependencies",
    "devDependencies",
    "peerDependencies",
];
const PACKAGE_SECTIONS: [&str; 3] = ["dependencies", "optionalDependencies", "peerDependencies"];
const NODE_MODULES: &str = "node_modules/";

pub(super) fn parse(content: &str) -> Result<DependencyGraph, LockfileError> {
    let doc: Value = serde_json::from_str(content)
        .map_err(|e| LockfileError::malformed(e.line(), e.to_string()))?;
    let root = doc
        .as_object()
        .ok_or_else(|| LockfileError::malformed(1, "top level is not an object"))?;
    let version = root
        .get("lockfileVersion")
        .ok_or_else(|| LockfileError::malformed(1, "missing lockfileVersion"))?;
    if !matches!(version.as_u64(), Some(2 | 3)) {
        return Err(LockfileError::UnsupportedLockfileVersion {
            kind: PackageManagerKind::Npm,
            found: version.to_string(),
        });
    }
    let packages = match root.get("packages") {
        Some(Value::Object(p)) => p,
        Some(_) => return Err(LockfileError::malformed(0, "`packages` is not an object")),
        None => return Err(LockfileError::malformed(0, "missing `packages` section")),
    };

    let mut graph = DependencyGraph::default();
    // install path → id; `None` marks an excluded workspace link
    let mut installed: HashMap<&str, Option<PackageId>> = HashMap::new();

    for (path, entry) in packages {
        if path.is_empty() {
            continue;
        }
        let entry = entry.as_object().ok_or_else(|| {
            LockfileError::malformed(0, format!("entry {path:?} is not an object"))
        })?;
        let Some(install_name) = path
            .rfind(NODE_MODULES)
            .map(|i| &path[i + NODE_MODULES.len()..])
        else {
            graph
                .diagnostics
                .push(format!("excluded workspace-internal package at {path}"));
            continue;
        };
        let resolved = str_field(entry, "resolved");
        if entry.get("link").and_then(Value::as_bool) == Some(true)
            || resolved.is_some_and(|r| classify_specifier(r) == SpecifierSource::Local)
        {
            graph.diagnostics.push(format!(
                "excluded workspace-internal package {install_name}"
            ));
            installed.insert(path.as_str(), None);
            continue;
        }
        let name = str_field(entry, "name").unwrap_or(install_name);
        let version = str_field(entry, "version")
            .ok_or_else(|| LockfileError::malformed(0, format!("entry {path:?} has no version")))?;
        let id = PackageId::new(name, version)
            .map_err(|e| LockfileError::malformed(0, format!("entry {path:?}: {e}")))?;

        let mut record = DependencyRecord::new(id.clone());
        record.resolved_url = resolved.map(str::to_string);
        record.integrity = str_field(entry, "integrity").map(str::to_string);
        record.unregistered = resolved.is_some_and(|r| {
            classify_specifier(r).is_unregistered() && !(r.contains("/-/") && r.ends_with(".tgz"))
        });
        record.declared_dependencies = dependency_ranges(entry, &PACKAGE_SECTIONS)?;
        installed.insert(path.as_str(), Some(id));
        graph.insert(record);
    }

    // Resolve every declared range with node's lookup: nearest node_modules first.
    let mut specifiers: Vec<(PackageId, String)> = Vec::new();
    let mut edges = Vec::new();
    for (path, entry) in packages {
        let Some(entry) = entry.as_object() else {
            continue;
        };
        let from = installed.get(path.as_str()).and_then(Option::as_ref);
        if !path.is_empty() && from.is_none() && path.contains(NODE_MODULES) {
            continue;
        }
        let sections: &[&str] = if path.is_empty() {
            &ROOT_SECTIONS
        } else {
            &PACKAGE_SECTIONS
        };
        for (dep, range) in dependency_ranges(entry, sections)? {
            let target = match lookup(path, &dep, &installed) {
                Some(Some(target)) => target,
                Some(None) => continue,
                None => {
                    let optional = ["optionalDependencies", "peerDependencies"]
                        .iter()
                        .any(|s| entry.get(*s).and_then(|m| m.get(&dep)).is_some());
                    if !optional && classify_specifier(&range) != SpecifierSource::Local {
                        graph.diagnostics.push(format!(
                            "{dep}@{range} required by {path:?} is not installed"
                        ));
                    }
                    continue;
                }
            };
            specifiers.push((target.clone(), range));
            if let Some(from) = from {
                edges.push((from.clone(), target.clone()));
            }
        }
    }
    for (id, range) in specifiers {
        if let Some(record) = graph.packages.get_mut(&id) {
            record.declared_specifiers.insert(range);
        }
    }
    graph.edges.extend(edges);
    Ok(graph)
}

fn lookup<'a>(
    from: &str,
    dep: &str,
    installed: &'a HashMap<&str, Option<PackageId>>,
) -> Option<&'a Option<PackageId>> {
    let mut base = from;
    loop {
        let candidate = if base.is_empty() {
            format!("{NODE_MODULES}{dep}")
        } else {
            format!("{base}/{NODE_MODULES}{dep}")
        };
        if let Some(id) = installed.get(candidate.as_str()) {
            return Some(id);
        }
        if base.is_empty() {
            return None;
        }
        base = match base.rfind(NODE_MODULES) {
            Some(i) => base[..i].trim_end_matches('/'),
            None => "",
        };
    }
}

fn dependency_ranges(
    entry: &Map<String, Value>,
    sections: &[&str],
) -> Result<BTreeMap<String, String>, LockfileError> {
    let mut out = BTreeMap::new();
    for section in sections {
        let Some(value) = entry.get(*section) else {
            continue;
        };
        let map = value
            .as_object()
            .ok_or_else(|| LockfileError::malformed(0, format!("`{section}` is not an object")))?;
        for (name, range) in map {
            if let Some(range) = range.as_str() {
                out.entry(name.clone()).or_insert_with(|| range.to_string());
            }
        }
    }
    Ok(out)
}

fn str_field<'a>(entry: &'a Map<String, Value>, field: &str) -> Option<&'a str> {
    entry.get(field).and_then(Value::as_str)
}

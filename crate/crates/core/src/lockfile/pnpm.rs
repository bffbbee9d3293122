//! `pnpm-lock.yaml` parser for lockfileVersion 6.x and 9.x.
//!
//! v6 keys packages as `/name@version(peers)` and keeps dependencies inline;
//! v9 keys them as `name@version` and moves dependencies to `snapshots`.

use std::collections::HashMap;

use serde_yaml::{Mapping, Value};

use super::{
    is_exact_version, split_name_at, DependencyGraph, DependencyRecord, LockfileError, PackageId,
    PackageManagerKind,
};

const IMPORTER_SECTIONS: [&str; 3] = ["dependencies", "devDependencies", "optionalDependencies"];
const PACKAGE_DEP_SECTIONS: [&str; 2] = ["dependencies", "optionalDependencies"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    V6,
    V9,
}

pub(super) fn parse(content: &str) -> Result<DependencyGraph, LockfileError> {
    let doc: Value = serde_yaml::from_str(content).map_err(|e| {
        let line = e.location().map_or(0, |l| l.line());
        LockfileError::malformed(line, e.to_string())
    })?;
    let root = match doc {
        Value::Mapping(m) => m,
        Value::Null => return Err(LockfileError::malformed(0, "empty document")),
        _ => return Err(LockfileError::malformed(1, "top level is not a mapping")),
    };
    let layout = layout_of(&root)?;

    let mut graph = DependencyGraph::default();
    // Lockfile key with peer suffix stripped → id.
    let mut key_index: HashMap<String, PackageId> = HashMap::new();

    let packages = mapping(&root, "packages")?;
    for (key, value) in packages.iter() {
        let key = key_str(key)?;
        let entry = as_mapping(value, key)?;
        let resolution = entry.get("resolution").and_then(Value::as_mapping);
        if resolution.is_some_and(|r| str_field(r, "type") == Some("directory")) {
            graph
                .diagnostics
                .push(format!("excluded workspace-internal package {key}"));
            continue;
        }
        let id = package_id_for(key, entry, layout)?;
        let mut record = DependencyRecord::new(id.clone());
        if let Some(resolution) = resolution {
            record.integrity = str_field(resolution, "integrity").map(str::to_string);
            record.resolved_url = str_field(resolution, "tarball")
                .or_else(|| str_field(resolution, "repo"))
                .map(str::to_string);
            record.unregistered = str_field(resolution, "type") == Some("git")
                || str_field(resolution, "tarball").is_some_and(|t| !is_registry_tarball(t));
        }
        if layout == Layout::V6 {
            collect_package_deps(entry, &mut record);
        }
        key_index.insert(
            strip_peers(key.trim_start_matches('/')).to_string(),
            id.clone(),
        );
        graph.insert(record);
    }

    if layout == Layout::V9 {
        for (key, value) in mapping(&root, "snapshots")?.iter() {
            let key = key_str(key)?;
            let entry = as_mapping(value, key)?;
            let base = strip_peers(key);
            let id = match key_index.get(base) {
                Some(id) => id.clone(),
                None => {
                    let id = package_id_for(key, entry, layout)?;
                    key_index.insert(base.to_string(), id.clone());
                    graph.insert(DependencyRecord::new(id.clone()));
                    id
                }
            };
            let mut scratch = DependencyRecord::new(id.clone());
            collect_package_deps(entry, &mut scratch);
            if let Some(record) = graph.packages.get_mut(&id) {
                for (dep, reference) in scratch.declared_dependencies {
                    record.declared_dependencies.entry(dep).or_insert(reference);
                }
            }
        }
    }

    let mut edges = Vec::new();
    for record in graph.packages.values() {
        for (dep, reference) in &record.declared_dependencies {
            if let Some(target) = resolve_reference(dep, reference, &key_index, layout) {
                edges.push((record.id.clone(), target));
            }
        }
    }
    graph.edges.extend(edges);

    let root_importer = match root.get("importers").and_then(Value::as_mapping) {
        Some(importers) => importers.get(".").and_then(Value::as_mapping),
        None => Some(&root),
    };
    if let Some(importer) = root_importer {
        for section in IMPORTER_SECTIONS {
            let Some(deps) = importer.get(section).and_then(Value::as_mapping) else {
                continue;
            };
            for (name, spec) in deps {
                let name = key_str(name)?;
                let (specifier, reference) = match spec {
                    Value::Mapping(m) => (
                        str_field(m, "specifier").map(str::to_string),
                        str_field(m, "version").map(str::to_string),
                    ),
                    other => (None, scalar_string(other)),
                };
                let Some(reference) = reference else { continue };
                if reference.starts_with("link:") || reference.starts_with("file:") {
                    graph.diagnostics.push(format!(
                        "excluded workspace-internal package {name} ({reference})"
                    ));
                    continue;
                }
                match resolve_reference(name, &reference, &key_index, layout) {
                    Some(id) => {
                        if let (Some(spec), Some(record)) = (specifier, graph.packages.get_mut(&id))
                        {
                            record.declared_specifiers.insert(spec);
                        }
                    }
                    None => graph.diagnostics.push(format!(
                        "root dependency {name} ({reference}) has no packages entry"
                    )),
                }
            }
        }
    }

    Ok(graph)
}

fn layout_of(root: &Mapping) -> Result<Layout, LockfileError> {
    let raw = root
        .get("lockfileVersion")
        .and_then(scalar_string)
        .ok_or_else(|| LockfileError::malformed(1, "missing lockfileVersion"))?;
    let major = raw.split('.').next().unwrap_or_default();
    match major {
        "6" => Ok(Layout::V6),
        "9" => Ok(Layout::V9),
        _ => Err(LockfileError::UnsupportedLockfileVersion {
            kind: PackageManagerKind::Pnpm,
            found: raw,
        }),
    }
}

fn package_id_for(key: &str, entry: &Mapping, layout: Layout) -> Result<PackageId, LockfileError> {
    let bare = strip_peers(if layout == Layout::V6 {
        key.strip_prefix('/').unwrap_or(key)
    } else {
        key
    });
    let (key_name, key_version) = split_name_at(bare).unwrap_or((bare, ""));
    let name = str_field(entry, "name").unwrap_or(key_name);
    let version = match str_field(entry, "version") {
        Some(v) => v.to_string(),
        None if is_exact_version(key_version) => key_version.to_string(),
        None => {
            return Err(LockfileError::malformed(
                0,
                format!("package {key:?} has no exact version"),
            ))
        }
    };
    PackageId::new(name, version)
        .map_err(|e| LockfileError::malformed(0, format!("package {key:?}: {e}")))
}

/// Resolves a dependency reference (`1.2.3`, `1.2.3(react@18.2.0)`, `/real@1.0.0`,
/// `real@1.0.0`) to a parsed package.
fn resolve_reference(
    dep: &str,
    reference: &str,
    key_index: &HashMap<String, PackageId>,
    layout: Layout,
) -> Option<PackageId> {
    if reference.starts_with("link:") {
        return None;
    }
    let bare = strip_peers(reference);
    if is_exact_version(bare) {
        return key_index.get(&format!("{dep}@{bare}")).cloned();
    }
    let key = match layout {
        Layout::V6 => bare.trim_start_matches('/'),
        Layout::V9 => bare,
    };
    key_index
        .get(key)
        .or_else(|| key_index.get(&format!("{dep}@{key}")))
        .cloned()
}

fn collect_package_deps(entry: &Mapping, record: &mut DependencyRecord) {
    for section in PACKAGE_DEP_SECTIONS {
        if let Some(deps) = entry.get(section).and_then(Value::as_mapping) {
            for (name, reference) in deps {
                if let (Some(name), Some(reference)) = (name.as_str(), scalar_string(reference)) {
                    record
                        .declared_dependencies
                        .entry(name.to_string())
                        .or_insert(reference);
                }
            }
        }
    }
}

fn strip_peers(key: &str) -> &str {
    match key.find('(') {
        Some(pos) => &key[..pos],
        None => key,
    }
}

fn is_registry_tarball(url: &str) -> bool {
    url.contains("/-/") && url.ends_with(".tgz")
}

fn mapping<'a>(root: &'a Mapping, field: &str) -> Result<&'a Mapping, LockfileError> {
    static EMPTY: std::sync::OnceLock<Mapping> = std::sync::OnceLock::new();
    match root.get(field) {
        None | Some(Value::Null) => Ok(EMPTY.get_or_init(Mapping::new)),
        Some(Value::Mapping(m)) => Ok(m),
        Some(_) => Err(LockfileError::malformed(
            0,
            format!("`{field}` is not a mapping"),
        )),
    }
}

fn as_mapping<'a>(value: &'a Value, key: &str) -> Result<&'a Mapping, LockfileError> {
    value
        .as_mapping()
        .ok_or_else(|| LockfileError::malformed(0, format!("entry {key:?} is not a mapping")))
}

fn key_str(key: &Value) -> Result<&str, LockfileError> {
    key.as_str()
        .ok_or_else(|| LockfileError::malformed(0, format!("non-string key {key:?}")))
}

fn str_field<'a>(m: &'a Mapping, field: &str) -> Option<&'a str> {
    m.get(field).and_then(Value::as_str)
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

//! Yarn classic (`# yarn lockfile v1`) parser.
//!
//! The format is an indentation-based key/value dialect: one unindented
//! header line per entry listing every `name@range` descriptor that resolved
//! to it, followed by indented fields and nested `dependencies:` maps.

use std::collections::{BTreeMap, HashMap};

use super::{
    classify_specifier, split_name_at, DependencyGraph, DependencyRecord, LockfileError, PackageId,
    PackageManagerKind, SpecifierSource,
};

const DEPENDENCY_SECTIONS: [&str; 2] = ["dependencies", "optionalDependencies"];

#[derive(Debug, Default)]
struct Block {
    line: usize,
    descriptors: Vec<String>,
    fields: BTreeMap<String, String>,
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

pub(super) fn parse(content: &str) -> Result<DependencyGraph, LockfileError> {
    let blocks = scan_blocks(content)?;
    build_graph(blocks)
}

fn scan_blocks(content: &str) -> Result<Vec<Block>, LockfileError> {
    let mut blocks = Vec::new();
    let mut current: Option<Block> = None;
    let mut field_indent: Option<usize> = None;
    let mut section: Option<String> = None;

    for (idx, raw) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        let text = line.trim_start();
        if text.is_empty() {
            continue;
        }
        let indent = line.len() - text.len();

        if text.starts_with('#') {
            if indent == 0 {
                check_header(text)?;
            }
            continue;
        }

        if indent == 0 {
            if text == "__metadata:" {
                return Err(LockfileError::UnsupportedLockfileVersion {
                    kind: PackageManagerKind::YarnV1,
                    found: "berry (__metadata)".to_string(),
                });
            }
            blocks.extend(current.take());
            let key = text
                .strip_suffix(':')
                .ok_or_else(|| LockfileError::malformed(line_no, "entry key must end with `:`"))?;
            current = Some(Block {
                line: line_no,
                descriptors: split_descriptors(key, line_no)?,
                ..Block::default()
            });
            field_indent = None;
            section = None;
            continue;
        }

        let block = current.as_mut().ok_or_else(|| {
            LockfileError::malformed(line_no, "indented line outside of an entry")
        })?;
        let base = *field_indent.get_or_insert(indent);
        if indent < base {
            return Err(LockfileError::malformed(
                line_no,
                "inconsistent indentation",
            ));
        }
        if indent == base {
            section = None;
            if let Some(name) = text
                .strip_suffix(':')
                .filter(|n| !n.contains(char::is_whitespace))
            {
                section = Some(unquote(name, line_no)?);
                block
                    .sections
                    .entry(section.clone().unwrap_or_default())
                    .or_default();
            } else {
                let (key, value) = split_pair(text, line_no)?;
                block.fields.insert(key, value);
            }
        } else {
            let name = section.as_ref().ok_or_else(|| {
                LockfileError::malformed(line_no, "nested line without a section")
            })?;
            let (key, value) = split_pair(text, line_no)?;
            block
                .sections
                .entry(name.clone())
                .or_default()
                .insert(key, value);
        }
    }
    blocks.extend(current);
    Ok(blocks)
}

fn check_header(comment: &str) -> Result<(), LockfileError> {
    if let Some(pos) = comment.find("yarn lockfile v") {
        let version = comment[pos + "yarn lockfile v".len()..].trim();
        if version != "1" {
            return Err(LockfileError::UnsupportedLockfileVersion {
                kind: PackageManagerKind::YarnV1,
                found: format!("v{version}"),
            });
        }
    }
    Ok(())
}

fn build_graph(blocks: Vec<Block>) -> Result<DependencyGraph, LockfileError> {
    let mut graph = DependencyGraph::default();
    let mut descriptor_index: HashMap<(String, String), PackageId> = HashMap::new();

    for block in &blocks {
        let version = block
            .fields
            .get("version")
            .ok_or_else(|| LockfileError::malformed(block.line, "entry has no `version` field"))?;

        let mut real_name: Option<String> = None;
        let mut ranges = Vec::with_capacity(block.descriptors.len());
        let mut all_local = true;
        let mut unregistered = false;
        for descriptor in &block.descriptors {
            let (name, range) = split_name_at(descriptor).ok_or_else(|| {
                LockfileError::malformed(
                    block.line,
                    format!("descriptor {descriptor:?} has no range"),
                )
            })?;
            let source = classify_specifier(range);
            all_local &= source == SpecifierSource::Local;
            unregistered |= source.is_unregistered();
            let resolved_name = match source {
                SpecifierSource::Alias { name, .. } => name,
                _ => name.to_string(),
            };
            real_name.get_or_insert(resolved_name);
            ranges.push((name.to_string(), range.to_string()));
        }

        let name = real_name.unwrap_or_default();
        if all_local {
            graph.diagnostics.push(format!(
                "excluded workspace-internal package {name}@{version}"
            ));
            continue;
        }

        let id = PackageId::new(name, version.as_str())
            .map_err(|e| LockfileError::malformed(block.line, e.to_string()))?;
        let mut record = DependencyRecord::new(id.clone());
        record.resolved_url = block.fields.get("resolved").cloned();
        record.integrity = block.fields.get("integrity").cloned();
        record.unregistered = unregistered;
        for section in DEPENDENCY_SECTIONS {
            if let Some(deps) = block.sections.get(section) {
                for (dep, range) in deps {
                    record
                        .declared_dependencies
                        .entry(dep.clone())
                        .or_insert_with(|| range.clone());
                }
            }
        }
        for (declared_name, range) in ranges {
            record.declared_specifiers.insert(range.clone());
            descriptor_index.insert((declared_name, range), id.clone());
        }
        graph.insert(record);
    }

    let mut edges = Vec::new();
    let mut unresolved = Vec::new();
    for record in graph.packages.values() {
        for (dep, range) in &record.declared_dependencies {
            match descriptor_index.get(&(dep.clone(), range.clone())) {
                Some(target) => edges.push((record.id.clone(), target.clone())),
                None if classify_specifier(range) == SpecifierSource::Local => {}
                None => unresolved.push(format!(
                    "{}: dependency {dep}@{range} has no lockfile entry",
                    record.id
                )),
            }
        }
    }
    graph.edges.extend(edges);
    graph.diagnostics.extend(unresolved);
    Ok(graph)
}

/// Splits `a@^1, "b@^2"` into unquoted descriptors.
fn split_descriptors(key: &str, line_no: usize) -> Result<Vec<String>, LockfileError> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_quotes = false;
    for (i, c) in key.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => {
                out.push(unquote(key[start..i].trim(), line_no)?);
                start = i + 1;
            }
            _ => {}
        }
    }
    if in_quotes {
        return Err(LockfileError::malformed(
            line_no,
            "unterminated quote in entry key",
        ));
    }
    out.push(unquote(key[start..].trim(), line_no)?);
    if out.iter().any(|d| d.is_empty()) {
        return Err(LockfileError::malformed(
            line_no,
            "empty descriptor in entry key",
        ));
    }
    Ok(out)
}

/// Splits `key value` where either side may be quoted.
fn split_pair(text: &str, line_no: usize) -> Result<(String, String), LockfileError> {
    let key_end = if text.starts_with('"') {
        closing_quote(text, line_no)? + 1
    } else {
        text.find(char::is_whitespace).unwrap_or(text.len())
    };
    let key = unquote(&text[..key_end], line_no)?;
    let value = unquote(text[key_end..].trim(), line_no)?;
    if key.is_empty() {
        return Err(LockfileError::malformed(line_no, "empty key"));
    }
    Ok((key, value))
}

fn closing_quote(text: &str, line_no: usize) -> Result<usize, LockfileError> {
    let mut escaped = false;
    for (i, c) in text.char_indices().skip(1) {
        match c {
            '\\' if !escaped => escaped = true,
            '"' if !escaped => return Ok(i),
            _ => escaped = false,
        }
    }
    Err(LockfileError::malformed(line_no, "unterminated quote"))
}

fn unquote(s: &str, line_no: usize) -> Result<String, LockfileError> {
    if !s.starts_with('"') {
        return Ok(s.to_string());
    }
    let end = closing_quote(s, line_no)?;
    if end != s.len() - 1 {
        return Err(LockfileError::malformed(
            line_no,
            "trailing text after quoted string",
        ));
    }
    Ok(s[1..end].replace("\\\"", "\"").replace("\\\\", "\\"))
}

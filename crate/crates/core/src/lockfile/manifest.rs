use std::collections::BTreeMap;

use serde_json::Value;

use super::LockfileError;

/// Earlier fields win on name collisions.
const DEPENDENCY_FIELDS: [&str; 4] = [
    "dependencies",
    "optionalDependencies",
    "devDependencies",
    "peerDependencies",
];

/// Direct dependency declarations of a `package.json`, all kinds merged.
pub fn parse_manifest(content: &str) -> Result<BTreeMap<String, String>, LockfileError> {
    let doc: Value = serde_json::from_str(content)
        .map_err(|e| LockfileError::MalformedManifest(e.to_string()))?;
    let Value::Object(root) = doc else {
        return Err(LockfileError::MalformedManifest(
            "top level is not an object".to_string(),
        ));
    };

    let mut deps = BTreeMap::new();
    for field in DEPENDENCY_FIELDS {
        let Some(value) = root.get(field) else {
            continue;
        };
        let Value::Object(map) = value else {
            return Err(LockfileError::MalformedManifest(format!(
                "`{field}` is not an object"
            )));
        };
        for (name, range) in map {
            let Value::String(range) = range else {
                return Err(LockfileError::MalformedManifest(format!(
                    "`{field}.{name}` is not a string"
                )));
            };
            deps.entry(name.clone()).or_insert_with(|| range.clone());
        }
    }
    Ok(deps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dependency() {
        let deps = parse_manifest(r#"{"dependencies":{"debug":"^4.1.1"}}"#).unwrap();
        assert_eq!(deps, BTreeMap::from([("debug".into(), "^4.1.1".into())]));
    }

    #[test]
    fn empty_object() {
        assert!(parse_manifest("{}").unwrap().is_empty());
    }

    #[test]
    fn plain_dependencies_win_collisions() {
        let deps = parse_manifest(
            r#"{"devDependencies":{"debug":"^4.1.1"},"dependencies":{"debug":"^4.0.0"}}"#,
        )
        .unwrap();
        assert_eq!(deps["debug"], "^4.0.0");
    }

    #[test]
    fn all_kinds_are_merged() {
        let deps = parse_manifest(
            r#"{"dependencies":{"a":"1"},"devDependencies":{"b":"2"},
                "optionalDependencies":{"c":"3"},"peerDependencies":{"d":"4"}}"#,
        )
        .unwrap();
        assert_eq!(deps.len(), 4);
    }

    #[test]
    fn rejects_bad_shapes() {
        for bad in [
            "not json",
            "[]",
            r#"{"dependencies":["debug"]}"#,
            r#"{"devDependencies":{"debug":4}}"#,
        ] {
            assert!(
                matches!(
                    parse_manifest(bad),
                    Err(LockfileError::MalformedManifest(_))
                ),
                "{bad}"
            );
        }
    }
}

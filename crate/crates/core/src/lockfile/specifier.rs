use super::split_name_at;

/// Where a dependency specifier points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum SpecifierSource {
    Registry,
    /// `npm:<name>@<range>`
    Alias {
        name: String,
        range: String,
    },
    Git,
    Tarball,
    /// `file:`, `link:`, `workspace:`, `portal:` or a relative path.
    Local,
}

impl SpecifierSource {
    pub(crate) fn is_unregistered(&self) -> bool {
        matches!(self, SpecifierSource::Git | SpecifierSource::Tarball)
    }
}

const LOCAL_PREFIXES: &[&str] = &[
    "file:",
    "link:",
    "workspace:",
    "portal:",
    "./",
    "../",
    "/",
    "~/",
];
const GIT_PREFIXES: &[&str] = &[
    "git:",
    "git+",
    "git@",
    "github:",
    "gitlab:",
    "bitbucket:",
    "gist:",
    "ssh://",
];

pub(crate) fn classify_specifier(range: &str) -> SpecifierSource {
    let range = range.trim();
    if let Some(aliased) = range.strip_prefix("npm:") {
        if let Some((name, inner)) = split_name_at(aliased) {
            return SpecifierSource::Alias {
                name: name.to_string(),
                range: inner.to_string(),
            };
        }
        return SpecifierSource::Alias {
            name: aliased.to_string(),
            range: "*".to_string(),
        };
    }
    if LOCAL_PREFIXES.iter().any(|p| range.starts_with(p)) {
        return SpecifierSource::Local;
    }
    if GIT_PREFIXES.iter().any(|p| range.starts_with(p)) {
        return SpecifierSource::Git;
    }
    if range.starts_with("http://") || range.starts_with("https://") {
        return if range.contains(".git#") || range.ends_with(".git") {
            SpecifierSource::Git
        } else {
            SpecifierSource::Tarball
        };
    }
    if is_github_shorthand(range) {
        return SpecifierSource::Git;
    }
    SpecifierSource::Registry
}

/// `owner/repo` or `owner/repo#ref`.
fn is_github_shorthand(range: &str) -> bool {
    let path = range.split('#').next().unwrap_or(range);
    let Some((owner, repo)) = path.split_once('/') else {
        return false;
    };
    let segment_ok = |s: &str| {
        !s.is_empty()
            && s.chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    };
    !range.starts_with('@') && segment_ok(owner) && segment_ok(repo)
}

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Search strings used to collect raw-produce and ingredient photos.
pub const DEFAULT_QUERIES: [&str; 8] = [
    "raw food",
    "produce and meat in fridge",
    "fresh produce",
    "produce in fridge",
    "food ingredients",
    "raw meat and produce",
    "cooking raw meat and vegetables",
    "fresh produce for cooking",
];

/// One result as returned by a search client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub source_website: String,
    pub image_url: String,
    pub page_url: String,
    #[serde(default)]
    pub collection_date: Option<NaiveDate>,
    /// File under the fixture `images/` directory, when one exists.
    #[serde(default)]
    pub image_file: Option<String>,
}

pub trait SearchClient: Sync {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, DatasetError>;
}

/// Year and month, with the day when the URL carries one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UrlDate {
    pub year: u16,
    pub month: u8,
    pub day: Option<u8>,
}

impl fmt::Display for UrlDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)?;
        if let Some(day) = self.day {
            write!(f, "-{day:02}")?;
        }
        Ok(())
    }
}

impl FromStr for UrlDate {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::Invalid(format!("bad url date {s:?}"));
        let parts: Vec<&str> = s.split('-').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let year = parts[0].parse().map_err(|_| bad())?;
        let month = parts[1].parse().map_err(|_| bad())?;
        let day = parts.get(2).map(|d| d.parse()).transpose().map_err(|_| bad())?;
        Ok(UrlDate { year, month, day })
    }
}

impl Serialize for UrlDate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UrlDate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

fn url_date_patterns() -> &'static [Regex; 2] {
    static PATTERNS: OnceLock<[Regex; 2]> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            Regex::new(r"/((?:19|20)\d{2})/(0[1-9]|1[0-2])/(?:(0[1-9]|[12]\d|3[01])/)?").expect("valid regex"),
            Regex::new(r"\b((?:19|20)\d{2})-(0[1-9]|1[0-2])-(0[1-9]|[12]\d|3[01])\b").expect("valid regex"),
        ]
    })
}

/// Date embedded in a URL path, such as `/2023/05/` or `2023-05-17`.
pub fn parse_url_date(url: &str) -> Option<UrlDate> {
    url_date_patterns().iter().find_map(|re| {
        let caps = re.captures(url)?;
        Some(UrlDate {
            year: caps[1].parse().ok()?,
            month: caps[2].parse().ok()?,
            day: caps.get(3).and_then(|d| d.as_str().parse().ok()),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub collection_date: NaiveDate,
    pub page_title: String,
    pub source_website: String,
    pub image_url: String,
    pub page_url: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url_date: Option<UrlDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_file: Option<String>,
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub records: Vec<ImageMeta>,
    /// Queries that failed, with the client error.
    pub failures: Vec<(String, String)>,
    pub duplicates: usize,
    pub malformed: usize,
}

fn well_formed(url: &str) -> bool {
    reqwest::Url::parse(url).is_ok_and(|u| matches!(u.scheme(), "http" | "https") && u.host().is_some())
}

/// Runs every query (one thread each) and merges the results in query
/// order. The first occurrence of an image URL wins; hits with malformed
/// image URLs are dropped.
pub fn ingest(
    client: &dyn SearchClient,
    queries: &[&str],
    per_query_limit: usize,
    today: NaiveDate,
) -> IngestReport {
    let results: Vec<Result<Vec<SearchHit>, DatasetError>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            queries.iter().map(|q| scope.spawn(move || client.search(q, per_query_limit))).collect();
        handles.into_iter().map(|h| h.join().expect("search thread panicked")).collect()
    });

    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    for (query, result) in queries.iter().zip(results) {
        let hits = match result {
            Ok(hits) => hits,
            Err(e) => {
                tracing::warn!(query, error = %e, "search query failed");
                report.failures.push((query.to_string(), e.to_string()));
                continue;
            }
        };
        for hit in hits.into_iter().take(per_query_limit) {
            if !well_formed(&hit.image_url) {
                tracing::warn!(query, url = %hit.image_url, "skipping malformed image url");
                report.malformed += 1;
                continue;
            }
            if !seen.insert(hit.image_url.clone()) {
                report.duplicates += 1;
                continue;
            }
            let url_date = parse_url_date(&hit.image_url).or_else(|| parse_url_date(&hit.page_url));
            report.records.push(ImageMeta {
                collection_date: hit.collection_date.unwrap_or(today),
                page_title: hit.title,
                source_website: hit.source_website,
                image_url: hit.image_url,
                page_url: hit.page_url,
                query: query.to_string(),
                url_date,
                image_file: hit.image_file,
            });
        }
    }
    report
}

#[derive(Debug, Deserialize)]
struct FixtureRow {
    query: String,
    #[serde(flatten)]
    hit: SearchHit,
}

/// Reads canned results from `<root>/metadata.jsonl`; image files live
/// under `<root>/images/`.
#[derive(Debug, Clone)]
pub struct FixtureSearchClient {
    root: PathBuf,
    rows: Vec<(String, SearchHit)>,
}

impl FixtureSearchClient {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let root = root.as_ref().to_path_buf();
        let text = std::fs::read_to_string(root.join("metadata.jsonl"))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: FixtureRow = serde_json::from_str(line)
                .map_err(|e| DatasetError::Invalid(format!("metadata.jsonl line {}: {e}", i + 1)))?;
            rows.push((row.query, row.hit));
        }
        Ok(FixtureSearchClient { root, rows })
    }

    pub fn image_path(&self, file: &str) -> PathBuf {
        self.root.join("images").join(file)
    }
}

impl SearchClient for FixtureSearchClient {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, DatasetError> {
        Ok(self.rows.iter().filter(|(q, _)| q == query).map(|(_, h)| h.clone()).take(limit).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_dates() {
        assert_eq!(
            parse_url_date("https://example.com/wp-content/uploads/2023/05/soup.jpg"),
            Some(UrlDate { year: 2023, month: 5, day: None })
        );
        assert_eq!(parse_url_date("https://x.org/2021/11/30/salad/").unwrap().to_string(), "2021-11-30");
        assert_eq!(parse_url_date("https://x.org/blog/2019-02-03-stew.png").unwrap().to_string(), "2019-02-03");
        assert_eq!(parse_url_date("https://x.org/images/2023/13/a.jpg"), None);
        assert_eq!(parse_url_date("https://x.org/img/12345.jpg"), None);
    }

    #[test]
    fn url_date_serde() {
        let d: UrlDate = serde_json::from_str("\"2023-05\"").unwrap();
        assert_eq!(serde_json::to_string(&d).unwrap(), "\"2023-05\"");
    }

    struct Flaky;

    impl SearchClient for Flaky {
        fn search(&self, query: &str, _limit: usize) -> Result<Vec<SearchHit>, DatasetError> {
            if query == "bad" {
                return Err(DatasetError::Client { query: query.into(), message: "quota exceeded".into() });
            }
            Ok(vec![SearchHit {
                title: "t".into(),
                source_website: "s".into(),
                image_url: "https://img.example/shared.jpg".into(),
                page_url: "https://img.example/page".into(),
                collection_date: None,
                image_file: None,
            }])
        }
    }

    #[test]
    fn failures_are_isolated_and_duplicates_dropped() {
        let today = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
        let report = ingest(&Flaky, &["raw food", "bad", "fresh produce"], 10, today);
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].query, "raw food");
        assert_eq!(report.duplicates, 1);
        assert_eq!(report.failures.len(), 1);
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::EvalError;

const SHIPPED: &str = include_str!("../../data/food_lexicon.txt");

/// Food vocabulary of lowercase singular unigrams and bigrams, with an
/// optional synonym map onto canonical entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FoodLexicon {
    entries: BTreeSet<String>,
    synonyms: BTreeMap<String, String>,
}

impl FoodLexicon {
    /// The lexicon bundled with the crate.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED).expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses `canonical|synonym|synonym` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut lex = FoodLexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let mut terms = line.split('|').map(str::trim);
            let canonical = terms.next().unwrap_or_default();
            check_term(canonical, i + 1)?;
            lex.entries.insert(canonical.to_owned());
            for syn in terms {
                check_term(syn, i + 1)?;
                if let Some(prev) = lex.synonyms.insert(syn.to_owned(), canonical.to_owned()) {
                    if prev != canonical {
                        return Err(EvalError::Lexicon(format!(
                            "line {}: synonym {syn:?} maps to both {prev:?} and {canonical:?}",
                            i + 1
                        )));
                    }
                }
            }
        }
        if let Some((syn, _)) = lex.synonyms.iter().find(|(s, _)| lex.entries.contains(*s)) {
            return Err(EvalError::Lexicon(format!("{syn:?} is both an entry and a synonym")));
        }
        Ok(lex)
    }

    pub fn from_terms<'a>(terms: impl IntoIterator<Item = &'a str>) -> Result<Self, EvalError> {
        Self::parse(&terms.into_iter().collect::<Vec<_>>().join("\n"))
    }

    pub fn entries(&self) -> &BTreeSet<String> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical entry for a term or synonym.
    pub fn canonical(&self, term: &str) -> Option<&str> {
        if let Some(e) = self.entries.get(term) {
            return Some(e);
        }
        self.synonyms.get(term).map(String::as_str)
    }

    /// Canonical entry for a surface token, trying the token itself and then
    /// its plural-stripped forms.
    fn lookup_token(&self, prefix: Option<&str>, token: &str) -> Option<&str> {
        singular_candidates(token).into_iter().find_map(|cand| match prefix {
            Some(p) => self.canonical(&format!("{p} {cand}")),
            None => self.canonical(&cand),
        })
    }
}

fn check_term(term: &str, line: usize) -> Result<(), EvalError> {
    let words = term.split(' ').count();
    if term.is_empty()
        || term != term.to_lowercase()
        || words > 2
        || term.split(' ').any(|w| w.is_empty() || !w.chars().all(char::is_alphanumeric))
    {
        return Err(EvalError::Lexicon(format!("line {line}: {term:?} is not a lowercase unigram or bigram")));
    }
    Ok(())
}

/// Surface forms to try for a possibly plural token, most literal first.
fn singular_candidates(token: &str) -> Vec<String> {
    let mut out = vec![token.to_owned()];
    if token.len() > 4 {
        if let Some(stem) = token.strip_suffix("ies") {
            out.push(format!("{stem}y"));
        }
    }
    if token.len() > 3 {
        if let Some(stem) = token.strip_suffix("es") {
            out.push(stem.to_owned());
        }
    }
    if token.len() > 2 && !token.ends_with("ss") {
        if let Some(stem) = token.strip_suffix('s') {
            out.push(stem.to_owned());
        }
    }
    out
}

pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Canonical food terms mentioned in `text`. Bigrams are matched before the
/// unigrams they contain.
pub fn extract_food_terms(text: &str, lexicon: &FoodLexicon) -> BTreeSet<String> {
    let tokens = tokenize(text);
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        if let Some(next) = tokens.get(i + 1) {
            if let Some(term) = lexicon.lookup_token(Some(&tokens[i]), next) {
                out.insert(term.to_owned());
                i += 2;
                continue;
            }
        }
        if let Some(term) = lexicon.lookup_token(None, &tokens[i]) {
            out.insert(term.to_owned());
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn plural_forms() {
        let lex = FoodLexicon::from_terms(["tomato", "berry", "hummus", "grape", "chili"]).unwrap();
        assert_eq!(
            extract_food_terms("Tomatoes, berries, hummus, grapes and chilies!", &lex),
            set(&["berry", "chili", "grape", "hummus", "tomato"])
        );
    }

    #[test]
    fn synonyms_are_canonicalized() {
        let lex = FoodLexicon::parse("pasta|spaghetti\nzucchini|courgette\n").unwrap();
        assert_eq!(extract_food_terms("Spaghetti with courgettes", &lex), set(&["pasta", "zucchini"]));
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(FoodLexicon::parse("Carrot\n").is_err());
        assert!(FoodLexicon::parse("a b c\n").is_err());
        assert!(FoodLexicon::parse("pasta|noodle\nnoodle\n").is_err());
    }

    #[test]
    fn shipped_lexicon_loads() {
        let lex = FoodLexicon::shipped();
        assert!(lex.len() > 100);
        assert_eq!(lex.canonical("spaghetti"), Some("pasta"));
        assert!(lex.entries().iter().all(|e| *e == e.to_lowercase()));
    }
}

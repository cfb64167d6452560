// SPDX-License-Identifier: Apache-2.0

use cqscore::dataset::GenConfig;
use cqscore::Lexicon;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn singularization_is_idempotent(word in "[a-z]{1,12}") {
        let lex = Lexicon::shipped();
        let once = lex.normalize_noun(&word);
        prop_assert_eq!(lex.normalize_noun(&once), once);
    }
}

#[test]
fn lexicon_words_normalize_idempotently() {
    let lex = Lexicon::shipped();
    let file = Lexicon::shipped_file();
    let words = file
        .irregular_singulars
        .keys()
        .chain(file.irregular_singulars.values())
        .chain(file.irregular_plurals.values())
        .chain(file.noun_exceptions.iter());
    for w in words {
        let once = lex.normalize_noun(w);
        assert_eq!(lex.normalize_noun(&once), once, "{w}");
    }
}

#[test]
fn default_categories_survive_pluralization() {
    let lex = Lexicon::shipped();
    for c in GenConfig::default().category_set {
        assert_eq!(lex.normalize_phrase(&lex.pluralize(&c)), c);
    }
}

/// Caption tokenization for BLEU and CIDEr: lowercase, punctuation to
/// spaces, split on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize("A Dog, runs!"), ["a", "dog", "runs"]);
        assert!(normalize("").is_empty());
        assert_eq!(normalize("  it's\t2-3 \n"), ["it", "s", "2", "3"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once.join(" ")), once.clone());
            prop_assert!(once.iter().all(|t| !t.is_empty()));
        }
    }
}

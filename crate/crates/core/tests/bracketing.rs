use probevm_oracle::checks::{bracketing, bracketing_seeded};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_enter_has_one_matching_exit(seed in any::<u64>(), internal in any::<bool>()) {
        // unfiltered programs, so runtime failures unwind through open brackets
        bracketing_seeded(seed, internal).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn failures_close_every_bracket() {
    for text in [
        "fn f(n) {\n  if n == 0 {\n    return 1 / n\n  }\n  return f(n - 1)\n}\nf(5)",
        "x = abs(\"s\")",
        "exit(2)",
        "i = 0\nwhile true {\n  i = i + 1\n  if i > 3 {\n    return i\n  }\n}",
    ] {
        bracketing(text, true).unwrap();
    }
}

use probevm_oracle::checks::non_interference;
use probevm_oracle::eval;
use probevm_oracle::harness::run_engine;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uninstrumented_matches_reference(seed in any::<u64>()) {
        non_interference(seed, 0, false).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn one_client_sees_reference_statements(seed in any::<u64>()) {
        non_interference(seed, 1, false).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn three_clients_and_a_failing_one(seed in any::<u64>()) {
        non_interference(seed, 3, true).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn handwritten_programs() {
    let programs = [
        "fn fib(n) {\n  if n < 2 {\n    return n\n  }\n  return fib(n - 1) + fib(n - 2)\n}\nprint(fib(12))",
        "s = \"a\"\ni = 0\nwhile i < 3 {\n  s = s + str(i)\n  i = i + 1\n}\nprint(s, 1.5, 2.0 * 2, null, true)",
        "fn mk(k) {\n  fn add(x) {\n    return x + k\n  }\n  return add\n}\nf = mk(3)\nprint(f(4), f)",
        "x = 7 % 0",
        "print(abs(-3), max(2, 9), min(1.5, 0))\nexit(3)",
        "a = 1 == 1.0\nb = \"x\" < \"y\"\nprint(a && b, !a || b)",
    ];
    for p in programs {
        let expected = eval::run(p);
        let run = run_engine(p, 1, false);
        assert_eq!(run.output, expected.output, "{p}");
        assert_eq!(run.result, expected.result, "{p}");
        assert_eq!(run.traces[0], expected.statement_spans(), "{p}");
    }
}

use nullit::ir::{parse_program, print_program, validate_stack_shapes};
use nullit::oracle::{gen_program, gen_program_text, GenParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn print_then_parse_is_identity(seed in any::<u64>()) {
        let p = gen_program(seed, &GenParams::small());
        let text = print_program(&p);
        let q = parse_program(&text).unwrap();
        prop_assert_eq!(&q, &p);
        prop_assert_eq!(print_program(&q), text);
    }

    #[test]
    fn generator_is_deterministic_and_valid(seed in any::<u64>()) {
        let params = GenParams::tiny();
        prop_assert_eq!(gen_program_text(seed, &params), gen_program_text(seed, &params));
        prop_assert!(validate_stack_shapes(&gen_program(seed, &params)).is_ok());
    }

    /// Arbitrary text never panics the front end.
    #[test]
    fn parser_total_on_garbage(text in "[a-zA-Z0-9 .,:(){}<>_\n-]{0,200}") {
        let _ = parse_program(&text);
    }
}

use super::{Grammar, GrammarError};

/// Terminal separating consecutive features in a derivation.
pub const FEATURE_SEPARATOR: &str = ",";

/// The shipped algebraic grammar over `n_vars` input columns.
///
/// `<features>` has one production per allowed feature count (1..=`max_features`),
/// so the count is chosen by a single gene and does not consume derivation depth.
/// Each `<feature>` is either a selected column or a binary algebraic tree.
pub fn default_grammar_text(n_vars: usize, max_features: usize) -> String {
    assert!(n_vars >= 1, "grammar needs at least one input column");
    assert!(max_features >= 1, "grammar needs at least one feature");
    let mut out = String::from("<features> ::=");
    for count in 1..=max_features {
        if count > 1 {
            out.push_str("\n    |");
        }
        for i in 0..count {
            if i > 0 {
                out.push(' ');
                out.push_str(FEATURE_SEPARATOR);
            }
            out.push_str(" <feature>");
        }
    }
    out.push('\n');
    out.push_str("<feature> ::= <var> | <expr> <op> <expr>\n");
    out.push_str("<expr> ::= <var> | <expr> <op> <expr> | ( <expr> <op> <expr> )\n");
    out.push_str("<op> ::= + | - | * | /\n");
    out.push_str("<var> ::=");
    for v in 0..n_vars {
        if v > 0 {
            out.push_str(" |");
        }
        out.push_str(&format!(" x{v}"));
    }
    out.push('\n');
    out
}

pub fn default_grammar(n_vars: usize, max_features: usize) -> Result<Grammar, GrammarError> {
    Grammar::parse(&default_grammar_text(n_vars, max_features))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grammar_shape() {
        let g = default_grammar(60, 60).unwrap();
        let names: Vec<_> = g.nonterminals().iter().map(String::as_str).collect();
        assert_eq!(names, ["features", "feature", "expr", "op", "var"]);
        assert_eq!(g.productions(0).len(), 60);
        assert_eq!(g.productions(4).len(), 60);
        assert_eq!(g.recursion_flags(), &[false, false, true, false, false]);
        // <features> -> <feature> -> <var> -> terminal
        assert_eq!(g.min_height(0), 3);
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let g = default_grammar(6, 10).unwrap();
        let canon = g.serialize();
        let again = Grammar::parse(&canon).unwrap();
        assert_eq!(again, g);
        assert_eq!(again.serialize(), canon);
    }
}

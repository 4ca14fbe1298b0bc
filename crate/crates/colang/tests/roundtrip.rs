use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use railgate_colang::*;

fn word() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}"
}

fn words() -> impl Strategy<Value = String> {
    vec(word(), 1..4).prop_map(|w| w.join(" "))
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 \"\\\\!?.,'#$éü-]{0,12}"
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        word().prop_map(Expr::Var),
        any::<bool>().prop_map(Expr::Bool),
        text().prop_map(Expr::Text),
        (0u32..1_000_000, 0u32..4).prop_map(|(n, d)| Expr::Number(n as f64 / 10f64.powi(d as i32))),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Not(Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Or(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Eq(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Neq(Box::new(a), Box::new(b))),
        ]
    })
}

fn form() -> impl Strategy<Value = Form> {
    prop_oneof![4 => words().prop_map(Form::Named), 1 => Just(Form::Wildcard)]
}

fn args() -> impl Strategy<Value = Vec<(String, Expr)>> {
    btree_set(word(), 0..3).prop_flat_map(|names| {
        let names: Vec<String> = names.into_iter().collect();
        let n = names.len();
        vec(expr(), n).prop_map(move |values| names.iter().cloned().zip(values).collect())
    })
}

fn element() -> impl Strategy<Value = FlowElement> {
    let leaf = prop_oneof![
        form().prop_map(Element::UserMatch),
        form().prop_map(Element::BotEmit),
        (vec(word(), 1..3), args(), proptest::option::of(word())).prop_map(|(name, args, result_var)| {
            Element::ExecuteAction {
                action: name.join("_"),
                args,
                result_var,
            }
        }),
        (word(), expr()).prop_map(|(var, expr)| Element::Assign { var, expr }),
        Just(Element::Stop),
    ]
    .prop_map(FlowElement::new);
    leaf.prop_recursive(3, 20, 4, |inner| {
        (expr(), vec(inner.clone(), 1..4), vec(inner, 0..3)).prop_map(|(cond, then_branch, else_branch)| {
            FlowElement::new(Element::If {
                cond,
                then_branch,
                else_branch,
            })
        })
    })
}

fn script() -> impl Strategy<Value = Script> {
    let user = (words(), btree_set(text(), 0..4)).prop_map(|(canonical_form, ex)| UserMessageDef {
        canonical_form,
        examples: ex.into_iter().collect(),
        span: Span::default(),
    });
    let bot = (words(), btree_set(text(), 1..3)).prop_map(|(canonical_form, u)| BotMessageDef {
        canonical_form,
        utterances: u.into_iter().collect(),
        span: Span::default(),
    });
    let flow = (words(), vec(element(), 1..6)).prop_map(|(name, elements)| FlowDef {
        name,
        elements,
        span: Span::default(),
    });
    (vec(user, 0..4), vec(bot, 0..3), vec(flow, 0..4)).prop_map(|(user_defs, bot_defs, flows)| Script {
        user_defs,
        bot_defs,
        flows,
        source_name: String::new(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn format_then_parse_is_identity(s in script()) {
        let text = format_script(&s);
        let parsed = parse_script(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&parsed, &s);
        // formatting is a fixpoint after one pass
        prop_assert_eq!(format_script(&parsed), text);
    }

    #[test]
    fn expressions_roundtrip(e in expr()) {
        let text = format_expr(&e);
        prop_assert_eq!(parse_expr(&text).unwrap(), e);
    }

    #[test]
    fn indents_and_dedents_balance(s in script()) {
        let tokens = tokenize(&format_script(&s)).unwrap();
        let mut depth: i64 = 0;
        for t in &tokens {
            match t.kind {
                TokenKind::Indent => depth += 1,
                TokenKind::Dedent => depth -= 1,
                _ => {}
            }
            prop_assert!(depth >= 0);
        }
        prop_assert_eq!(depth, 0);
    }

    #[test]
    fn tokenize_is_deterministic(src in "[ -~\n]{0,80}") {
        prop_assert_eq!(tokenize(&src), tokenize(&src));
    }
}

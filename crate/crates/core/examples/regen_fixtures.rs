//! Development probe: regenerate the canonical-form golden fixture.

use srpg_core::model::{canonical_serialize, MathContext, Quantity, Relation, RelationKind};

fn fixtures() -> Vec<MathContext> {
    vec![
        MathContext::default(),
        MathContext::new(
            vec![],
            vec![Quantity::with_label("5", "Side AB").unwrap()],
            vec![Relation::new(RelationKind::Equation, "Angle C = 90").unwrap()],
            Some("find area".into()),
        ),
        MathContext::new(
            vec!["Triangle ABC".into()],
            vec![
                Quantity::with_label("5", "Side AB").unwrap(),
                Quantity::with_label("90", "Angle C").unwrap(),
            ],
            vec![
                Relation::new(RelationKind::Equation, "AB = 5").unwrap(),
                Relation::new(RelationKind::Equation, "C = 90").unwrap(),
            ],
            Some("find the area".into()),
        ),
        MathContext::new(
            vec![],
            vec![
                Quantity::with_unit("120", "km").unwrap(),
                Quantity::with_unit("3", "h").unwrap(),
            ],
            vec![Relation::new(RelationKind::Equation, "speed = 120 / 3").unwrap()],
            Some("what is the speed of the train".into()),
        ),
        MathContext::new(
            vec!["x".into(), "y".into()],
            vec![Quantity::new("39").unwrap()],
            vec![
                Relation::new(RelationKind::Equation, "x = 39").unwrap(),
                Relation::new(RelationKind::OperationPhrase, "y = 2 * x").unwrap(),
            ],
            Some("what is the value of y".into()),
        ),
    ]
}

fn main() {
    for ctx in fixtures() {
        println!("{}", canonical_serialize(&ctx));
    }
}

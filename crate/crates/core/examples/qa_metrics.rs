//! Answer metrics on a handful of predictions: exact match, token F1 and
//! ANLS, plus page recall for a ranked list.

use pagelens::metrics::{
    anls, exact_match, normalize_answer, recall_at_k, token_f1, DEFAULT_ANLS_TAU,
};
use pagelens::{DocumentId, PageLocator, PageRef};

fn main() -> pagelens::Result<()> {
    let cases: [(&str, &[&str]); 6] = [
        ("The Eiffel Tower", &["Eiffel Tower"]),
        ("eiffel towr", &["Eiffel Tower"]),
        ("1,234", &["1234", "1,234 units"]),
        ("Paris, France", &["Paris"]),
        ("an apple", &["the Apple"]),
        ("unrelated", &["Eiffel Tower"]),
    ];
    println!(
        "{:<18} {:<24} {:>4} {:>6} {:>6}",
        "prediction", "gold", "EM", "F1", "ANLS"
    );
    for (pred, golds) in cases {
        println!(
            "{:<18} {:<24} {:>4} {:>6.3} {:>6.3}",
            pred,
            golds.join(" | "),
            exact_match(pred, golds),
            token_f1(pred, golds),
            anls(pred, golds, DEFAULT_ANLS_TAU)
        );
    }
    println!(
        "normalized: {:?}",
        normalize_answer("  The  Quick, brown FOX!  ")
    );

    let doc = DocumentId::new("report")?;
    let ranked: Vec<PageRef> = [7, 2, 9, 4]
        .iter()
        .enumerate()
        .map(|(i, &p)| PageRef {
            doc: doc.clone(),
            page_index: p,
            global_id: i,
        })
        .collect();
    let gold = [
        PageLocator {
            doc: doc.clone(),
            page_index: 9,
        },
        PageLocator { doc, page_index: 4 },
    ];
    for k in 1..=4 {
        println!("recall@{k} = {:.2}", recall_at_k(&ranked, &gold, k));
    }
    Ok(())
}

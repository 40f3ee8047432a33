//! Late-interaction scoring on hand-written vectors: the token similarity
//! matrix, each query token's best page token, and the summed MaxSim score.

use pagelens::{maxsim_score, score_matrix, top_k, MultiVecEmbedding, PageRef};

fn main() -> pagelens::Result<()> {
    let query = MultiVecEmbedding::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])?;
    let pages = [
        (
            "invoice",
            MultiVecEmbedding::from_rows(&[[0.9, 0.1, 0.0], [0.1, 0.8, 0.1], [0.0, 0.0, 1.0]])?,
        ),
        (
            "memo",
            MultiVecEmbedding::from_rows(&[[0.2, 0.2, 0.9], [0.7, 0.0, 0.3]])?,
        ),
        ("chart", MultiVecEmbedding::from_rows(&[[0.0, 1.0, 0.0]])?),
    ];

    let m = score_matrix(query.view(), pages[0].1.view())?;
    println!("similarities for `{}`:", pages[0].0);
    for q in 0..m.query_tokens() {
        let row: Vec<String> = (0..m.page_tokens())
            .map(|p| format!("{:5.2}", m.get(q, p)))
            .collect();
        println!("  q{q}: [{}]", row.join(", "));
    }
    for (q, (best, score)) in m.best_matches().into_iter().enumerate() {
        println!("  q{q} -> page token {best} ({score:.2})");
    }

    let scored = pages
        .iter()
        .enumerate()
        .map(|(i, (name, emb))| {
            let page = PageRef {
                doc: pagelens::DocumentId::new(*name)?,
                page_index: 0,
                global_id: i,
            };
            Ok((page, maxsim_score(query.view(), emb.view())?))
        })
        .collect::<pagelens::Result<Vec<_>>>()?;
    println!("ranking:");
    for (rank, hit) in top_k(scored, 3)?.iter().enumerate() {
        println!("  {}. {} {:.3}", rank + 1, hit.page.doc, hit.score);
    }
    Ok(())
}

//! Trains a product quantizer, encodes vectors into one byte per subspace and
//! compares asymmetric-distance scores to exact dot products.

use pagelens::index::{KMeansConfig, PqCodebook};
use pagelens::synthetic::{Mixture, MixtureSpec};

fn main() -> pagelens::Result<()> {
    let dim = 32;
    let (_, store) = Mixture::new(MixtureSpec::new(500, 16, dim, 32, 5)).corpus()?;
    let vectors = store.tokens();

    for (m, nbits) in [(4, 8), (8, 8), (16, 8), (8, 4)] {
        let pq = PqCodebook::train(vectors, dim, m, nbits, &KMeansConfig::default())?;
        let bytes = m;
        println!(
            "m={m:2} nbits={nbits} {bytes:2} B/vector (raw {} B)  reconstruction mse {:.5}",
            dim * 4,
            pq.reconstruction_mse(vectors)
        );
    }

    let pq = PqCodebook::train(vectors, dim, 8, 8, &KMeansConfig::default())?;
    let query = store.token(0);
    let table = pq.lookup_table(query);
    let mut code = vec![0u8; pq.m()];
    println!("exact vs table lookup for a few tokens:");
    for id in [1, 17, 250, 4000] {
        let v = store.token(id);
        pq.encode(v, &mut code);
        let approx: f32 = code
            .iter()
            .enumerate()
            .map(|(j, &c)| table[j * pq.ksub() + c as usize])
            .sum();
        let exact: f32 = query.iter().zip(v).map(|(a, b)| a * b).sum();
        println!("  token {id:4}: exact {exact:+.4}  pq {approx:+.4}  codes {code:?}");
    }
    Ok(())
}

//! Building the class-association graph from co-occurrence counts and
//! ingested pairwise similarities, then querying saccade candidates.
//!
//! ```bash
//! cargo run --example association_graph
//! ```

use tilecast::semantics::{
    build_graph, lookup, ClassMatrix, ClassVocabulary, CooccurrenceCounts, SimilarityFile,
};

fn main() {
    let vocab = ClassVocabulary::new(vec![
        "guitar".into(),
        "microphone".into(),
        "crowd".into(),
        "stage_light".into(),
    ])
    .unwrap();

    // How often classes shared a viewport (symmetry is not required here).
    #[rustfmt::skip]
    let cooccur = CooccurrenceCounts::new(ClassMatrix::new(vocab.clone(), vec![
        0.0, 8.0, 2.0, 1.0,
        8.0, 0.0, 3.0, 2.0,
        2.0, 3.0, 0.0, 6.0,
        1.0, 2.0, 6.0, 0.0,
    ]).unwrap()).unwrap();

    // Pairwise semantic similarity, ingested from an upstream embedding.
    #[rustfmt::skip]
    let sim = SimilarityFile::new(ClassMatrix::new(vocab.clone(), vec![
        1.0, 0.8,  0.2, 0.3,
        0.8, 1.0,  0.1, 0.4,
        0.2, 0.1,  1.0, -0.2,
        0.3, 0.4, -0.2, 1.0,
    ]).unwrap()).unwrap();

    let graph = build_graph(&cooccur, &sim, 0.5, 2).unwrap();
    for class in 0..vocab.len() as u8 {
        let row: Vec<String> = graph
            .row(class)
            .iter()
            .map(|&(dst, p)| format!("{} {:.2}", vocab.name(dst).unwrap(), p))
            .collect();
        println!("{:<12} -> [{}]", vocab.name(class).unwrap(), row.join(", "));
    }

    // During fixation on the guitar, which classes are saccade candidates?
    for tau in [0.3, 0.6, 0.9] {
        let hits = lookup(&graph, 0, tau);
        let names: Vec<&str> = hits.iter().map(|&(c, _)| vocab.name(c).unwrap()).collect();
        println!("tau {tau}: prefetch candidates {names:?}");
    }

    // The graph file format round-trips through JSON.
    let json = graph.to_json(&vocab);
    println!(
        "\ngraph json:\n{}",
        serde_json::to_string_pretty(&json).unwrap()
    );
}

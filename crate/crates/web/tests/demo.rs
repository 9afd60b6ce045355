use wenas_web::{cell_svg, parse_cell, sample_cell, space_size, Demo};

#[test]
fn sampled_cells_draw_every_node_and_edge() {
    let g = sample_cell(8, 4).unwrap();
    let svg = cell_svg(&g);
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
    assert_eq!(svg.matches("<circle").count(), 8);
    assert_eq!(svg.matches("marker-end").count(), 7);
    assert_eq!(svg.matches("stroke-dasharray").count(), 7);
    for gene in &g.genes {
        assert!(svg.contains(gene.op.name()));
    }
}

#[test]
fn cells_parse_from_either_notation() {
    let g = sample_cell(5, 9).unwrap();
    assert_eq!(parse_cell(&g.to_json()).unwrap(), g);
    assert_eq!(parse_cell(&format!("  {}\n", g.to_pairs_string())).unwrap(), g);
    assert!(parse_cell("[('relu', 1)]").is_err());
}

#[test]
fn space_sizes_match_known_counts() {
    assert_eq!(space_size(2).unwrap(), "4");
    assert_eq!(space_size(4).unwrap(), "384");
    assert_eq!(space_size(8).unwrap(), "82575360");
}

#[test]
fn demo_mixture_learns_and_demotes_the_reference() {
    let mut demo = Demo::new(4, 4, 1).unwrap();
    assert_eq!(demo.weights().len(), 5);
    assert_eq!(demo.labels()[4], "uniform reference");
    let before = demo.valid_perplexity().unwrap();
    for _ in 0..4 {
        let loss = demo.train_batches(30).unwrap();
        assert!(loss.is_finite());
    }
    assert!(demo.progress() > 1.0);
    let w = demo.weights();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(w[4] < 0.2, "reference kept weight {}", w[4]);
    assert!(demo.valid_perplexity().unwrap() < before);
}

#[test]
fn demo_rejects_empty_mixture() {
    assert!(Demo::new(0, 4, 1).is_err());
}

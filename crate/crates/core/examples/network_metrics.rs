//! Graph edit distance, DeltaCon similarity, degree variation and
//! enriched-function counts on small hand-built graphs.

use subtype_nets::data_io::{AnnotationMap, GeneGraph};
use subtype_nets::eval::{cdv, dcs, ebf_pair, ged, ged_exact, GedMode};

fn main() -> subtype_nets::Result<()> {
    let path = GeneGraph::from_named_edges(&[("a", "b"), ("b", "c"), ("c", "d")])?;
    let star = GeneGraph::from_named_edges(&[("a", "b"), ("a", "c"), ("a", "d")])?;
    let cycle = GeneGraph::from_named_edges(&[("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")])?;

    println!("GED path/star: anchored {}, exact {}", ged(&path, &star, GedMode::Approx)?, ged_exact(&path, &star)?);
    println!("GED path/cycle: anchored {}, exact {}", ged(&path, &cycle, GedMode::Approx)?, ged_exact(&path, &cycle)?);
    println!("DCS path/path {:.4}, path/star {:.4}, path/cycle {:.4}", dcs(&path, &path)?, dcs(&path, &star)?, dcs(&path, &cycle)?);
    println!("CDV path {:.4}, star {:.4}, cycle {:.4}", cdv(&path)?, cdv(&star)?, cdv(&cycle)?);

    let mut ann = AnnotationMap::new();
    for (gene, term) in [("a", "A"), ("a", "B"), ("b", "C"), ("x", "A"), ("y", "D"), ("y", "E")] {
        ann.insert(gene, term);
    }
    let g1 = GeneGraph::from_named_edges(&[("a", "b")])?;
    let g2 = GeneGraph::from_named_edges(&[("x", "y")])?;
    println!("#EBF {{A,B,C}} vs {{A,D,E}}: {}", ebf_pair(&g1, &g2, &ann)?);
    Ok(())
}

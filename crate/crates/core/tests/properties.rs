use proptest::prelude::*;

use elastodpg::mesh::{build_lshape_mesh_with, build_square_mesh, Mesh};
use elastodpg::persist::format_real;
use elastodpg::study::{ConvergenceRecord, ConvergenceRow};

fn refine_rounds(mut mesh: Mesh, picks: &[Vec<usize>]) -> Vec<Mesh> {
    let mut out = vec![mesh.clone()];
    for round in picks {
        let n = mesh.num_triangles();
        let mut marked: Vec<usize> = round.iter().map(|i| i % n).collect();
        marked.sort_unstable();
        marked.dedup();
        mesh = mesh.refine(&marked).unwrap();
        out.push(mesh.clone());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_refinement_stays_conforming(
        lshape in any::<bool>(),
        picks in prop::collection::vec(prop::collection::vec(0usize..10_000, 1..4), 20),
    ) {
        let start = if lshape { build_lshape_mesh_with(1).unwrap() } else { build_square_mesh(1).unwrap() };
        let area = start.total_area();
        let angle0 = start.min_angle();
        for m in refine_rounds(start, &picks) {
            prop_assert_eq!(m.hanging_vertex_count(), 0);
            prop_assert!((m.total_area() - area).abs() < 1e-12 * area);
            // newest vertex bisection produces finitely many similarity classes
            prop_assert!(m.min_angle() >= 0.5 * angle0 - 1e-12);
            let interior = m.edges().iter().filter(|e| !e.is_boundary()).count();
            prop_assert_eq!(2 * interior + (m.num_edges() - interior), 3 * m.num_triangles());
        }
    }

    #[test]
    fn generation_increases_with_refinement(k in 0usize..8) {
        let m = build_square_mesh(2).unwrap();
        let r = m.refine(&[k]).unwrap();
        prop_assert!(r.generation() > m.generation());
    }

    #[test]
    fn real_text_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_real(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn convergence_csv_round_trips(vals in prop::collection::vec((1usize..1_000_000, 1e-300f64..1e300, 1e-300f64..1e300), 1..12)) {
        let rows: Vec<ConvergenceRow> = vals
            .iter()
            .enumerate()
            .map(|(i, &(dofs, eta, err))| ConvergenceRow {
                step: i,
                elements: dofs / 2,
                dofs,
                eta,
                rel_error: err,
                marked: i,
                wall_time: 0.0,
            })
            .collect();
        let rec = ConvergenceRecord { rows: rows.clone(), error_slope: f64::NAN, eta_slope: f64::NAN };
        let back = ConvergenceRecord::parse_rows(&rec.to_csv()).unwrap();
        prop_assert_eq!(back, rows);
    }
}

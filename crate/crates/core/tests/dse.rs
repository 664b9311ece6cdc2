use difflight::arch::ArchConfig;
use difflight::config::ConfigFile;
use difflight::dse::{dominates, explore, report_frontier, DsePoint, DseSpace, Objective, DSE_HEADER, FRONTIER_HEADER};
use difflight::platform::Platform;
use difflight::workload::preset;

fn point(gops: f64, epb: f64, y: usize) -> DsePoint {
    DsePoint { arch: ArchConfig::new(y, 12, 3, 6, 6, 3), gops, epb_j_per_bit: epb, objective: gops / epb }
}

fn ldm() -> Vec<difflight::workload::WorkloadGraph> {
    vec![preset("ldm-toy").unwrap()]
}

#[test]
fn singleton_space_ranks_its_point() {
    let space = DseSpace::new(vec![ArchConfig::default()], ldm());
    let r = explore(&space, &Platform::default()).unwrap();
    assert_eq!(r.ranked.len(), 1);
    assert_eq!(r.ranked[0].arch, ArchConfig::default());
    assert_eq!(r.frontier.len(), 1);
}

#[test]
fn oversized_rows_are_excluded() {
    let space = DseSpace::new(vec![ArchConfig::default(), ArchConfig::new(4, 40, 3, 6, 6, 3)], ldm());
    let r = explore(&space, &Platform::default()).unwrap();
    assert_eq!(r.excluded.len(), 1);
    assert!(r.excluded[0].reason.contains("36-MR"));
    let csv = r.results_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), DSE_HEADER);
    assert_eq!(lines.count(), 2);
    assert_eq!(r.frontier_csv().unwrap().lines().next().unwrap(), FRONTIER_HEADER);
}

#[test]
fn all_infeasible_is_an_error() {
    let space = DseSpace::new(vec![ArchConfig::new(4, 40, 3, 6, 6, 3)], ldm());
    assert!(explore(&space, &Platform::default()).is_err());
    assert!(explore(&DseSpace::new(vec![], ldm()), &Platform::default()).is_err());
}

#[test]
fn dominating_point_ranks_higher() {
    let a = point(10.0, 1.0, 1);
    let b = point(5.0, 2.0, 2);
    assert!(dominates(&a, &b) && !dominates(&b, &a));
    let mut v = [b, a];
    v.sort_by(difflight::dse::rank_order);
    assert_eq!(v[0], a);
}

#[test]
fn frontier_sizes() {
    assert_eq!(report_frontier(&[point(1.0, 1.0, 1)]).unwrap().len(), 1);
    assert_eq!(report_frontier(&[point(2.0, 2.0, 1), point(1.0, 1.0, 2)]).unwrap().len(), 2);
    assert_eq!(report_frontier(&[point(2.0, 1.0, 1), point(1.0, 2.0, 2)]).unwrap().len(), 1);
    assert!(report_frontier(&[]).is_err());
}

#[test]
fn frontier_matches_pairwise_oracle() {
    let pts: Vec<DsePoint> = (0..60)
        .map(|i| point(((i * 37) % 17) as f64, ((i * 11) % 13 + 1) as f64, i + 1))
        .collect();
    let f = report_frontier(&pts).unwrap();
    let oracle: Vec<usize> = pts.iter().filter(|p| !pts.iter().any(|q| dominates(q, p))).map(|p| p.arch.y).collect();
    let mut got: Vec<usize> = f.iter().map(|p| p.arch.y).collect();
    got.sort();
    let mut oracle = oracle;
    oracle.sort();
    assert_eq!(got, oracle);
    for a in &f {
        assert!(f.iter().all(|b| !dominates(a, b)));
    }
}

#[test]
fn space_from_config_grid() {
    let mut cfg = ConfigFile::parse("dse.y = 2,4\ndse.n = 12,40\ndse.dac_sharing = 1,2\ndse.workloads = ldm-toy\ndse.objective = gops\n").unwrap();
    let space = DseSpace::from_config(&mut cfg, vec![]).unwrap();
    cfg.finish().unwrap();
    assert_eq!(space.points.len(), 8);
    assert_eq!(space.objective, Objective::Gops);
    let r = explore(&space, &Platform::default()).unwrap();
    assert_eq!(r.ranked.len(), 4);
    assert_eq!(r.excluded.len(), 4);
    assert!(r.ranked.windows(2).all(|w| w[0].gops >= w[1].gops));
}

#[test]
fn space_from_config_points() {
    let mut cfg = ConfigFile::parse("dse.points = 4,12,3,6,6,3; 2,12,3,6,6,3\n").unwrap();
    let space = DseSpace::from_config(&mut cfg, ldm()).unwrap();
    assert_eq!(space.points.len(), 2);
    assert_eq!(space.workloads.len(), 1);
}

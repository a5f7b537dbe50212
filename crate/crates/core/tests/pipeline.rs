mod common;

use rastile::query::TileQuery;
use rastile::{Error, GeoPoint, TileAddress};

use common::{ingest_fixture, run_query_oracle};

#[test]
fn random_boxes_match_pixel_model() {
    let dir = tempfile::tempdir().unwrap();
    let f = ingest_fixture(dir.path(), 700, 450, 3, true);
    assert_eq!(f.layout.level_count, 4);
    assert_eq!(run_query_oracle(&f, 5, 100).unwrap(), 400);
}

#[test]
fn unpacked_layout_matches_too() {
    let dir = tempfile::tempdir().unwrap();
    let f = ingest_fixture(dir.path(), 300, 520, 2, false);
    run_query_oracle(&f, 6, 60).unwrap();
}

#[test]
fn shared_corner_belongs_to_northeast_tile() {
    let dir = tempfile::tempdir().unwrap();
    let f = ingest_fixture(dir.path(), 512, 512, 1, true);
    // 4x4 tiles over one degree: interior corners sit on quarter degrees
    let t = f.engine.query_point(1, 0, 0, GeoPoint { lon: 10.5, lat: 20.5 }).unwrap();
    assert_eq!(t.address, TileAddress { level: 0, row: 1, col: 2 });
    let t = f.engine.query_point(1, 0, 0, GeoPoint { lon: 11.0, lat: 21.0 }).unwrap();
    assert_eq!(t.address, TileAddress { level: 0, row: 0, col: 3 });
    let t = f.engine.query_point(1, 0, 0, GeoPoint { lon: 10.0, lat: 20.0 }).unwrap();
    assert_eq!(t.address, TileAddress { level: 0, row: 3, col: 0 });
    assert!(matches!(
        f.engine.query_point(1, 0, 0, GeoPoint { lon: 11.01, lat: 20.5 }),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn exact_tile_extent_selects_that_tile() {
    let dir = tempfile::tempdir().unwrap();
    let f = ingest_fixture(dir.path(), 512, 512, 1, true);
    let a = TileAddress { level: 0, row: 2, col: 1 };
    let extent = f.layout.tile_extent(a).unwrap();
    let r = f.engine.query_bbox(&TileQuery { raster_id: 1, band: 0, level: 0, extent }).unwrap();
    assert_eq!(r.addresses(), vec![a]);
}

#[test]
fn offline_node_reports_partial_result() {
    let dir = tempfile::tempdir().unwrap();
    let f = ingest_fixture(dir.path(), 700, 450, 1, true);
    let all = TileQuery { raster_id: 1, band: 0, level: 0, extent: f.layout.extent };
    f.engine.cluster().set_online(2, false);
    match f.engine.query_bbox(&all) {
        Err(Error::PartialResult { missing_nodes }) => assert_eq!(missing_nodes, vec![2]),
        other => panic!("{other:?}"),
    }
    f.engine.cluster().set_online(2, true);
    assert_eq!(f.engine.query_bbox(&all).unwrap().tiles.len(), 24);
}

#[test]
fn missing_tile_blocks_mosaic() {
    let dir = tempfile::tempdir().unwrap();
    let f = ingest_fixture(dir.path(), 512, 256, 1, true);
    let (layout, cluster) = (&f.layout, f.engine.cluster());
    // wipe every node's copy of the tile table and store all but one tile again
    let table = layout.table_name();
    let cells = cluster.full_scan(&table).unwrap();
    let gone = layout.key(0, 0, 1, 1).unwrap();
    let keep: Vec<_> = cells
        .iter()
        .filter(|c| c.row_key[..] != gone.encode())
        .map(|c| (rastile::TileKey::decode(&c.row_key).unwrap(), c.value.clone()))
        .collect();
    let other = dir.path().join("copy");
    let copy = rastile::cluster::Cluster::create(&other, *cluster.config()).unwrap();
    copy.ingest_batch(&table, keep).unwrap();
    let q = TileQuery { raster_id: 1, band: 0, level: 0, extent: layout.extent };
    let r = rastile::query::query_bbox(&copy, layout, &q).unwrap();
    assert_eq!(r.missing, vec![TileAddress { level: 0, row: 1, col: 1 }]);
    assert!(matches!(rastile::query::mosaic(&r), Err(Error::IncompleteMosaic { .. })));
    let p = GeoPoint { lon: f.layout.tile_extent(r.missing[0]).unwrap().west + 1e-6, lat: 20.25 };
    assert!(matches!(rastile::query::query_point(&copy, layout, 0, 0, p), Err(Error::NotFound(_))));
}

mod common;

use bytes::Bytes;
use rastile::store::{Store, TableSchema};
use rastile::Error;

#[test]
fn random_ops_match_reference() {
    for seed in [1, 2] {
        let dir = tempfile::tempdir().unwrap();
        let stats = common::run_store_oracle(dir.path(), seed, 10_000).unwrap();
        assert!(stats.reopens > 10 && stats.flushes > 100, "{stats:?}");
    }
}

#[test]
fn durability_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    {
        let store = Store::open(dir.path()).unwrap();
        let t = store.create_table(TableSchema::new("t", &["f"])).unwrap();
        t.put(b"r1", "f", "q", Bytes::from_static(b"old")).unwrap();
        t.flush().unwrap();
        t.put(b"r1", "f", "q", Bytes::from_static(b"new")).unwrap();
        t.put(b"r2", "f", "q", Bytes::from_static(b"two")).unwrap();
        assert!(t.flush().unwrap().is_some());
        assert!(t.flush().unwrap().is_none());
        assert_eq!(t.segment_count(), 2);
    }
    let store = Store::open(dir.path()).unwrap();
    let t = store.table("t").unwrap();
    let cells = t.scan(b"", b"\xff").unwrap();
    let values: Vec<&[u8]> = cells.iter().map(|c| &c.value[..]).collect();
    assert_eq!(values, vec![&b"new"[..], &b"two"[..]]);
    // timestamps keep counting after a restart
    let ts = t.put(b"r3", "f", "q", Bytes::new()).unwrap();
    assert!(ts > cells.iter().map(|c| c.timestamp).max().unwrap());
}

#[test]
fn schema_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let t = store.create_table(TableSchema::new("t", &["f"])).unwrap();
    assert!(matches!(t.put(b"r", "g", "q", Bytes::new()), Err(Error::Schema(_))));
    assert!(matches!(store.create_table(TableSchema::new("t", &["f"])), Err(Error::Conflict(_))));
}

#[test]
fn concurrent_readers_during_writes() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let t = store.create_table(TableSchema::new("t", &["f"])).unwrap();
    for i in 0..200u32 {
        t.put(&i.to_be_bytes(), "f", "q", Bytes::from(vec![1; 16])).unwrap();
    }
    std::thread::scope(|s| {
        s.spawn(|| {
            for i in 200..400u32 {
                t.put(&i.to_be_bytes(), "f", "q", Bytes::from(vec![1; 16])).unwrap();
                if i % 50 == 0 {
                    t.flush().unwrap();
                }
            }
        });
        for _ in 0..4 {
            s.spawn(|| {
                for _ in 0..50 {
                    let n = t.scan(&0u32.to_be_bytes(), &u32::MAX.to_be_bytes()).unwrap().len();
                    assert!((200..=400).contains(&n));
                }
            });
        }
    });
    assert_eq!(t.scan(&0u32.to_be_bytes(), &u32::MAX.to_be_bytes()).unwrap().len(), 400);
}

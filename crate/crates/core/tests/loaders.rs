use std::fs;
use std::path::Path;

use grouprec::data::{apply_filters, load_dataset, write_prepared, Format};
use grouprec::Error;

fn write(dir: &Path, files: &[(&str, &str)]) {
    for (name, body) in files {
        fs::write(dir.join(name), body).unwrap();
    }
}

#[test]
fn canonical_tokens_are_densified_in_order() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        &[
            ("user_items.tsv", "bob\tx\nann\ty\nbob\tz\n"),
            ("group_members.tsv", "g1\tann,bob\ng2\tbob,cid\n"),
            ("group_items.tsv", "g2\tx\ng1\tw\n"),
        ],
    );
    let d = load_dataset(dir.path(), Format::Canonical).unwrap();
    assert_eq!((d.num_users(), d.num_items(), d.num_groups()), (3, 4, 2));
    assert_eq!(d.id_maps().users.token(2), "cid");
    assert_eq!(d.id_maps().items.token(3), "w");
    assert_eq!(d.roster(0), &[0, 1]);
    assert_eq!(d.roster(1), &[0, 2]);
    assert_eq!(d.group_items(), &[vec![3], vec![0]]);
    assert!(d.user_items()[2].is_empty());
}

#[test]
fn agree_layout_ignores_extra_columns() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        &[
            ("groupMember.txt", "0 1,2\n1 2,3\n"),
            ("userRatingTrain.txt", "1 10 5 1999\n2 11 4\n3 10 1\n"),
            ("userRatingTest.txt", "1 12 3\n"),
            ("groupRatingTrain.txt", "0 10 1\n1 12 1\n"),
            ("groupRatingTest.txt", "0 13 1\n"),
        ],
    );
    let d = load_dataset(dir.path(), Format::Agree).unwrap();
    let s = d.stats();
    assert_eq!((s.users, s.items, s.groups), (3, 4, 2));
    assert_eq!((s.user_item_interactions, s.group_item_interactions), (4, 3));
    assert_eq!(d.group_items()[0].len(), 2);
}

#[test]
fn missing_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), &[("user_items.tsv", "a\tb\n"), ("group_items.tsv", "")]);
    let err = load_dataset(dir.path(), Format::Canonical).unwrap_err();
    assert!(err.to_string().contains("group_members.tsv"), "{err}");
}

#[test]
fn bad_records_report_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        &[
            ("user_items.tsv", "a\tb\n"),
            ("group_members.tsv", "g\ta\n"),
            ("group_items.tsv", "g\tb\nh\tb\n"),
        ],
    );
    match load_dataset(dir.path(), Format::Canonical) {
        Err(Error::UnknownGroup { line: 2, token, .. }) => assert_eq!(token, "h"),
        other => panic!("{other:?}"),
    }
    write(dir.path(), &[("group_items.tsv", "g\tb\nno-tab-here\n")]);
    let err = load_dataset(dir.path(), Format::Canonical).unwrap_err().to_string();
    assert!(err.contains("group_items.tsv:2"), "{err}");
}

#[test]
fn filters_drop_small_groups_and_orphans() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        &[
            ("user_items.tsv", "u1\ti1\n"),
            ("group_members.tsv", "big\tu1,u2\nsolo\tu3\n"),
            ("group_items.tsv", "big\ti1\nsolo\ti2\n"),
        ],
    );
    let d = load_dataset(dir.path(), Format::Canonical).unwrap();
    let f = apply_filters(&d, 2, 1);
    assert_eq!((f.num_groups(), f.num_users(), f.num_items()), (1, 2, 1));
    assert_eq!(f.id_maps().groups.token(0), "big");
}

#[test]
fn prepare_is_idempotent() {
    let src = tempfile::tempdir().unwrap();
    write(
        src.path(),
        &[
            ("user_items.tsv", "b\tq\na\tp\n"),
            ("group_members.tsv", "G\ta,c\nH\tb\n"),
            ("group_items.tsv", "H\tr\nG\tp\n"),
        ],
    );
    let once = tempfile::tempdir().unwrap();
    let twice = tempfile::tempdir().unwrap();
    write_prepared(&load_dataset(src.path(), Format::Canonical).unwrap(), once.path()).unwrap();
    write_prepared(&load_dataset(once.path(), Format::Canonical).unwrap(), twice.path()).unwrap();
    for f in ["user_items.tsv", "group_members.tsv", "group_items.tsv"] {
        assert_eq!(fs::read(once.path().join(f)).unwrap(), fs::read(twice.path().join(f)).unwrap(), "{f}");
    }
    let maps = fs::read_to_string(once.path().join("id_maps.tsv")).unwrap();
    assert!(maps.contains("user\tc\t2\n"), "{maps}");
}

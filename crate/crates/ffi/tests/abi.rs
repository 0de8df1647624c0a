use std::ffi::{CStr, CString};
use std::ptr;

use rapidgnn_ffi::*;

fn last_error() -> String {
    let p = rgnn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synth(n: u64) -> *mut RgnnGraph {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { rgnn_graph_synth(n, 3, 4, 3, 11, &mut g) }, RgnnStatus::Ok);
    assert!(!g.is_null());
    g
}

#[test]
fn byte_accounting() {
    assert_eq!(rgnn_bytes_for(15_000, 602), 36_120_000);
    assert_eq!(rgnn_bytes_for(232_965, 602), 560_979_720);
    assert_eq!(rgnn_num_batches(153_431, 1000), 154);
    assert_eq!(rgnn_num_batches(10, 0), 0);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(rgnn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn seeds_match_core() {
    let mut s = 0;
    assert_eq!(unsafe { rgnn_seed_for(5, 3, 10, 2, 7, &mut s) }, RgnnStatus::Ok);
    assert_eq!(s, rapidgnn::SeedSchedule::new(5, 3, 10).seed_for(2, 7).unwrap());
    assert_eq!(unsafe { rgnn_seed_for(5, 3, 10, 3, 0, &mut s) }, RgnnStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { rgnn_seed_for(5, 3, 10, 0, 0, ptr::null_mut()) }, RgnnStatus::NullArgument);
}

#[test]
fn graph_round_trip_through_files() {
    let g = synth(300);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("g.rgf").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(rgnn_graph_save(g, path.as_ptr()), RgnnStatus::Ok);
        let mut h = ptr::null_mut();
        assert_eq!(rgnn_graph_load(path.as_ptr(), &mut h), RgnnStatus::Ok);
        assert_eq!(rgnn_graph_num_nodes(h), 300);
        assert_eq!(rgnn_graph_num_edges(h), rgnn_graph_num_edges(g));
        assert_eq!(rgnn_graph_num_edges(h), 2 * 3 * (300 - 3));
        assert_eq!(rgnn_graph_feat_dim(h), 4);
        let (mut a, mut b) = ([0f32; 4], [0f32; 4]);
        assert_eq!(rgnn_graph_feature_row(g, 17, a.as_mut_ptr(), 4), RgnnStatus::Ok);
        assert_eq!(rgnn_graph_feature_row(h, 17, b.as_mut_ptr(), 4), RgnnStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(rgnn_graph_feature_row(h, 17, b.as_mut_ptr(), 3), RgnnStatus::Shape);
        assert_eq!(rgnn_graph_feature_row(h, 300, b.as_mut_ptr(), 4), RgnnStatus::Lookup);
        let mut d = 0;
        assert_eq!(rgnn_graph_degree(h, 0, &mut d), RgnnStatus::Ok);
        assert!(d >= 3);
        rgnn_graph_free(h);
        rgnn_graph_free(g);
    }
}

#[test]
fn load_errors_carry_messages() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("none.rgf").to_str().unwrap()).unwrap();
    let junk_path = dir.path().join("junk.rgf");
    std::fs::write(&junk_path, b"not a graph file at all").unwrap();
    let junk = CString::new(junk_path.to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(rgnn_graph_load(missing.as_ptr(), &mut g), RgnnStatus::Io);
        assert!(g.is_null());
        assert_eq!(rgnn_graph_load(junk.as_ptr(), &mut g), RgnnStatus::Format);
        assert!(last_error().to_lowercase().contains("magic"), "{}", last_error());
        assert_eq!(rgnn_graph_load(ptr::null(), &mut g), RgnnStatus::NullArgument);
    }
}

#[test]
fn success_clears_last_error() {
    let mut s = 0;
    unsafe {
        rgnn_seed_for(1, 1, 1, 5, 0, &mut s);
        assert!(!rgnn_last_error().is_null());
        assert_eq!(rgnn_seed_for(1, 1, 1, 0, 0, &mut s), RgnnStatus::Ok);
    }
    assert!(rgnn_last_error().is_null());
}

#[test]
fn partitions() {
    let g = synth(400);
    unsafe {
        let (mut r, mut e) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(rgnn_partition_random(g, 2, 3, &mut r), RgnnStatus::Ok);
        assert_eq!(rgnn_partition_edgecut(g, 2, &mut e), RgnnStatus::Ok);
        assert_eq!(rgnn_partition_num_parts(r), 2);
        let (mut cut_r, mut cut_e) = (0, 0);
        assert_eq!(rgnn_partition_edge_cut(g, r, &mut cut_r), RgnnStatus::Ok);
        assert_eq!(rgnn_partition_edge_cut(g, e, &mut cut_e), RgnnStatus::Ok);
        assert!(cut_e < cut_r);
        let mut owner = 9;
        assert_eq!(rgnn_partition_owner(r, 5, &mut owner), RgnnStatus::Ok);
        assert!(owner < 2);
        assert_eq!(rgnn_partition_owner(r, 400, &mut owner), RgnnStatus::Lookup);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("p.rpb").to_str().unwrap()).unwrap();
        assert_eq!(rgnn_partition_save(r, path.as_ptr()), RgnnStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(rgnn_partition_load(g, path.as_ptr(), &mut back), RgnnStatus::Ok);
        for v in 0..400 {
            let (mut a, mut b) = (0, 0);
            rgnn_partition_owner(r, v, &mut a);
            rgnn_partition_owner(back, v, &mut b);
            assert_eq!(a, b);
        }
        let mut bad = ptr::null_mut();
        assert_eq!(rgnn_partition_random(g, 0, 1, &mut bad), RgnnStatus::InvalidArgument);
        rgnn_partition_free(back);
        rgnn_partition_free(r);
        rgnn_partition_free(e);
        rgnn_graph_free(g);
    }
}

#[test]
fn plan_digest_and_inputs() {
    let g = synth(500);
    let fanouts = [3u64, 4];
    unsafe {
        let (mut a, mut b, mut c) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(rgnn_plan_generate(g, fanouts.as_ptr(), 2, 50, 2, 9, &mut a), RgnnStatus::Ok);
        assert_eq!(rgnn_plan_generate(g, fanouts.as_ptr(), 2, 50, 2, 9, &mut b), RgnnStatus::Ok);
        assert_eq!(rgnn_plan_generate(g, fanouts.as_ptr(), 2, 50, 2, 10, &mut c), RgnnStatus::Ok);
        assert_eq!(rgnn_plan_digest(a), rgnn_plan_digest(b));
        assert_ne!(rgnn_plan_digest(a), rgnn_plan_digest(c));
        assert_eq!(rgnn_plan_epochs(a), 2);
        let train = (500f64 * 0.7).round() as u64;
        assert_eq!(rgnn_plan_batches_per_epoch(a), rgnn_num_batches(train, 50));

        let mut hex = [0 as std::ffi::c_char; 17];
        assert_eq!(rgnn_plan_digest_hex(a, hex.as_mut_ptr(), 17), RgnnStatus::Ok);
        let text = CStr::from_ptr(hex.as_ptr()).to_str().unwrap().to_string();
        assert_eq!(text, format!("{:016x}", rgnn_plan_digest(a)));
        assert_eq!(rgnn_plan_digest_hex(a, hex.as_mut_ptr(), 16), RgnnStatus::Shape);

        let mut count = 0usize;
        assert_eq!(rgnn_plan_input_nodes(a, g, 1, 0, ptr::null_mut(), 0, &mut count), RgnnStatus::Shape);
        assert!(count > 0);
        let mut ids = vec![0u32; count];
        assert_eq!(rgnn_plan_input_nodes(a, g, 1, 0, ids.as_mut_ptr(), count, &mut count), RgnnStatus::Ok);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(rgnn_plan_input_nodes(a, g, 2, 0, ids.as_mut_ptr(), count, &mut count), RgnnStatus::InvalidArgument);

        let mut bad = ptr::null_mut();
        assert_eq!(rgnn_plan_generate(g, fanouts.as_ptr(), 0, 50, 2, 9, &mut bad), RgnnStatus::InvalidArgument);
        assert_eq!(rgnn_plan_generate(g, ptr::null(), 2, 50, 2, 9, &mut bad), RgnnStatus::NullArgument);
        rgnn_plan_free(a);
        rgnn_plan_free(b);
        rgnn_plan_free(c);
        rgnn_graph_free(g);
    }
}

#[test]
fn free_accepts_null() {
    unsafe {
        rgnn_graph_free(ptr::null_mut());
        rgnn_partition_free(ptr::null_mut());
        rgnn_plan_free(ptr::null_mut());
        assert_eq!(rgnn_graph_num_nodes(ptr::null()), 0);
        assert_eq!(rgnn_plan_digest(ptr::null()), 0);
    }
}

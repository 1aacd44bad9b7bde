//! Writes a synthetic bent pair as OFF meshes with a shuffled target and its
//! ground truth, ready for `specmatch match --gt`.
//!
//! cargo run --release --example write_shapes -- [out_dir] [subdivisions]

use std::path::PathBuf;

use specmatch::fmap::write_correspondence;
use specmatch::mesh::{io::write_off, shapes};

fn main() -> specmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "shapes".into()));
    let subdivisions: usize = args.next().map_or(3, |s| s.parse().expect("subdivisions"));
    std::fs::create_dir_all(&dir).map_err(|source| specmatch::Error::Io { path: dir.clone(), source })?;

    let (src, dst) = shapes::bent_pair(subdivisions, 1.2, 7);
    let perm = shapes::random_permutation(dst.n_vertices(), 11);
    let dst = dst.permuted(&perm)?;
    let mut gt = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        gt[old] = new;
    }
    write_off(&src, dir.join("src.off"))?;
    write_off(&dst, dir.join("dst.off"))?;
    write_correspondence(dir.join("gt.txt"), &gt, false)?;
    println!("wrote src.off, dst.off ({} vertices) and gt.txt to {}", src.n_vertices(), dir.display());
    Ok(())
}

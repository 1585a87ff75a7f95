//! Generate the synthetic two-modality task and show why fusion is
//! required: in complementary mode each single modality is useless on its
//! own (a nearest-centroid probe scores chance), while in redundant mode
//! either modality suffices.
//!
//! ```bash
//! cargo run --example synthetic_dataset
//! ```

use stfn::data::{synthesize, Coupling, Dataset, Split, SyntheticTaskSpec, VideoRecord};

/// Nearest-centroid classifier on the mean-pooled frames of one modality.
fn centroid_accuracy(ds: &Dataset, appearance: bool) -> f64 {
    let feat = |v: &VideoRecord| -> Vec<f64> {
        let t = if appearance { &v.appearance } else { &v.motion };
        t.reduce_mean(0).unwrap().into_data()
    };
    let mut centroids = vec![vec![0.0; ds.feature_dim]; ds.num_classes];
    let mut counts = vec![0usize; ds.num_classes];
    for &i in &ds.indices_of(Split::Train) {
        let v = &ds.videos[i];
        for (acc, x) in centroids[v.label].iter_mut().zip(feat(v)) {
            *acc += x;
        }
        counts[v.label] += 1;
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        for x in c.iter_mut() {
            *x /= *n as f64;
        }
    }
    let test = ds.indices_of(Split::Test);
    let correct = test
        .iter()
        .filter(|&&i| {
            let v = &ds.videos[i];
            let x = feat(v);
            let best = (0..ds.num_classes)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a].iter().zip(&x).map(|(c, v)| (c - v) * (c - v)).sum();
                    let db: f64 = centroids[b].iter().zip(&x).map(|(c, v)| (c - v) * (c - v)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            best == v.label
        })
        .count();
    correct as f64 / test.len() as f64
}

fn main() -> stfn::Result<()> {
    for coupling in [Coupling::Complementary, Coupling::Redundant] {
        let spec = SyntheticTaskSpec {
            coupling,
            ..SyntheticTaskSpec::default()
        };
        let ds = synthesize(&spec)?;
        println!(
            "{coupling:?}: {} classes, d={}, {} train / {} val / {} test videos",
            ds.num_classes,
            ds.feature_dim,
            ds.indices_of(Split::Train).len(),
            ds.indices_of(Split::Val).len(),
            ds.indices_of(Split::Test).len(),
        );
        println!("  informative frames: {:?}", spec.signal_window());
        println!(
            "  single-modality centroid accuracy: appearance {:.2}, motion {:.2} (chance {:.2})",
            centroid_accuracy(&ds, true),
            centroid_accuracy(&ds, false),
            1.0 / ds.num_classes as f64
        );
    }
    println!("\nuse `stfn gen` to write such a dataset to disk.");
    Ok(())
}

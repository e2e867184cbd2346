use sure_lab::criteria::{edf_bound, r_star};
use sure_lab::montecarlo::{run_experiment, RunOptions};
use sure_lab::{make_theta0, GaussianSequenceModel64, Smoother64, SmootherFamily64, ThetaKind};

fn main() -> sure_lab::Result<()> {
    let n = 40;
    let theta0 = make_theta0(&ThetaKind::PolyDecay { alpha: 1.0, scale: 4.0 }, n)?;
    let model = GaussianSequenceModel64::new(theta0, 1.0)?;

    let points: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
    let members = [1, 2, 4, 8, 16, 40]
        .into_iter()
        .map(|k| Smoother64::knn(format!("knn_{k}"), &points, k))
        .collect::<sure_lab::Result<Vec<_>>>()?;
    let family = SmootherFamily64::new(members)?;

    let (summary, _) = run_experiment(&family, &model, 20_000, 42, RunOptions::default())?;
    let edf = summary.estimate("edf_total");
    let bound = edf_bound(r_star(&family, &model)?, family.len(), family.h_op().max(1.0))?;
    println!("edf {:.3} ± {:.3}, bound {bound:.3}", edf.mean, edf.stderr.unwrap_or(0.0));
    for (label, count) in &summary.selection_histogram {
        println!("{label}: {count}");
    }
    Ok(())
}

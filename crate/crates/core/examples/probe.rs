use kaar::config::ExperimentConfig;
fn main() {
    let c = ExperimentConfig::from_toml_str(
        "[experiment]\nhorizon = 4096\ncheckpoints=[128,256,512,1024,2048,4096]\nn_seeds = 20\n[adversary]\nstream = \"shattering\"\n").unwrap();
    let t = std::time::Instant::now();
    let r = kaar::experiments::bench(&c).unwrap();
    let mean = r.mean_curve();
    println!("{:?}", mean);
    let ns: Vec<usize> = mean.iter().map(|m| m.0).collect();
    for k in [10, 20] {
        let avg: Vec<f64> =
            (0..ns.len()).map(|i| r.curves[..k].iter().map(|c| c.regrets[i]).sum::<f64>() / k as f64).collect();
        println!("{k} seeds pooled {:?}", kaar::harness::estimate_exponent(&ns, &avg, 1e-9).unwrap().slope);
    }
    println!("{:?}", t.elapsed());
}

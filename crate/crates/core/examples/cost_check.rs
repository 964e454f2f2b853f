use rdst_core::rdst::{cost, RdstConfig};

fn main() {
    for (name, cfg) in [("RDST", RdstConfig::rdst(4, 1)), ("RDST-E", RdstConfig::rdst_e(4, 1))] {
        let report = cost(&cfg, &[1, 1, 40, 32]).unwrap();
        println!(
            "{}: params {:.4} M ({}), MACs {:.4} G ({})",
            name,
            report.total_params() as f64 / 1e6,
            report.total_params(),
            report.total_macs() as f64 / 1e9,
            report.total_macs()
        );
    }
}

use stl_synth::{cases, synthesize};

fn main() {
    env_logger::init();
    let which = std::env::args().nth(1).unwrap_or_else(|| "reach".into());
    let cfg = if which == "quad" { cases::quadrotor() } else { cases::reach_avoid() };
    let res = synthesize(&cfg).unwrap();
    println!("{:?} rho_bar={} rho={} diag={:?}", res.status, res.plan_robustness, res.robustness, res.diagnostics);
    if let Some(p) = &res.plan {
        println!("K={} L={} stretches={:?}", p.k(), p.loop_index, p.stretches);
    }
}


use std::fmt::Write;

use super::GwrNetwork;

/// Fixed leading columns of [`to_csv`]; weight columns `w0..w{n-1}` follow.
pub const CSV_HEADER_PREFIX: &str = "id,habituation,age,wins,arousal_mean,valence_mean,concept";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per neuron. Empty cells mean the neuron never won an annotated
/// sample.
pub fn to_csv(net: &GwrNetwork) -> String {
    let mut s = String::from(CSV_HEADER_PREFIX);
    for i in 0..net.dim() {
        write!(s, ",w{i}").unwrap();
    }
    s.push('\n');
    for (id, n) in net.neurons().iter().enumerate() {
        let a = &n.annotation;
        write!(
            s,
            "{id},{},{},{},{},{},{}",
            n.habituation,
            net.step_count() - n.creation_step,
            a.count,
            opt(a.mean_arousal()),
            opt(a.mean_valence()),
            a.concept().map(|c| c.name()).unwrap_or("")
        )
        .unwrap();
        for w in &n.weight {
            write!(s, ",{w}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Undirected graph; nodes labeled with concept and mean valence, edges
/// carry their age.
pub fn to_dot(net: &GwrNetwork, name: &str) -> String {
    let mut s = format!("graph \"{}\" {{\n", name.replace('"', "'"));
    for (id, n) in net.neurons().iter().enumerate() {
        let a = &n.annotation;
        let label = match (a.concept(), a.mean_valence()) {
            (Some(c), Some(v)) => format!("{id}: {c} v={v:.3}"),
            _ => format!("{id}"),
        };
        writeln!(s, "  n{id} [label=\"{label}\", habituation={}];", n.habituation).unwrap();
    }
    for e in net.edges() {
        writeln!(s, "  n{} -- n{} [age={}];", e.a, e.b, e.age).unwrap();
    }
    s.push_str("}\n");
    s
}

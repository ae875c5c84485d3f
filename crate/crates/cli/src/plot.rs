//! gnuplot script sidecars. Each script reads the CSV written next to it.

use std::fs;
use std::io;
use std::path::Path;

fn quoted(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', "''"))
}

fn write(script: &Path, body: String) -> io::Result<()> {
    let mut s = String::from("set datafile separator ','\nset key off\nset grid\n");
    s.push_str(&body);
    fs::write(script, s)
}

pub fn series(script: &Path, data: &Path, parameter: &str, tau_s: f64, t0_us: u64) -> io::Result<()> {
    write(
        script,
        format!(
            "set title '{parameter} (tau = {tau_s} s)'\nset xlabel 'time since start (s)'\nset ylabel '{parameter}'\n\
             plot {} every ::1 using (($2-{t0_us})/1e6):3 with steps\n",
            quoted(data)
        ),
    )
}

pub fn fnn(script: &Path, data: &Path) -> io::Result<()> {
    write(
        script,
        format!(
            "set title 'False nearest neighbors'\nset xlabel 'embedding dimension d'\nset ylabel 'FNN fraction'\n\
             set yrange [0:1]\nplot {} every ::1 using 1:2 with linespoints pt 7\n",
            quoted(data)
        ),
    )
}

pub fn trajectory(script: &Path, data: &Path, axes: &[usize]) -> io::Result<()> {
    let label = |i: usize| format!("s(n+{}T)", axes[i]);
    let body = if axes.len() == 3 {
        format!(
            "set xlabel '{}'\nset ylabel '{}'\nset zlabel '{}'\nsplot {} every ::1 using 2:3:4 with lines\n",
            label(0),
            label(1),
            label(2),
            quoted(data)
        )
    } else {
        format!(
            "set xlabel '{}'\nset ylabel '{}'\nplot {} every ::1 using 2:3 with linespoints pt 7 ps 0.5\n",
            label(0),
            label(1),
            quoted(data)
        )
    };
    write(script, format!("set title 'Delay-embedded trajectory'\n{body}"))
}

pub fn frequency(script: &Path, data: &Path) -> io::Result<()> {
    write(
        script,
        format!(
            "set title 'Parameter frequency in signatures'\nset xlabel 'parameter number'\nset ylabel 'frequency'\n\
             set style fill solid 0.6\nset boxwidth 0.8\nset xtics 1\nset yrange [0:*]\n\
             plot {} every ::1 using 1:4 with boxes\n",
            quoted(data)
        ),
    )
}

//! Plot script written next to the CSV outputs. Rendering is left to the
//! user; the script needs pandas and matplotlib.

use crate::config::Experiment;

const TEMPLATE: &str = r#"#!/usr/bin/env python3
# Regenerate figures from rows.csv and summary.csv in this directory.
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))
EXPERIMENT = "{experiment}"
FIELDS = {fields}


def main():
    summary = pd.read_csv(os.path.join(HERE, "summary.csv"))
    fields = [f for f in FIELDS if f in set(summary["field"])]
    if not fields:
        sys.exit("nothing to plot")
    fig, axes = plt.subplots(1, len(fields), figsize=(4.5 * len(fields), 3.5), squeeze=False)
    for ax, field in zip(axes[0], fields):
        s = summary[summary["field"] == field].sort_values("n")
        ax.errorbar(s["n"], s["mean"], yerr=2 * s["se"], marker="o", label="mean +- 2 se")
        ax.plot(s["n"], s["median"], marker="s", label="median")
        ax.set_xscale("log")
        ax.set_xlabel("n")
        ax.set_title(field)
        ax.legend()
    fig.suptitle(EXPERIMENT)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, EXPERIMENT + ".png"), dpi=120)
    for name in sorted(os.listdir(HERE)):
        if name.startswith("posterior_n") and name.endswith(".csv"):
            p = pd.read_csv(os.path.join(HERE, name))
            plt.figure(figsize=(5, 3.5))
            plt.plot(p["h"], p["density"], label="posterior")
            plt.plot(p["h"], p["limit_density"], "--", label="exponential limit")
            plt.xlabel("h")
            plt.legend()
            plt.tight_layout()
            plt.savefig(os.path.join(HERE, name[:-4] + ".png"), dpi=120)
            plt.close()


if __name__ == "__main__":
    main()
"#;

fn fields(e: Experiment) -> &'static [&'static str] {
    match e {
        Experiment::Risk => &["scaled_err_mle", "scaled_err_debiased"],
        Experiment::BvmParametric | Experiment::BvmShift | Experiment::BvmScale => &["tv", "delta_n"],
        Experiment::LaeCheck => &["remainder_minus", "remainder_plus"],
        Experiment::HellingerRate => &["stat_a"],
        Experiment::KlDiag => &["stat_a", "stat_b"],
        Experiment::PriorCheck => &["stat_a", "stat_b"],
    }
}

pub fn script(e: Experiment) -> String {
    let list = fields(e).iter().map(|f| format!("\"{f}\"")).collect::<Vec<_>>().join(", ");
    TEMPLATE
        .replace("{experiment}", e.name())
        .replace("{fields}", &format!("[{list}]"))
}

"""End-to-end run through the library: simulate, build a basis, fit, life tables.

    python3 scripts/pipeline_demo.py --out results/demo
"""

import argparse
from pathlib import Path

import numpy as np

from submort.io import write_basis_csv, write_dataset_csv, write_truth_csv
from submort.lifetable import e0_posterior, life_expectancy
from submort.model import ModelSpec
from submort.pca import build_basis
from submort.plot import render_fit_plot
from submort.core import observed_log_rates
from submort.sampler import SamplerConfig, run, summarize
from submort.simulator import make_counties, reference_schedules, simulate_dataset, standard_lifetable


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iterations", type=int, default=10000)
    ap.add_argument("--out", default="results/demo")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    std = standard_lifetable()
    basis = build_basis(reference_schedules(std, seed=args.seed), 3)
    print("explained variance:", np.round(basis.explained_variance_ratio, 6))
    counties = make_counties(std, (1000, 100000), n_per_size=3, seed=args.seed)
    data, truth = simulate_dataset(counties, range(2000, 2010), seed=args.seed)
    write_dataset_csv(data, out / "dataset.csv")
    write_truth_csv(data, truth, out / "truth.csv")
    write_basis_csv(basis, out / "basis.csv")

    cfg = SamplerConfig(4, args.iterations, args.iterations // 2, 5, seed=args.seed)
    samples = run(ModelSpec(basis, data), cfg)
    s = summarize(samples, quantity="log_m")
    print(f"max R-hat over log-rates: {np.max(s.rhat):.4f}")

    lo, hi = s.interval(0.95)
    obs = observed_log_rates(data).values
    rates = np.exp(samples.log_rates().reshape((-1,) + data.shape))
    for a, c in enumerate(counties):
        e0 = e0_posterior(rates[:, :, a, 0])
        print(f"{c.id}: true e0 {life_expectancy(c.true_rates):.2f}, "
              f"estimate {e0['median']:.2f} [{e0['lo']:.2f}, {e0['hi']:.2f}]")
        svg = render_fit_plot(c.id, 2000, data.age_grid.lower_bounds, obs[:, a, 0], s.median[:, a, 0],
                              lo[:, a, 0], hi[:, a, 0], np.log(truth[:, a, 0]))
        (out / f"fit_{c.id}_2000.svg").write_text(svg)


if __name__ == "__main__":
    main()

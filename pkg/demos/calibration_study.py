"""When is a quadrature error bar honest?

Draw many integrands from the rough spline prior, integrate each from ten
evaluations, and standardize the errors by the reported posterior deviation.
With the matched prior roughly 68% of standardized errors land in [-1, 1];
the over-smooth prior is confidently wrong.
"""

import numpy as np

from pnum import (BQState, bq_posterior, exp_quadratic, linear_spline,
                  sample_path, trapezoid)


def condition(kernel, nodes, values):
    state = BQState.for_kernel(kernel)
    for x, y in zip(nodes, values):
        state = state.with_node(x, y)
    return state


def main(n_draws=200):
    domain = (-3.0, 3.0)
    spline = linear_spline(1.0, 1.0, domain)
    eq = exp_quadratic(1.0, 1.0, domain)
    fine = np.linspace(*domain, 1801)
    nodes = fine[::200]          # ten equidistant evaluation points

    scores = {"spline-bq": [], "eq-bq": []}
    for seed in range(n_draws):
        path = sample_path(spline, fine, seed=seed)
        truth = trapezoid(fine, path)
        values = path[::200]
        for name, kernel in (("spline-bq", spline), ("eq-bq", eq)):
            est = bq_posterior(condition(kernel, nodes, values))
            scores[name].append((truth - est.mean) / est.std)

    print(f"{n_draws} integrands drawn from the spline prior, N=10 nodes each")
    print(f"{'model':>10}  {'coverage of [-1,1]':>20}  {'score std':>10}")
    for name, vals in scores.items():
        vals = np.asarray(vals)
        cover = np.mean(np.abs(vals) <= 1.0)
        print(f"{name:>10}  {cover:>20.3f}  {vals.std():>10.3f}")
    print("\nideal coverage is 0.683; far below means over-confidence")


if __name__ == "__main__":
    main()

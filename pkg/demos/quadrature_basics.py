"""Integration as Gaussian inference, on a desk-scale benchmark.

Walks through the core quadrature story: a GP prior on the integrand turns
the integral into a Gaussian; with the linear-spline kernel on an equidistant
grid the posterior mean IS the trapezoid estimate, and the posterior standard
deviation is the part the classical rule never reports.  A rougher or
smoother prior changes how trustworthy that error bar is.
"""

import numpy as np

from pnum import (BQState, bq_posterior, exp_quadratic, linear_spline,
                  sample_path, select_node_active, select_nodes_grid, trapezoid)


def f(x):
    return np.exp(-np.sin(3 * x) ** 2 - x ** 2)


def condition(kernel, nodes, values):
    state = BQState.for_kernel(kernel)
    for x, y in zip(nodes, values):
        state = state.with_node(x, y)
    return state


def main():
    domain = (-3.0, 3.0)
    fine = np.linspace(*domain, 1_000_001)
    truth = trapezoid(fine, f(fine))
    print(f"high-resolution reference integral: {truth:.8f}\n")

    print("spline-kernel posterior mean reproduces the trapezoid rule:")
    spline = linear_spline(c=1.0, b=1.0, domain=domain)
    for n in (5, 9, 17, 33):
        nodes = select_nodes_grid(domain, n)
        est = bq_posterior(condition(spline, nodes, f(nodes)))
        tr = trapezoid(nodes, f(nodes))
        print(f"  N={n:3d}  bq mean {est.mean:+.8f}  trapezoid {tr:+.8f}  "
              f"posterior std {est.std:.4f}  true error {abs(est.mean - truth):.2e}")

    print("\nsmoother prior, faster convergence (same nodes):")
    eq = exp_quadratic(theta=1.0, lam=0.5, domain=domain)
    for n in (5, 9, 17, 33):
        nodes = select_nodes_grid(domain, n)
        est = bq_posterior(condition(eq, nodes, f(nodes)))
        print(f"  N={n:3d}  eq-bq error {abs(est.mean - truth):.2e}  "
              f"posterior std {est.std:.2e}")

    print("\nactive node selection (variance-minimizing, no evaluations needed):")
    state = BQState.for_kernel(spline)
    picks = []
    for _ in range(6):
        x = select_node_active(state)
        picks.append(x)
        state = state.with_node(x, float(f(x)))
    print("  chosen nodes in order:", np.round(picks, 3))

    print("\nprior samples show what each kernel believes functions look like:")
    grid = np.linspace(*domain, 9)
    rough = sample_path(spline, grid, seed=0)
    smooth = sample_path(eq, grid, seed=0)
    print("  spline draw:", np.round(rough, 2))
    print("  eq draw:    ", np.round(smooth, 2))


if __name__ == "__main__":
    main()

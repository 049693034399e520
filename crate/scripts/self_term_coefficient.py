"""Mean inverse distance between two uniform points in the unit cube.

The grid double sums use K_ii = KAPPA / h for a cell paired with itself.
KAPPA is the average of 1/|x - x'| over x, x' independent and uniform in
[0, 1]^3. Two routes are printed: a Monte Carlo estimate and a deterministic
quadrature of the difference-vector form

    KAPPA = 8 * int_{[0,1]^3} (1-u)(1-v)(1-w) / |(u, v, w)| du dv dw,

evaluated in spherical coordinates so the 1/r singularity cancels against
the Jacobian.
"""

import numpy as np
from scipy import integrate


def monte_carlo(samples=20_000_000, seed=20240611):
    rng = np.random.default_rng(seed)
    total = 0.0
    chunk = 2_000_000
    done = 0
    sq = 0.0
    while done < samples:
        n = min(chunk, samples - done)
        a = rng.random((n, 3))
        b = rng.random((n, 3))
        inv = 1.0 / np.linalg.norm(a - b, axis=1)
        total += inv.sum()
        sq += (inv * inv).sum()
        done += n
    mean = total / samples
    # E[1/r^2] is finite for the unit cube, so the standard error is valid.
    stderr = np.sqrt((sq / samples - mean * mean) / samples)
    return mean, stderr


def quadrature():
    # Octant integrand in spherical coordinates: r^2 sin(t) / r = r sin(t).
    def inner(r, t, p):
        u = r * np.sin(t) * np.cos(p)
        v = r * np.sin(t) * np.sin(p)
        w = r * np.cos(t)
        return (1 - u) * (1 - v) * (1 - w) * r * np.sin(t)

    def rmax(t, p):
        st, ct = np.sin(t), np.cos(t)
        lims = [1.0 / x for x in (st * np.cos(p), st * np.sin(p), ct) if x > 1e-300]
        return min(lims)

    val, err = integrate.tplquad(
        lambda r, t, p: inner(r, t, p),
        0.0, np.pi / 2,                      # p
        lambda p: 0.0, lambda p: np.pi / 2,  # t
        lambda p, t: 0.0, lambda p, t: rmax(t, p),
        epsabs=1e-13, epsrel=1e-13,
    )
    return 8.0 * val, 8.0 * err


if __name__ == "__main__":
    q, qe = quadrature()
    m, me = monte_carlo()
    print(f"quadrature : {q:.15f} (+/- {qe:.1e})")
    print(f"monte carlo: {m:.6f} (+/- {me:.1e})")

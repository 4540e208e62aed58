"""Ground-state heights and integrals by adaptive high-order shooting.

Independent of the Rust implementation: scipy's DOP853 with tight
tolerances, a two-term series start and bisection on U(0).
Prints U(0), C0, and the Nehari gap for each (n, p).
"""
import numpy as np
from scipy.integrate import solve_ivp, quad


def shoot(n, p, s, r_end=40.0, dense=False):
    r0 = 1e-4
    u2 = (s - s**p) / (2 * n)
    y0 = [s + u2 * r0**2, 2 * u2 * r0]

    def f(r, y):
        u, v = y
        return [v, -(n - 1) / r * v + u - max(u, 0.0) ** p]

    def crossed(r, y):
        return y[0]
    crossed.terminal = True

    def turned(r, y):
        return y[1]
    turned.terminal = True
    turned.direction = 1

    sol = solve_ivp(f, (r0, r_end), y0, method="DOP853", rtol=1e-13, atol=1e-15,
                    events=[crossed, turned], dense_output=dense)
    if sol.t_events[0].size:
        return "crossed", sol
    return "turned", sol


def height(n, p):
    lo, hi = 1.0 + 1e-9, 2.0
    while shoot(n, p, hi)[0] != "crossed":
        lo, hi = hi, 2 * hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if shoot(n, p, mid)[0] == "crossed":
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


if __name__ == "__main__":
    from math import gamma, pi
    for n, p in [(2, 3.0), (3, 3.0), (2, 2.0)]:
        s = height(n, p)
        _, sol = shoot(n, p, s, dense=True)
        rmax = sol.t[-1] * 0.8
        area = 2 * pi ** (n / 2) / gamma(n / 2)
        c0 = area * quad(lambda r: r ** (n - 1) * sol.sol(r)[0] ** (p + 1), 1e-4, rmax, limit=500, epsabs=1e-13)[0]
        c0 += area * s ** (p + 1) * 1e-4 ** n / n  # the disc r < 1e-4
        print(f"n={n} p={p}: U0={s:.12f} C0={c0:.10f}")

"""Arbitrary-precision evaluation of the bound constants for the frozen
regression sets in tests/test_bounds.py.

Works from raw scalars only (no package imports) so it stays an independent
oracle. Prints a Python literal to paste into the test module.
"""
import mpmath as mp

mp.mp.dps = 50

# name: (E, sup_grad, sup_hess, sup_third, lip, T, dt, mu0, nu0, abs_p, d, m_prime)
SETS = {
    "free": (0, 0, 0, 0, 0, 1, "0.1", 1, 0, 0, 1, None),
    "pendulum_default": (0, 1, 1, 1, 1, 1, "0.2", "1.125", "0.07421875",
                         "0.19947114020071635", 1, "0.5"),
    "pendulum_a2": (0, 2, 2, 2, 2, "0.5", "0.05", 2, 1, "0.5", 1, "3.7"),
    "pendulum_half_d2": (0, "0.7071067811865476", "0.5", "0.5", "0.5", 2, "0.5", "0.3", 3, 1, 2,
                         "1000"),
    "short_time": (0, 3, 3, 3, 3, "0.1", "0.01", 0, 0, "0.3", 1, "2"),
    "tilted": ("0.7", "1.2", "1.5", "0.9", "1.5", 1, "0.1", 4, "2.5", "0.8", 1, "1.25"),
}


def constants(E, g, h, t3, lip, T, dt, mu0, nu0, abs_p, d, m_prime):
    E, g, h, t3, lip, T, dt, mu0, nu0, abs_p = (mp.mpf(str(v)) for v in
                                                (E, g, h, t3, lip, T, dt, mu0, nu0, abs_p))
    lam = max(mp.mpf(1), E, h)
    a = 1 + dt
    expo = mp.e ** (2 * T * (1 + lam ** 2 * a ** 2))
    growth = (mp.e ** ((2 + lam) * T) - 1) / (2 + lam)
    ct2 = (mp.mpf(9) / 4 * lam ** 2 * (mp.mpf(1) / 2 + lam) ** 2 * growth
           * (1 + expo * mu0 + 2 * a * E * (expo - 1) / (1 + a * (1 + 2 * lam ** 2 * a ** 2))))
    ct = mp.sqrt(ct2)
    M = max(mp.mpf(1), g ** 2, h ** 2, t3 ** 2)
    dT = mp.sqrt(growth * M ** 3 * (1 + mp.e ** (3 * T) * (nu0 + M ** 2)))
    mv = max(2 * g, h)
    prop = 2 * mp.sqrt(d) * (1 + mp.e ** (T * (1 + max(mp.mpf(1), lip ** 2)) / 2))
    cu = max(4 * mp.sqrt(2) * mv, ct, 4 * mv * (mv * T ** 2 + d + abs_p), prop)
    out = {"c_T": ct, "d_T": dT, "c_uniform": cu}
    if m_prime is not None:
        out["d_uniform"] = max(dT, mp.mpf(m_prime), prop)
    return out


if __name__ == "__main__":
    print("FROZEN = {")
    for name, args in SETS.items():
        vals = constants(*args)
        body = ", ".join(f'"{k}": {mp.nstr(v, 20)}' for k, v in vals.items())
        print(f'    "{name}": {{{body}}},')
    print("}")

"""Independent Peng-Robinson reference values frozen into the unit tests.

Plain numpy, no code shared with the C++ library. Run:
    python3 tests/oracle/pr_oracle.py
"""
import numpy as np

R = 8.314462618
COMPONENTS = {  # Tc K, Pc bar, omega
    "C1": (190.6, 46.0, 0.0115),
    "C3": (369.8, 42.46, 0.1454),
    "C7": (557.09, 32.62, 0.2854),
}


def m_factor(w):
    if w <= 0.49:
        return 0.37464 + 1.54226 * w - 0.26992 * w * w
    return 0.3796 + 1.485 * w - 0.1644 * w * w + 0.01667 * w ** 3


def pure(name, t):
    tc, pc_bar, w = COMPONENTS[name]
    pc = pc_bar * 1e5
    a = 0.45724 * R * R * tc * tc / pc * (1 + m_factor(w) * (1 - np.sqrt(t / tc))) ** 2
    b = 0.07780 * R * tc / pc
    return a, b


def mix(names, t, p, comp, kij=0.0):
    ab = [pure(n, t) for n in names]
    a = np.array([v[0] for v in ab])
    b = np.array([v[1] for v in ab])
    k = np.array([[0.0, kij], [kij, 0.0]])
    aij = (1 - k) * np.sqrt(np.outer(a, a))
    am = comp @ aij @ comp
    bm = comp @ b
    return aij, b, am, bm, am * p / (R * t) ** 2, bm * p / (R * t)


def roots(A, B):
    r = np.roots([1.0, -(1 - B), A - 2 * B - 3 * B * B, -(A * B - B * B - B ** 3)])
    r = np.sort(r[np.abs(r.imag) < 1e-10].real)
    return [z for z in r if z > B]


def ln_phi(names, t, p, comp, z, kij=0.0):
    aij, b, am, bm, A, B = mix(names, t, p, comp, kij)
    s2 = np.sqrt(2.0)
    return (b / bm * (z - 1) - np.log(z - B)
            - A / (2 * s2 * B) * (2 * (aij @ comp) / am - b / bm)
            * np.log((z + (1 + s2) * B) / (z + (1 - s2) * B)))


def gibbs(names, t, p, comp, z):
    return float(np.sum(comp * (ln_phi(names, t, p, comp, z) + np.log(comp * p))))


def phase(names, t, p, comp, which):
    zs = roots(*mix(names, t, p, comp)[4:])
    if len(zs) == 1:
        return zs[0]
    g = [gibbs(names, t, p, comp, z) for z in zs]
    return zs[int(np.argmin(g))]


def rr(K, z):
    lo, hi = 0.0, 1.0
    f = lambda b: np.sum((K - 1) * z / (1 + b * (K - 1)))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def flash(names, t, p, zf, tol=1e-14):
    tc = np.array([COMPONENTS[n][0] for n in names])
    pc = np.array([COMPONENTS[n][1] * 1e5 for n in names])
    w = np.array([COMPONENTS[n][2] for n in names])
    K = pc / p * np.exp(5.373 * (1 + w) * (1 - tc / t))
    for _ in range(100000):
        beta = rr(K, zf)
        x = zf / (1 + beta * (K - 1))
        y = K * x
        x, y = x / x.sum(), y / y.sum()
        zl = phase(names, t, p, x, "L")
        zv = phase(names, t, p, y, "V")
        Kn = np.exp(ln_phi(names, t, p, x, zl) - ln_phi(names, t, p, y, zv))
        if np.max(np.abs(Kn / K - 1)) < tol:
            K = Kn
            break
        K = Kn
    beta = rr(K, zf)
    x = zf / (1 + beta * (K - 1))
    return beta, x, K * x, zl, zv


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    print("m(C3)", repr(m_factor(0.1454)), "m(0.6)", repr(m_factor(0.6)))
    for n in ("C1", "C3"):
        print("a,b", n, "226K", [repr(v) for v in pure(n, 226.0)])
    comp = np.array([0.4, 0.6])
    aij, b, am, bm, A, B = mix(["C1", "C3"], 226.0, 30e5, comp)
    print("A,B", repr(A), repr(B))
    zs = roots(A, B)
    print("roots", [repr(z) for z in zs])
    for z in zs:
        print("lnphi at", repr(z), [repr(v) for v in ln_phi(["C1", "C3"], 226.0, 30e5, comp, z)])
    print("rr K=(3,0.1) z=(0.4,0.6)", repr(rr(np.array([3.0, 0.1]), np.array([0.4, 0.6]))))
    for names, t, p, z in ((["C1", "C3"], 226.0, 30e5, [0.6, 0.4]),
                           (["C1", "C7"], 350.0, 50e5, [0.5, 0.5])):
        beta, x, y, zl, zv = flash(names, t, p, np.array(z))
        print("flash", names, t, p, z, "beta", repr(beta), "x1", repr(x[0]), "y1", repr(y[0]),
              "zl", repr(zl), "zv", repr(zv))
    A, B = mix(["C1", "C3"], 300.0, 9e5, np.array([0.0, 1.0]))[4:]
    print("three-root case C3 300K 9bar A,B", repr(float(A)), repr(float(B)),
          [repr(float(z)) for z in roots(A, B)])

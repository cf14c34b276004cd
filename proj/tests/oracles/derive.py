"""Independent reference values frozen into the C++ tests.

Plain numpy, written from the definitions rather than from the C++ code.
Run: python3 tests/oracles/derive.py
"""
import numpy as np

np.set_printoptions(precision=17)


def softmax(z, tau=1.0):
    z = np.asarray(z, dtype=float) / tau
    e = np.exp(z - z.max())
    return e / e.sum()


def kl(p, q):
    return sum(pi * np.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)


def lh(ft, fs, tau):
    return tau * tau * kl(softmax(ft, tau), softmax(fs, tau))


def ce(f, y):
    return -np.log(softmax(f)[y])


def show(name, v):
    print(f"{name:<28} {float(v)!r}")


e = np.e
show("kl_pm1", kl([e / (e + 1), 1 / (e + 1)], [1 / (e + 1), e / (e + 1)]))
show("kl_onehot_uniform", kl([1.0, 0.0], [0.5, 0.5]))
show("hkd_tau2", 4 * kl(softmax([0.5, 0.0]), softmax([0.0, 0.5])))
show("self_analyze_example", kl(softmax([1, 0]), [0.5, 0.5]) + np.log(2))
show("hook_pair_y1", lh([1, 0], [0, 1], 1.0) + ce([0, 1], 1))

# Composite instance, one sample, two classes everywhere.
t = dict(ak=[0.3, -0.2], nk=[2.0, -1.0], dk=[1.1, 0.4])
akb, dkb = [1.5, 0.5], [0.2, 0.9]
s = dict(ak=[-0.1, 0.6], nk=[0.5, 0.5], dk=[0.0, -0.7])
tau = dict(ak=2.5, nk=4.0, dk=8.0)
base = 0.25
ens = (np.array(akb) + np.array(t["nk"]) + np.array(dkb)) / 3
l_en = lh(ens, s["nk"], tau["nk"])
se = lh(t["ak"], s["ak"], tau["ak"]) + lh(t["dk"], s["dk"], tau["dk"]) + l_en + base
gwd = sum(lh(t[k], s[k], tau[k]) for k in ("ak", "nk", "dk")) + base
show("se_l_en", l_en)
show("se_total", se)
show("gwd_total", gwd)


# CKA: literal tr(K H L H) / (n-1)^2 with explicit matrices.
def gram(x, kind):
    x = np.asarray(x, dtype=float)
    if kind == "linear":
        return x @ x.T
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    iu = np.triu_indices(len(x), 1)
    sigma = np.median(d[iu])
    return np.exp(-(d ** 2) / (2 * sigma ** 2))


def hsic(k, l):
    n = len(k)
    h = np.eye(n) - np.ones((n, n)) / n
    return np.trace(k @ h @ l @ h) / (n - 1) ** 2


def cka(x, y, kind):
    k, l = gram(x, kind), gram(y, kind)
    return hsic(k, l) / np.sqrt(hsic(k, k) * hsic(l, l))


X4 = [[1.0, 2.0], [0.5, -1.0], [-2.0, 0.3], [0.7, 0.7]]
Y4 = [[0.2, 1.0], [1.5, -0.4], [-1.0, -1.0], [0.3, 2.2]]
X8 = [[0.1, -0.4, 1.2], [1.3, 0.2, -0.5], [-0.7, 0.9, 0.3], [0.4, 1.1, -1.2],
      [-1.5, -0.3, 0.6], [0.9, -1.0, 0.1], [0.2, 0.5, 0.8], [-0.3, -0.8, -0.9]]
Y8 = [[0.5, 0.1, -0.2], [1.0, -0.6, 0.4], [-0.2, 1.4, 0.9], [0.3, 0.8, -1.1],
      [-1.1, 0.2, 0.7], [0.6, -1.3, -0.4], [0.0, 0.4, 1.5], [-0.9, -0.5, -0.3]]
for kind in ("linear", "rbf"):
    show(f"cka4_{kind}", cka(X4, Y4, kind))
    show(f"cka8_{kind}", cka(X8, Y8, kind))

# Per-sample similarity on a 2x3 fixture, teacher rows as reference.
T = np.array([[1.0, 2.0, 3.0], [0.5, -0.5, 2.0]])
S = np.array([[1.5, 1.0, 2.5], [0.0, 0.4, 1.0]])


def ssim_row(x, y):
    L = x.max() - x.min()
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = ((x - mx) * (y - my)).mean()
    return (2 * mx * my + c1) * (2 * cov + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))


show("sim_ssim", np.mean([ssim_row(a, b) for a, b in zip(T, S)]))
show("sim_cosine", np.mean([a @ b / np.linalg.norm(a) / np.linalg.norm(b) for a, b in zip(T, S)]))
show("sim_pearson", np.mean([np.corrcoef(a, b)[0, 1] for a, b in zip(T, S)]))
show("sim_l2", np.mean([np.linalg.norm(a - b) for a, b in zip(T, S)]))

# Class-correlation difference on 4 samples, 3 classes.
LT = np.array([[2.0, 0.0, -1.0], [0.0, 1.5, 0.5], [-0.5, 0.2, 1.8], [1.0, 1.0, 0.0]])
LS = np.array([[1.0, 0.5, -0.5], [0.2, 1.0, 0.1], [0.0, -0.3, 1.2], [0.8, 0.6, 0.4]])
PT = np.array([softmax(r) for r in LT])
PS = np.array([softmax(r) for r in LS])
print("corr_diff")
print(np.corrcoef(PT.T) - np.corrcoef(PS.T))

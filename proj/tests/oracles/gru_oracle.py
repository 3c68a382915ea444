"""Scalar GRU / multi-resolution reference values, computed with plain floats."""
import math


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def cell(p, x, h):
    z = sig(p["Wz"] * x + p["Uz"] * h + p["bz"])
    r = sig(p["Wr"] * x + p["Ur"] * h + p["br"])
    n = math.tanh(p["Wh"] * x + p["Uh"] * (r * h) + p["bh"])
    return (1 - z) * h + z * n


def run(p, xs):
    h, out = 0.0, []
    for x in xs:
        h = cell(p, x, h)
        out.append(h)
    return out


def sub2(xs):
    out = [(xs[i] + xs[i + 1]) / 2 for i in range(0, len(xs) - 1, 2)]
    if len(xs) % 2:
        out.append(xs[-1])
    return out


SIMPLE = dict(Wz=0, Uz=0, bz=0, Wr=0, Ur=0, br=0, Wh=1, Uh=0, bh=0)
RICH = dict(Wz=0.3, Uz=-0.2, bz=0.1, Wr=-0.4, Ur=0.5, br=0.0, Wh=0.9, Uh=-0.7, bh=0.05)
RICH2 = dict(Wz=-0.6, Uz=0.4, bz=-0.2, Wr=0.7, Ur=-0.3, br=0.15, Wh=-1.1, Uh=0.8, bh=0.3)

print("simple cell:", repr(cell(SIMPLE, 1.0, 0.0)))
print("simple 3-step:", [repr(v) for v in run(SIMPLE, [1.0, 0.5, -1.0])])
print("rich 3-step:", [repr(v) for v in run(RICH, [1.0, 0.5, -1.0])])

xs = [1.0, -0.5, 0.25, 2.0]
o1 = run(RICH, xs)
s1 = sub2(o1)
o2 = run(RICH2, s1)
s2 = sub2(o2)
out = [s1[t >> 1] + s2[t >> 2] for t in range(4)]
print("multires L=2 T=4:", [repr(v) for v in out])

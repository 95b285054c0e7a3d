"""Regenerates the built-in topology descriptors under topologies/.

Each topology is a small-signal netlist (VCCS stages, resistors, capacitors,
common-gate current buffers). Transfer-function coefficients are obtained by
symbolic nodal analysis; design equations are written against the ideal
(infinite output resistance) coefficients.

    python3 tools/gen_topologies.py
"""
import math
import os
import sympy as sp

s = sp.Symbol("s")
OUT = os.path.join(os.path.dirname(__file__), "..", "topologies")


def S(name):
    return sp.Symbol(name, positive=True)


GBW, SEP, Q, CL = S("GBW"), S("SEP"), S("Q"), S("C_L")
W_G = 2 * sp.pi * GBW
W_0 = SEP * W_G

N_BOUNDS = (8e-6, 3.4e-2)
P_BOUNDS = (5e-6, 2e-2)
C_BOUNDS = (1e-14, 1e-10)
R_BOUNDS = (10.0, 1e7)
RO_BOUNDS = (1e4, 1e8)


def stage3(cp1, cp2):
    return [
        ("gm", "gm1", "in", "v1", True),
        ("gm", "gm2", "v1", "v2", False),
        ("gm", "gm3", "v2", "vo", True),
        ("R", "ro1", "v1", None),
        ("R", "ro2", "v2", None),
        ("R", "ro3", "vo", None),
        ("C", "Cp1", "v1", None),
        ("C", "Cp2", "v2", None),
        ("C", "C_L", "vo", None),
    ]


def nodal_tf(nodes, elements, ideal=False):
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    Y = sp.zeros(n, n)
    b = sp.zeros(n, 1)

    def admit(a, c, y):
        for p, q in ((a, c), (c, a)):
            if p in idx:
                Y[idx[p], idx[p]] += y
                if q in idx:
                    Y[idx[p], idx[q]] -= y

    for e in elements:
        kind = e[0]
        if kind == "C":
            admit(e[2], e[3], s * S(e[1]))
        elif kind == "R":
            if ideal and e[1].startswith("ro"):
                continue
            admit(e[2], e[3], 1 / S(e[1]))
        elif kind == "gm":
            _, g, ctrl, out, inverting = e
            val = S(g) if inverting else -S(g)
            if ctrl == "in":
                b[idx[out]] -= val
            else:
                Y[idx[out], idx[ctrl]] += val
        elif kind == "buf":
            _, g, nin, nout = e
            Y[idx[nin], idx[nin]] += S(g)
            if nout is not None:
                Y[idx[nout], idx[nin]] -= S(g)
    Yo = Y.copy()
    Yo[:, idx["vo"]] = b
    num = sp.expand(Yo.det(method="berkowitz"))
    den = sp.expand(Y.det(method="berkowitz"))
    h = sp.cancel(sp.together(num / den))
    nn, dd = sp.fraction(h)
    nn = sp.Poly(sp.expand(nn), s).all_coeffs()[::-1]
    dd = sp.Poly(sp.expand(dd), s).all_coeffs()[::-1]
    lowest = next(c for c in dd if c != 0)
    if sp.expand(lowest).as_ordered_terms()[0].as_coeff_Mul()[0] < 0:
        nn = [-c for c in nn]
        dd = [-c for c in dd]
    return [sp.expand(c) for c in nn], [sp.expand(c) for c in dd]


def terms_of(expr):
    out = []
    for t in sp.Add.make_args(sp.expand(expr)):
        if t == 0:
            continue
        coeff, rest = t.as_coeff_Mul()
        factors = []
        for f in sp.Mul.make_args(rest):
            base, exp = f.as_base_exp()
            if base == 1:
                continue
            if base == sp.pi:
                coeff *= sp.pi ** exp
                continue
            assert exp.is_Integer and exp > 0, (t, f)
            factors += [base.name] * int(exp)
        out.append((float(sp.N(coeff, 17)), sorted(factors, key=str)))
    out.sort(key=lambda t: (len(t[1]), t[1]))
    return out


def fmt_num(x):
    r = repr(float(x))
    return r


def fmt_terms(terms, indent="  "):
    rows = []
    for k, m in terms:
        ms = ", ".join('"%s"' % f for f in m)
        rows.append('%s{ k = %s, m = [%s] },' % (indent, fmt_num(k), ms))
    return "[\n" + "\n".join(rows) + "\n]"


def equation(label, lhs, relation="eq"):
    num, _ = sp.fraction(sp.together(sp.expand(lhs)))
    return (label, relation, terms_of(num))


class Topology:
    def __init__(self, name, title, num_stages, rhp, nodes, elements, devices,
                 stages, stage_of, parasitics, extra_equations, custom=None):
        self.__dict__.update(locals())


def build_equations(t, n_id, d_id):
    eqs = []
    if t.custom is not None:
        return [equation(*e) for e in t.custom]
    eqs.append(equation("unity-gain frequency of the dominant integrator",
                        n_id[0] - W_G * d_id[1]))
    if t.num_stages == 2:
        eqs.append(equation("non-dominant pole at the separation frequency",
                            W_0 * d_id[2] - d_id[1]))
    else:
        eqs.append(equation("damping of the non-dominant pair",
                            Q * W_0 * d_id[2] - d_id[1]))
        eqs.append(equation("natural frequency of the non-dominant pair",
                            W_0 ** 2 * d_id[3] - d_id[1]))
    eqs += [equation(*e) for e in t.extra_equations]
    return eqs


def write(t):
    n_full, d_full = nodal_tf(t.nodes, t.elements)
    n_id, d_id = nodal_tf(t.nodes, t.elements, ideal=True)
    eqs = build_equations(t, n_id, d_id)
    symbols = set()
    for c in n_full + d_full:
        symbols |= {x.name for x in c.free_symbols}
    lines = []
    w = lines.append
    w("# Generated by tools/gen_topologies.py; edit the generator, not this file.")
    w("format_version = 1")
    w('name = "%s"' % t.name)
    w('title = "%s"' % t.title)
    w("num_stages = %d" % t.num_stages)
    w("rhp_zero_cancelled = %s" % ("true" if t.rhp else "false"))
    w("")
    for sid, label in t.stages:
        w("[[stages]]")
        w('id = "%s"' % sid)
        w('label = "%s"' % label)
        w("")
    polarity = {d[1]: d[2] for d in t.devices}
    ro_of = {d[3]: d for d in t.devices if d[3]}
    ordered = sorted(symbols - {"C_L"}, key=lambda x: (x[0] != "g", x))
    for sym in ordered:
        w("[[variables]]")
        w('symbol = "%s"' % sym)
        if sym.startswith("g"):
            lo, hi = N_BOUNDS if polarity[sym] == "n" else P_BOUNDS
            w('kind = "transconductance"')
            w('role = "design"')
            w("bounds = [%s, %s]" % (fmt_num(lo), fmt_num(hi)))
            w('stage = "%s"' % t.stage_of[sym])
        elif sym in t.parasitics:
            w('kind = "capacitance"')
            w('role = "parasitic"')
            v = t.parasitics[sym]
            w("bounds = [%s, %s]" % (fmt_num(v), fmt_num(v)))
            w("value = %s" % fmt_num(v))
            w('stage = "global"')
        elif sym in ro_of:
            w('kind = "resistance"')
            w('role = "output_resistance"')
            w("bounds = [%s, %s]" % tuple(map(fmt_num, RO_BOUNDS)))
            w('stage = "global"')
        elif sym.startswith("C"):
            w('kind = "capacitance"')
            w('role = "design"')
            w("bounds = [%s, %s]" % tuple(map(fmt_num, C_BOUNDS)))
            w('stage = "%s"' % t.stage_of[sym])
        elif sym.startswith("R"):
            w('kind = "resistance"')
            w('role = "design"')
            w("bounds = [%s, %s]" % tuple(map(fmt_num, R_BOUNDS)))
            w('stage = "%s"' % t.stage_of[sym])
        else:
            raise ValueError(sym)
        w("")
    for name, gm, pol, ro, mult in t.devices:
        w("[[devices]]")
        w('name = "%s"' % name)
        w('polarity = "%s"' % pol)
        w('gm = "%s"' % gm)
        if ro:
            w('ro = "%s"' % ro)
        w("branch_multiplier = %s" % fmt_num(mult))
        w("")
    for label, coeffs in (("numerator", n_full), ("denominator", d_full)):
        for power, c in enumerate(coeffs):
            if c == 0:
                continue
            w("[[%s]]" % label)
            w("power = %d" % power)
            w("terms = " + fmt_terms(terms_of(c)))
            w("")
    for label, relation, terms in eqs:
        w("[[design_equations]]")
        w('label = "%s"' % label)
        w('relation = "%s"' % relation)
        w("terms = " + fmt_terms(terms))
        w("")
    path = os.path.join(OUT, t.name.lower() + ".toml")
    with open(path, "w") as f:
        f.write("\n".join(lines).rstrip() + "\n")
    print("wrote", path, "num deg", len(n_full) - 1, "den deg", len(d_full) - 1)


g = {n: S(n) for n in ["gm1", "gm2", "gm3", "gm4", "gmf", "gmf1", "gmf2", "gmt", "gma", "Rm", "Ra", "Cm1", "Cm2", "Cp2"]}

GAIN3 = [("stage1", "input transconductor"), ("stage2", "second gain stage"),
         ("stage3", "output stage"), ("comp", "compensation network")]


def dev3():
    return [("M1", "gm1", "p", "ro1", 2.0), ("M2", "gm2", "n", "ro2", 1.0), ("M3", "gm3", "n", "ro3", 1.0)]


TOPOLOGIES = [
    Topology(
        "SMC", "Single Miller compensation", 2, False,
        ["v1", "vo"],
        [("gm", "gm1", "in", "v1", True), ("gm", "gm2", "v1", "vo", True),
         ("R", "ro1", "v1", None), ("R", "ro2", "vo", None),
         ("C", "Cp1", "v1", None), ("C", "C_L", "vo", None), ("C", "Cm", "v1", "vo")],
        [("M1", "gm1", "p", "ro1", 2.0), ("M2", "gm2", "n", "ro2", 1.0)],
        [("stage1", "input transconductor and Miller capacitor"), ("stage2", "output stage")],
        {"gm1": "stage1", "Cm": "stage1", "gm2": "stage2"},
        {"Cp1": 5e-13}, []),
    Topology(
        "NMCNR", "Nested Miller compensation with nulling resistor", 3, True,
        ["v1", "v2", "vo", "x"],
        stage3(2e-13, 1e-12) + [("C", "Cm2", "v2", "vo"), ("R", "Rm", "v1", "x"), ("C", "Cm1", "x", "vo")],
        dev3(), GAIN3,
        {"gm1": "stage1", "gm2": "stage2", "gm3": "stage3", "Cm1": "comp", "Cm2": "comp", "Rm": "comp"},
        {"Cp1": 2e-13, "Cp2": 1e-12},
        [("nulling resistor tracks the output transconductance", g["Rm"] * g["gm3"] - 1)]),
    Topology(
        "NGCC", "Nested Gm-C compensation", 3, True,
        ["v1", "v2", "vo"],
        stage3(2e-13, 1e-12) + [("C", "Cm1", "v1", "vo"), ("C", "Cm2", "v2", "vo"),
                                ("gm", "gmf1", "in", "vo", False), ("gm", "gmf2", "v1", "vo", True)],
        dev3() + [("Mf1", "gmf1", "p", None, 1.0), ("Mf2", "gmf2", "n", None, 1.0)], GAIN3,
        {"gm1": "stage1", "gm2": "stage2", "gm3": "stage3", "Cm1": "comp", "Cm2": "comp",
         "gmf1": "comp", "gmf2": "comp"},
        {"Cp1": 2e-13, "Cp2": 1e-12},
        [("first feedforward matches the input stage", g["gmf1"] - g["gm1"]),
         ("second feedforward matches the second stage", g["gmf2"] - g["gm2"])]),
    Topology(
        "DFCFC", "Damping-factor-control frequency compensation", 3, True,
        ["v1", "v2", "vo", "v4"],
        stage3(2e-13, 1e-12) + [("C", "Cm1", "v1", "vo"), ("gm", "gm4", "v2", "v4", True),
                                ("R", "ro4", "v4", None), ("C", "Cm2", "v2", "v4"),
                                ("gm", "gmf", "v1", "vo", True)],
        dev3() + [("M4", "gm4", "n", "ro4", 1.0), ("Mf", "gmf", "n", None, 1.0)], GAIN3,
        {"gm1": "stage1", "gm2": "stage2", "gm3": "stage3", "Cm1": "comp", "Cm2": "comp",
         "gm4": "comp", "gmf": "comp"},
        {"Cp1": 2e-13, "Cp2": 1e-12},
        [("push-pull feedforward matches the output stage", g["gmf"] - g["gm3"]),
         ("second stage biased like the input stage", g["gm2"] - g["gm1"])]),
    Topology(
        "TCFC", "Transconductance with capacitances feedback compensation", 3, False,
        ["v1", "v2", "vo", "t"],
        stage3(2e-13, 1e-12) + [("C", "Cm1", "v1", "vo"), ("C", "Cm2", "vo", "t"), ("buf", "gmt", "t", "v2")],
        dev3() + [("Mt", "gmt", "n", None, 1.0)], GAIN3,
        {"gm1": "stage1", "gm2": "stage2", "gm3": "stage3", "Cm1": "comp", "Cm2": "comp", "gmt": "comp"},
        {"Cp1": 2e-13, "Cp2": 1e-12},
        [("current-buffer pole at twice the pair frequency", g["gmt"] - 2 * W_0 * g["Cm2"])]),
    Topology(
        "IAC", "Impedance adapting compensation", 3, False,
        ["v1", "v2", "vo", "a"],
        stage3(2e-13, 1e-12) + [("C", "Cm1", "v1", "vo"), ("C", "Ca", "v2", "a"), ("R", "Ra", "a", None)],
        dev3(), GAIN3,
        {"gm1": "stage1", "gm2": "stage2", "gm3": "stage3", "Cm1": "comp", "Ca": "comp", "Ra": "comp"},
        {"Cp1": 2e-13, "Cp2": 1e-12}, [],
        custom=[
            ("unity-gain frequency of the dominant integrator", g["gm1"] - W_G * g["Cm1"]),
            ("damping of the non-dominant pair", Q * W_0 * CL - g["gm2"] * g["gm3"] * g["Ra"]),
            ("natural frequency of the non-dominant pair", W_0 ** 2 * g["Cp2"] * CL - g["gm2"] * g["gm3"]),
            ("equal second and output stage transconductance", g["gm3"] - g["gm2"]),
        ]),
    Topology(
        "AZC", "Active zero compensation", 3, True,
        ["v1", "v2", "vo", "z"],
        stage3(2e-13, 1e-12) + [("C", "Cm1", "v1", "vo"), ("C", "Ca", "v2", "z"), ("buf", "gma", "z", None),
                                ("gm", "gmf", "v1", "vo", True)],
        dev3() + [("Ma", "gma", "n", None, 1.0), ("Mf", "gmf", "n", None, 1.0)], GAIN3,
        {"gm1": "stage1", "gm2": "stage2", "gm3": "stage3", "Cm1": "comp", "Ca": "comp",
         "gma": "comp", "gmf": "comp"},
        {"Cp1": 2e-13, "Cp2": 1e-12}, [],
        custom=[
            ("unity-gain frequency of the dominant integrator", g["gm1"] - W_G * g["Cm1"]),
            ("damping of the non-dominant pair", Q * W_0 * CL * g["gma"] - g["gm2"] * g["gm3"]),
            ("natural frequency of the non-dominant pair", W_0 ** 2 * g["Cp2"] * CL - g["gm2"] * g["gm3"]),
            ("equal second and output stage transconductance", g["gm3"] - g["gm2"]),
            ("active-zero feedforward matches the output stage", g["gmf"] - g["gm3"]),
        ]),
]

if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    for t in TOPOLOGIES:
        write(t)

"""Plain-text, LaTeX and JSON renderers for expressions."""

from __future__ import annotations

from fractions import Fraction

from . import expr as E

GREEK = {
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
    "lambda", "mu", "nu", "xi", "rho", "sigma", "tau", "phi", "chi", "psi", "omega",
}


def _q(c):
    c = Fraction(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _suffix(alpha, coords):
    if coords is None or len(coords) != len(alpha) or any(len(c) != 1 for c in coords):
        return "[" + ",".join(str(a) for a in alpha) + "]"
    s = "".join(c * k for c, k in zip(coords, alpha))
    return "_" + s if len(s) == 1 else "_{" + s + "}"


def atom_text(a, coords=None):
    if a.rank in (E._JET, E._PARAM):
        if not any(a.alpha):
            return a.name
        return a.name + _suffix(a.alpha, coords)
    if a.rank == E._COORD:
        return a.name
    if a.rank == E._ARG:
        return f"#{a.index}"
    if a.rank == E._PI:
        return "pi"
    if a.rank == E._FUNC:
        return f"{a.name}({to_text(a.arg, coords)})"
    if a.rank == E._SYM:
        args = ", ".join(to_text(x, coords) for x in a.args)
        if not any(a.derivs):
            head = a.name
        elif len(a.derivs) == 1:
            head = a.name + "'" * a.derivs[0]
        else:
            head = a.name + "'[" + ",".join(map(str, a.derivs)) + "]"
        return f"{head}({args})"
    if a.rank == E._POW:
        return "(" + to_text(a.base, coords) + ")"
    raise TypeError(a)


def _factor_text(a, x, coords):
    base = atom_text(a, coords)
    if x == 1:
        return base
    if isinstance(x, int) and x > 0:
        return f"{base}^{x}"
    return f"{base}^({_q(x)})"


def to_text(e, coords=None):
    """ASCII rendering that the problem-file parser reads back to ``e``."""
    if not e.terms:
        return "0"
    out = []
    for i, (m, c) in enumerate(e.sorted_terms()):
        neg = c < 0
        mag = -c if neg else c
        body = "*".join(_factor_text(a, x, coords) for a, x in m)
        if not body:
            t = _q(mag)
        elif mag == 1:
            t = body
        else:
            t = _q(mag) + "*" + body
        if i == 0:
            out.append("-" + t if neg else t)
        else:
            out.append((" - " if neg else " + ") + t)
    return "".join(out)


# -- LaTeX ---------------------------------------------------------------


def _latex_name(name):
    head = name.rstrip("0123456789")
    tail = name[len(head):]
    if head in GREEK:
        h = "\\" + head
    elif len(head) > 1:
        h = "\\mathrm{" + head + "}"
    else:
        h = head
    if tail and head:
        return h + "_{" + tail + "}"
    return h + tail


def _latex_atom(a, coords):
    if a.rank in (E._JET, E._PARAM):
        nm = _latex_name(a.name)
        if not any(a.alpha):
            return nm
        if coords is not None and len(coords) == len(a.alpha):
            dirs = " ".join(_latex_name(c) for c, k in zip(coords, a.alpha) for _ in range(k))
        else:
            dirs = " ".join(str(i + 1) for i, k in enumerate(a.alpha) for _ in range(k))
        return "\\partial_{" + dirs + "} " + nm
    if a.rank == E._COORD:
        return _latex_name(a.name)
    if a.rank == E._ARG:
        return f"\\#{a.index}"
    if a.rank == E._PI:
        return "\\pi"
    if a.rank == E._FUNC:
        fn = {"ln": "\\ln", "sin": "\\sin", "cos": "\\cos", "exp": "\\exp"}[a.name]
        return fn + "\\left(" + to_latex(a.arg, coords) + "\\right)"
    if a.rank == E._SYM:
        args = ", ".join(to_latex(x, coords) for x in a.args)
        head = _latex_name(a.name)
        if any(a.derivs):
            if len(a.derivs) == 1:
                head += "'" * a.derivs[0]
            else:
                head = "\\partial^{(" + ",".join(map(str, a.derivs)) + ")} " + head
        return head + "\\left(" + args + "\\right)"
    if a.rank == E._POW:
        return "\\left(" + to_latex(a.base, coords) + "\\right)"
    raise TypeError(a)


def _latex_factor(a, x, coords):
    if a.rank == E._POW and x == Fraction(1, 2):
        return "\\sqrt{" + to_latex(a.base, coords) + "}"
    base = _latex_atom(a, coords)
    if x == 1:
        return base
    if a.rank in (E._JET, E._PARAM) and any(a.alpha):
        base = "\\left(" + base + "\\right)"
    return base + "^{" + _q(x) + "}"


def to_latex(e, coords=None):
    if not e.terms:
        return "0"
    out = []
    for i, (m, c) in enumerate(e.sorted_terms()):
        neg = c < 0
        mag = Fraction(-c if neg else c)
        body = " \\, ".join(_latex_factor(a, x, coords) for a, x in m)
        if mag.denominator == 1:
            num = str(mag.numerator)
        else:
            num = "\\frac{" + str(mag.numerator) + "}{" + str(mag.denominator) + "}"
        if not body:
            t = num
        elif mag == 1:
            t = body
        else:
            t = num + " \\, " + body
        if i == 0:
            out.append("-" + t if neg else t)
        else:
            out.append((" - " if neg else " + ") + t)
    return "".join(out)


# -- JSON ----------------------------------------------------------------


def atom_json(a):
    if a.rank == E._COORD:
        return {"type": "coord", "name": a.name}
    if a.rank == E._JET:
        return {"type": "jet", "field": a.field, "alpha": list(a.alpha)}
    if a.rank == E._PARAM:
        return {"type": "param", "name": a.name, "alpha": list(a.alpha)}
    if a.rank == E._ARG:
        return {"type": "arg", "index": a.index}
    if a.rank == E._PI:
        return {"type": "pi"}
    if a.rank == E._FUNC:
        return {"type": "func", "name": a.name, "arg": to_json(a.arg)}
    if a.rank == E._SYM:
        return {
            "type": "sym",
            "name": a.name,
            "derivs": list(a.derivs),
            "args": [to_json(x) for x in a.args],
        }
    if a.rank == E._POW:
        return {"type": "power", "base": to_json(a.base)}
    raise TypeError(a)


def to_json(e):
    return {
        "type": "sum",
        "terms": [
            {
                "coeff": _q(c),
                "factors": [{"atom": atom_json(a), "exp": _q(x)} for a, x in m],
            }
            for m, c in e.sorted_terms()
        ],
    }


def _atom_from_json(d, symbols):
    t = d["type"]
    if t == "coord":
        return E.coord(d["name"])
    if t == "jet":
        return E.jet(d["field"], d["alpha"])
    if t == "param":
        return E.param(d["name"], d["alpha"])
    if t == "arg":
        return E.arg(d["index"])
    if t == "pi":
        return E.PI
    if t == "func":
        return E.FUNCTIONS[d["name"]](from_json(d["arg"], symbols))
    if t == "sym":
        defn = symbols[d["name"]]
        return defn.apply([from_json(x, symbols) for x in d["args"]], tuple(d["derivs"]))
    if t == "power":
        return from_json(d["base"], symbols)
    raise ValueError(f"unknown node type {t!r}")


def from_json(d, symbols=None):
    symbols = symbols or {}
    total = E.ZERO
    for term in d["terms"]:
        t = E.const(Fraction(term["coeff"]))
        for f in term["factors"]:
            t = t * _atom_from_json(f["atom"], symbols) ** E._num(Fraction(f["exp"]))
        total = total + t
    return total

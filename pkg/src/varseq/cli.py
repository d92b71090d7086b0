"""Command-line driver: ``varseq <cmd> <file.vp> [options]``.

Exit codes: 0 ok, 1 failure or broken identity, 2 parse error, 3 order
overflow, 4 precondition violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import expr as E
from . import fields as V
from . import jacobi as JA
from . import noether as N
from . import oracle as O
from . import render as R
from . import variational as VA
from .dsl import load_problem
from .errors import BackgroundNotCritical, MissingInput, ParseError, VarSeqError

SCHEMA = "varseq/v1"
COMMANDS = ("el", "momenta", "noether", "secondvar", "jacobi", "bianchi", "hamiltonian", "verify")
FORMATS = ("text", "latex", "json")


# -- report document ------------------------------------------------------


class Report:
    """Ordered sections of ``(label, value)`` entries.  Values are Expr,
    str, bool, int, float or lists of those."""

    def __init__(self, command, source, coords):
        self.command = command
        self.source = source
        self.coords = coords
        self.sections = []
        self.failures = []
        self.figures = []

    def section(self, title):
        entries = []
        self.sections.append((title, entries))
        return entries

    def fail(self, why):
        self.failures.append(why)

    @property
    def status(self):
        return "failure" if self.failures else "ok"

    @property
    def exit_code(self):
        return 1 if self.failures else 0


def _fmt_float(x):
    # conjugate points are rounded to 1e-9 upstream; keep those digits
    return f"{x:.10g}" if abs(x) >= 1e-3 or x == 0 else f"{x:.3e}"


def _text_value(v, coords):
    if isinstance(v, E.Expr):
        return R.to_text(v, coords)
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, (list, tuple)):
        return "(" + ", ".join(_text_value(x, coords) for x in v) + ")"
    return str(v)


def render_text(rep):
    out = [f"varseq {rep.command} {os.path.basename(rep.source)}"]
    for title, entries in rep.sections:
        out.append("")
        out.append(f"== {title} ==")
        for label, value in entries:
            out.append(f"{label} = {_text_value(value, rep.coords)}")
    out.append("")
    out.append(f"status: {rep.status}")
    for f in rep.failures:
        out.append(f"  failed: {f}")
    for p in rep.figures:
        out.append(f"figure: {p}")
    return "\n".join(out) + "\n"


def _latex_label(label):
    head, _, rest = label.partition("[")
    rest = rest.rstrip("]")
    head = head.replace("_", r"\_")
    if rest:
        return head + "_{" + rest.replace("_", r"\_") + "}"
    return head


def _latex_value(v, coords):
    if isinstance(v, E.Expr):
        return R.to_latex(v, coords)
    if isinstance(v, (list, tuple)):
        return r"\left(" + ", ".join(_latex_value(x, coords) for x in v) + r"\right)"
    if isinstance(v, bool):
        return r"\text{" + ("yes" if v else "no") + "}"
    if isinstance(v, float):
        return _fmt_float(v)
    return r"\text{" + str(v).replace("_", r"\_") + "}"


def render_latex(rep):
    out = [f"% varseq {rep.command} {os.path.basename(rep.source)}"]
    for title, entries in rep.sections:
        out.append(r"\paragraph{" + title.replace("_", r"\_") + "}")
        if not entries:
            continue
        out.append(r"\begin{align*}")
        lines = [f"  {_latex_label(label)} &= {_latex_value(v, rep.coords)}" for label, v in entries]
        out.append((" \\\\\n").join(lines))
        out.append(r"\end{align*}")
    out.append(f"% status: {rep.status}")
    return "\n".join(out) + "\n"


def _json_value(v, coords):
    if isinstance(v, E.Expr):
        return {"type": "expr", "text": R.to_text(v, coords), "latex": R.to_latex(v, coords), "tree": R.to_json(v), "zero": not v.terms}
    if isinstance(v, bool):
        return {"type": "bool", "value": v}
    if isinstance(v, float):
        return {"type": "number", "value": float(_fmt_float(v))}
    if isinstance(v, int):
        return {"type": "number", "value": v}
    if isinstance(v, (list, tuple)):
        return {"type": "list", "items": [_json_value(x, coords) for x in v]}
    return {"type": "string", "value": str(v)}


def render_json(rep):
    doc = {
        "schema": SCHEMA,
        "command": rep.command,
        "file": os.path.basename(rep.source),
        "status": rep.status,
        "exit_code": rep.exit_code,
        "failures": list(rep.failures),
        "sections": [
            {"title": t, "entries": [{"label": lab, "value": _json_value(v, rep.coords)} for lab, v in entries]}
            for t, entries in rep.sections
        ],
        "figures": list(rep.figures),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


RENDERERS = {"text": render_text, "latex": render_latex, "json": render_json}


# -- helpers ----------------------------------------------------------------


def _alpha_text(alpha, coords):
    if not any(alpha):
        return "0"
    if all(len(c) == 1 for c in coords):
        return "".join(c * k for c, k in zip(coords, alpha))
    return ",".join(map(str, alpha))


def _select(mapping, name, what):
    if name is None:
        return list(mapping.items())
    if name not in mapping:
        raise MissingInput(f"no {what} named {name!r}; have {', '.join(mapping) or 'none'}")
    return [(name, mapping[name])]


def _numeric_lagrangian(pf):
    return VA.Lagrangian(pf.numeric_density(), pf.spec)


def _test_section(spec):
    """Smooth generic section used by the numeric oracle."""
    comps = {}
    for i, f in enumerate(spec.fields):
        c = "1.5" if i % 2 == 0 else "0.3"
        lin = " + ".join(f"{0.7 + 0.3 * (i + mu) % 1.1:.2f}*{x}" for mu, x in enumerate(spec.coords))
        comps[f] = f"{c} + 0.2*sin({lin} + {i}) + 0.1*cos(2*{spec.coords[0]} - {i})"
    return O.AnalyticSection(spec, comps)


def _fd_check(pf, tolerance=None):
    spec = pf.spec
    lam = _numeric_lagrangian(pf)
    nodes = {1: 128, 2: 48}.get(spec.n)
    if nodes is None:
        return None, None, None
    sec = _test_section(spec)
    box = [(0.0, 2.0)] * spec.n
    src = VA.euler_lagrange(lam)
    null = all(not c.terms for c in src.components.values())
    rep = O.fd_gradient_check(lam, sec, spec, box=box, nodes=nodes, relative=not null)
    if tolerance is not None:
        tol = tolerance
    elif null:
        tol = O.TOLERANCES.null_lagrangian
    else:
        tol = O.TOLERANCES.fd_gradient_first if lam.order <= 1 else O.TOLERANCES.fd_gradient
    axes = [np.linspace(a, b, nodes) for a, b in box]
    return rep, tol, axes


def _plot_path(args, stem):
    name = os.path.splitext(os.path.basename(args.file))[0]
    return os.path.join(args.plot, f"{name}-{stem}.png")


# -- commands -----------------------------------------------------------------


def cmd_el(pf, args, rep):
    src = VA.euler_lagrange(pf.lagrangian)
    sec = rep.section("Euler-Lagrange expressions")
    single = len(pf.spec.fields) == 1
    for f, e in src.items():
        sec.append(("E" if single else f"E[{f}]", e))
    if args.plot:
        fd, tol, axes = _fd_check(pf)
        if fd is not None:
            rep.figures.append(_plot_gradient(fd, axes, _plot_path(args, "el"), pf.spec.coords))


def _plot_gradient(fd, axes, path, coords):
    from .plotting import plot_gradient_check

    return plot_gradient_check(fd, axes, path, coords=coords)


def cmd_momenta(pf, args, rep):
    spec = pf.spec
    mom = VA.momenta(pf.lagrangian)
    sec = rep.section("momenta p^{mu,alpha}_i")
    for (f, alpha), comps in mom.items():
        for mu, c in enumerate(comps):
            if c.terms:
                sec.append((f"p[{spec.coords[mu]},{_alpha_text(alpha, spec.coords)}][{f}]", c))
    chk = rep.section("certificate")
    # dL/dy_alpha w_alpha = E w + D_mu(p w) with w a formal parameter bank
    L = pf.lagrangian.L
    lhs = E.ZERO
    for v in L.free:
        if v.rank == E._JET:
            lhs = lhs + E.partial(L, v) * E.param("w" + v.field, v.alpha)
    P = mom.contract(lambda f, a: E.param("w" + f, a))
    rhs = VA.BoundaryCurrent(spec, P).divergence()
    for f in spec.fields:
        rhs = rhs + mom.source[f] * E.param("w" + f, spec.zero())
    ok = (lhs - rhs).is_zero()
    chk.append(("re-expansion exact", ok))
    if not ok:
        rep.fail("momenta certificate")


def cmd_noether(pf, args, rep):
    lam = pf.lagrangian
    spec = pf.spec
    for name, X in _select(pf.lifts, args.lift, "lift"):
        verdict = N.check_symmetry(lam, X)
        sec = rep.section(f"lift {name}")
        sec.append(("verdict", verdict.kind))
        if not verdict.is_symmetry:
            sec.append(("L_X lambda", verdict.residual))
            rep.fail(f"lift {name} is not a symmetry")
            continue
        cur = N.noether_current(lam, X)
        for mu, c in enumerate(cur.components):
            sec.append((f"eps[{spec.coords[mu]}]", c))
        sec.append(("omega", cur.omega))
        sec.append(("strong identity residual", cur.residual()))
        if not cur.certified:
            rep.fail(f"Noether identity for {name}")


def _variation_pair(pf, args):
    names = list(pf.variations)
    if not names:
        raise MissingInput("file has no [fields_of_variation]")
    if args.variation:
        picked = [s.strip() for s in args.variation.split(",")]
        for p in picked:
            if p not in pf.variations:
                raise MissingInput(f"no variation named {p!r}; have {', '.join(names)}")
    else:
        picked = names[:2]
    a = picked[0]
    b = picked[1] if len(picked) > 1 else picked[0]
    return a, b


def cmd_secondvar(pf, args, rep):
    lam = pf.lagrangian
    spec = pf.spec
    a, b = _variation_pair(pf, args)
    Phi, Psi = pf.variations[a], pf.variations[b]
    sv = JA.second_variation(lam, Phi, Psi)
    sec = rep.section(f"second variation ({a}, {b})")
    sec.append(("B", sv.B))
    sec.append(("Phi . J Psi", sv.hpart))
    sec.append(("source term", sv.source))
    for mu, g in enumerate(sv.G):
        sec.append((f"G[{spec.coords[mu]}]", g))
    sec.append(("residual", sv.residual()))
    sec.append(("certified", sv.certified))
    if not sv.certified:
        rep.fail("second variation certificate")
    comp = JA.verify_comparison_theorem(lam, Phi)
    sec = rep.section(f"comparison along {a}")
    sec.append(("Phi . E(Phi . E)", comp.a))
    sec.append(("delta^2 lambda", comp.b))
    if comp.boundary is not None:
        for mu, g in enumerate(comp.boundary):
            sec.append((f"boundary[{spec.coords[mu]}]", g))
    sec.append(("passed", comp.passed))
    if not comp.passed:
        rep.fail("comparison theorem")


def _background_tolerance(pf, args):
    if args.tolerance is not None:
        return args.tolerance
    return pf.options.get("tolerance", (O.TOLERANCES.background,))[0]


def _check_background(pf, tol):
    spec = pf.spec
    src = VA.euler_lagrange(pf.lagrangian)
    sub = JA.section_jets(pf.background, src.components.values(), spec)
    for f, e in src.items():
        val = E.substitute(e, sub)
        if val.terms and JA._numeric_max(val, spec) > tol:
            raise BackgroundNotCritical(f"E[{f}] does not vanish on the background: {R.to_text(val, spec.coords)}")


def cmd_jacobi(pf, args, rep):
    lam = pf.lagrangian
    spec = pf.spec
    J = JA.linearize_el(lam)
    sec = rep.section("Jacobi operator")
    for (i, j, beta), c in sorted(J.coeffs.items(), key=JA._ckey):
        sec.append((f"J[{i},{j}][{_alpha_text(beta, spec.coords)}]", c))
    sec.append(("self-adjoint", JA.is_self_adjoint(J)))
    if not JA.is_self_adjoint(J):
        rep.fail("Jacobi operator not self-adjoint")
    if not pf.background:
        return
    tol = _background_tolerance(pf, args)
    _check_background(pf, tol)
    bg = rep.section("background")
    for f, e in pf.background.items():
        bg.append((f, e))
    Jb = J.substitute(JA.section_jets(pf.background, J.coeffs.values(), spec))
    for (i, j, beta), c in sorted(Jb.coeffs.items(), key=JA._ckey):
        bg.append((f"J[{i},{j}][{_alpha_text(beta, spec.coords)}]", c))
    for name, Phi in pf.variations.items():
        kr = JA.kernel_test(lam, Phi, pf.background, tolerance=tol)
        ks = rep.section(f"kernel test {name}")
        ks.append(("verdict", kr.verdict))
        for f, r in kr.residual.items():
            ks.append((f"(J Phi)[{f}]", r))
    if spec.n == 1:
        lo, hi = pf.options.get("interval", (0.0, 10.0))
        sol = O.jacobi_ode_solve(J, pf.background, spec, interval=(lo, hi))
        cs = rep.section("conjugate points")
        cs.append(("interval", [float(lo), float(hi)]))
        cs.append(("points", [round(c, 9) for c in sol.conjugate_points] or "none"))
        if args.plot:
            from .plotting import plot_jacobi

            rep.figures.append(plot_jacobi(sol, _plot_path(args, "jacobi"), spec.fields, spec.coords[0]))


def cmd_bianchi(pf, args, rep):
    spec = pf.spec
    for name, X in _select(pf.lifts, args.lift, "lift"):
        sec = rep.section(f"lift {name}")
        if not X.params:
            sec.append(("parameter functions", "none; no Bianchi identity"))
            continue
        br = N.bianchi_decompose(pf.lagrangian, X)
        sec.append(("omega", br.omega))
        for a in br.params:
            sec.append((f"beta[{a}]", br.beta[a]))
            sec.append((f"beta[{a}] vanishes", not br.beta[a].terms))
        for mu, m in enumerate(br.M):
            sec.append((f"M[{spec.coords[mu]}]", m))
        sec.append(("certified", br.certified))
        if not br.certified:
            rep.fail(f"Bianchi certificate for {name}")
        if not br.vanishing:
            rep.fail(f"Bianchi expressions of {name} do not vanish")


def cmd_hamiltonian(pf, args, rep):
    spec = pf.spec
    for name, X in _select(pf.lifts, args.lift, "lift"):
        ham = N.hamiltonian_current(pf.lagrangian, X)
        sec = rep.section(f"lift {name}")
        for mu, h in enumerate(ham.components):
            sec.append((f"H[{spec.coords[mu]}]", h))
        sec.append(("divergence", ham.divergence()))
        sec.append(("certified", ham.certified))
        sec.append(("conserved", ham.conserved))
        inv = N.verify_horizontal_invariance(pf.lagrangian, X)
        sec.append(("invariance residual", inv.residual))
        if not ham.certified:
            rep.fail(f"Hamiltonian certificate for {name}")
        if not inv.passed:
            rep.fail(f"horizontal invariance for {name}")


def cmd_verify(pf, args, rep):
    """Every identity and oracle the file supports; failures exit 1."""
    lam = pf.lagrangian
    spec = pf.spec
    checks = rep.section("checks")
    info = rep.section("facts")

    def check(label, ok):
        checks.append((label, bool(ok)))
        if not ok:
            rep.fail(label)

    fd, tol, axes = _fd_check(pf, args.tolerance)
    if fd is not None:
        info.append(("action gradient error", fd.max_error))
        check(f"action gradient within {tol:g}", fd.max_error < tol)
        if args.plot:
            rep.figures.append(_plot_gradient(fd, axes, _plot_path(args, "gradient"), spec.coords))
    J = JA.linearize_el(lam)
    Jstar = JA.adjoint(J)
    check("Jacobi operator self-adjoint", J == Jstar)
    res, mismatch = JA.adjoint_certificate(J, Jstar)
    check("adjoint certificate", res.certified)
    for name, X in pf.lifts.items():
        if X.params:
            lr = V.check_lift_properties(X)
            check(f"{name}: lift linear, projectable, closed", lr.passed)
        verdict = N.check_symmetry(lam, X)
        info.append((f"{name}: symmetry", verdict.kind))
        fv = VA.first_variation(lam, X)
        check(f"{name}: first variation", fv.certified)
        if verdict.is_symmetry:
            check(f"{name}: strong Noether identity", N.noether_current(lam, X).certified)
        if X.params:
            br = N.bianchi_decompose(lam, X)
            check(f"{name}: Bianchi decomposition", br.certified)
            info.append((f"{name}: Bianchi vanishes", br.vanishing))
            ham = N.hamiltonian_current(lam, X, require_kernel=False)
            check(f"{name}: Hamiltonian certificate", ham.certified)
            if br.vanishing:
                check(f"{name}: horizontal invariance", N.verify_horizontal_invariance(lam, X).passed)
        comp = JA.verify_comparison_theorem(lam, X)
        check(f"{name}: comparison theorem", comp.passed)
    for name, Phi in pf.variations.items():
        if Phi.is_vertical:
            check(f"{name}: second variation", JA.second_variation(lam, Phi, Phi).certified)
        check(f"{name}: comparison theorem", JA.verify_comparison_theorem(lam, Phi).passed)
    if pf.background:
        t = _background_tolerance(pf, args)
        try:
            _check_background(pf, t)
            check("background critical", True)
        except BackgroundNotCritical:
            check("background critical", False)
            return
        for name, Phi in pf.variations.items():
            info.append((f"{name}: Jacobi field", JA.kernel_test(lam, Phi, pf.background, tolerance=t).verdict))
        if spec.n == 1:
            lo, hi = pf.options.get("interval", (0.0, 10.0))
            sol = O.jacobi_ode_solve(J, pf.background, spec, interval=(lo, hi))
            info.append(("conjugate points", [round(c, 9) for c in sol.conjugate_points] or "none"))
            if args.plot:
                from .plotting import plot_jacobi

                rep.figures.append(plot_jacobi(sol, _plot_path(args, "jacobi"), spec.fields, spec.coords[0]))


HANDLERS = {
    "el": cmd_el,
    "momenta": cmd_momenta,
    "noether": cmd_noether,
    "secondvar": cmd_secondvar,
    "jacobi": cmd_jacobi,
    "bianchi": cmd_bianchi,
    "hamiltonian": cmd_hamiltonian,
    "verify": cmd_verify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="varseq", description="Variational identities for Lagrangian problem files.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("file", help="problem file (.vp)")
    p.add_argument("--format", choices=FORMATS, default=None, help="output format (default $VARSEQ_FORMAT or text)")
    p.add_argument("--max-order", type=int, default=None, help="override the declared jet order")
    p.add_argument("--tolerance", type=float, default=None, help="numeric tolerance for oracle checks")
    p.add_argument("--lift", default=None, help="restrict to one named lift")
    p.add_argument("--variation", default=None, help="variation field(s), NAME or NAME,NAME")
    p.add_argument("--plot", default=None, metavar="DIR", help="write figures into DIR")
    return p


def run_command(command, path, fmt="text", max_order=None, tolerance=None, lift=None, variation=None, plot=None):
    """Run one command; returns ``(exit_code, output_text)``."""
    args = argparse.Namespace(
        command=command, file=path, format=fmt, max_order=max_order, tolerance=tolerance,
        lift=lift, variation=variation, plot=plot,
    )
    pf = load_problem(path, max_order=max_order)
    rep = Report(command, path, pf.spec.coords)
    HANDLERS[command](pf, args, rep)
    return rep.exit_code, RENDERERS[fmt](rep)


def main(argv=None):
    args = build_parser().parse_args(argv)
    fmt = args.format or os.environ.get("VARSEQ_FORMAT", "text")
    if fmt not in FORMATS:
        print(f"varseq: unknown format {fmt!r}", file=sys.stderr)
        return 2
    try:
        code, out = run_command(
            args.command, args.file, fmt, args.max_order, args.tolerance, args.lift, args.variation, args.plot
        )
    except ParseError as exc:
        print(f"{args.file}: parse error: {exc}", file=sys.stderr)
        return exc.exit_code
    except VarSeqError as exc:
        print(f"varseq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"varseq: {exc}", file=sys.stderr)
        return 4
    sys.stdout.write(out)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

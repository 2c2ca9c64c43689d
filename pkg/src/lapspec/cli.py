"""Command-line front end.

Exit codes: 0 success, 1 validation error (bad flags or inputs),
2 numerical failure (factorization breakdown, indefinite operator).
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _apply_thread_cap(argv):
    """Honor --threads before numpy spins up its thread pools."""
    for i, arg in enumerate(argv):
        cap = None
        if arg == "--threads" and i + 1 < len(argv):
            cap = argv[i + 1]
        elif arg.startswith("--threads="):
            cap = arg.split("=", 1)[1]
        if cap is not None:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                        "MKL_NUM_THREADS"):
                os.environ.setdefault(var, cap)
            return


def _parse_coeff(spec: str):
    from . import coefficient
    name, _, param = spec.partition(":")
    if name.lower() == "constant":
        if not param:
            raise ValueError("constant coefficient needs a value, "
                             "e.g. constant:2")
        return coefficient.builtin("constant", float(param))
    if param:
        raise ValueError(f"coefficient '{name}' takes no parameter")
    return coefficient.builtin(name)


def _build_mesh(args):
    from . import mesh
    if getattr(args, "mesh_file", None):
        return mesh.read_mesh(args.mesh_file)
    corners = (-1.0, 1.0) if args.domain == "biunit" else (0.0, 1.0)
    if args.domain == "corner":
        m = mesh.reentrant_corner(args.cells)
    else:
        m = mesh.uniform_square(args.cells, corners, args.diagonal)
    if args.refine_region:
        vals = [float(v) for v in args.refine_region.split(",")]
        if len(vals) != 4:
            raise ValueError("--refine-region wants xmin,xmax,ymin,ymax")
        m = mesh.refine_local(m, mesh.Rectangle(*vals), args.refine_steps)
    return m


def _add_mesh_flags(p, with_refine=True):
    p.add_argument("--cells", type=int, default=8,
                   help="cells per side of the structured mesh (default 8)")
    p.add_argument("--domain", choices=("unit", "biunit", "corner"),
                   default="unit", help="computational domain (default unit)")
    p.add_argument("--diagonal", choices=("tr", "tl"), default="tr",
                   help="cell diagonal orientation (default tr)")
    p.add_argument("--mesh-file", help="load a mesh file instead of building")
    if with_refine:
        p.add_argument("--refine-region", metavar="XMIN,XMAX,YMIN,YMAX",
                       help="bisect triangles inside this rectangle")
        p.add_argument("--refine-steps", type=int, default=1,
                       help="refinement sweeps (default 1)")


def _add_common(p):
    p.add_argument("--coeff", default="constant:1",
                   help="coefficient: p1..p4, quadrant, constant:<c> "
                        "(default constant:1)")
    p.add_argument("--quad-degree", type=int, default=2,
                   help="quadrature exactness degree (default 2)")
    p.add_argument("--out", default=None,
                   help="output directory (default $LAPSPEC_OUT or ./out)")
    p.add_argument("--seed", type=int, default=0, help="rng seed (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP threads")


def _outdir(args) -> str:
    out = args.out or os.environ.get("LAPSPEC_OUT", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_mesh(args) -> int:
    from . import mesh
    m = _build_mesh(args)
    out = os.path.join(_outdir(args), "mesh.txt")
    mesh.write_mesh(out, m)
    print(f"wrote {out}: {m.n_nodes} nodes, {m.n_triangles} triangles, "
          f"{m.n_free} dofs")
    return EXIT_OK


def _cmd_assemble(args) -> int:
    from . import assembly, coefficient
    from .quadrature import rule_by_degree
    field = _parse_coeff(args.coeff)
    m = _build_mesh(args)
    quad = rule_by_degree(args.quad_degree)
    A = assembly.assemble_stiffness(m, field, quad)
    L = assembly.assemble_laplacian(m)
    dirichlet = coefficient.kellogg_solution if args.bc == "kellogg" else None
    b = assembly.assemble_rhs(m, field, dirichlet=dirichlet, quad=quad)
    out = _outdir(args)
    assembly.export_matrix(os.path.join(out, "A.mtx"), A)
    assembly.export_matrix(os.path.join(out, "L.mtx"), L)
    assembly.export_vector(os.path.join(out, "b.txt"), b)
    print(f"wrote A.mtx, L.mtx, b.txt to {out} (N={m.n_free})")
    return EXIT_OK


def _cmd_eigs(args) -> int:
    from . import assembly, krylov, spectral
    from .quadrature import rule_by_degree
    field = _parse_coeff(args.coeff)
    m = _build_mesh(args)
    quad = rule_by_degree(args.quad_degree)
    A = assembly.assemble_stiffness(m, field, quad)
    if args.preconditioner == "ichol":
        factor = krylov.ichol(A, args.tau)
        spectrum = spectral.preconditioned_operator_spectrum(A, factor)
    else:
        L = assembly.assemble_laplacian(m)
        spectrum = spectral.generalized_eigs(A, L)
    out = os.path.join(_outdir(args), "eigenvalues.csv")
    spectrum.to_csv(out)
    print(f"wrote {out}: lambda in [{spectrum.eigenvalues[0]:.6g}, "
          f"{spectrum.eigenvalues[-1]:.6g}]")
    return EXIT_OK


def _cmd_pair(args) -> int:
    from . import assembly, coefficient, localization, spectral
    from .quadrature import rule_by_degree
    field = _parse_coeff(args.coeff)
    m = _build_mesh(args)
    quad = rule_by_degree(args.quad_degree)
    A = assembly.assemble_stiffness(m, field, quad)
    L = assembly.assemble_laplacian(m)
    spectrum = spectral.generalized_eigs(A, L)
    sampler = coefficient.SamplingRule(quad=quad,
                                       lattice_order=args.samples_per_edge)
    intervals = coefficient.support_intervals(field, m, sampler)
    k_nod = coefficient.nodal_values(field, m)
    G = localization.build_adjacency(spectrum, intervals, args.eps)
    pairing = localization.canonical_matching(G) if args.canonical \
        else localization.pair_spectrum(spectrum, intervals, args.eps, k_nod)
    out = _outdir(args)
    localization.write_pairing_csv(os.path.join(out, "pairing.csv"), m,
                                   spectrum, intervals, pairing, k_nod)
    print(f"matched={pairing.matched} (N={m.n_free})")
    if args.audit:
        order, violations = localization.sorted_pairing_audit(
            spectrum, k_nod, intervals, args.eps)
        localization.write_violations_csv(
            os.path.join(out, "violations.csv"), spectrum, intervals, order,
            violations)
        print(f"sorted-pairing violations: {len(violations)}")
    if not pairing.matched:
        print(f"deficiency witness of size {len(pairing.witness)}",
              file=sys.stderr)
    return EXIT_OK


def _cmd_bounds(args) -> int:
    from . import assembly, bounds, coefficient, localization, spectral
    from .quadrature import rule_by_degree
    field = _parse_coeff(args.coeff)
    m = _build_mesh(args)
    quad = rule_by_degree(args.quad_degree)
    A = assembly.assemble_stiffness(m, field, quad)
    L = assembly.assemble_laplacian(m)
    spectrum = spectral.generalized_eigs(A, L)
    intervals = coefficient.support_intervals(field, m)
    k_nod = coefficient.nodal_values(field, m)
    pairing = localization.pair_spectrum(spectrum, intervals, args.eps, k_nod)
    if not pairing.matched:
        print("no perfect pairing; bounds unavailable", file=sys.stderr)
        return EXIT_NUMERICAL
    report = bounds.evaluate_bounds(field, m, pairing, spectrum,
                                    hessian_safety=args.safety)
    out = os.path.join(_outdir(args), "bounds.csv")
    report.to_csv(out)
    print(f"wrote {out}: max gap {report.gap.max():.3e}")
    return EXIT_OK


def _cmd_pcg(args) -> int:
    import numpy as np
    import scipy.sparse.linalg as spla

    from . import assembly, coefficient, krylov, spectral
    from .quadrature import rule_by_degree
    field = _parse_coeff(args.coeff)
    m = _build_mesh(args)
    quad = rule_by_degree(args.quad_degree)
    A = assembly.assemble_stiffness(m, field, quad)
    L = assembly.assemble_laplacian(m)
    dirichlet = coefficient.kellogg_solution if args.bc == "kellogg" else None
    b = assembly.assemble_rhs(m, field, dirichlet=dirichlet, quad=quad)
    if not np.any(b):
        rng = np.random.default_rng(args.seed)
        b = rng.standard_normal(m.n_free)
        b /= np.linalg.norm(b)
    if args.precond == "ichol":
        M = krylov.ichol_preconditioner(A, args.tau)
    elif args.precond == "none":
        M = krylov.identity_preconditioner()
    else:
        M = krylov.laplace_preconditioner(L)
    x_exact = spla.spsolve(A.tocsc(), b)
    trace = krylov.pcg(A, b, M, max_iter=args.max_iter, tol=args.tol,
                       x_exact=x_exact, energy_tol=1e-13)
    out = _outdir(args)
    trace.to_csv(os.path.join(out, f"trace_{args.precond}.csv"))
    with open(os.path.join(out, f"ritz_{args.precond}.csv"), "w") as fh:
        fh.write("iter,ritz_index,value\n")
        for it in range(1, trace.iterations + 1):
            for idx, val in enumerate(krylov.ritz_values(trace, it)):
                fh.write(f"{it},{idx},{float(val)!r}\n")
    spectrum = spectral.preconditioned_operator_spectrum(A, M.factor) \
        if M.factor is not None else None
    if spectrum is not None:
        dist = krylov.distribution_function(spectrum, b, M.factor,
                                            provenance=args.precond)
        dist.to_csv(os.path.join(out, f"distribution_{args.precond}.csv"))
    print(f"{trace.preconditioner}: {trace.iterations} iterations, "
          f"converged={trace.converged}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from . import scenarios
    overrides = {}
    if args.cells:
        overrides["cells"] = tuple(args.cells)
    if args.coeff_name:
        overrides["coeff"] = args.coeff_name
    if args.tau is not None:
        overrides["droptol"] = args.tau
    if args.seed:
        overrides["seed"] = args.seed
    report = scenarios.run(args.scenario, overrides, args.out)
    if args.plots:
        scenarios.emit_plots(report)
    print(f"report written to {report.out_dir}/report.json")
    return EXIT_OK


def _cmd_check(args) -> int:
    import subprocess
    here = os.path.dirname(os.path.dirname(os.path.dirname(
        os.path.abspath(__file__))))
    candidates = [
        os.path.join(here, "tests", "test_acceptance.py"),
        os.path.join(os.getcwd(), "tests", "test_acceptance.py"),
    ]
    for path in candidates:
        if os.path.exists(path):
            code = subprocess.call([sys.executable, "-m", "pytest", "-v",
                                    path])
            return EXIT_OK if code == 0 else EXIT_VALIDATION
    print("acceptance suite not found (tests/test_acceptance.py)",
          file=sys.stderr)
    return EXIT_VALIDATION


def build_parser() -> _Parser:
    parser = _Parser(prog="lapspec",
                     description="Eigenvalue localization laboratory for "
                                 "Laplacian-preconditioned elliptic operators")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="emit a mesh file", parents=[],
                       conflict_handler="resolve")
    _add_mesh_flags(p)
    _add_common(p)
    p.set_defaults(fn=_cmd_mesh)

    p = sub.add_parser("assemble", help="emit A.mtx, L.mtx, b.txt")
    _add_mesh_flags(p)
    _add_common(p)
    p.add_argument("--bc", choices=("zero", "kellogg"), default="zero",
                   help="Dirichlet data (default zero)")
    p.set_defaults(fn=_cmd_assemble)

    p = sub.add_parser("eigs", help="emit the spectrum CSV")
    _add_mesh_flags(p)
    _add_common(p)
    p.add_argument("--preconditioner", choices=("laplace", "ichol"),
                   default="laplace",
                   help="operator whose spectrum to compute (default laplace)")
    p.add_argument("--tau", type=float, default=1e-2,
                   help="ichol drop tolerance (default 1e-2)")
    p.set_defaults(fn=_cmd_eigs)

    p = sub.add_parser("pair", help="adjacency, matching and audit CSVs")
    _add_mesh_flags(p)
    _add_common(p)
    p.add_argument("--eps", type=float, default=1e-9,
                   help="membership tolerance (default 1e-9)")
    p.add_argument("--samples-per-triangle", dest="samples_per_edge",
                   type=int, default=2,
                   help="barycentric lattice order for sampling (default 2)")
    p.add_argument("--audit", action="store_true",
                   help="also audit the sorted pairing")
    p.add_argument("--canonical", action="store_true",
                   help="lexicographically smallest matching")
    p.set_defaults(fn=_cmd_pair)

    p = sub.add_parser("bounds", help="nodal-value bound report CSV")
    _add_mesh_flags(p)
    _add_common(p)
    p.add_argument("--eps", type=float, default=1e-9,
                   help="membership tolerance (default 1e-9)")
    p.add_argument("--safety", type=float, default=1.1,
                   help="Hessian max safety factor (default 1.1)")
    p.set_defaults(fn=_cmd_bounds)

    p = sub.add_parser("pcg", help="trace, Ritz and distribution CSVs")
    _add_mesh_flags(p)
    _add_common(p)
    p.add_argument("--bc", choices=("zero", "kellogg"), default="zero")
    p.add_argument("--precond", choices=("laplace", "ichol", "none"),
                   default="laplace")
    p.add_argument("--tau", type=float, default=1e-2,
                   help="ichol drop tolerance (default 1e-2)")
    p.add_argument("--tol", type=float, default=1e-12,
                   help="relative residual tolerance (default 1e-12)")
    p.add_argument("--max-iter", type=int, default=400)
    p.set_defaults(fn=_cmd_pcg)

    p = sub.add_parser("report", help="run a full scenario")
    p.add_argument("scenario", help="registered scenario name")
    p.add_argument("--cells", type=int, nargs="+", default=None)
    p.add_argument("--coeff-name", default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--plots", action="store_true", help="also emit SVGs")
    _add_common(p)
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("check", help="run the acceptance suite")
    _add_common(p)
    p.set_defaults(fn=_cmd_check)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_thread_cap(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, IndexError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # numerical failures
        from .spectral import NotPositiveDefiniteError
        if isinstance(exc, NotPositiveDefiniteError):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        raise


if __name__ == "__main__":
    sys.exit(main())

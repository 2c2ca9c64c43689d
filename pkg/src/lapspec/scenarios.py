"""End-to-end experiment scenarios and structured reports.

Each registered scenario runs the full pipeline (mesh, coefficient,
assembly, spectrum, pairing, bounds, PCG analysis as configured), writes
the CSV artifacts into ``out/<scenario>/<label>/`` and a versioned JSON
report, and can render SVG plots from those CSVs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import assembly, bounds, coefficient, krylov, localization, mesh, spectral
from .coefficient import SamplingRule

__all__ = ["Scenario", "Report", "SCENARIOS", "scenario_names", "run",
           "emit_plots"]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    """Recipe for one experiment family."""

    name: str
    domain: str                  # unit | biunit | corner
    coeff: str
    cells: tuple
    analyses: tuple
    bc: str = "zero"             # zero | kellogg
    source: str = "none"         # none | one
    refine_region: tuple | None = None
    refine_steps: tuple = ()
    seed: int = 2301
    constant: float = 3.0
    droptol: float = 1e-2
    eps: float = 1e-9
    pairing_max_dofs: int = 4096  # matching on clustered spectra is O(N^2)

    def with_overrides(self, overrides: dict | None) -> "Scenario":
        if not overrides:
            return self
        fields = {k: v for k, v in overrides.items() if v is not None}
        known = self.__dataclass_fields__
        bad = set(fields) - set(known)
        if bad:
            raise ValueError(f"unknown scenario overrides: {sorted(bad)}")
        if "cells" in fields and np.isscalar(fields["cells"]):
            fields["cells"] = (int(fields["cells"]),)
        return Scenario(**{**self.__dict__, **fields})


SCENARIOS = {}


def _register(s: Scenario) -> None:
    SCENARIOS[s.name] = s


_register(Scenario("constant", "unit", "constant", (4,),
                   ("spectrum", "pairing", "pcg-compare"), source="one"))
for _p in ("p1", "p2", "p3", "p4"):
    _register(Scenario(f"{_p}-pairing", "unit", _p, (10,),
                       ("spectrum", "pairing", "bounds")))
_register(Scenario("fine", "unit", "p1", (60,),
                   ("spectrum", "pairing", "bounds")))
_register(Scenario("adapt", "unit", "p2", (10,),
                   ("spectrum", "pairing", "bounds"),
                   refine_region=(0.0, 0.2, 0.0, 0.2), refine_steps=(1, 3)))
_register(Scenario("corner", "corner", "p3", (10,),
                   ("spectrum", "pairing", "bounds")))
_register(Scenario("quadrant-cg", "biunit", "quadrant", (8, 64),
                   ("spectrum", "pairing", "pcg-compare"), bc="kellogg",
                   pairing_max_dofs=100))
_register(Scenario("random-piecewise", "unit", "random", (8,),
                   ("spectrum", "pairing")))


def scenario_names():
    return sorted(SCENARIOS)


@dataclass
class Report:
    """Machine-readable scenario summary plus artifact paths."""

    scenario: str
    schema_version: int
    config: dict
    cases: list = dataclass_field(default_factory=list)
    out_dir: str = ""

    def to_json(self, path) -> None:
        payload = {
            "schema_version": self.schema_version,
            "scenario": self.scenario,
            "config": self.config,
            "cases": self.cases,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_json(path) -> "Report":
        with open(path) as fh:
            payload = json.load(fh)
        return Report(payload["scenario"], payload["schema_version"],
                      payload["config"], payload["cases"],
                      os.path.dirname(os.path.abspath(path)))


def _build_cases(s: Scenario):
    """Yield (label, mesh, field) triples for the scenario."""
    corners = (-1.0, 1.0) if s.domain == "biunit" else (0.0, 1.0)
    for cells in s.cells:
        if s.domain == "corner":
            m = mesh.reentrant_corner(cells)
        else:
            m = mesh.uniform_square(cells, corners)
        if s.refine_region is not None and s.refine_steps:
            region = mesh.Rectangle(*s.refine_region)
            for steps in s.refine_steps:
                refined = mesh.refine_local(m, region, steps)
                yield (f"cells{cells}-refine{steps}", refined,
                       _field_for(s, refined))
        else:
            yield (f"cells{cells}", m, _field_for(s, m))


def _field_for(s: Scenario, m: mesh.Mesh):
    if s.coeff == "constant":
        return coefficient.constant_field(s.constant)
    if s.coeff == "random":
        return coefficient.random_element_field(m, s.seed)
    return coefficient.builtin(s.coeff)


def _cluster_table(eigs: np.ndarray, weights: np.ndarray | None,
                   tol: float = 1e-8) -> list:
    clusters = []
    start = 0
    for i in range(1, len(eigs) + 1):
        if i == len(eigs) or \
                eigs[i] - eigs[i - 1] > tol * max(1.0, abs(eigs[i])):
            value = float(eigs[start:i].mean())
            row = {"index_lo": start, "index_hi": i - 1, "value": value,
                   "count": i - start}
            if weights is not None:
                row["total_weight"] = float(weights[start:i].sum())
            clusters.append(row)
            start = i
    return clusters


def _run_case(s: Scenario, label: str, m: mesh.Mesh, field, case_dir: str):
    os.makedirs(case_dir, exist_ok=True)
    result = {"label": label, "n_free": m.n_free,
              "n_triangles": m.n_triangles}
    paths = {}

    mesh_path = os.path.join(case_dir, "mesh.txt")
    mesh.write_mesh(mesh_path, m)
    paths["mesh"] = mesh_path

    A = assembly.assemble_stiffness(m, field)
    L = assembly.assemble_laplacian(m)
    spectrum = spectral.generalized_eigs(A, L)
    eigs = spectrum.eigenvalues
    spectrum.to_csv(os.path.join(case_dir, "eigenvalues.csv"))
    paths["eigenvalues"] = os.path.join(case_dir, "eigenvalues.csv")
    result["eigenvalues"] = {
        "min": float(eigs[0]), "max": float(eigs[-1]), "count": len(eigs),
        "max_residual": float(spectrum.residual_norms.max()),
    }

    intervals = coefficient.support_intervals(field, m)
    k_nod = coefficient.nodal_values(field, m)
    pairing = None
    if "pairing" in s.analyses and m.n_free <= s.pairing_max_dofs:
        pairing = localization.pair_spectrum(spectrum, intervals, s.eps,
                                             nodal_vals=k_nod)
        order, violations = localization.sorted_pairing_audit(
            spectrum, k_nod, intervals, s.eps)
        localization.write_pairing_csv(
            os.path.join(case_dir, "pairing.csv"), m, spectrum, intervals,
            pairing, k_nod)
        localization.write_violations_csv(
            os.path.join(case_dir, "violations.csv"), spectrum, intervals,
            order, violations)
        paths["pairing"] = os.path.join(case_dir, "pairing.csv")
        paths["violations"] = os.path.join(case_dir, "violations.csv")
        result["pairing"] = {
            "matched": bool(pairing.matched),
            "eps": s.eps,
            "sorted_violations": len(violations),
            "witness_size": None if pairing.matched
            else int(len(pairing.witness)),
        }

    if "bounds" in s.analyses and pairing is not None and pairing.matched:
        report = bounds.evaluate_bounds(field, m, pairing, spectrum)
        report.to_csv(os.path.join(case_dir, "bounds.csv"))
        paths["bounds"] = os.path.join(case_dir, "bounds.csv")
        ok = report.applicable
        result["bounds"] = {
            "max_gap": float(report.gap.max()),
            "median_gap": float(np.median(report.gap)),
            "chain_violations": int((report.gap > report.loose_bound).sum()),
            "applicable_dofs": int(ok.sum()),
        }

    if "pcg-compare" in s.analyses:
        result["pcg"] = _pcg_compare(s, m, field, A, L, case_dir, paths,
                                     result, eigs)

    if "pcg" not in result:
        result["clusters"] = _cluster_table(eigs, None)
    return result, paths


def _rhs_for(s: Scenario, m: mesh.Mesh, field):
    source = (lambda pts: np.ones(len(pts))) if s.source == "one" else None
    dirichlet = coefficient.kellogg_solution if s.bc == "kellogg" else None
    b = assembly.assemble_rhs(m, field, source=source, dirichlet=dirichlet)
    if not np.any(b):
        # fall back to a deterministic unit-norm rhs so PCG has work to do
        rng = np.random.default_rng(s.seed)
        b = rng.standard_normal(m.n_free)
        b /= np.linalg.norm(b)
    return b


def _pcg_compare(s: Scenario, m, field, A, L, case_dir, paths, result, eigs):
    import scipy.sparse.linalg as spla

    b = _rhs_for(s, m, field)
    x_exact = spla.spsolve(A.tocsc(), b)
    out = {}
    chol_L = spectral.cholesky(L)
    systems = [("laplace", krylov.Preconditioner("laplace", chol_L))]
    try:
        systems.append(("ichol",
                        krylov.ichol_preconditioner(A, s.droptol)))
    except krylov.IcholBreakdownError as exc:
        out["ichol"] = {"error": str(exc)}

    for name, M in systems:
        trace = krylov.pcg(A, b, M, max_iter=min(400, m.n_free),
                           tol=1e-14, x_exact=x_exact, energy_tol=1e-13)
        trace.to_csv(os.path.join(case_dir, f"trace_{name}.csv"))
        paths[f"trace_{name}"] = os.path.join(case_dir, f"trace_{name}.csv")
        spectrum_pre = spectral.preconditioned_operator_spectrum(A, M.factor)
        dist = krylov.distribution_function(spectrum_pre, b, M.factor,
                                            provenance=name)
        dist.to_csv(os.path.join(case_dir, f"distribution_{name}.csv"))
        paths[f"distribution_{name}"] = os.path.join(
            case_dir, f"distribution_{name}.csv")

        ritz_rows = []
        for it in range(1, trace.iterations + 1):
            for idx, val in enumerate(krylov.ritz_values(trace, it)):
                ritz_rows.append((it, idx, val))
        with open(os.path.join(case_dir, f"ritz_{name}.csv"), "w") as fh:
            fh.write("iter,ritz_index,value\n")
            for it, idx, val in ritz_rows:
                fh.write(f"{it},{idx},{float(val)!r}\n")
        paths[f"ritz_{name}"] = os.path.join(case_dir, f"ritz_{name}.csv")

        entry = {
            "iterations": trace.iterations,
            "converged": bool(trace.converged),
            "weight_sum": float(dist.weights.sum()),
            "spectrum_min": float(spectrum_pre.eigenvalues[0]),
            "spectrum_max": float(spectrum_pre.eigenvalues[-1]),
        }
        try:
            entry["iterations_to_1e-10"] = trace.iterations_to(1e-10)
        except ValueError:
            entry["iterations_to_1e-10"] = None
        drop_low, drop_high = (4, 1) if name == "laplace" else (5, 0)
        n_visible = len(dist.merged(1e-8).visible(1e-8).lambdas)
        if n_visible <= drop_low + drop_high:
            drop_low, drop_high = 0, 0  # sparse spectrum, keep everything
        kappa, _ = krylov.effective_condition_bound(dist, drop_low,
                                                    drop_high, 5)
        entry["kappa_e"] = kappa
        if name == "laplace":
            result["clusters"] = _cluster_table(eigs, dist.weights)
        out[name] = entry
    return out


def run(name: str, overrides: dict | None = None,
        out_root: str | None = None) -> Report:
    """Execute a registered scenario and write its artifacts."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario '{name}'; "
                         f"choose from {scenario_names()}")
    s = SCENARIOS[name].with_overrides(overrides)
    out_root = out_root or os.environ.get("LAPSPEC_OUT", "out")
    out_dir = os.path.join(out_root, name)
    os.makedirs(out_dir, exist_ok=True)
    report = Report(name, SCHEMA_VERSION, {
        "domain": s.domain, "coeff": s.coeff, "cells": list(s.cells),
        "bc": s.bc, "seed": s.seed, "droptol": s.droptol, "eps": s.eps,
    }, out_dir=out_dir)
    for label, m, field in _build_cases(s):
        case_dir = os.path.join(out_dir, label)
        result, paths = _run_case(s, label, m, field, case_dir)
        result["artifacts"] = {k: os.path.relpath(v, out_dir)
                               for k, v in paths.items()}
        report.cases.append(result)
    report.to_json(os.path.join(out_dir, "report.json"))
    return report


# --- plotting ---------------------------------------------------------------

def _load_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def emit_plots(report: Report) -> list:
    """Render SVG plots from the CSV artifacts of a finished report."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "lapspec"

    written = []
    for case in report.cases:
        case_dir = os.path.join(report.out_dir, case["label"])
        arts = case.get("artifacts", {})

        def path_of(key):
            return os.path.join(report.out_dir, arts[key]) if key in arts \
                else None

        eig_path = path_of("eigenvalues")
        if eig_path is None or not os.path.exists(eig_path):
            raise ValueError("missing columns: report has no eigenvalue data")
        eigs = _load_csv(eig_path)["lambda"]

        if "pairing" in arts:
            pairing = _load_csv(path_of("pairing"))
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(np.arange(len(eigs)), eigs, "r.", ms=4,
                    label="eigenvalues")
            ax.plot(np.arange(len(eigs)), np.sort(pairing["k_nodal"]), "o",
                    mfc="none", mec="b", ms=5, label="sorted nodal values")
            ax.set_xlabel("index")
            ax.legend()
            out = os.path.join(case_dir, "spectrum_vs_nodal.svg")
            fig.savefig(out, metadata={"Date": None})
            plt.close(fig)
            written.append(out)

            order = np.argsort(pairing["k_nodal"], kind="stable")
            fig, ax = plt.subplots(figsize=(6, 4))
            xs = np.arange(len(eigs))
            ax.vlines(xs, pairing["kmin"][order], pairing["kmax"][order],
                      colors="k", lw=1, label="support intervals")
            ax.plot(xs, eigs, "r.", ms=4, label="eigenvalues")
            ax.set_xlabel("index (sorted by nodal value)")
            ax.legend()
            out = os.path.join(case_dir, "intervals.svg")
            fig.savefig(out, metadata={"Date": None})
            plt.close(fig)
            written.append(out)

        if "bounds" in arts:
            data = _load_csv(path_of("bounds"))
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.semilogy(data["dof"], np.maximum(data["gap"], 1e-300), "r.",
                        ms=4, label="|lambda - k(node)|")
            good = ~np.isnan(data["taylor1"])
            ax.semilogy(data["dof"][good], data["taylor1"][good], "k*",
                        ms=4, label="h |grad k|")
            ax.set_xlabel("dof")
            ax.legend()
            out = os.path.join(case_dir, "gap_bounds.svg")
            fig.savefig(out, metadata={"Date": None})
            plt.close(fig)
            written.append(out)

        traces = [(k, path_of(k)) for k in arts if k.startswith("trace_")]
        if traces:
            fig, ax = plt.subplots(figsize=(6, 4))
            for key, path in sorted(traces):
                data = _load_csv(path)
                ax.semilogy(data["iter"],
                            np.maximum(data["rel_energy_error"], 1e-300),
                            label=key.removeprefix("trace_"))
            ax.set_xlabel("iteration")
            ax.set_ylabel("relative energy error")
            ax.legend()
            out = os.path.join(case_dir, "convergence.svg")
            fig.savefig(out, metadata={"Date": None})
            plt.close(fig)
            written.append(out)

        dists = [(k, path_of(k)) for k in arts if k.startswith("distribution_")]
        for key, path in sorted(dists):
            data = _load_csv(path)
            fig, ax = plt.subplots(figsize=(6, 4))
            line, = ax.step(data["lambda"], data["cumulative"], where="post")
            line.set_gid(f"distribution-step-{key.removeprefix('distribution_')}")
            ax.set_xlabel("lambda")
            ax.set_ylabel("cumulative weight")
            out = os.path.join(case_dir, f"{key}.svg")
            fig.savefig(out, metadata={"Date": None})
            plt.close(fig)
            written.append(out)
    return written

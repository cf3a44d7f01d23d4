"""Command-line front end: ``solve``, ``check`` and ``generate``.

Problem files are JSON documents::

    {
      "dimension": 2,
      "truncation": {"family": "rectangle", "bounds": [1, 1]},
      "moments": [{"index": [0, 0], "value": 1.0}, ...],
      "config": {"tol_comm": 1e-9, "params": {"alpha:2:1,1": 0.5}}
    }

``truncation`` may also be ``{"family": "simplex", "degree": r}`` or an
explicit ordered list of multi-indices.  Floats are written with Python's
shortest round-tripping representation, so a file re-read gives bit-identical
doubles.

Exit codes: 0 solved or zero measure, 1 malformed input, 2 rejected by a
necessary condition, 3 the construction could not be completed.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .gram import MomentError, MomentSequence, build_gram, check_conditions
from .hilbert import IndefiniteGramError, check_dimensional_stability, gram_schmidt
from .measure import generate_problem
from .multi_index import AdmissibleIndexSet, IndexSetError, rectangle_set, simplex_set
from .solver import SolverConfig, SolverReport, Status, solve

log = logging.getLogger("truncmoment")

EXIT_OK = 0
EXIT_MALFORMED = 1
EXIT_REJECTED = 2
EXIT_UNRESOLVED = 3

EXIT_CODES = {
    Status.SOLVED: EXIT_OK,
    Status.ZERO_MEASURE: EXIT_OK,
    Status.REJECTED_POSITIVITY: EXIT_REJECTED,
    Status.REJECTED_KERNEL: EXIT_REJECTED,
    Status.REJECTED_DEGENERATE: EXIT_REJECTED,
    Status.REJECTED_ILL_DEFINED: EXIT_REJECTED,
    Status.COMMUTATIVITY_UNRESOLVED: EXIT_UNRESOLVED,
    Status.STABILITY_FAILED_AND_EXTENSION_FAILED: EXIT_UNRESOLVED,
    Status.VERIFICATION_FAILED: EXIT_UNRESOLVED,
}

_CONFIG_KEYS = {"tol_psd", "tol_ker", "tol_rank", "tol_herm", "tol_comm", "tol_eig", "tol_cluster",
                "tol_atom", "tol_verify", "params", "strategy", "max_iters", "seed", "starts",
                "param_range", "verify"}
_PARAM_RE = re.compile(r"((?:alpha|beta):\d+:\d+,\d+)\s*=\s*([^\s,=]+)")


class ProblemFileError(ValueError):
    """Malformed problem file; the message carries the offending field."""


# ---------------------------------------------------------------- parsing

def parse_params(specs: Sequence[str]) -> dict[str, float]:
    """Parse ``id=value`` pairs separated by commas or whitespace.

    Ids contain a comma themselves (``alpha:1:2,2``), so pairs are matched by
    pattern rather than split naively.
    """
    text = " ".join(specs)
    out: dict[str, float] = {}
    pos = 0
    for m in _PARAM_RE.finditer(text):
        gap = text[pos:m.start()]
        if gap.strip(" ,\t\n"):
            raise ProblemFileError(f"cannot parse parameter assignment near {gap.strip()!r}")
        try:
            out[m.group(1)] = float(m.group(2))
        except ValueError:
            raise ProblemFileError(f"parameter {m.group(1)}: {m.group(2)!r} is not a number") from None
        pos = m.end()
    rest = text[pos:]
    if rest.strip(" ,\t\n"):
        raise ProblemFileError(f"cannot parse parameter assignment near {rest.strip()!r}")
    return out


def _int_list(value: Any, where: str) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(c, int) and not isinstance(c, bool)
                                              for c in value):
        raise ProblemFileError(f"{where}: expected a list of integers, got {value!r}")
    return value


def decode_truncation(spec: Any, n: int) -> AdmissibleIndexSet:
    if isinstance(spec, list):
        members = [tuple(_int_list(k, f"truncation[{i}]")) for i, k in enumerate(spec)]
        for i, k in enumerate(members):
            if len(k) != n:
                raise ProblemFileError(f"truncation[{i}]: index {k} has length {len(k)}, expected {n}")
        return AdmissibleIndexSet(tuple(members))
    if not isinstance(spec, dict) or "family" not in spec:
        raise ProblemFileError("truncation: expected a list of indices or an object with 'family'")
    family = spec["family"]
    if family == "rectangle":
        bounds = _int_list(spec.get("bounds"), "truncation.bounds")
        if len(bounds) != n:
            raise ProblemFileError(f"truncation.bounds: {len(bounds)} entries, expected {n}")
        return rectangle_set(bounds)
    if family == "simplex":
        degree = spec.get("degree")
        if not isinstance(degree, int) or isinstance(degree, bool):
            raise ProblemFileError(f"truncation.degree: expected an integer, got {degree!r}")
        return simplex_set(n, degree)
    raise ProblemFileError(f"truncation.family: unknown family {family!r}")


def _config_from(doc: dict, where: str) -> dict[str, Any]:
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ProblemFileError(f"{where}: unknown key {sorted(unknown)[0]!r}")
    cfg = dict(doc)
    if "params" in cfg:
        if not isinstance(cfg["params"], dict):
            raise ProblemFileError(f"{where}.params: expected an object of id: value")
        cfg["params"] = {str(k): float(v) for k, v in cfg["params"].items()}
    if "param_range" in cfg:
        cfg["param_range"] = tuple(cfg["param_range"])
    return cfg


def load_problem(path: str | Path) -> tuple[AdmissibleIndexSet, MomentSequence, dict[str, Any]]:
    """Read a problem file; raise :class:`ProblemFileError` with field context."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFileError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return decode_problem(doc)


def decode_problem(doc: Any) -> tuple[AdmissibleIndexSet, MomentSequence, dict[str, Any]]:
    if not isinstance(doc, dict):
        raise ProblemFileError("top level: expected an object")
    for key in ("dimension", "truncation", "moments"):
        if key not in doc:
            raise ProblemFileError(f"missing field {key!r}")
    n = doc["dimension"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ProblemFileError(f"dimension: expected a positive integer, got {n!r}")
    try:
        K = decode_truncation(doc["truncation"], n)
    except IndexSetError as exc:
        raise ProblemFileError(f"truncation: {exc}") from None
    if not isinstance(doc["moments"], list):
        raise ProblemFileError("moments: expected a list of {index, value} objects")
    values: dict[tuple[int, ...], Any] = {}
    for i, entry in enumerate(doc["moments"]):
        if not isinstance(entry, dict) or "index" not in entry or "value" not in entry:
            raise ProblemFileError(f"moments[{i}]: expected an object with 'index' and 'value'")
        k = tuple(_int_list(entry["index"], f"moments[{i}].index"))
        v = entry["value"]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ProblemFileError(f"moments[{i}].value: expected a real number, got {v!r}")
        if k in values:
            raise ProblemFileError(f"moments[{i}]: index {k} given twice")
        values[k] = v
    try:
        S = MomentSequence(K, values)
    except MomentError as exc:
        raise ProblemFileError(f"moments: {exc}") from None
    cfg = _config_from(doc.get("config") or {}, "config")
    return K, S, cfg


# ---------------------------------------------------------------- output

def _plain(x: Any) -> Any:
    """Recursively convert numpy scalars/arrays and tuples into JSON types."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _dump(doc: dict, output: Optional[str]) -> None:
    text = json.dumps(_plain(doc), indent=2) + "\n"
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def problem_document(K: AdmissibleIndexSet, S: MomentSequence, truncation: Any = None) -> dict:
    return {
        "dimension": K.dimension,
        "truncation": truncation if truncation is not None else [list(k) for k in K.members],
        "moments": [{"index": list(k), "value": float(S[k])} for k in sorted(S.values)],
    }


def report_document(rep: SolverReport) -> dict:
    doc: dict[str, Any] = {
        "status": rep.status.value,
        "message": rep.message,
        "stopped_at_step": rep.stopped_at,
        "dimension_H": rep.dimension_H,
        "dimension_H0": rep.dimension_H0,
        "stable": rep.stable,
        "path": rep.path,
        "atoms": [] if rep.measure is None else
        [{"point": list(p), "weight": w} for p, w in rep.measure.atoms],
        "verification_max_error": rep.verification_max_error,
        "verification_worst_index": rep.verification_worst_index,
        "chosen_params": rep.chosen_params,
        "ignored_params": rep.ignored_params,
        "residuals": rep.residuals,
        "trace": [{"step": r.step, "name": r.name, "outcome": r.outcome, "detail": r.detail}
                  for r in rep.trace],
    }
    cond = rep.condition_report
    if cond is not None:
        doc["conditions"] = {
            "psd": cond.psd_ok,
            "min_eigenvalue": cond.min_eigenvalue,
            "kernel_inclusion": cond.kernel_ok,
        }
    return doc


# ---------------------------------------------------------------- commands

def _solver_config(file_cfg: dict[str, Any], args: argparse.Namespace) -> SolverConfig:
    cfg = dict(file_cfg)
    for name in ("tol_psd", "tol_ker", "tol_rank", "tol_comm", "tol_atom", "strategy", "max_iters",
                 "verify"):
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    if args.params:
        cfg["params"] = {**cfg.get("params", {}), **parse_params(args.params)}
    try:
        return SolverConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"config: {exc}") from None


def cmd_solve(args: argparse.Namespace) -> int:
    K, S, file_cfg = load_problem(args.input)
    cfg = _solver_config(file_cfg, args)
    rep = solve(K, S, cfg)
    if rep.ignored_params:
        log.warning("ignored parameters (not free after the Hermiticity constraints): %s",
                    ", ".join(rep.ignored_params))
    log.info("%s: %s", rep.status.value, rep.message)
    _dump(report_document(rep), args.output)
    return EXIT_CODES[rep.status]


def cmd_check(args: argparse.Namespace) -> int:
    K, S, file_cfg = load_problem(args.input)
    cfg = _solver_config(file_cfg, args)
    G = build_gram(S)
    cond = check_conditions(G, cfg.tol_psd, cfg.tol_ker)
    spectrum = np.asarray(cond.spectrum)
    doc: dict[str, Any] = {
        "psd": cond.psd_ok,
        "spectrum": {"min": float(spectrum[0]), "max": float(spectrum[-1]), "eigenvalues": spectrum},
        "kernel_inclusion": cond.kernel_ok,
    }
    if cond.psd_witness is not None:
        doc["psd_witness"] = cond.psd_witness
    if cond.kernel_witness is not None:
        w = cond.kernel_witness
        doc["kernel_witness"] = {"axis": w.axis, "vector": w.vector}
    try:
        B = gram_schmidt(G, range(len(K)), cfg.tol_rank, cfg.tol_psd)
        stable, B0, _ = check_dimensional_stability(G, cfg.tol_rank, cfg.tol_psd)
        doc.update(dimension_H=B.dim, dimension_H0=B0.dim, stable=stable)
    except IndefiniteGramError as exc:
        doc.update(dimension_H=None, dimension_H0=None, stable=None, stability_error=str(exc))
    _dump(doc, args.output)
    return EXIT_OK if cond.ok else EXIT_REJECTED


def cmd_generate(args: argparse.Namespace) -> int:
    n = args.n
    if args.family == "rectangle":
        if len(args.bounds) != n:
            raise ProblemFileError(f"--bounds: rectangle needs {n} degrees, got {len(args.bounds)}")
        truncation = {"family": "rectangle", "bounds": list(args.bounds)}
        K = rectangle_set(args.bounds)
    else:
        if len(args.bounds) != 1:
            raise ProblemFileError("--bounds: simplex needs a single total degree")
        truncation = {"family": "simplex", "degree": args.bounds[0]}
        K = simplex_set(n, args.bounds[0])
    try:
        P = generate_problem(n, K, args.atoms, tuple(args.coord_range), args.seed)
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None
    out = Path(args.output)
    _dump(problem_document(K, P.moments, truncation), str(out))
    truth = {"seed": args.seed, "atoms": [{"point": list(p), "weight": w} for p, w in P.truth.atoms]}
    _dump(truth, str(truth_path(out)))
    return EXIT_OK


def truth_path(problem_path: Path) -> Path:
    """Sidecar file next to a generated problem: ``x.json`` gets ``x.truth.json``."""
    return problem_path.with_name(problem_path.stem + ".truth.json")


# ---------------------------------------------------------------- entry point

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="problem file (JSON)")
    p.add_argument("--output", "-o", help="write the report here instead of stdout")
    p.add_argument("--tol-psd", type=float)
    p.add_argument("--tol-ker", type=float)
    p.add_argument("--tol-rank", type=float)
    p.add_argument("--tol-comm", type=float)
    p.add_argument("--tol-atom", type=float)
    p.add_argument("--params", nargs="+", metavar="ID=VALUE",
                   help="free parameter values, e.g. alpha:1:2,2=2.83 beta:2:1,0=0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="truncmoment",
                                     description="Atomic solutions of truncated moment problems.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="diagnostics on stderr (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="construct and verify an atomic representing measure")
    _add_solver_flags(p)
    p.add_argument("--strategy", choices=["auto", "stable", "extension"])
    p.add_argument("--max-iters", type=int)
    p.add_argument("--verify", action=argparse.BooleanOptionalAction, default=None,
                   help="re-integrate the recovered measure (default on)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="necessary conditions and dimensional stability only")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("generate", help="random atomic measure and its moments")
    p.add_argument("--n", type=int, required=True, help="number of variables")
    p.add_argument("--family", choices=["rectangle", "simplex"], required=True)
    p.add_argument("--bounds", type=int, nargs="+", required=True,
                   help="rectangle: one degree per axis; simplex: the total degree")
    p.add_argument("--atoms", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coord-range", type=float, nargs=2, default=(-2.0, 2.0), metavar=("LO", "HI"))
    p.add_argument("--output", "-o", required=True,
                   help="problem file; the true atoms go to <stem>.truth.json beside it")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ProblemFileError, IndexSetError, MomentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())

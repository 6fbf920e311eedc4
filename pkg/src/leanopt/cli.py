"""``leanopt`` command line: classify, formulate, solve, evaluate, datagen, sblp.

Exit codes: 0 success, 1 domain failure (infeasible, unparseable model output),
2 usage or configuration error. Every command accepts ``--json`` and writes
its files under ``--out``.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
ENV_PREFIX = "LEAN_OPT_"
CONFIG_SECTION = "leanopt"
BACKENDS = ("scripted", "remote")
EMBEDDINGS = ("lexical", "remote")


class UsageError(Exception):
    """Bad arguments, config or unreadable inputs (exit 2)."""


class DomainError(Exception):
    """The inputs were fine but the problem failed: infeasible, unparseable output (exit 1)."""

    def __init__(self, message: str, payload: Optional[dict] = None):
        super().__init__(message)
        self.payload = payload or {}


def package_path(*parts: str) -> Path:
    p = resources.files("leanopt")
    for part in parts:
        p = p.joinpath(part)
    return Path(str(p))


# --------------------------------------------------------------------------- config


@dataclass
class Config:
    """Runtime settings. Precedence: defaults < INI file < LEAN_OPT_* environment < flags.

    The API token is never read from the file; it comes from LEAN_OPT_API_KEY only.
    """

    backend: str = "scripted"
    script: Optional[str] = None
    endpoint: Optional[str] = None
    model: Optional[str] = None
    timeout: float = 60.0
    embedding: str = "lexical"
    embedding_endpoint: Optional[str] = None
    embedding_model: Optional[str] = None
    embedding_dim: int = 256
    refdata: Optional[str] = None
    rel_tol: float = 1e-4
    abs_tol: float = 1e-6
    max_steps: int = 6
    retries: int = 2
    workers: int = 1

    def validate(self, env: Mapping[str, str] = os.environ) -> None:
        from .llm import API_KEY_ENV

        if self.backend not in BACKENDS:
            raise UsageError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.embedding not in EMBEDDINGS:
            raise UsageError(f"embedding must be one of {EMBEDDINGS}, got {self.embedding!r}")
        if self.backend == "remote":
            if not self.endpoint or not self.model:
                raise UsageError("remote backend needs both endpoint and model")
            if not env.get(API_KEY_ENV):
                raise UsageError(f"remote backend needs the {API_KEY_ENV} environment variable")
        if self.embedding == "remote" and not (self.embedding_endpoint and self.embedding_model):
            raise UsageError("remote embedding needs embedding_endpoint and embedding_model")
        if self.rel_tol < 0 or self.abs_tol < 0:
            raise UsageError("tolerances must be non-negative")
        if self.max_steps < 1 or self.retries < 0 or self.workers < 1 or self.embedding_dim < 1:
            raise UsageError("max_steps and workers must be >= 1, retries >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise UsageError(f"config value {key}={raw!r} is not a valid {kind}") from None
    return raw if raw != "" else None


def load_config(path: Optional[str] = None, env: Mapping[str, str] = os.environ,
                overrides: Optional[Mapping[str, object]] = None) -> Config:
    values: dict = {}
    path = path or env.get(ENV_PREFIX + "CONFIG")
    if path:
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if parser.has_section(CONFIG_SECTION):
            for key, raw in parser.items(CONFIG_SECTION):
                if key in ("api_key", "token"):
                    raise UsageError("secrets belong in the environment, not the config file")
                if key not in _FIELD_TYPES:
                    raise UsageError(f"unknown config key {key!r} in {path}")
                values[key] = _coerce(key, raw)
    for key in _FIELD_TYPES:
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = _coerce(key, raw)
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    cfg = Config(**values)
    cfg.validate(env)
    return cfg


# --------------------------------------------------------------------------- wiring


def make_backend(cfg: Config):
    from .llm import RemoteBackend, ScriptedBackend

    if cfg.backend == "remote":
        return RemoteBackend(cfg.endpoint, cfg.model, cfg.timeout)
    if not cfg.script:
        raise UsageError("the scripted backend needs --script (a transcript JSON file)")
    try:
        return ScriptedBackend.from_file(cfg.script)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read transcript {cfg.script}: {exc}") from None


def make_embedder(cfg: Config):
    from .retrieval import LexicalEmbedder, RemoteEmbedder

    if cfg.embedding == "remote":
        return RemoteEmbedder(cfg.embedding_endpoint, cfg.embedding_model, cfg.embedding_dim, cfg.timeout)
    return LexicalEmbedder()


def make_pipeline(cfg: Config):
    from .agents import Pipeline
    from .refdata import StoreError, load_refdata

    path = cfg.refdata or package_path("data", "refdata")
    try:
        store = load_refdata(path)
    except (StoreError, OSError) as exc:
        raise UsageError(f"cannot load reference data {path}: {exc}") from None
    return Pipeline(store, make_embedder(cfg), max_steps=cfg.max_steps, retries=cfg.retries)


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror or exc}") from None


def _read_query(arg: str) -> str:
    """A query is a file path, ``-`` for stdin, or the query text itself."""
    if arg == "-":
        return sys.stdin.read()
    try:
        if Path(arg).is_file():
            return Path(arg).read_text(encoding="utf-8")
    except OSError:  # text too long to be a path
        pass
    if not arg.strip():
        raise UsageError("empty query")
    if not any(ch.isspace() for ch in arg) and Path(arg).suffix:
        raise UsageError(f"cannot read query file {arg}: no such file")
    return arg


def _datasets(paths: Sequence[str]) -> list[Path]:
    out: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob("*.csv")))
        elif p.is_file():
            out.append(p)
        else:
            raise UsageError(f"dataset path not found: {p}")
    if not out:
        raise UsageError("no CSV datasets found")
    return out


def _write(out: Path, name: str, text: str) -> str:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def _dump_traces(out: Path, traces: dict, name: str = "traces.json") -> str:
    return _write(out, name, json.dumps(traces, indent=2))


def _solution_dict(sol) -> dict:
    import math

    return {
        "status": sol.status,
        "objective": sol.objective if math.isfinite(sol.objective) else None,
        "values": dict(sol.values),
        "nodes": sol.nodes,
        "gap": sol.gap,
    }


def _config(args) -> Config:
    return load_config(args.config, overrides={
        "backend": getattr(args, "backend", None), "script": getattr(args, "script", None),
        "endpoint": getattr(args, "endpoint", None), "model": getattr(args, "model", None),
        "refdata": getattr(args, "refdata", None), "workers": getattr(args, "workers", None),
    })


# --------------------------------------------------------------------------- commands


def cmd_classify(args) -> tuple[dict, str]:
    from .agents import classify

    query = _read_query(args.query)
    cfg = _config(args)
    pipeline = make_pipeline(cfg)
    c = classify(query, pipeline.index, make_backend(cfg), cfg.max_steps)
    out = Path(args.out)
    trace_path = _dump_traces(out, {"classification": [c.trace.to_dict()] if c.trace else []},
                              "classification_trace.json")
    doc = {"command": "classify", "type": c.type.value, "type_code": c.type.code, "answer": c.answer,
           "warning": c.warning, "trace_path": trace_path}
    text = f"{c.type.value}\ntrace: {trace_path}"
    if c.warning:
        text += f"\nwarning: {c.warning}"
    return doc, text


def cmd_formulate(args) -> tuple[dict, str]:
    from .agents import AGNOSTIC, PipelineError
    from .model import write_lp
    from .refdata import ProblemType
    from .solver import solve

    query = _read_query(args.query)
    datasets = _datasets(args.datasets)
    cfg = _config(args)
    pipeline = make_pipeline(cfg)
    force = ProblemType.MIXTURE if args.agnostic else None
    if args.type and not args.agnostic:
        force = ProblemType.parse(args.type)
        if force is None:
            raise UsageError(f"unknown problem type {args.type!r}")
    out = Path(args.out)
    try:
        res = pipeline.run(query, datasets, make_backend(cfg), force)
    except PipelineError as exc:
        trace_path = _dump_traces(out, exc.result.to_dict()["traces"])
        raise DomainError(f"{exc} (traces: {trace_path})", {"trace_path": trace_path}) from None
    doc = {"command": "formulate", "type": res.type.value, "workflow": res.kind,
           "demo_id": res.workflow.demo_id if res.workflow else None, "warnings": res.warnings,
           "trace_path": _dump_traces(out, res.to_dict()["traces"]),
           "lp_path": _write(out, "model.lp", write_lp(res.model)),
           "n_vars": res.model.n_vars, "n_constraints": len(res.model.constraints)}
    if res.kind == AGNOSTIC:
        doc["plan_path"] = _write(out, "plan.txt", res.answer)
    else:
        doc["model_path"] = _write(out, "model.txt", res.answer)
    lines = [f"type: {res.type.value}", f"workflow: {res.kind}",
             f"model: {doc['n_vars']} variables, {doc['n_constraints']} constraints",
             f"lp: {doc['lp_path']}", f"trace: {doc['trace_path']}"]
    lines.append(f"plan: {doc['plan_path']}" if "plan_path" in doc else f"grammar: {doc['model_path']}")
    if args.solve:
        sol = solve(res.model)
        doc["solution"] = _solution_dict(sol)
        lines.append(f"status: {sol.status}; objective: {sol.objective:.10g}")
    lines += [f"warning: {w}" for w in res.warnings]
    return doc, "\n".join(lines)


def _load_model(path: str):
    from .model import GrammarError, LPParseError, ModelError, parse_model_grammar, read_lp

    text = _read_text(path, "model file")
    try:
        return read_lp(text) if Path(path).suffix.lower() == ".lp" else parse_model_grammar(text)
    except (LPParseError, GrammarError, ModelError) as exc:
        raise DomainError(f"cannot parse {path}: {exc}") from None


def _solve_and_report(model, allow_infeasible: bool, command: str, extra: Optional[dict] = None):
    from .solver import OPTIMAL, NodeLimitError, solve

    try:
        sol = solve(model)
    except NodeLimitError as exc:
        raise DomainError(str(exc)) from None
    doc = dict({"command": command}, **(extra or {}), **_solution_dict(sol))
    lines = [f"status: {sol.status}"]
    if sol.status == OPTIMAL:
        lines.append(f"objective: {sol.objective:.10g}")
        lines += [f"  {k} = {v:.10g}" for k, v in sol.values.items()]
    elif not allow_infeasible:
        raise DomainError(f"status: {sol.status}", doc)
    return sol, doc, lines


def cmd_solve(args) -> tuple[dict, str]:
    model = _load_model(args.model_file)
    _, doc, lines = _solve_and_report(model, args.allow_infeasible, "solve")
    return doc, "\n".join(lines)


def cmd_evaluate(args) -> tuple[dict, str]:
    from .evalharness import TOKEN_EDGES, run_benchmark, scripted_backend
    from .llm import RemoteBackend
    from .refdata import StoreError, load_benchmark

    if args.repetitions < 1:
        raise UsageError("--repetitions must be at least 1")
    cfg = _config(args)
    try:
        instances = load_benchmark(args.benchmark)
    except (StoreError, OSError) as exc:
        raise UsageError(f"cannot load benchmark {args.benchmark}: {exc}") from None
    if cfg.backend == "remote":
        def factory(inst, rep):
            return RemoteBackend(cfg.endpoint, cfg.model, cfg.timeout)
    else:
        factory = scripted_backend
    edges = tuple(args.token_edges) if args.token_edges else TOKEN_EDGES
    report = run_benchmark(make_pipeline(cfg), instances, args.repetitions, factory, cfg.workers,
                           token_edges=edges, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
    written = report.write(args.out, figures=not args.no_figures)
    doc = {"command": "evaluate", "files": {k: str(v) for k, v in written.items()}, "report": report.to_dict()}
    return doc, report.to_text() + "\n\nwritten: " + ", ".join(str(v) for v in written.values())


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be a non-negative integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"seed must be a non-negative integer, got {text!r}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_datagen(args) -> tuple[dict, str]:
    from . import datagen as dg

    try:
        rng = dg.RngSpec(args.seed, args.algorithm)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    files: list[str] = []
    notes: list[str] = []
    try:
        if args.kind == "nrm":
            rows = dg.gen_nrm(dg.read_sales(args.input), rng)
            files.append(str(dg.write_nrm_csv(rows, out / args.name)))
        else:
            table = dg.read_locations(args.input)
            costs = dg.gen_tp_costs(table.locations, args.cost_per_mile, rng.child(0))
            if args.kind == "tp":
                if table.demand:
                    with warnings.catch_warnings(record=True) as caught:
                        warnings.simplefilter("always", dg.DataGenWarning)
                        costs, demand, _ = dg.customer_demand(costs, table.demand)
                    notes += [str(w.message) for w in caught]
                    files.append(str(dg.write_csv(out / "tp_demand.csv", ("Customer", "Demand"), demand)))
                files.insert(0, str(costs.write_csv(out / "tp_costs.csv")))
            else:
                lo, hi = args.setup_range
                setup = dg.gen_flp_setup_costs(len(costs.suppliers), (lo, hi), rng.child(1))
                files.append(str(costs.write_csv(out / "flp_costs.csv", corner="Facility")))
                files.append(str(dg.write_csv(out / "flp_setup_costs.csv", ("Facility", "Setup Cost"),
                                              zip(costs.suppliers, setup))))
    except FileNotFoundError as exc:
        raise UsageError(f"input not found: {exc.filename or args.input}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = {"command": "datagen", "kind": args.kind, "seed": args.seed, "algorithm": args.algorithm,
           "files": files, "warnings": notes}
    return doc, "\n".join(files + [f"warning: {n}" for n in notes])


def _consumption(items: Optional[Sequence[str]], fares: Sequence[str]) -> dict[str, float]:
    """``FARE=UNITS`` pairs, or bare numbers assigned to fares in order of first appearance."""
    if not items:
        return {}
    out: dict[str, float] = {}
    bare: list[float] = []
    try:
        for it in items:
            if "=" in it:
                k, v = it.split("=", 1)
                out[k.strip()] = float(v)
            else:
                bare.append(float(it))
    except ValueError:
        raise UsageError(f"bad --consumption value in {list(items)}") from None
    if len(bare) > len(fares):
        raise UsageError(f"{len(bare)} consumption values for {len(fares)} fare types {list(fares)}")
    out.update(zip(fares, bare))
    unknown = [k for k in out if k.lower() not in {f.lower() for f in fares}]
    if unknown:
        raise UsageError(f"unknown fare type(s) {unknown}; known: {list(fares)}")
    return out


def cmd_sblp(args) -> tuple[dict, str]:
    from . import sblp
    from .model import write_lp

    try:
        inst = sblp.load_instance(args.csv_dir, shadow_mode=args.shadow_mode)
    except (sblp.SblpDataError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    fares = list(dict.fromkeys(o.fare for o in inst.options))
    by_fare = _consumption(args.consumption, fares)
    if by_fare:
        inst = inst.with_consumption(by_fare)
    flights = None
    text = _read_text(args.flights_file, "flight filter file") if args.flights_file else args.flights
    if text:
        flights = sblp.parse_flight_filter(text)
        if not flights:
            raise UsageError("--flights names no flight; expected (OD = ('A', 'B') AND Departure Time='11:20')")
        missing = [f for f in flights if f not in inst.flights()]
        if missing:
            raise UsageError(f"flights not in {sblp.FILES['flights']}: {missing}")
    try:
        if args.action == "build":
            model = sblp.build_sblp(inst, flights)
        else:
            z = args.max_flights if args.max_flights is not None else len(flights or inst.flights())
            model = sblp.build_network_planning(inst, flights, z, args.big_m)
    except sblp.BigMError as exc:
        raise DomainError(str(exc)) from None
    out = Path(args.out)
    name = "sblp.lp" if args.action == "build" else "network_plan.lp"
    extra = {"command": "sblp", "action": args.action, "lp_path": _write(out, name, write_lp(model)),
             "n_vars": model.n_vars, "n_constraints": len(model.constraints), "consumption": by_fare}
    if args.action == "plan":
        extra["max_flights"] = z
    head = [f"lp: {extra['lp_path']}", f"model: {model.n_vars} variables, {len(model.constraints)} constraints"]
    if args.no_solve:
        return extra, "\n".join(head)
    sol, doc, lines = _solve_and_report(model, args.allow_infeasible, "sblp", extra)
    if args.action == "plan" and sol.ok:
        chosen = [f for f in (flights or inst.flights()) if sol.values.get(sblp.y_name(f), 0) > 0.5]
        doc["selected_flights"] = [f"{s} {d}" for s, d in chosen]
        lines.insert(2, f"selected flights ({len(chosen)}): " + ", ".join(doc["selected_flights"]))
    return doc, "\n".join(head + lines)


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print one JSON document instead of text")
    common.add_argument("--out", default="leanopt-out", help="directory for every file this command writes")
    common.add_argument("--config", help="INI file with a [leanopt] section (also LEAN_OPT_CONFIG)")

    agent = argparse.ArgumentParser(add_help=False)
    agent.add_argument("--backend", choices=BACKENDS)
    agent.add_argument("--script", help="transcript JSON replayed by the scripted backend")
    agent.add_argument("--endpoint", help="chat-completions URL for the remote backend")
    agent.add_argument("--model", help="model name sent to the remote backend")
    agent.add_argument("--refdata", help="reference-data directory (default: bundled)")

    p = argparse.ArgumentParser(prog="leanopt", description="Formulate, solve and grade LP/MILP models.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", parents=[common, agent], help="print the problem type of a query")
    c.add_argument("query", help="query text, a file holding it, or - for stdin")
    c.set_defaults(func=cmd_classify)

    f = sub.add_parser("formulate", parents=[common, agent], help="query + CSV data -> model and LP file")
    f.add_argument("query", help="query text, a file holding it, or - for stdin")
    f.add_argument("datasets", nargs="+", help="CSV files or directories of CSV files")
    f.add_argument("--agnostic", action="store_true", help="skip classification, use the type-agnostic workflow")
    f.add_argument("--type", help="skip classification and use this problem type")
    f.add_argument("--solve", action="store_true", help="also solve the generated model")
    f.set_defaults(func=cmd_formulate)

    s = sub.add_parser("solve", parents=[common], help="solve an LP file (or model grammar text)")
    s.add_argument("model_file")
    s.add_argument("--allow-infeasible", action="store_true", help="exit 0 when infeasible or unbounded")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", parents=[common, agent], help="run a benchmark and write report files")
    e.add_argument("benchmark", help="directory holding manifest.json")
    e.add_argument("--repetitions", type=int, default=1)
    e.add_argument("--workers", type=int)
    e.add_argument("--token-edges", type=_float_list, help="bucket edges, e.g. 0,200,400,800")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("datagen", help="impute benchmark parameters into CSV files")
    dsub = d.add_subparsers(dest="kind", required=True)
    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("input")
    gen.add_argument("--seed", type=_seed, default=42)
    gen.add_argument("--algorithm", default="PCG64")
    n = dsub.add_parser("nrm", parents=[common, gen], help="sales records -> NRM demand and inventory")
    n.add_argument("--name", default="NRM_data.csv")
    for kind, text in (("tp", "locations -> transport cost matrix"), ("flp", "locations -> costs and setup costs")):
        t = dsub.add_parser(kind, parents=[common, gen], help=text)
        t.add_argument("--cost-per-mile", type=_float_list, default=[1.2, 1.5])
        if kind == "flp":
            t.add_argument("--setup-range", type=int, nargs=2, default=[10000, 50000], metavar=("LO", "HI"))
    d.set_defaults(func=cmd_datagen)

    sb = sub.add_parser("sblp", help="airline seat-allocation LPs from CSV inputs")
    ssub = sb.add_subparsers(dest="action", required=True)
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("csv_dir")
    shared.add_argument("--flights", help="flight filter text, e.g. \"(OD = ('A', 'B') AND Departure Time='11:20')\"")
    shared.add_argument("--flights-file", help="file holding the flight filter text (a query works)")
    shared.add_argument("--consumption", nargs="+", metavar="UNITS",
                        help="capacity units per fare: FARE=UNITS, or bare numbers in fare order")
    shared.add_argument("--shadow-mode", choices=("absolute", "ratio"), default="absolute")
    shared.add_argument("--no-solve", action="store_true")
    shared.add_argument("--allow-infeasible", action="store_true")
    ssub.add_parser("build", parents=[common, shared], help="sales-based LP")
    pl = ssub.add_parser("plan", parents=[common, shared], help="flight selection MILP")
    pl.add_argument("-Z", "--max-flights", type=int, help="number of flights to operate (default: all)")
    pl.add_argument("--big-m", type=float, help="one big-M for every linking row")
    sb.set_defaults(func=cmd_sblp)
    return p


def _emit_error(args, code: int, message: str, payload: Optional[dict] = None) -> int:
    print(f"leanopt: error: {message}", file=sys.stderr)
    if getattr(args, "json", False):
        doc = dict({"command": getattr(args, "command", None), "ok": False, "exit_code": code, "error": message},
                   **(payload or {}))
        print(json.dumps(doc, indent=2))
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    from .agents import PipelineError
    from .llm import ScriptExhaustedError, TransportError
    from .retrieval import ProviderUnreachableError

    try:
        doc, text = args.func(args)
    except UsageError as exc:
        return _emit_error(args, EXIT_USAGE, str(exc))
    except DomainError as exc:
        return _emit_error(args, EXIT_DOMAIN, str(exc), exc.payload)
    except (PipelineError, ScriptExhaustedError, TransportError, ProviderUnreachableError) as exc:
        return _emit_error(args, EXIT_DOMAIN, str(exc))
    if args.json:
        print(json.dumps(dict(doc, ok=True), indent=2, default=str))
    else:
        print(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Parameter sweeps over simulation configs with CSV reporting.

A sweep spec names a base configuration plus one or more axes; the run
set is the cartesian product of the axis values, each replicated over
``replications`` derived seeds.  Results land in a deterministic CSV
(one row per run, stable order, stable float formatting) so re-running
a spec reproduces the file byte for byte.  Wall-clock timings go to a
separate sidecar file to keep the results deterministic.
"""

import csv
import hashlib
import io
import itertools
import math
import os
import statistics
import time

import yaml

from . import channel, fec_block, rng, scheduler, simcore, tetrys

DEFAULT_ROOT_SEED = 20140901

# Flat parameter keys accepted in ``base`` and axis overrides.  Scalars
# map straight onto ExperimentConfig fields; the list/composite keys are
# assembled into PathConfig / coding params by build_config.
_SCALAR_KEYS = {
    "duration_s": float,
    "rate_kbps": float,
    "packet_bytes": int,
    "deadline_ms": float,
    "ack_period_ms": float,
    "adapt_window_s": float,
    "theta": float,
    "delta_l": float,
    "strategy": str,
    "ols_mode": str,
    "loss_kind": str,
    "mean_burst": float,
    "drain_ms": float,
    "rate_includes_repairs": bool,
    "apply_strategy_to_fec": bool,
}
_LIST_KEYS = ("delays_ms", "plrs", "fixed_loads")
_KNOWN_KEYS = set(_SCALAR_KEYS) | set(_LIST_KEYS) | {"coding"}

_LOSS_KINDS = {"uniform": channel.UNIFORM, "burst": channel.GILBERT_ELLIOT}


class SpecError(ValueError):
    """Invalid sweep spec; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _hash_tag(text):
    """Stable 64-bit tag for seed derivation from a label string."""
    digest = hashlib.blake2s(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def _coerce_scalar(field, key, value):
    want = _SCALAR_KEYS[key]
    if want is bool:
        if not isinstance(value, bool):
            raise SpecError(f"{field}.{key}", f"expected true/false, got {value!r}")
        return value
    if want is float:
        if value == "inf":
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SpecError(f"{field}.{key}", f"expected a number, got {value!r}")
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SpecError(f"{field}.{key}", f"expected an integer, got {value!r}")
        return value
    if not isinstance(value, str):
        raise SpecError(f"{field}.{key}", f"expected a string, got {value!r}")
    return value


def _coerce_params(field, mapping):
    """Validate one override mapping into canonical flat params."""
    if not isinstance(mapping, dict):
        raise SpecError(field, f"expected a mapping, got {mapping!r}")
    out = {}
    for key, value in mapping.items():
        if key not in _KNOWN_KEYS:
            raise SpecError(f"{field}.{key}", "unknown parameter")
        if key in _SCALAR_KEYS:
            out[key] = _coerce_scalar(field, key, value)
        elif key in _LIST_KEYS:
            if not isinstance(value, (list, tuple)) or not value:
                raise SpecError(f"{field}.{key}", f"expected a non-empty list, got {value!r}")
            try:
                out[key] = tuple(float(v) for v in value)
            except (TypeError, ValueError):
                raise SpecError(f"{field}.{key}", f"expected numbers, got {value!r}")
        else:  # coding
            out[key] = _coerce_coding(f"{field}.coding", value)
    return out


def _coerce_coding(field, value):
    if not isinstance(value, dict) or "scheme" not in value:
        raise SpecError(field, f"expected a mapping with a 'scheme' key, got {value!r}")
    scheme = value["scheme"]
    extra = set(value) - {"scheme", "k", "n"}
    if extra:
        raise SpecError(field, f"unknown coding keys {sorted(extra)}")
    if scheme == "tetrys":
        if "n" in value:
            raise SpecError(field, "tetrys coding takes only 'k'")
        k = value.get("k")
        if not isinstance(k, int) or isinstance(k, bool):
            raise SpecError(field, f"tetrys needs integer 'k', got {k!r}")
        return ("tetrys", k, None)
    if scheme == "fec":
        k, n = value.get("k"), value.get("n")
        for name, v in (("k", k), ("n", n)):
            if not isinstance(v, int) or isinstance(v, bool):
                raise SpecError(field, f"fec needs integer '{name}', got {v!r}")
        return ("fec", k, n)
    raise SpecError(field, f"scheme must be 'tetrys' or 'fec', got {scheme!r}")


class SweepSpec:
    """Base config plus named axes; the run set is their product."""

    def __init__(self, name, base, axes, replications=1, description="", seed=None):
        self.name = name
        self.base = base
        self.axes = axes  # list of (axis_name, [(label, overrides), ...])
        self.replications = replications
        self.description = description
        self.seed = seed

    @classmethod
    def from_dict(cls, data, name_hint=None):
        if not isinstance(data, dict):
            raise SpecError("spec", f"expected a mapping at top level, got {data!r}")
        known = {"name", "description", "base", "axes", "replications", "seed"}
        extra = set(data) - known
        if extra:
            raise SpecError(sorted(extra)[0], "unknown top-level key")
        name = data.get("name", name_hint or "sweep")
        if not isinstance(name, str) or not name:
            raise SpecError("name", f"expected a non-empty string, got {name!r}")
        base = _coerce_params("base", data.get("base", {}))
        reps = data.get("replications", 1)
        if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
            raise SpecError("replications", f"expected a positive integer, got {reps!r}")
        seed = data.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
            raise SpecError("seed", f"expected an integer, got {seed!r}")

        axes_in = data.get("axes", {})
        if not isinstance(axes_in, dict):
            raise SpecError("axes", f"expected a mapping of axis name to values, got {axes_in!r}")
        axes = []
        for axis, entries in axes_in.items():
            if not isinstance(entries, list) or not entries:
                raise SpecError(f"axes.{axis}", "expected a non-empty list of values")
            values = []
            seen = set()
            for i, entry in enumerate(entries):
                where = f"axes.{axis}[{i}]"
                if not isinstance(entry, dict) or "label" not in entry:
                    raise SpecError(where, "each axis value needs a 'label' plus overrides")
                label = str(entry["label"])
                if label in seen:
                    raise SpecError(where, f"duplicate label {label!r}")
                seen.add(label)
                overrides = {k: v for k, v in entry.items() if k != "label"}
                values.append((label, _coerce_params(where, overrides)))
            axes.append((str(axis), values))
        return cls(name, base, axes, reps,
                   str(data.get("description", "")), seed)

    @property
    def axis_names(self):
        return [axis for axis, _ in self.axes]

    def n_runs(self):
        total = self.replications
        for _, values in self.axes:
            total *= len(values)
        return total


def load_spec(path):
    """Parse a YAML sweep spec file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SpecError("spec", f"not valid YAML ({exc})")
    hint = os.path.splitext(os.path.basename(path))[0]
    return SweepSpec.from_dict(data, name_hint=hint)


def builtin_specs():
    """Names of the spec files shipped with the package."""
    here = os.path.join(os.path.dirname(__file__), "specs")
    names = [os.path.splitext(f)[0] for f in os.listdir(here) if f.endswith(".yaml")]
    return sorted(names)


def builtin_spec_path(name):
    path = os.path.join(os.path.dirname(__file__), "specs", name + ".yaml")
    if not os.path.exists(path):
        raise SpecError("spec", f"no builtin spec named {name!r}"
                                f" (available: {', '.join(builtin_specs())})")
    return path


def resolve_spec(name_or_path):
    """Accept either a spec file path or a builtin spec name."""
    if os.path.exists(name_or_path):
        return load_spec(name_or_path)
    if os.path.sep not in name_or_path and not name_or_path.endswith(".yaml"):
        return load_spec(builtin_spec_path(name_or_path))
    raise SpecError("spec", f"no such spec file: {name_or_path}")


def build_config(params, seed):
    """Assemble an ExperimentConfig from flat sweep parameters."""
    delays = params.get("delays_ms")
    plrs = params.get("plrs")
    if delays is None:
        raise SpecError("delays_ms", "required (one propagation delay per path)")
    if plrs is None:
        raise SpecError("plrs", "required (one loss rate per path)")
    if len(delays) != len(plrs):
        raise SpecError("plrs", f"got {len(plrs)} loss rates for {len(delays)} delays")
    kind_name = params.get("loss_kind", "uniform")
    if kind_name not in _LOSS_KINDS:
        raise SpecError("loss_kind", f"expected 'uniform' or 'burst', got {kind_name!r}")
    kind = _LOSS_KINDS[kind_name]
    mean_burst = params.get("mean_burst", 1.0)
    paths = []
    for i, (delay, plr) in enumerate(zip(delays, plrs)):
        try:
            loss = channel.LossModel(kind, plr, mean_burst if kind == channel.GILBERT_ELLIOT else 1.0)
            paths.append(channel.PathConfig(delay, loss))
        except ValueError as exc:
            raise SpecError(f"plrs[{i}]", str(exc))

    coding = params.get("coding")
    if coding is None:
        raise SpecError("coding", "required (tetrys or fec)")
    scheme, k, n = coding
    try:
        if scheme == "tetrys":
            coding_params = tetrys.TetrysParams(k)
        else:
            coding_params = fec_block.FecParams(k, n)
    except ValueError as exc:
        raise SpecError("coding", str(exc))

    kwargs = {key: params[key] for key in _SCALAR_KEYS
              if key in params and key not in ("loss_kind", "mean_burst")}
    if "fixed_loads" in params:
        kwargs["fixed_loads"] = params["fixed_loads"]
    if "duration_s" not in kwargs:
        raise SpecError("duration_s", "required")
    try:
        return simcore.ExperimentConfig(paths=paths, coding=coding_params,
                                        seed=seed, **kwargs)
    except ValueError as exc:
        raise SpecError("base", str(exc))


class RunPoint:
    """One expanded run: axis labels, merged params, derived seed."""

    def __init__(self, labels, params, rep, seed):
        self.labels = labels  # tuple of (axis, label)
        self.params = params
        self.rep = rep
        self.seed = seed

    def sort_key(self):
        return tuple(label for _, label in self.labels) + (self.seed,)


def expand(spec, root_seed=None):
    """Cartesian product of the axes, replicated over derived seeds."""
    if root_seed is None:
        root_seed = spec.seed if spec.seed is not None else DEFAULT_ROOT_SEED
    points = []
    pools = [[(axis, label, over) for label, over in values]
             for axis, values in spec.axes]
    for combo in itertools.product(*pools):
        params = dict(spec.base)
        labels = []
        for axis, label, over in combo:
            params.update(over)
            labels.append((axis, label))
        tags = [_hash_tag(f"{axis}={label}") for axis, label in labels]
        for rep in range(spec.replications):
            seed = rng.derive_seed(root_seed, *tags, _hash_tag(f"rep={rep}"))
            points.append(RunPoint(tuple(labels), params, rep, seed))
    points.sort(key=RunPoint.sort_key)
    return points


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(_fmt(v) for v in value)
    return str(value)


def _coding_label(coding):
    scheme, k, n = coding
    return f"tetrys(k={k})" if scheme == "tetrys" else f"fec({k},{n})"


def result_columns(axis_names):
    cols = ["spec"]
    cols += [f"axis_{a}" for a in axis_names]
    cols += ["rep", "seed",
             "duration_s", "rate_kbps", "packet_bytes", "deadline_ms",
             "ack_period_ms", "n_paths", "delays_ms", "plrs", "loss_kind",
             "mean_burst", "coding", "redundancy", "strategy", "ols_mode",
             "theta", "adapt_window_s",
             "sources_sent", "delivered_on_time", "recovered_on_time",
             "late", "unrecovered", "information_loss_rate",
             "repairs_sent", "wire_packets", "acks_sent", "acks_lost",
             "path_sent", "path_lost", "path_loss_rate"]
    return cols


def run_point(spec_name, point, engine="auto", trace_path=None):
    """Execute one run and flatten config plus metrics into a row."""
    config = build_config(point.params, point.seed)
    started = time.perf_counter()
    if trace_path is not None:
        import json
        with open(trace_path, "w", encoding="utf-8") as fh:
            ledger = simcore.run(
                config, engine=engine,
                trace=lambda ev: fh.write(json.dumps(ev, default=float) + "\n"))
    else:
        ledger = simcore.run(config, engine=engine)
    runtime = time.perf_counter() - started

    params = point.params
    coding = params["coding"]
    if coding[0] == "tetrys":
        redundancy = 1.0 / (coding[1] + 1)
    else:
        redundancy = (coding[2] - coding[1]) / coding[2]
    loss_rates = tuple(
        (lost / sent) if sent else 0.0
        for sent, lost in zip(ledger.path_sent, ledger.path_lost))

    row = {"spec": spec_name}
    for axis, label in point.labels:
        row[f"axis_{axis}"] = label
    row.update({
        "rep": point.rep,
        "seed": point.seed,
        "duration_s": _fmt(config.duration_s),
        "rate_kbps": _fmt(config.rate_kbps),
        "packet_bytes": config.packet_bytes,
        "deadline_ms": _fmt(config.deadline_ms),
        "ack_period_ms": _fmt(config.ack_period_ms),
        "n_paths": len(config.paths),
        "delays_ms": _fmt([p.prop_delay_ms for p in config.paths]),
        "plrs": _fmt([p.loss.plr for p in config.paths]),
        "loss_kind": params.get("loss_kind", "uniform"),
        "mean_burst": _fmt(float(params.get("mean_burst", 1.0))),
        "coding": _coding_label(coding),
        "redundancy": _fmt(redundancy),
        "strategy": config.strategy,
        "ols_mode": config.ols_mode,
        "theta": _fmt(config.theta),
        "adapt_window_s": _fmt(config.adapt_window_s),
        "sources_sent": ledger.sources_sent,
        "delivered_on_time": ledger.delivered_on_time,
        "recovered_on_time": ledger.recovered_on_time,
        "late": ledger.late,
        "unrecovered": ledger.unrecovered,
        "information_loss_rate": _fmt(ledger.information_loss_rate),
        "repairs_sent": ledger.repairs_sent,
        "wire_packets": ledger.wire_packets,
        "acks_sent": ledger.acks_sent,
        "acks_lost": ledger.acks_lost,
        "path_sent": _fmt(list(ledger.path_sent)),
        "path_lost": _fmt(list(ledger.path_lost)),
        "path_loss_rate": _fmt(list(loss_rates)),
    })
    return row, runtime


def _run_point_star(args):
    return run_point(*args)


def run_sweep(spec, out_dir=None, root_seed=None, workers=1, engine="auto",
              progress=None, trace_dir=None):
    """Run every point of a sweep; return (rows, summary_rows).

    With ``out_dir`` set, writes results.csv, summary.csv, and a
    timings.csv sidecar (kept separate so results stay reproducible).
    ``trace_dir`` writes one JSONL event log per run (forces the slower
    Python engine and inline execution).
    """
    points = expand(spec, root_seed)
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
        workers = 1
        jobs = [(spec.name, p, engine,
                 os.path.join(trace_dir, f"run{i:04d}.jsonl"))
                for i, p in enumerate(points)]
    else:
        jobs = [(spec.name, p, engine) for p in points]
    rows = [None] * len(points)
    timings = [None] * len(points)
    if workers > 1:
        import multiprocessing
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(processes=workers) as pool:
            for i, (row, runtime) in enumerate(pool.imap(_run_point_star, jobs)):
                rows[i], timings[i] = row, runtime
                if progress:
                    progress(i + 1, len(points), row)
    else:
        for i, job in enumerate(jobs):
            rows[i], timings[i] = run_point(*job)
            if progress:
                progress(i + 1, len(points), rows[i])

    columns = result_columns(spec.axis_names)
    summary_rows = summarize_rows(rows, spec.axis_names)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, "results.csv"), columns, rows)
        _write_csv(os.path.join(out_dir, "summary.csv"),
                   _summary_columns(summary_rows), summary_rows)
        timing_rows = [
            {"spec": spec.name,
             **{f"axis_{a}": row[f"axis_{a}"] for a in spec.axis_names},
             "rep": row["rep"], "runtime_s": f"{t:.3f}"}
            for row, t in zip(rows, timings)]
        _write_csv(os.path.join(out_dir, "timings.csv"),
                   ["spec"] + [f"axis_{a}" for a in spec.axis_names]
                   + ["rep", "runtime_s"], timing_rows)
    return rows, summary_rows


def _write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})


def _summary_columns(summary_rows):
    if not summary_rows:
        return ["n_runs", "mean_information_loss_rate", "stddev_information_loss_rate"]
    return list(summary_rows[0].keys())


# Axes treated as replication-like when aggregating: the delay study
# reports mean and deviation across its 24 path-delay arrangements.
_AGGREGATE_AXES = ("delays",)


def summarize_rows(rows, axis_names=None):
    """Aggregate loss rates over the delay axis and seeds.

    Groups rows by every axis except the delay-arrangement axis, then
    reports n, mean, and sample standard deviation of the information
    loss rate per group.
    """
    if not rows:
        return []
    if "information_loss_rate" not in rows[0]:
        raise SpecError("information_loss_rate", "missing column (not a results CSV?)")
    if axis_names is None:
        axis_names = [c[len("axis_"):] for c in rows[0] if c.startswith("axis_")]
    group_axes = [a for a in axis_names if a not in _AGGREGATE_AXES]
    group_cols = [f"axis_{a}" for a in group_axes]
    for col in group_cols:
        if col not in rows[0]:
            raise SpecError(col, "missing column (not a results CSV?)")

    groups = {}
    for row in rows:
        key = tuple(row[c] for c in group_cols)
        groups.setdefault(key, []).append(float(row["information_loss_rate"]))
    out = []
    for key in sorted(groups):
        values = groups[key]
        mean = statistics.fmean(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        entry = dict(zip(group_cols, key))
        entry["n_runs"] = len(values)
        entry["mean_information_loss_rate"] = repr(mean)
        entry["stddev_information_loss_rate"] = repr(std)
        out.append(entry)
    return out


def summarize_csv(path):
    """Summarize a results CSV written by run_sweep."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SpecError("csv", f"no data rows in {path}")
    return summarize_rows(rows)


def format_summary(summary_rows):
    """Render summary rows as an aligned text table."""
    if not summary_rows:
        return "(no rows)\n"
    cols = list(summary_rows[0].keys())
    display = [cols]
    for row in summary_rows:
        line = []
        for c in cols:
            v = row[c]
            if c.startswith(("mean_", "stddev_")):
                line.append(f"{float(v) * 100:.4f}%")
            else:
                line.append(str(v))
        display.append(line)
    widths = [max(len(r[i]) for r in display) for i in range(len(cols))]
    buf = io.StringIO()
    for r, line in enumerate(display):
        buf.write("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
        buf.write("\n")
        if r == 0:
            buf.write("  ".join("-" * w for w in widths) + "\n")
    return buf.getvalue()

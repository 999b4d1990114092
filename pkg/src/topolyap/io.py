"""CSV, JSON and SVG writers.

Every CSV starts with ``# key: value`` preamble lines carrying
``schema_version``, the software version, the seed and a JSON echo of the
configuration, followed by a header row. Floats use 12 significant digits.
"""

import json
import os

import numpy as np

from . import __version__

SCHEMA_VERSION = 1


def fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.12g}"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def write_csv(path, header, rows, config=None, seed=None, extra=None):
    """Write a versioned CSV file (UTF-8, comma-delimited)."""
    lines = [f"# schema_version: {SCHEMA_VERSION}", f"# software_version: {__version__}"]
    if seed is not None:
        lines.append(f"# seed: {int(seed)}")
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: {v}")
    if config is not None:
        lines.append("# config: " + json.dumps(config, sort_keys=True, default=_json_default))
    lines.append(",".join(header))
    for r in rows:
        lines.append(",".join(fmt(x) for x in r))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Return ``(meta, header, rows)`` from a file written by :func:`write_csv`."""
    meta, header, rows = {}, None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                k, _, v = line[2:].partition(": ")
                meta[k] = v
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append(line.split(","))
    return meta, header, rows


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj) + "\n")
    return path


def trajectory_rows(traj, controls=None):
    names = sorted(traj.occupations)
    K = traj.fields.shape[1]
    header = ["t"] + [f"O_{n}" for n in names] + ["V"] + [f"f_{k + 1}" for k in range(K)]
    rows = []
    for i in range(len(traj)):
        rows.append([traj.times[i]] + [traj.occupations[n][i] for n in names]
                    + [traj.lyapunov[i]] + list(traj.fields[i]))
    return header, rows


def write_trajectory(path, traj, config=None, seed=None):
    header, rows = trajectory_rows(traj)
    return write_csv(path, header, rows, config, seed)


def write_spectrum(out_dir, name, spec, config=None):
    """Eigenvalue table plus one coefficient table per labelled edge mode."""
    inv = {v: k for k, v in spec.edge_labels.items()}
    rows = [[l + 1, spec.eigenvalues[l], inv.get(l + 1, "")]
            for l in range(spec.eigenvalues.size)]
    paths = [write_csv(os.path.join(out_dir, f"{name}_spectrum.csv"),
                       ["index", "eigenvalue", "edge_label"], rows, config)]
    N = spec.N
    for label, idx in sorted(spec.edge_labels.items()):
        U = spec.vector(idx)
        X, Y = U[:N], U[N:]
        rows = [[j + 1, X[j].real, Y[j].real, X[j].imag, Y[j].imag] for j in range(N)]
        paths.append(write_csv(os.path.join(out_dir, f"{name}_edge_{label}.csv"),
                               ["site", "X", "Y", "X_imag", "Y_imag"], rows, config,
                               extra={"mode_index": idx}))
    return paths


def write_sweep(out_dir, name, label, result, config=None):
    rows = [[result.axis[i], result.fidelities[i], result.std[i], result.minimum[i],
             result.maximum[i], result.runs_per_point, int(result.failures[i])]
            for i in range(result.axis.size)]
    stem = f"{name}_sweep_{label}" if label else f"{name}_sweep"
    csv = write_csv(os.path.join(out_dir, stem + ".csv"),
                    ["axis_value", "mean_fidelity", "std", "min", "max", "runs", "failures"],
                    rows, config, result.master_seed, extra={"horizon": fmt(result.horizon)})
    meta = {
        "schema_version": SCHEMA_VERSION,
        "software_version": __version__,
        "master_seed": result.master_seed,
        "seed_rule": "SeedSequence(master_seed, spawn_key=(axis_index, run_index))",
        "horizon": result.horizon,
        "label": label,
        "axis": result.axis,
        "mean_fidelity": result.fidelities,
        "runs": np.where(np.isnan(result.runs), None, result.runs).tolist(),
        "failures": result.failures,
        "errors": [list(e) for e in result.errors],
        "max_norm_drift": result.norm_drift,
        "config": config,
    }
    js = write_json(os.path.join(out_dir, stem + ".json"), meta)
    return [csv, js]


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def svg_trajectory(path, traj):
    plt = _plt()
    fig, axes = plt.subplots(3, 1, figsize=(6, 7), sharex=True)
    for n, v in sorted(traj.occupations.items()):
        axes[0].plot(traj.times, v, label=f"O_{n}")
    axes[0].set_ylabel("occupation")
    axes[0].legend()
    for k in range(traj.fields.shape[1]):
        axes[1].plot(traj.times, traj.fields[:, k], label=f"f_{k + 1}")
    axes[1].set_ylabel("field")
    axes[1].legend()
    axes[2].plot(traj.times, traj.lyapunov)
    axes[2].set_ylabel("V")
    axes[2].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def svg_spectrum(path, spec):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(1, spec.eigenvalues.size + 1), spec.eigenvalues, "o", ms=3)
    for label, idx in spec.edge_labels.items():
        ax.plot([idx], [spec.eigenvalues[idx - 1]], "s", label=label)
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    if spec.edge_labels:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def svg_sweep(path, result, label):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(result.axis, result.fidelities, yerr=result.std, fmt="o-", ms=3)
    ax.set_xlabel(label)
    ax.set_ylabel("fidelity")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
